pub mod bench;
pub mod checkopt;
pub mod cli;
pub mod driver;
pub mod frontend;
pub mod runtime;
pub mod tir;
pub mod typeck;
pub mod vm;
