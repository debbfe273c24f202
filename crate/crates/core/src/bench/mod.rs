//! Benchmark suite, bug corpus and report generation.

pub mod corpus;
pub mod programs;
pub mod report;
pub mod suite;

pub use corpus::{expectation, run_corpus, CorpusConfig, CorpusEntry, CorpusReport, Expectation};
pub use programs::Program;
pub use report::{BenchReport, BenchRow};
pub use suite::{bench, run_cell, run_suite, BenchError, Benchmark, Cell, SUITE};
