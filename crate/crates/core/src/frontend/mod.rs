//! Lexing, parsing and pretty-printing of guest source (`.mcc`).

pub mod ast;
pub mod format;
pub mod parser;
pub mod token;

pub use ast::Ast;
pub use format::format;
pub use parser::{parse, ParseError};
pub use token::{tokenize, LexError, Span, Token, TokenKind, TokenStream};
