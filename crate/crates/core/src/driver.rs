//! Source text to a runnable program, with uniform diagnostics.

use std::fmt;

use serde::Serialize;

use crate::checkopt;
use crate::frontend::token::LexErrorKind;
use crate::frontend::{parse, tokenize, Span};
use crate::tir::{lower_program, MetaLayout, TirProgram};
use crate::typeck::check_program;
use crate::vm::{self, Backend, GuestInput, RunOutcome, VmConfig, DEFAULT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Lex,
    Parse,
    Type,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub stage: Stage,
    pub kind: String,
    pub message: String,
    pub line: u32,
    pub col: u32,
}

impl Diagnostic {
    fn new(stage: Stage, kind: String, message: String, span: Span) -> Self {
        Diagnostic { stage, kind, message, line: span.line, col: span.col }
    }

    /// `file:line:col: kind: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}: {}", self.line, self.col, self.kind, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.col, self.kind, self.message)
    }
}

/// Everything that shapes compilation and execution of one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub backend: Backend,
    pub meta: MetaLayout,
    pub opt_checks: bool,
    pub seed: u64,
    pub oracle: bool,
}

impl Options {
    pub fn new(backend: Backend) -> Self {
        Options { backend, meta: MetaLayout::default(), opt_checks: true, seed: DEFAULT_SEED, oracle: false }
    }

    pub fn key_bits(self, bits: u32) -> Self {
        Options { meta: MetaLayout::new(bits).expect("key bits in range"), ..self }
    }

    pub fn opt_checks(self, on: bool) -> Self {
        Options { opt_checks: on, ..self }
    }

    pub fn seed(self, seed: u64) -> Self {
        Options { seed, ..self }
    }

    pub fn oracle(self, on: bool) -> Self {
        Options { oracle: on, ..self }
    }

    pub fn vm_config(&self) -> VmConfig {
        VmConfig { meta: self.meta, seed: self.seed, oracle: self.oracle, ..VmConfig::new(self.backend) }
    }
}

/// Tokenize, parse, type-check, lower and (optionally) optimize.
pub fn compile(src: &str, opts: &Options) -> Result<TirProgram, Vec<Diagnostic>> {
    let toks = tokenize(src).map_err(|e| vec![Diagnostic::new(Stage::Lex, format!("{:?}", e.kind), lex_message(e.kind).into(), e.span)])?;
    let ast = parse(&toks).map_err(|e| vec![Diagnostic::new(Stage::Parse, "Syntax".into(), e.to_string(), e.span)])?;
    let typed = check_program(&ast)
        .map_err(|es| es.into_iter().map(|e| Diagnostic::new(Stage::Type, e.kind.to_string(), e.message, e.span)).collect::<Vec<_>>())?;
    let mut prog = lower_program(&typed, opts.meta, opts.backend.repr())
        .map_err(|es| es.into_iter().map(|e| Diagnostic::new(Stage::Lower, format!("{:?}", e.kind), e.message, e.span)).collect::<Vec<_>>())?;
    if opts.opt_checks {
        checkopt::optimize(&mut prog);
    }
    Ok(prog)
}

fn lex_message(k: LexErrorKind) -> &'static str {
    match k {
        LexErrorKind::UnterminatedString => "string literal is not closed",
        LexErrorKind::UnterminatedChar => "character literal is not closed",
        LexErrorKind::UnterminatedComment => "block comment is not closed",
        LexErrorKind::InvalidCharacter => "character not allowed here",
        LexErrorKind::InvalidEscape => "unknown escape sequence",
        LexErrorKind::IntegerOverflow => "integer literal does not fit in 64 bits",
    }
}

pub fn run_source(src: &str, opts: &Options, input: &GuestInput) -> Result<RunOutcome, Vec<Diagnostic>> {
    let prog = compile(src, opts)?;
    Ok(vm::run(&prog, &opts.vm_config(), input))
}
