//! The bug corpus and clean programs, run against their expectations.

use std::fmt::Write;

use super::programs::{Program, BUGS, CLEAN};
use super::suite::SUITE;
use crate::driver::{compile, Options};
use crate::vm::{self, Backend, DivergenceReport, GuestInput, TrapCode};

/// What a bug program must do: trap with `code` on source line `line`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expectation {
    pub code: TrapCode,
    pub line: u32,
}

/// Read the `// expect: N` header and the line carrying `// TRAP`.
pub fn expectation(src: &str) -> Option<Expectation> {
    let code = src.lines().find_map(|l| l.trim().strip_prefix("// expect:"))?.trim().parse().ok()?;
    let line = src.lines().position(|l| l.contains("// TRAP"))? as u32 + 1;
    Some(Expectation { code: TrapCode::from_code(code)?, line })
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub backend: Backend,
    pub expected: Option<Expectation>,
    pub status: i32,
    pub trap_line: Option<u32>,
    pub divergence: Option<DivergenceReport>,
    pub pass: bool,
}

impl CorpusEntry {
    pub fn describe(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let got = match self.trap_line {
            Some(l) => format!("exit {} at line {l}", self.status),
            None => format!("exit {}", self.status),
        };
        let want = match (self.expected, self.backend) {
            (Some(e), b) if b.is_checked() => format!("want exit {} at line {}", e.code.code(), e.line),
            (Some(_), _) => "want no trap".to_string(),
            (None, _) => "want exit 0".to_string(),
        };
        let mut s = format!("{verdict} {:<22} {:<9} {got}; {want}", self.name, self.backend.name());
        if let Some(d) = &self.divergence {
            let _ = write!(s, "; oracle fp={} fn={}", d.false_positives(), d.false_negatives());
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusReport {
    pub entries: Vec<CorpusEntry>,
}

impl CorpusReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}", e.describe());
        }
        let passed = self.entries.iter().filter(|e| e.pass).count();
        let _ = writeln!(s, "{passed}/{} passed", self.entries.len());
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusConfig {
    pub key_bits: u32,
    pub seed: u64,
    pub oracle: bool,
    pub opt_checks: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { key_bits: 32, seed: vm::DEFAULT_SEED, oracle: false, opt_checks: true }
    }
}

fn run_one(p: &'static Program, args: &[i64], backend: Backend, cfg: CorpusConfig) -> CorpusEntry {
    let expected = expectation(p.source);
    let checked = backend.is_checked();
    let opts = Options::new(backend).key_bits(cfg.key_bits).seed(cfg.seed).opt_checks(cfg.opt_checks).oracle(cfg.oracle && checked);
    let prog = match compile(p.source, &opts) {
        Ok(prog) => prog,
        Err(_) => {
            return CorpusEntry { name: p.name, backend, expected, status: 2, trap_line: None, divergence: None, pass: false };
        }
    };
    let out = vm::run(&prog, &opts.vm_config(), &GuestInput::args(args));
    let trap_line = out.trap.as_ref().map(|t| t.site.line);
    let mut pass = match (expected, checked) {
        (Some(e), true) => out.trap.as_ref().is_some_and(|t| t.code == e.code && t.site.line == e.line),
        (Some(_), false) => out.trap.is_none(),
        (None, _) => out.trap.is_none() && out.status == 0,
    };
    if let Some(d) = &out.divergence {
        pass &= d.is_clean();
    }
    CorpusEntry { name: p.name, backend, expected, status: out.status, trap_line, divergence: out.divergence, pass }
}

/// Every bug program, then every clean program and benchmark, per backend.
pub fn run_corpus(backends: &[Backend], cfg: CorpusConfig) -> CorpusReport {
    let mut entries = Vec::new();
    for &b in backends {
        for p in &BUGS {
            entries.push(run_one(p, &[], b, cfg));
        }
        for p in &CLEAN {
            entries.push(run_one(p, &[], b, cfg));
        }
        for bench in &SUITE {
            entries.push(run_one(bench.program, bench.args, b, cfg));
        }
    }
    CorpusReport { entries }
}
