//! The benchmark suite: every program under every backend, with and without
//! the check optimizer.

use std::thread;

use thiserror::Error;

use super::programs::{Program, BENCH};
use super::report::{BenchReport, BenchRow};
use crate::driver::{compile, Diagnostic, Options};
use crate::vm::{self, Backend, GuestInput, RunOutcome, StatsReport};

pub struct Benchmark {
    pub program: &'static Program,
    pub args: &'static [i64],
}

impl Benchmark {
    pub fn name(&self) -> &'static str {
        self.program.name
    }
}

pub const SUITE: [Benchmark; 5] = [
    Benchmark { program: &BENCH[0], args: &[12, 4] },
    Benchmark { program: &BENCH[1], args: &[400, 20] },
    Benchmark { program: &BENCH[2], args: &[11] },
    Benchmark { program: &BENCH[3], args: &[300, 4] },
    Benchmark { program: &BENCH[4], args: &[256, 4] },
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{benchmark}: does not compile for {backend}: {}", .diags.first().map(|d| d.to_string()).unwrap_or_default())]
    Compile { benchmark: String, backend: Backend, diags: Vec<Diagnostic> },
    #[error("{benchmark}: exited with {status} under {backend}")]
    Failed { benchmark: String, backend: Backend, status: i32 },
    #[error("{benchmark}: output under {backend} differs from the unchecked baseline")]
    Diverged { benchmark: String, backend: Backend },
}

/// One (benchmark, backend, opt) execution.
#[derive(Debug, Clone)]
pub struct Cell {
    pub benchmark: &'static str,
    pub backend: Backend,
    pub opt: bool,
    pub outcome: RunOutcome,
}

impl Cell {
    pub fn stats(&self) -> &StatsReport {
        &self.outcome.stats
    }
}

pub fn run_cell(b: &Benchmark, backend: Backend, opt: bool, seed: u64) -> Result<Cell, BenchError> {
    let opts = Options::new(backend).opt_checks(opt).seed(seed);
    let prog = compile(b.program.source, &opts)
        .map_err(|diags| BenchError::Compile { benchmark: b.name().into(), backend, diags })?;
    let outcome = vm::run(&prog, &opts.vm_config(), &GuestInput::args(b.args));
    if outcome.status != 0 {
        return Err(BenchError::Failed { benchmark: b.name().into(), backend, status: outcome.status });
    }
    Ok(Cell { benchmark: b.name(), backend, opt, outcome })
}

/// Every mode for every benchmark; cells run on worker threads.
pub fn run_suite(suite: &[Benchmark], seed: u64) -> Result<Vec<Cell>, BenchError> {
    let jobs: Vec<(&Benchmark, Backend, bool)> = suite
        .iter()
        .flat_map(|b| Backend::ALL.into_iter().flat_map(move |be| [false, true].map(|opt| (b, be, opt))))
        .collect();
    let results: Vec<Result<Cell, BenchError>> = thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|&(b, be, opt)| s.spawn(move || run_cell(b, be, opt, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("benchmark worker panicked")).collect()
    });
    let cells = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    for c in &cells {
        let base = baseline(&cells, c.benchmark, c.opt);
        if c.outcome.output != base.outcome.output {
            return Err(BenchError::Diverged { benchmark: c.benchmark.into(), backend: c.backend });
        }
    }
    Ok(cells)
}

fn baseline<'c>(cells: &'c [Cell], benchmark: &str, opt: bool) -> &'c Cell {
    cells
        .iter()
        .find(|c| c.benchmark == benchmark && c.backend == Backend::Unchecked && c.opt == opt)
        .expect("every benchmark has a baseline cell")
}

/// Rows relative to the unchecked run with the same optimizer setting.
pub fn rows(cells: &[Cell]) -> Vec<BenchRow> {
    cells
        .iter()
        .map(|c| {
            let base = baseline(cells, c.benchmark, c.opt).stats();
            let s = c.stats();
            BenchRow {
                benchmark: c.benchmark.into(),
                backend: c.backend.name().into(),
                opt: c.opt,
                instr_count: s.instr_count,
                key_checks_exec: s.key_checks_exec,
                meta_loads: s.meta_loads,
                meta_stores: s.meta_stores,
                payload_bytes: s.heap_bytes_payload,
                metadata_bytes: s.heap_bytes_metadata,
                overhead_instr: s.instr_count as f64 / base.instr_count as f64 - 1.0,
                overhead_mem: (s.heap_bytes_payload + s.heap_bytes_metadata) as f64 / base.heap_bytes_payload as f64 - 1.0,
            }
        })
        .collect()
}

pub fn bench(seed: u64) -> Result<BenchReport, BenchError> {
    let cells = run_suite(&SUITE, seed)?;
    Ok(BenchReport::new(rows(&cells)))
}
