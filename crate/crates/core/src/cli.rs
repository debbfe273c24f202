//! Command-line interface: `run`, `bench` and `corpus`.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, CorpusConfig};
use crate::checkopt;
use crate::driver::{compile, Options};
use crate::tir::MetaLayout;
use crate::vm::{self, Backend, GuestInput, DEFAULT_SEED};

/// Exit status for compile errors and unusable invocations.
pub const EXIT_COMPILE: i32 = 2;
/// Exit status when a harness expectation fails.
pub const EXIT_HARNESS: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tempcc", version, about = "Compile and run MiniCC programs with key-lock checked pointers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile and execute one program; exits with the guest status or trap code.
    Run(RunArgs),
    /// Run the benchmark suite in every mode and write CSV and JSON reports.
    Bench(BenchArgs),
    /// Check the bug corpus and clean programs against their expectations.
    Corpus(CorpusArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = MetaLayout::default().key_bits())]
    pub key_bits: u32,
    #[arg(long)]
    pub no_opt_checks: bool,
    #[arg(long, env = "TEMPCC_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    #[arg(long, default_value = "inplace")]
    pub backend: Backend,
    #[command(flatten)]
    pub common: Common,
    /// Co-run the liveness oracle and report false positives and negatives.
    #[arg(long)]
    pub oracle: bool,
    /// Write the stats report as JSON.
    #[arg(long, value_name = "OUT.json")]
    pub stats: Option<PathBuf>,
    /// Print the lowered (and optimized) IR instead of running.
    #[arg(long)]
    pub emit_tir: bool,
    /// Print per-block check availability instead of running.
    #[arg(long)]
    pub dump_dataflow: bool,
    /// Print compile errors as JSON.
    #[arg(long)]
    pub json_diagnostics: bool,
    /// Argument for `main`, in order.
    #[arg(long = "arg", value_name = "N", allow_hyphen_values = true)]
    pub args: Vec<i64>,
    /// Value queued for `read_int`, in order.
    #[arg(long = "input", value_name = "N", allow_hyphen_values = true)]
    pub input: Vec<i64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
    #[arg(long, env = "TEMPCC_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Backends to check; defaults to both checked backends.
    #[arg(long = "backend")]
    pub backends: Vec<Backend>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub oracle: bool,
}

fn options(backend: Backend, c: &Common) -> Result<Options, String> {
    let meta = MetaLayout::new(c.key_bits).map_err(|e| e.to_string())?;
    Ok(Options { backend, meta, opt_checks: !c.no_opt_checks, seed: c.seed, oracle: false })
}

/// Run a parsed command line and return the process exit status.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Corpus(a) => cmd_corpus(a),
    }
}

pub fn main() -> i32 {
    execute(Cli::parse())
}

fn cmd_run(a: RunArgs) -> i32 {
    let file = a.file.display().to_string();
    let src = match fs::read_to_string(&a.file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{file}: {e}");
            return EXIT_COMPILE;
        }
    };
    let opts = match options(a.backend, &a.common) {
        Ok(o) => Options { oracle: a.oracle, ..o },
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_COMPILE;
        }
    };
    let prog = match compile(&src, &opts) {
        Ok(p) => p,
        Err(diags) => {
            if a.json_diagnostics {
                println!("{}", serde_json::to_string_pretty(&diags).expect("diagnostics serialize"));
            } else {
                for d in &diags {
                    eprintln!("{}", d.render(&file));
                }
            }
            return EXIT_COMPILE;
        }
    };
    if a.emit_tir || a.dump_dataflow {
        if a.emit_tir {
            print!("{}", prog.dump());
        }
        if a.dump_dataflow {
            print!("{}", checkopt::dump_dataflow(&prog));
        }
        return 0;
    }
    let out = vm::run(&prog, &opts.vm_config(), &GuestInput { args: a.args, input: a.input });
    print!("{}", out.output_str());
    if let Some(t) = &out.trap {
        eprintln!("{file}: {t}");
    }
    if let Some(d) = &out.divergence {
        eprintln!("oracle: {} checks, {} false positives, {} false negatives, {} offset violations",
            d.checks_observed, d.false_positives(), d.false_negatives(), d.offset_violations);
        for ev in &d.events {
            eprintln!("oracle: {:?} at {}: {}", ev.kind, ev.site, ev.detail);
        }
    }
    if let Some(path) = &a.stats {
        if let Err(e) = fs::write(path, out.stats.to_json()) {
            eprintln!("{}: {e}", path.display());
            return EXIT_HARNESS;
        }
    }
    out.status
}

fn cmd_bench(a: BenchArgs) -> i32 {
    let report = match bench::bench(a.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("bench: {e}");
            return EXIT_HARNESS;
        }
    };
    let written = fs::create_dir_all(&a.out)
        .and_then(|_| fs::write(a.out.join("bench.csv"), report.to_csv()))
        .and_then(|_| fs::write(a.out.join("bench.json"), report.to_json()));
    if let Err(e) = written {
        eprintln!("{}: {e}", a.out.display());
        return EXIT_HARNESS;
    }
    println!("{:<20} {:<10} {:>5} {:>12} {:>14} {:>13}", "benchmark", "backend", "opt", "instrCount", "overhead_instr", "overhead_mem");
    for r in &report.rows {
        println!(
            "{:<20} {:<10} {:>5} {:>12} {:>13.1}% {:>12.1}%",
            r.benchmark, r.backend, r.opt, r.instr_count, 100.0 * r.overhead_instr, 100.0 * r.overhead_mem
        );
    }
    for (mode, s) in &report.modes {
        println!("geomean {mode:<16} instr {:>7.1}%  mem {:>7.1}%", 100.0 * s.geomean_overhead_instr, 100.0 * s.geomean_overhead_mem);
    }
    println!("wrote {} and {}", a.out.join("bench.csv").display(), a.out.join("bench.json").display());
    0
}

fn cmd_corpus(a: CorpusArgs) -> i32 {
    if let Err(e) = MetaLayout::new(a.common.key_bits) {
        eprintln!("error: {e}");
        return EXIT_COMPILE;
    }
    let backends = if a.backends.is_empty() { vec![Backend::InPlace, Backend::Disjoint] } else { a.backends };
    let cfg = CorpusConfig { key_bits: a.common.key_bits, seed: a.common.seed, oracle: a.oracle, opt_checks: !a.common.no_opt_checks };
    let report = bench::run_corpus(&backends, cfg);
    print!("{}", report.render());
    if report.all_pass() {
        0
    } else {
        EXIT_HARNESS
    }
}
