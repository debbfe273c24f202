// Redundant check elimination, with and without a programmer hint.

use std::error::Error;

use tempcc::bench::programs::micro;
use tempcc::checkopt::dump_dataflow;
use tempcc::driver::{compile, run_source, Options};
use tempcc::vm::{Backend, GuestInput};

const REPEATED: &str = "struct P { int x; int y; };
int main() {
    mm_ptr<struct P> p = mm_alloc<struct P>(1);
    p->x = 1;
    p->y = 2;
    return p->x + p->y;
}
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let opts = Options::new(Backend::InPlace);
    let prog = compile(REPEATED, &opts).map_err(|d| format!("{d:?}"))?;
    println!("{}", dump_dataflow(&prog));
    println!("static checks elided: {}", prog.checks_elided);
    if prog.checks_elided != 3 {
        return Err("expected three of four checks to go".into());
    }
    let input = GuestInput::args(&[500]);
    let off = run_source(micro::HINT_LOOP.source, &opts.opt_checks(false), &input).map_err(|d| format!("{d:?}"))?;
    let on = run_source(micro::HINT_LOOP.source, &opts, &input).map_err(|d| format!("{d:?}"))?;
    println!("hint loop: {} checks unoptimized, {} optimized", off.stats.key_checks_exec, on.stats.key_checks_exec);
    if on.output != off.output || on.stats.key_checks_exec * 10 > off.stats.key_checks_exec {
        return Err("hint did not pay off".into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
