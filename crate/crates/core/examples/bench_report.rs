// Run the benchmark suite and print the CSV report.

use std::error::Error;

use tempcc::bench;
use tempcc::vm::DEFAULT_SEED;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let report = bench::bench(DEFAULT_SEED)?;
    print!("{}", report.to_csv());
    for (mode, s) in &report.modes {
        println!("{mode:<16} geomean instr {:>6.1}%  mem {:>6.1}%", 100.0 * s.geomean_overhead_instr, 100.0 * s.geomean_overhead_mem);
    }
    let ip = &report.modes["inplace/opt"];
    let dj = &report.modes["disjoint/opt"];
    if ip.geomean_overhead_instr >= dj.geomean_overhead_instr {
        return Err("in-place metadata should cost less than disjoint".into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
