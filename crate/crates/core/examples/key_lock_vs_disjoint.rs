// Metadata traffic of the two checked backends on the same loop.

use std::error::Error;

use tempcc::bench::programs::micro;
use tempcc::driver::{run_source, Options};
use tempcc::vm::{Backend, GuestInput};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = 1000;
    let mut loads = Vec::new();
    for backend in Backend::ALL {
        let opts = Options::new(backend).opt_checks(false);
        let out = run_source(micro::DEREF.source, &opts, &GuestInput::args(&[n])).map_err(|d| format!("{d:?}"))?;
        let s = &out.stats;
        println!(
            "{backend:<9} checks {:>5}  check loads {:>5}  metaLoads {:>5}  metaStores {:>3}  instrCount {:>6}",
            s.key_checks_exec, s.meta_loads_check, s.meta_loads, s.meta_stores, s.instr_count
        );
        loads.push(s.meta_loads_check);
    }
    if loads != [0, n as u64, 4 * n as u64] {
        return Err(format!("unexpected check loads {loads:?}").into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
