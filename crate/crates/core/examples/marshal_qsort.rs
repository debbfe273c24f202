// Sort a checked-pointer array with metadata-unaware code, and watch a
// forged address get rejected on the way back.

use std::error::Error;

use tempcc::bench::programs::{find, BENCH};
use tempcc::driver::{run_source, Options};
use tempcc::vm::{Backend, GuestInput};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let qsort = BENCH.iter().find(|p| p.name == "qsort-marshal-mini").ok_or("missing benchmark")?;
    let forged = find("marshal_forged").ok_or("missing corpus program")?;
    for backend in Backend::ALL {
        let opts = Options::new(backend);
        let sorted = run_source(qsort.source, &opts, &GuestInput::args(&[256, 1])).map_err(|d| format!("{d:?}"))?;
        let bad = run_source(forged.source, &opts, &GuestInput::default()).map_err(|d| format!("{d:?}"))?;
        println!("{backend:<9} sorted flag {:?}, forged exit {}", sorted.output_str().lines().next(), bad.status);
        if !sorted.output_str().starts_with("1\n") || bad.status != if backend.is_checked() { 15 } else { 0 } {
            return Err(format!("{backend}: unexpected result").into());
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
