// With a tiny key space a stale key can match a recycled lock. The oracle
// reports each such miss as a false negative.

use std::error::Error;

use tempcc::driver::{compile, Options};
use tempcc::vm::{oracle_run, Backend, GuestInput};

const SRC: &str = "int main(int n) {
    mm_ptr<int> p = mm_alloc<int>(1);
    mm_free(p);
    int i = 0;
    while (i < n) {
        mm_ptr<int> q = mm_alloc<int>(1);
        mm_free(q);
        i = i + 1;
    }
    mm_ptr<int> r = mm_alloc<int>(1);
    *r = 5;
    return *p;
}
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for bits in [2, 32] {
        let opts = Options::new(Backend::InPlace).key_bits(bits);
        let prog = compile(SRC, &opts).map_err(|d| format!("{d:?}"))?;
        let mut missed = 0;
        for n in 0..8 {
            let (out, rep) = oracle_run(&prog, &opts.vm_config(), &GuestInput::args(&[n]));
            missed += rep.false_negatives();
            if rep.false_positives() != 0 || (out.trap.is_none() != (rep.false_negatives() > 0)) {
                return Err(format!("keyBits {bits}, n {n}: oracle and trap disagree").into());
            }
        }
        println!("keyBits {bits:>2}: {missed} of 8 stale reads missed");
        if (bits == 32) != (missed == 0) {
            return Err("unexpected miss count".into());
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
