// Print the IR of one function before and after check optimization.

use std::error::Error;

use tempcc::driver::{compile, Options};
use tempcc::vm::Backend;

const SRC: &str = "struct Acc { int total; int count; };

void add(mm_ptr<struct Acc> a, int v) {
    a->total = a->total + v;
    a->count = a->count + 1;
}

int main() {
    struct Acc acc;
    add(&acc, 5);
    add(&acc, 7);
    return acc.total;
}
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut counts = Vec::new();
    for opt in [false, true] {
        let prog = compile(SRC, &Options::new(Backend::InPlace).opt_checks(opt)).map_err(|d| format!("{d:?}"))?;
        let f = prog.func("add").ok_or("no add")?;
        println!("-- add, optimizer {} --\n{}", if opt { "on" } else { "off" }, f.dump());
        counts.push(f.count_key_checks());
    }
    println!("key checks: {} before, {} after", counts[0], counts[1]);
    if counts != [4, 1] {
        return Err(format!("unexpected check counts {counts:?}").into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
