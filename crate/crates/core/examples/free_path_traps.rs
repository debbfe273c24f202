// Double free, interior free and freeing a global, and the lock left behind
// by a good free.

use std::error::Error;

use tempcc::driver::{compile, Options};
use tempcc::vm::{Backend, GuestInput, Vm};

const CASES: [(&str, &str, i32); 4] = [
    ("good", "int main() { mm_ptr<int> p = mm_alloc<int>(1); mm_free(p); return 0; }", 0),
    ("double", "int main() { mm_ptr<int> p = mm_alloc<int>(1); mm_free(p); mm_free(p); return 0; }", 12),
    ("interior", "int main() { mm_array_ptr<int> p = mm_alloc<int>(4); mm_free(p + 2); return 0; }", 13),
    ("global", "int g; int main() { mm_ptr<int> p = &g; mm_free(p); return 0; }", 13),
];

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for backend in [Backend::InPlace, Backend::Disjoint] {
        for (name, src, want) in CASES {
            let opts = Options::new(backend);
            let prog = compile(src, &opts).map_err(|d| format!("{d:?}"))?;
            let mut vm = Vm::new(&prog, opts.vm_config(), GuestInput::default());
            let out = vm.run();
            let lock = vm.last_freed().map(|(_, l)| vm.memory().read64(l));
            println!("{backend:<9} {name:<9} exit {:>2}  lock after last good free {lock:?}", out.status);
            if out.status != want || (name == "good" && lock != Some(0)) {
                return Err(format!("{backend}/{name}: exit {}", out.status).into());
            }
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
