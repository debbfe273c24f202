// A dangling read traps with code 11 in both checked backends and slips
// through unchecked.

use std::error::Error;

use tempcc::driver::{run_source, Options};
use tempcc::vm::{Backend, GuestInput, TrapCode};

const SRC: &str = "int main() {
    mm_ptr<int> p = mm_alloc<int>(1);
    *p = 42;
    mm_free(p);
    mm_ptr<int> q = mm_alloc<int>(1);
    *q = 7;
    return *p;
}
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for backend in Backend::ALL {
        let out = run_source(SRC, &Options::new(backend), &GuestInput::default()).map_err(|d| format!("{d:?}"))?;
        match &out.trap {
            Some(t) => println!("{backend:<9} {t}"),
            None => println!("{backend:<9} no trap, returned {:?}", out.ret),
        }
        let trapped = out.trap.as_ref().map(|t| (t.code, t.site.line));
        let want = backend.is_checked().then_some((TrapCode::UseAfterFree, 7));
        if trapped != want {
            return Err(format!("{backend}: got {trapped:?}").into());
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
