// Compile a small program and run it under every backend.

use std::error::Error;

use tempcc::driver::{run_source, Options};
use tempcc::vm::{Backend, GuestInput};

const SRC: &str = r#"
struct Node {
    int v;
    mm_ptr<struct Node> next;
};

int main(int n) {
    mm_ptr<struct Node> head = null;
    int i = 0;
    while (i < n) {
        mm_ptr<struct Node> c = mm_alloc<struct Node>(1);
        c->v = i;
        c->next = head;
        head = c;
        i = i + 1;
    }
    int s = 0;
    while (head != null) {
        s = s + head->v;
        mm_ptr<struct Node> d = head;
        head = head->next;
        mm_free(d);
    }
    print_int(s);
    return 0;
}
"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for backend in Backend::ALL {
        let out = run_source(SRC, &Options::new(backend), &GuestInput::args(&[100]))
            .map_err(|d| format!("compile failed: {d:?}"))?;
        println!("{backend:<9} exit {} output {:?} instrCount {}", out.status, out.output_str(), out.stats.instr_count);
        if out.output_str() != "4950\n" {
            return Err(format!("{backend}: unexpected output").into());
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
