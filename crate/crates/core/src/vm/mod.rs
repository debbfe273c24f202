//! Interpreter for the typed IR over simulated memory.

mod exec;
pub mod stats;
pub mod trap;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::runtime::memory::{DEFAULT_HEAP_SIZE, DEFAULT_LOCK_ARENA_SIZE, DEFAULT_STACK_SIZE};
use crate::tir::{MetaLayout, Repr, TirProgram};

pub use exec::Vm;
pub use stats::{Divergence, DivergenceKind, DivergenceReport, FuncStats, StatsReport};
pub use trap::{Site, Trap, TrapCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Backend {
    /// Metadata inside fat pointers, locks in object headers.
    InPlace,
    /// Metadata in a table keyed by pointer storage address, locks in an arena.
    Disjoint,
    /// No checks and no metadata.
    Unchecked,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Unchecked, Backend::InPlace, Backend::Disjoint];

    pub fn repr(self) -> Repr {
        match self {
            Backend::InPlace => Repr::Fat,
            Backend::Disjoint | Backend::Unchecked => Repr::Thin,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::InPlace => "inplace",
            Backend::Disjoint => "disjoint",
            Backend::Unchecked => "unchecked",
        }
    }

    pub fn is_checked(self) -> bool {
        self != Backend::Unchecked
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inplace" => Ok(Backend::InPlace),
            "disjoint" => Ok(Backend::Disjoint),
            "unchecked" => Ok(Backend::Unchecked),
            _ => Err(format!("unknown backend `{s}` (expected inplace, disjoint or unchecked)")),
        }
    }
}

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmConfig {
    pub backend: Backend,
    pub meta: MetaLayout,
    pub seed: u64,
    pub oracle: bool,
    pub heap_size: u64,
    pub stack_size: u64,
    pub lock_arena_size: u64,
    /// Abort with an internal fault after this many instructions.
    pub max_steps: Option<u64>,
}

impl VmConfig {
    pub fn new(backend: Backend) -> Self {
        VmConfig {
            backend,
            meta: MetaLayout::default(),
            seed: DEFAULT_SEED,
            oracle: false,
            heap_size: DEFAULT_HEAP_SIZE,
            stack_size: DEFAULT_STACK_SIZE,
            lock_arena_size: DEFAULT_LOCK_ARENA_SIZE,
            max_steps: None,
        }
    }
}

/// Values for `main`'s parameters and the queue read by `read_int`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GuestInput {
    pub args: Vec<i64>,
    pub input: Vec<i64>,
}

impl GuestInput {
    pub fn args(args: &[i64]) -> Self {
        GuestInput { args: args.to_vec(), input: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Process exit status: the trap code, or `main`'s result modulo 256.
    pub status: i32,
    pub ret: Option<i64>,
    pub output: Vec<u8>,
    pub trap: Option<Trap>,
    pub stats: StatsReport,
    pub divergence: Option<DivergenceReport>,
}

impl RunOutcome {
    pub fn output_str(&self) -> String {
        String::from_utf8_lossy(&self.output).into_owned()
    }
}

/// Execute `prog`. The program must have been lowered for `cfg.backend.repr()`.
pub fn run(prog: &TirProgram, cfg: &VmConfig, input: &GuestInput) -> RunOutcome {
    Vm::new(prog, cfg.clone(), input.clone()).run()
}

/// Execute with the liveness oracle and return its findings with the outcome.
pub fn oracle_run(prog: &TirProgram, cfg: &VmConfig, input: &GuestInput) -> (RunOutcome, DivergenceReport) {
    let cfg = VmConfig { oracle: true, ..cfg.clone() };
    let out = run(prog, &cfg, input);
    let report = out.divergence.clone().unwrap_or_default();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{compile, Options};

    fn run_with(src: &str, opts: Options, args: &[i64]) -> RunOutcome {
        let prog = compile(src, &opts).unwrap_or_else(|e| panic!("{e:?}"));
        run(&prog, &opts.vm_config(), &GuestInput::args(args))
    }

    fn run_on(src: &str, backend: Backend) -> RunOutcome {
        run_with(src, Options::new(backend).opt_checks(false), &[])
    }

    const UAF: &str = "int main() {\n\
        mm_ptr<int> p = mm_alloc<int>(1);\n\
        *p = 7;\n\
        mm_free(p);\n\
        return *p;\n\
    }";

    #[test]
    fn clean_program_agrees_across_backends() {
        let src = "struct N { int v; mm_ptr<struct N> next; };\n\
            int main() {\n\
              mm_ptr<struct N> head = null; int i = 0;\n\
              while (i < 10) { mm_ptr<struct N> n = mm_alloc<struct N>(1); n->v = i; n->next = head; head = n; i = i + 1; }\n\
              int s = 0;\n\
              while (head != null) { s = s + head->v; mm_ptr<struct N> d = head; head = head->next; mm_free(d); }\n\
              print_int(s); print_str(\"done\\n\");\n\
              return s;\n\
            }";
        for b in Backend::ALL {
            let out = run_on(src, b);
            assert_eq!(out.trap, None, "{b}");
            assert_eq!(out.output_str(), "45\ndone\n", "{b}");
            assert_eq!(out.status, 45);
            assert_eq!(out.stats.alloc_count, 10);
            assert_eq!(out.stats.free_count, 10);
        }
    }

    #[test]
    fn use_after_free_traps_at_the_deref() {
        for b in [Backend::InPlace, Backend::Disjoint] {
            let out = run_on(UAF, b);
            let trap = out.trap.expect("trap");
            assert_eq!(out.status, 11);
            assert_eq!(trap.code, TrapCode::UseAfterFree);
            assert_eq!((trap.site.func.as_str(), trap.site.line), ("main", 5));
        }
        let out = run_on(UAF, Backend::Unchecked);
        assert_eq!((out.status, out.trap), (7, None));
    }

    #[test]
    fn check_cost_is_one_load_in_place_and_four_disjoint() {
        let src = "int main() { mm_ptr<int> p = mm_alloc<int>(1); int s = 0; int i = 0;\n\
                   while (i < 50) { s = s + *p; i = i + 1; } return 0; }";
        let ip = run_on(src, Backend::InPlace).stats;
        let dj = run_on(src, Backend::Disjoint).stats;
        let un = run_on(src, Backend::Unchecked).stats;
        assert_eq!(ip.key_checks_exec, 50);
        assert_eq!(ip.meta_loads_check, 50);
        assert_eq!(dj.meta_loads_check, 200);
        assert_eq!((un.key_checks_exec, un.meta_loads, un.meta_stores), (0, 0, 0));
    }

    #[test]
    fn storing_a_fat_value_costs_one_store_in_place() {
        let src = "int main() { mm_array_ptr<mm_ptr<int>> a = mm_alloc<mm_ptr<int>>(4); mm_ptr<int> p = mm_alloc<int>(1);\n\
                   a[2] = p; return 0; }";
        let count = |b| {
            let o = Options::new(b).opt_checks(false);
            let base = run_with(&src.replace("a[2] = p;", ""), o, &[]).stats;
            let with = run_with(src, o, &[]).stats;
            (with.meta_stores - base.meta_stores, with.meta_loads - base.meta_loads - (with.meta_loads_check - base.meta_loads_check))
        };
        assert_eq!(count(Backend::InPlace), (1, 0));
        // propagate 2+2 for the store
        assert_eq!(count(Backend::Disjoint), (2, 2));
    }

    #[test]
    fn escaped_frame_pointer_is_dead_after_return() {
        let src = "mm_ptr<int> leak() { int x; x = 5; mm_ptr<int> p = &x; return p; }\n\
                   int main() {\n\
                     mm_ptr<int> q = leak();\n\
                     return *q;\n\
                   }";
        for b in [Backend::InPlace, Backend::Disjoint] {
            let out = run_on(src, b);
            assert_eq!(out.status, 11, "{b}");
            assert_eq!(out.trap.unwrap().site.line, 4);
        }
        assert_eq!(run_on(src, Backend::Unchecked).status, 5);
    }

    #[test]
    fn globals_share_the_global_lock() {
        let src = "int g; int main() { mm_ptr<int> p = &g; *p = 3; return g; }";
        for b in [Backend::InPlace, Backend::Disjoint] {
            let prog = compile(src, &Options::new(b)).unwrap();
            let mut vm = Vm::new(&prog, VmConfig::new(b), GuestInput::default());
            let out = vm.run();
            assert_eq!(out.status, 3);
            assert_eq!(vm.global_lock_value("g"), Some(1), "{b}");
        }
    }

    #[test]
    fn freed_block_lock_reads_zero() {
        let src = "int main() { mm_ptr<int> p = mm_alloc<int>(2); mm_free(p); return 0; }";
        for b in [Backend::InPlace, Backend::Disjoint] {
            let prog = compile(src, &Options::new(b)).unwrap();
            let mut vm = Vm::new(&prog, VmConfig::new(b), GuestInput::default());
            assert_eq!(vm.run().status, 0);
            let (_, lock) = vm.last_freed().unwrap();
            assert_eq!(vm.memory().read64(lock), 0);
        }
    }

    #[test]
    fn double_and_interior_free() {
        let double = "int main() { mm_ptr<int> p = mm_alloc<int>(1); mm_free(p); mm_free(p); return 0; }";
        let interior = "int main() { mm_array_ptr<int> p = mm_alloc<int>(4); mm_free(p + 1); return 0; }";
        for b in [Backend::InPlace, Backend::Disjoint] {
            assert_eq!(run_on(double, b).status, 12, "{b}");
            assert_eq!(run_on(interior, b).status, 13, "{b}");
        }
        assert_eq!(run_on(double, Backend::Unchecked).status, 0);
        assert_eq!(run_on(interior, Backend::Unchecked).status, 0);
    }

    #[test]
    fn marshal_round_trip_reverses_pointers() {
        let src = "unchecked int rev(int **t, int n) { int i = 0; while (i < n / 2) { int *x = t[i]; t[i] = t[n - 1 - i]; t[n - 1 - i] = x; i = i + 1; } return 0; }\n\
            unchecked int main() {\n\
              mm_array_ptr<mm_ptr<int>> a = mm_alloc<mm_ptr<int>>(5); int i = 0;\n\
              while (i < 5) { a[i] = mm_alloc<int>(1); *a[i] = i; i = i + 1; }\n\
              int **t = marshal(a, 5); rev(t, 5); a = unmarshal(t, a, 5);\n\
              i = 0; while (i < 5) { print_int(*a[i]); i = i + 1; }\n\
              return 0;\n\
            }";
        for b in Backend::ALL {
            let out = run_on(src, b);
            assert_eq!(out.trap, None, "{b}");
            assert_eq!(out.output_str(), "4\n3\n2\n1\n0\n", "{b}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let src = "int main() { int i = 0; while (i < 20) { mm_ptr<int> p = mm_alloc<int>(i + 1); *p = i; mm_free(p); i = i + 1; } return 0; }";
        for b in Backend::ALL {
            assert_eq!(run_on(src, b), run_on(src, b));
        }
    }

    #[test]
    fn oracle_sees_no_divergence_on_clean_code() {
        let src = "int main() { mm_ptr<int> p = mm_alloc<int>(1); *p = 2; int v = *p; mm_free(p); return v; }";
        let prog = compile(src, &Options::new(Backend::InPlace)).unwrap();
        let (out, rep) = oracle_run(&prog, &VmConfig::new(Backend::InPlace), &GuestInput::default());
        assert_eq!(out.status, 2);
        assert!(rep.is_clean());
        assert!(rep.checks_observed > 0);
    }

    #[test]
    fn main_arguments_and_input() {
        let src = "int main(int a, int b) { return a * 10 + b + read_int() + read_int(); }";
        let prog = compile(src, &Options::new(Backend::InPlace)).unwrap();
        let input = GuestInput { args: vec![4, 2], input: vec![3] };
        assert_eq!(run(&prog, &VmConfig::new(Backend::InPlace), &input).ret, Some(42 + 3 - 1));
    }

    #[test]
    fn division_by_zero_and_null_deref() {
        assert_eq!(run_on("int main() { int z = 0; return 1 / z; }", Backend::Unchecked).status, 19);
        assert_eq!(run_on("int main() { mm_ptr<int> p = null; return *p; }", Backend::InPlace).status, 17);
    }
}
