//! Seeded generator of pointer-arithmetic programs that stay in bounds and
//! never touch freed memory, so any trap or oracle divergence is a bug.

#![allow(dead_code)]

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PTRS: usize = 5;

#[derive(Clone, Copy)]
enum Obj {
    Heap(usize),
    Local,
    Global,
}

struct Gen {
    rng: ChaCha8Rng,
    out: String,
    heap_len: Vec<i64>,
    ptrs: Vec<(Obj, i64)>,
}

impl Gen {
    fn len(&self, o: Obj) -> i64 {
        match o {
            Obj::Heap(i) => self.heap_len[i],
            Obj::Local => 8,
            Obj::Global => 16,
        }
    }

    fn base(o: Obj) -> String {
        match o {
            Obj::Heap(i) => format!("h{i}"),
            Obj::Local => "loc".into(),
            Obj::Global => "glob".into(),
        }
    }

    fn pick_obj(&mut self) -> Obj {
        match self.rng.random_range(0..5) {
            0 => Obj::Local,
            1 => Obj::Global,
            _ => Obj::Heap(self.rng.random_range(0..self.heap_len.len())),
        }
    }

    fn line(&mut self, s: String) {
        let _ = writeln!(self.out, "    {s}");
    }

    fn stmt(&mut self) {
        let i = self.rng.random_range(0..PTRS);
        let (obj, off) = self.ptrs[i];
        let len = self.len(obj);
        match self.rng.random_range(0..9) {
            0 => {
                let j = self.rng.random_range(0..PTRS);
                let (o2, off2) = self.ptrs[j];
                let target = self.rng.random_range(0..self.len(o2));
                let k = target - off2;
                self.line(format!("p{i} = p{j} + {k};").replace("+ -", "- "));
                self.ptrs[i] = (o2, target);
            }
            1 if off > 0 => {
                let k = self.rng.random_range(1..=off);
                self.line(format!("p{i} = p{i} - {k};"));
                self.ptrs[i].1 -= k;
            }
            2 => {
                let k = self.rng.random_range(0..len) - off;
                self.line(format!("x = x + p{i}[{k}];"));
            }
            3 => {
                let k = self.rng.random_range(0..len) - off;
                self.line(format!("p{i}[{k}] = x % 1000 + {k};"));
            }
            4 => self.line(format!("x = x + *p{i};")),
            5 => {
                let n = self.rng.random_range(0..=len - off);
                self.line(format!("x = x + walk(p{i}, {n});"));
            }
            6 => {
                let k = self.rng.random_range(0..3);
                let j = self.rng.random_range(0..4);
                match self.rng.random_range(0..3) {
                    0 => self.line(format!("f = &sp[{k}].b; x = x + *f;")),
                    1 => self.line(format!("sp[{k}].c[{j}] = x % 77;")),
                    _ => self.line(format!("x = x + sp[{k}].c[{j}] + sp[{k}].a;")),
                }
            }
            7 => {
                let h = self.rng.random_range(0..self.heap_len.len());
                let n = self.rng.random_range(1..24);
                self.line(format!("mm_free(h{h}); h{h} = mm_alloc<int>({n});"));
                self.heap_len[h] = n;
                for p in 0..PTRS {
                    if let (Obj::Heap(hh), _) = self.ptrs[p] {
                        if hh == h {
                            let off = self.rng.random_range(0..n);
                            self.line(format!("p{p} = h{h} + {off};"));
                            self.ptrs[p] = (Obj::Heap(h), off);
                        }
                    }
                }
            }
            _ => {
                let o = self.pick_obj();
                let off = self.rng.random_range(0..self.len(o));
                self.line(format!("p{i} = {} + {off};", Self::base(o)));
                self.ptrs[i] = (o, off);
            }
        }
    }
}

/// A complete program for `seed`; prints one checksum and exits 0.
pub fn pointer_program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heap_len: Vec<i64> = (0..3).map(|_| rng.random_range(1..32)).collect();
    let mut g = Gen { rng, out: String::new(), heap_len, ptrs: Vec::new() };
    g.out.push_str(
        "struct S {\n    int a;\n    int b;\n    int c[4];\n};\n\nint glob[16];\n\n\
         int walk(mm_array_ptr<int> p, int n) {\n    int s = 0;\n    while (n > 0) {\n        s = s + *p;\n        p = p + 1;\n        n = n - 1;\n    }\n    return s;\n}\n\n\
         int main() {\n    int x = 1;\n    int loc[8];\n    mm_ptr<int> f = null;\n    mm_array_ptr<struct S> sp = mm_alloc<struct S>(3);\n",
    );
    for (i, n) in g.heap_len.clone().into_iter().enumerate() {
        g.line(format!("mm_array_ptr<int> h{i} = mm_alloc<int>({n});"));
    }
    for i in 0..PTRS {
        let o = g.pick_obj();
        let off = g.rng.random_range(0..g.len(o));
        g.line(format!("mm_array_ptr<int> p{i} = {} + {off};", Gen::base(o)));
        g.ptrs.push((o, off));
    }
    let n = g.rng.random_range(15..40);
    for _ in 0..n {
        g.stmt();
    }
    g.line("print_int(x);".into());
    g.line("return 0;".into());
    g.out.push_str("}\n");
    g.out
}
