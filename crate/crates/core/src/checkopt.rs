//! Redundant key-check elimination over the typed IR.
//!
//! A forward must-analysis tracks fat variables whose key was checked (or
//! hinted) on every path with no intervening event that could free memory.
//! A check on such a variable is dropped.

use std::fmt::Write;

use crate::tir::verify::{analyze, transfer, ValidSet};
use crate::tir::{BlockId, Op, TirFunc, TirProgram};

/// Remove redundant checks in one function; returns how many were removed.
pub fn optimize_func(f: &mut TirFunc) -> u64 {
    let df = analyze(f);
    let mut removed = 0;
    for i in 0..f.blocks.len() {
        let Some(mut cur) = df.ins[i].clone() else { continue };
        let instrs = std::mem::take(&mut f.blocks[i].instrs);
        let mut kept = Vec::with_capacity(instrs.len());
        for ins in instrs {
            if let Op::KeyCheck { ptr } = ins.op {
                if cur.contains(&ptr) {
                    removed += 1;
                    continue;
                }
            }
            transfer(f, &ins.op, &mut cur);
            kept.push(ins);
        }
        f.blocks[i].instrs = kept;
    }
    removed
}

/// Optimize every function and record the total in `checks_elided`.
pub fn optimize(p: &mut TirProgram) -> u64 {
    let n: u64 = p.funcs.iter_mut().map(optimize_func).sum();
    p.optimized = true;
    p.checks_elided += n;
    n
}

fn set_str(s: &Option<ValidSet>) -> String {
    match s {
        None => "unreached".into(),
        Some(s) => {
            let vs: Vec<_> = s.iter().map(|v| v.to_string()).collect();
            format!("{{{}}}", vs.join(", "))
        }
    }
}

/// Per-block IN/OUT sets of validated variables.
pub fn dump_dataflow(p: &TirProgram) -> String {
    let mut out = String::new();
    for f in &p.funcs {
        let df = analyze(f);
        let _ = writeln!(out, "func {}", f.name);
        for i in 0..f.blocks.len() {
            let _ = writeln!(out, "  {}: in={} out={}", BlockId(i as u32), set_str(&df.ins[i]), set_str(&df.outs[i]));
        }
    }
    out
}
