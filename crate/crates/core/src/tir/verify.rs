//! Check-coverage analysis: which fat variables are known to hold a live key
//! at each point, and a verifier that every checked access is covered.

use std::collections::BTreeSet;
use std::fmt;

use super::{Base, BlockId, Op, TirFunc, TirProgram, VarClass, VarId};
use crate::frontend::Span;

pub type ValidSet = BTreeSet<VarId>;

/// Per-block facts at entry and exit. `None` is the lattice top (unreached).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataflow {
    pub ins: Vec<Option<ValidSet>>,
    pub outs: Vec<Option<ValidSet>>,
}

/// Effect of one instruction on the set of validated variables.
pub fn transfer(f: &TirFunc, op: &Op, valid: &mut ValidSet) {
    match op {
        Op::Call { .. } | Op::Free { .. } | Op::Alloc { .. } | Op::Marshal { .. } | Op::Unmarshal { .. } => {
            valid.clear()
        }
        Op::Store { kills: true, .. } => valid.clear(),
        _ => {}
    }
    match *op {
        Op::KeyCheck { ptr } | Op::Hint { ptr } => {
            if f.class(ptr) == VarClass::Fat {
                valid.insert(ptr);
            }
        }
        // a derived pointer shares its source's key and lock
        Op::Copy { dst, src } | Op::PtrAdd { dst, src, .. } | Op::FieldAddr { dst, src, .. } => {
            if valid.contains(&src) && f.class(dst) == VarClass::Fat {
                valid.insert(dst);
            } else {
                valid.remove(&dst);
            }
        }
        _ => {
            if let Some(d) = op.def() {
                valid.remove(&d);
            }
        }
    }
}

fn meet(a: &Option<ValidSet>, b: &ValidSet) -> ValidSet {
    match a {
        None => b.clone(),
        Some(a) => a.intersection(b).copied().collect(),
    }
}

pub fn analyze(f: &TirFunc) -> Dataflow {
    let n = f.blocks.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, b) in f.blocks.iter().enumerate() {
        for s in b.term.successors() {
            preds[s.0 as usize].push(i);
        }
    }
    let mut ins: Vec<Option<ValidSet>> = vec![None; n];
    let mut outs: Vec<Option<ValidSet>> = vec![None; n];
    ins[0] = Some(ValidSet::new());
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            let input = if i == 0 {
                Some(ValidSet::new())
            } else {
                preds[i].iter().filter_map(|&p| outs[p].as_ref()).fold(None, |acc, o| Some(meet(&acc, o)))
            };
            let Some(mut cur) = input.clone() else { continue };
            for ins in &f.blocks[i].instrs {
                transfer(f, &ins.op, &mut cur);
            }
            if outs[i].as_ref() != Some(&cur) {
                outs[i] = Some(cur);
                changed = true;
            }
            ins[i] = input;
        }
    }
    Dataflow { ins, outs }
}

/// Fat variable whose key must be valid before `op` runs.
pub fn required_check(f: &TirFunc, op: &Op) -> Option<VarId> {
    let fat = |v: VarId| (f.class(v) == VarClass::Fat).then_some(v);
    match *op {
        Op::Load { addr, .. } | Op::Store { addr, .. } => match addr.base {
            Base::Var(v) => fat(v),
            _ => None,
        },
        Op::FieldAddr { src, .. } => Some(src),
        Op::PrintStr { src } => fat(src),
        Op::Marshal { array, .. } => Some(array),
        Op::Unmarshal { orig, .. } => Some(orig),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyError {
    pub func: String,
    pub block: BlockId,
    pub var: VarId,
    pub span: Span,
}

impl fmt::Display for VerifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} in {}: access through {} is not covered by a key check", self.span, self.func, self.block, self.var)
    }
}

pub fn verify_func(f: &TirFunc) -> Result<(), VerifyError> {
    let df = analyze(f);
    for (i, b) in f.blocks.iter().enumerate() {
        let Some(mut cur) = df.ins[i].clone() else { continue };
        for ins in &b.instrs {
            if let Some(v) = required_check(f, &ins.op) {
                if !cur.contains(&v) {
                    return Err(VerifyError { func: f.name.clone(), block: BlockId(i as u32), var: v, span: ins.span });
                }
            }
            transfer(f, &ins.op, &mut cur);
        }
    }
    Ok(())
}

pub fn verify(p: &TirProgram) -> Result<(), VerifyError> {
    p.funcs.iter().try_for_each(verify_func)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, tokenize};
    use crate::tir::{lower_program, Instr, MetaLayout, Repr};
    use crate::typeck::check_program;

    fn lower(src: &str) -> TirProgram {
        let typed = check_program(&parse(&tokenize(src).unwrap()).unwrap()).unwrap();
        lower_program(&typed, MetaLayout::default(), Repr::Fat).unwrap()
    }

    const LIST: &str = "struct N { int v; mm_ptr<struct N> next; };\n\
        int sum(mm_ptr<struct N> n) { int s = 0; while (n != null) { s = s + n->v; n->v = 0; n = n->next; } return s; }\n\
        int main() { mm_ptr<struct N> a = mm_alloc<struct N>(1); a->v = 3; print_str(\"x\"); return sum(a); }";

    #[test]
    fn lowered_code_is_covered() {
        verify(&lower(LIST)).unwrap();
    }

    #[test]
    fn removing_a_needed_check_is_caught() {
        let mut p = lower(LIST);
        let f = p.funcs.iter_mut().find(|f| f.name == "sum").unwrap();
        let (bi, ii) = f
            .blocks
            .iter()
            .enumerate()
            .find_map(|(bi, b)| b.instrs.iter().position(|i| matches!(i.op, Op::KeyCheck { .. })).map(|ii| (bi, ii)))
            .unwrap();
        f.blocks[bi].instrs.remove(ii);
        assert!(verify_func(f).is_err());
    }

    #[test]
    fn calls_kill_every_fact() {
        let p = lower("void g() { } int main() { mm_ptr<int> p = mm_alloc<int>(1); *p = 1; g(); return *p; }");
        let f = p.func("main").unwrap();
        // both accesses need their own check
        assert_eq!(f.count_key_checks(), 2);
        verify_func(f).unwrap();
    }

    #[test]
    fn derived_pointer_inherits_validity() {
        let p = lower("int main() { return 0; }");
        let mut f = p.funcs[0].clone();
        let a = VarId(f.vars.len() as u32);
        f.vars.push(crate::tir::VarInfo { class: VarClass::Fat, name: None });
        f.vars.push(crate::tir::VarInfo { class: VarClass::Fat, name: None });
        let b = VarId(a.0 + 1);
        let mk = |op| Instr { op, span: Span::default() };
        f.blocks[0].instrs = vec![
            mk(Op::KeyCheck { ptr: a }),
            mk(Op::PtrAdd { dst: b, src: a, index: None, disp: 8 }),
        ];
        let df = analyze(&f);
        assert_eq!(df.outs[0].clone().unwrap(), [a, b].into_iter().collect());
    }
}
