use std::fmt;

use serde::Serialize;

use super::layout::{layout_stack_frame, FrameLayout, Layouts, Repr};
use super::*;
use crate::frontend::ast::{BinOp, UnOp};
use crate::typeck::{
    Builtin, Conv, GlobalInit, LocalId, Place, PlaceKind, Storage, TExpr, TExprKind, TFunc, TStmt, TStmtKind, Type,
    TypedProgram,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LowerErrorKind {
    OffsetOverflow,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerError {
    pub kind: LowerErrorKind,
    pub message: String,
    pub span: Span,
}

impl fmt::Display for LowerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {}", self.span, self.kind, self.message)
    }
}

pub fn lower_program(prog: &TypedProgram, meta: MetaLayout, repr: Repr) -> Result<TirProgram, Vec<LowerError>> {
    let lay = Layouts::new(prog, repr);
    let mut errors = Vec::new();
    let mut funcs = Vec::new();
    for f in &prog.funcs {
        let frame = layout_stack_frame(f, &lay);
        let mut fl = FnLower::new(&lay, meta, f, frame);
        fl.lower_body();
        errors.append(&mut fl.errors);
        funcs.push(fl.finish());
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let globals = prog
        .globals
        .iter()
        .map(|g| {
            let init = match g.init {
                GlobalInit::Zero => SlotInit::Zero,
                GlobalInit::Int(value) => SlotInit::Word { value, width: width_of(&g.ty) },
                GlobalInit::Str(id) => SlotInit::Str { id, fat: g.ty.is_checked() },
                GlobalInit::AddrOf(global) => SlotInit::Addr { global, fat: g.ty.is_checked() },
            };
            GlobalSlot {
                name: g.name.clone(),
                size: lay.size_of(&g.ty),
                align: lay.align_of(&g.ty),
                locked: g.addr_taken_checked,
                init,
            }
        })
        .collect();
    let strings = prog
        .strings
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.push(0);
            s
        })
        .collect();
    Ok(TirProgram {
        funcs,
        globals,
        strings,
        main: prog.func("main").expect("typecheck guarantees main"),
        meta,
        repr,
        optimized: false,
        checks_elided: 0,
    })
}

fn width_of(t: &Type) -> Width {
    match t {
        Type::Char => Width::I8,
        t if t.is_checked() => Width::Fat,
        _ => Width::I64,
    }
}

fn class_of(t: &Type) -> VarClass {
    if t.is_checked() {
        VarClass::Fat
    } else {
        VarClass::Word
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Reg(VarId),
    Plain(u64),
    Locked(u64),
    Vla(u32),
}

/// A computed place: either a register or a memory address, plus the checked
/// pointer whose key must be verified before the address is used.
struct PlaceAddr {
    reg: Option<VarId>,
    addr: Addr,
    check: Option<VarId>,
    region: Option<Region>,
    through_raw: bool,
}

struct FnLower<'a> {
    lay: &'a Layouts,
    meta: MetaLayout,
    f: &'a TFunc,
    frame: FrameLayout,
    vars: Vec<VarInfo>,
    blocks: Vec<(Vec<Instr>, Option<Terminator>)>,
    cur: usize,
    slots: Vec<Slot>,
    params: Vec<VarId>,
    frame_key: Option<VarId>,
    ret_var: Option<VarId>,
    exit: BlockId,
    loops: Vec<(BlockId, BlockId)>,
    span: Span,
    errors: Vec<LowerError>,
}

impl<'a> FnLower<'a> {
    fn new(lay: &'a Layouts, meta: MetaLayout, f: &'a TFunc, frame: FrameLayout) -> Self {
        let mut me = FnLower {
            lay,
            meta,
            f,
            frame,
            vars: Vec::new(),
            blocks: Vec::new(),
            cur: 0,
            slots: Vec::new(),
            params: Vec::new(),
            frame_key: None,
            ret_var: None,
            exit: BlockId(0),
            loops: Vec::new(),
            span: f.span,
            errors: Vec::new(),
        };
        me.new_block();
        me.exit = me.new_block();
        let mut vla_idx = 0;
        for (id, l) in f.locals.iter().enumerate() {
            let slot = match l.storage() {
                Storage::Register => Slot::Reg(me.var(class_of(&l.ty), Some(&l.name))),
                Storage::Memory => Slot::Plain(me.member_offset(id, false)),
                Storage::Locked => Slot::Locked(me.member_offset(id, true)),
                Storage::Vla { .. } => {
                    vla_idx += 1;
                    Slot::Vla(vla_idx - 1)
                }
            };
            me.slots.push(slot);
        }
        for &p in &f.params {
            let v = match me.slots[p] {
                Slot::Reg(v) => v,
                _ => me.var(class_of(&f.locals[p].ty), Some(&f.locals[p].name)),
            };
            me.params.push(v);
        }
        me
    }

    fn member_offset(&self, local: LocalId, locked: bool) -> u64 {
        let ms = if locked { &self.frame.locked } else { &self.frame.plain };
        ms.iter().find(|m| m.local == local).expect("member laid out").offset
    }

    fn var(&mut self, class: VarClass, name: Option<&str>) -> VarId {
        self.vars.push(VarInfo { class, name: name.map(str::to_string) });
        VarId(self.vars.len() as u32 - 1)
    }

    fn tmp(&mut self, class: VarClass) -> VarId {
        self.var(class, None)
    }

    fn new_block(&mut self) -> BlockId {
        self.blocks.push((Vec::new(), None));
        BlockId(self.blocks.len() as u32 - 1)
    }

    fn switch_to(&mut self, b: BlockId) {
        self.cur = b.0 as usize;
    }

    fn emit(&mut self, op: Op) {
        let span = self.span;
        self.blocks[self.cur].0.push(Instr { op, span });
    }

    fn terminate(&mut self, t: Terminator) {
        let blk = &mut self.blocks[self.cur];
        if blk.1.is_none() {
            blk.1 = Some(t);
        }
    }

    fn error(&mut self, kind: LowerErrorKind, message: String) {
        self.errors.push(LowerError { kind, message, span: self.span });
    }

    fn constant(&mut self, value: i64) -> VarId {
        let dst = self.tmp(VarClass::Word);
        self.emit(Op::Const { dst, value });
        dst
    }

    // ---- function structure ----

    fn lower_body(&mut self) {
        let f = self.f;
        if let Some(t) = (f.ret != Type::Void).then(|| class_of(&f.ret)) {
            let rv = self.var(t, Some("ret"));
            self.ret_var = Some(rv);
            self.emit(Op::Const { dst: rv, value: 0 });
        }
        if self.frame.needs_key() {
            let k = self.var(VarClass::Word, Some("frame_key"));
            self.emit(Op::KeyNext { dst: k });
            self.frame_key = Some(k);
        }
        if self.frame.has_locked_region() {
            let key = self.frame_key.unwrap();
            self.emit(Op::LockInit { region: Region::Frame, key });
        }
        for (i, &p) in f.params.iter().enumerate() {
            if !matches!(self.slots[p], Slot::Reg(_)) {
                let pa = self.local_addr(p);
                let src = self.params[i];
                self.emit(Op::Store { addr: pa.addr, src, width: width_of(&f.locals[p].ty), kills: false });
            }
        }
        for s in &f.body {
            self.stmt(s);
        }
        self.terminate(Terminator::Jump(self.exit));
        self.switch_to(self.exit);
        self.span = f.span;
        if self.frame.has_locked_region() {
            self.emit(Op::LockKill { region: Region::Frame });
        }
        for (i, v) in self.frame.vlas.clone().iter().enumerate() {
            if v.locked {
                self.emit(Op::LockKill { region: Region::Vla(i as u32) });
            }
        }
        self.terminate(Terminator::Ret(self.ret_var));
    }

    fn finish(self) -> TirFunc {
        let exit = self.exit;
        let blocks = self
            .blocks
            .into_iter()
            .map(|(instrs, term)| Block { instrs, term: term.unwrap_or(Terminator::Jump(exit)) })
            .collect();
        TirFunc {
            name: self.f.name.clone(),
            unchecked: self.f.unchecked,
            params: self.params,
            ret: (self.f.ret != Type::Void).then(|| class_of(&self.f.ret)),
            vars: self.vars,
            blocks,
            exit,
            frame: self.frame,
            span: self.f.span,
        }
    }

    // ---- statements ----

    fn stmt(&mut self, s: &TStmt) {
        self.span = s.span;
        match &s.kind {
            TStmtKind::Decl { local, len, init } => self.decl(*local, len.as_ref(), init.as_ref()),
            TStmtKind::Expr(e) => {
                self.expr(e);
            }
            TStmtKind::If { cond, then_branch, else_branch } => {
                let then_bb = self.new_block();
                let join = self.new_block();
                let else_bb = if else_branch.is_some() { self.new_block() } else { join };
                self.cond(cond, then_bb, else_bb);
                self.switch_to(then_bb);
                self.stmt(then_branch);
                self.terminate(Terminator::Jump(join));
                if let Some(e) = else_branch {
                    self.switch_to(else_bb);
                    self.stmt(e);
                    self.terminate(Terminator::Jump(join));
                }
                self.switch_to(join);
            }
            TStmtKind::While { cond, body } => {
                let head = self.new_block();
                let body_bb = self.new_block();
                let after = self.new_block();
                self.terminate(Terminator::Jump(head));
                self.switch_to(head);
                self.span = s.span;
                self.cond(cond, body_bb, after);
                self.switch_to(body_bb);
                self.loops.push((head, after));
                self.stmt(body);
                self.loops.pop();
                self.terminate(Terminator::Jump(head));
                self.switch_to(after);
            }
            TStmtKind::Return(e) => {
                if let Some(e) = e {
                    let v = self.expr(e).expect("non-void return value");
                    let rv = self.ret_var.unwrap();
                    self.span = s.span;
                    self.emit(Op::Copy { dst: rv, src: v });
                }
                self.terminate(Terminator::Jump(self.exit));
                let dead = self.new_block();
                self.switch_to(dead);
            }
            TStmtKind::Block(body) => body.iter().for_each(|s| self.stmt(s)),
            TStmtKind::Break | TStmtKind::Continue => {
                let (head, after) = *self.loops.last().expect("typecheck rejects stray break");
                let target = if matches!(s.kind, TStmtKind::Break) { after } else { head };
                self.terminate(Terminator::Jump(target));
                let dead = self.new_block();
                self.switch_to(dead);
            }
        }
    }

    fn decl(&mut self, local: LocalId, len: Option<&TExpr>, init: Option<&TExpr>) {
        let ty = &self.f.locals[local].ty;
        match self.slots[local] {
            Slot::Reg(v) => match init {
                Some(e) => {
                    let src = self.expr(e).unwrap();
                    self.emit(Op::Copy { dst: v, src });
                }
                None => self.emit(Op::Const { dst: v, value: 0 }),
            },
            Slot::Vla(i) => {
                let count = self.expr(len.expect("VLA length")).unwrap();
                let elem_size = self.frame.vlas[i as usize].elem_size;
                self.emit(Op::VlaAlloc { vla: i, count, elem_size });
                if self.frame.vlas[i as usize].locked {
                    let key = self.frame_key.unwrap();
                    self.emit(Op::LockInit { region: Region::Vla(i), key });
                }
            }
            Slot::Plain(_) | Slot::Locked(_) => {
                let pa = self.local_addr(local);
                match init {
                    Some(e) => {
                        let src = self.expr(e).unwrap();
                        self.emit(Op::Store { addr: pa.addr, src, width: width_of(ty), kills: false });
                    }
                    None => {
                        let size = self.lay.size_of(ty);
                        self.emit(Op::ZeroFill { addr: pa.addr, size });
                    }
                }
            }
        }
    }

    /// Branch to `t` when `e` is nonzero, else to `f`, short-circuiting `&&`, `||` and `!`.
    fn cond(&mut self, e: &TExpr, t: BlockId, f: BlockId) {
        match &e.kind {
            TExprKind::Binary(BinOp::And, a, b) => {
                let mid = self.new_block();
                self.cond(a, mid, f);
                self.switch_to(mid);
                self.cond(b, t, f);
            }
            TExprKind::Binary(BinOp::Or, a, b) => {
                let mid = self.new_block();
                self.cond(a, t, mid);
                self.switch_to(mid);
                self.cond(b, t, f);
            }
            TExprKind::Unary(UnOp::Not, a) => self.cond(a, f, t),
            _ => {
                let v = self.expr(e).unwrap();
                self.terminate(Terminator::Branch { cond: v, then_bb: t, else_bb: f });
            }
        }
    }

    // ---- places ----

    fn local_addr(&mut self, local: LocalId) -> PlaceAddr {
        let (reg, base, disp, region) = match self.slots[local] {
            Slot::Reg(v) => (Some(v), Base::Plain, 0, None),
            Slot::Plain(off) => (None, Base::Plain, off, None),
            Slot::Locked(off) => (None, Base::Frame, off, Some(Region::Frame)),
            Slot::Vla(i) => (None, Base::Vla(i), 0, Some(Region::Vla(i))),
        };
        PlaceAddr { reg, addr: Addr::at(base, disp as i64), check: None, region, through_raw: false }
    }

    fn add_index(&mut self, pa: &mut PlaceAddr, index: &TExpr, scale: u64) {
        if let TExprKind::Int(c) = index.kind {
            pa.addr.disp += c * scale as i64;
            return;
        }
        let i = self.expr(index).unwrap();
        pa.addr.index = Some(match pa.addr.index {
            None => (i, scale as i64),
            Some((old, old_scale)) => {
                let s1 = self.constant(old_scale);
                let a = self.tmp(VarClass::Word);
                self.emit(Op::Binary { dst: a, op: BinaryOp::Mul, lhs: old, rhs: s1 });
                let s2 = self.constant(scale as i64);
                let b = self.tmp(VarClass::Word);
                self.emit(Op::Binary { dst: b, op: BinaryOp::Mul, lhs: i, rhs: s2 });
                let sum = self.tmp(VarClass::Word);
                self.emit(Op::Binary { dst: sum, op: BinaryOp::Add, lhs: a, rhs: b });
                (sum, 1)
            }
        });
    }

    /// Evaluate everything a place depends on. The key check, if any, is left
    /// pending so it can sit right before the access.
    fn place(&mut self, p: &Place) -> PlaceAddr {
        match &p.kind {
            PlaceKind::Local(l) => self.local_addr(*l),
            PlaceKind::Global(g) => PlaceAddr {
                reg: None,
                addr: Addr::at(Base::Global(*g), 0),
                check: None,
                region: Some(Region::Global(*g)),
                through_raw: false,
            },
            PlaceKind::Deref { ptr, index } => {
                let v = self.expr(ptr).unwrap();
                let fat = ptr.ty.is_checked();
                let mut pa = PlaceAddr {
                    reg: None,
                    addr: Addr::at(Base::Var(v), 0),
                    check: fat.then_some(v),
                    region: None,
                    through_raw: !fat,
                };
                if let Some(i) = index {
                    let scale = self.lay.size_of(&p.ty);
                    self.add_index(&mut pa, i, scale);
                }
                pa
            }
            PlaceKind::Field { base, field } => {
                let mut pa = self.place(base);
                let Type::Struct(name) = &base.ty else { unreachable!("field of non-struct") };
                pa.addr.disp += self.lay.field_offset(name, *field) as i64;
                pa
            }
            PlaceKind::Index { base, index } => {
                let mut pa = self.place(base);
                let scale = self.lay.size_of(&p.ty);
                self.add_index(&mut pa, index, scale);
                pa
            }
        }
    }

    fn check(&mut self, pa: &PlaceAddr) {
        if let Some(v) = pa.check {
            self.emit(Op::KeyCheck { ptr: v });
        }
    }

    fn check_disp(&mut self, disp: i64) {
        if disp.unsigned_abs() > self.meta.max_offset() {
            self.error(
                LowerErrorKind::OffsetOverflow,
                format!("constant offset {disp} exceeds the {}-bit offset field", self.meta.offset_bits()),
            );
        }
    }

    fn load(&mut self, pa: &PlaceAddr, ty: &Type) -> VarId {
        if let Some(r) = pa.reg {
            return r;
        }
        self.check(pa);
        let dst = self.tmp(class_of(ty));
        self.emit(Op::Load { dst, addr: pa.addr, width: width_of(ty) });
        dst
    }

    fn store(&mut self, pa: &PlaceAddr, ty: &Type, src: VarId) {
        if let Some(r) = pa.reg {
            self.emit(Op::Copy { dst: r, src });
            return;
        }
        self.check(pa);
        let through_ptr = pa.check.is_some() || pa.through_raw;
        let kills = pa.through_raw || (through_ptr && ty.is_ptr());
        self.emit(Op::Store { addr: pa.addr, src, width: width_of(ty), kills });
    }

    fn address(&mut self, place: &Place, result: &Type) -> VarId {
        let pa = self.place(place);
        let dst = self.tmp(class_of(result));
        if !result.is_checked() {
            self.emit(Op::AddrOf { dst, addr: pa.addr });
            return dst;
        }
        self.check_disp(pa.addr.disp);
        if let Some(src) = pa.check {
            self.emit(Op::KeyCheck { ptr: src });
            self.emit(Op::FieldAddr { dst, src, index: pa.addr.index, disp: pa.addr.disp });
            return dst;
        }
        let region = pa.region.expect("checked address of a lockable region");
        let key = match region {
            Region::Frame | Region::Vla(_) => Some(self.frame_key.expect("frame key for a locked local")),
            Region::Global(_) | Region::Str(_) => None,
        };
        self.emit(Op::MakeFat { dst, region, key, index: pa.addr.index, disp: pa.addr.disp });
        dst
    }

    // ---- expressions ----

    fn expr(&mut self, e: &TExpr) -> Option<VarId> {
        let saved = self.span;
        self.span = e.span;
        let v = self.expr_inner(e);
        self.span = saved;
        v
    }

    fn expr_inner(&mut self, e: &TExpr) -> Option<VarId> {
        let v = match &e.kind {
            TExprKind::Int(v) => self.constant(*v),
            TExprKind::Null => {
                let dst = self.tmp(class_of(&e.ty));
                self.emit(Op::Const { dst, value: 0 });
                dst
            }
            TExprKind::Str(id) => {
                let dst = self.tmp(class_of(&e.ty));
                if e.ty.is_checked() {
                    self.emit(Op::MakeFat { dst, region: Region::Str(*id), key: None, index: None, disp: 0 });
                } else {
                    self.emit(Op::AddrOf { dst, addr: Addr::at(Base::Str(*id), 0) });
                }
                dst
            }
            TExprKind::Load(p) => {
                let pa = self.place(p);
                self.load(&pa, &p.ty)
            }
            TExprKind::AddrOf(p) => self.address(p, &e.ty),
            TExprKind::Unary(op, a) => {
                let src = self.expr(a)?;
                let dst = self.tmp(VarClass::Word);
                let op = match op {
                    UnOp::Neg => UnaryOp::Neg,
                    UnOp::Not => UnaryOp::Not,
                };
                self.emit(Op::Unary { dst, op, src });
                dst
            }
            TExprKind::Binary(op @ (BinOp::And | BinOp::Or), ..) => {
                let _ = op;
                let dst = self.tmp(VarClass::Word);
                let (t, f, join) = (self.new_block(), self.new_block(), self.new_block());
                self.cond(e, t, f);
                for (b, val) in [(t, 1), (f, 0)] {
                    self.switch_to(b);
                    self.emit(Op::Const { dst, value: val });
                    self.terminate(Terminator::Jump(join));
                }
                self.switch_to(join);
                dst
            }
            TExprKind::Binary(op, a, b) => {
                let lhs = self.expr(a)?;
                let rhs = self.expr(b)?;
                let dst = self.tmp(VarClass::Word);
                self.emit(Op::Binary { dst, op: binary_op(*op), lhs, rhs });
                dst
            }
            TExprKind::PtrAdd { ptr, offset, negate } => {
                let src = self.expr(ptr)?;
                let scale = self.lay.size_of(ptr.ty.pointee().unwrap()) as i64;
                let scale = if *negate { -scale } else { scale };
                let dst = self.tmp(class_of(&e.ty));
                if let TExprKind::Int(c) = offset.kind {
                    let disp = c.wrapping_mul(scale);
                    if ptr.ty.is_checked() {
                        self.check_disp(disp);
                    }
                    self.emit(Op::PtrAdd { dst, src, index: None, disp });
                } else {
                    let i = self.expr(offset)?;
                    self.emit(Op::PtrAdd { dst, src, index: Some((i, scale)), disp: 0 });
                }
                dst
            }
            TExprKind::PtrDiff(a, b) => {
                let ra = self.raw_of(a)?;
                let rb = self.raw_of(b)?;
                let diff = self.tmp(VarClass::Word);
                self.emit(Op::Binary { dst: diff, op: BinaryOp::Sub, lhs: ra, rhs: rb });
                let scale = self.lay.size_of(a.ty.pointee().unwrap()).max(1) as i64;
                let s = self.constant(scale);
                let dst = self.tmp(VarClass::Word);
                self.emit(Op::Binary { dst, op: BinaryOp::Div, lhs: diff, rhs: s });
                dst
            }
            TExprKind::Assign { place, value } => {
                let v = self.expr(value)?;
                let pa = self.place(place);
                self.store(&pa, &place.ty, v);
                pa.reg.unwrap_or(v)
            }
            TExprKind::Compound { op, place, value } => {
                let v = self.expr(value)?;
                let pa = self.place(place);
                let old = self.load(&pa, &place.ty);
                let new = self.tmp(class_of(&place.ty));
                if place.ty.is_ptr() {
                    let scale = self.lay.size_of(place.ty.pointee().unwrap()) as i64;
                    let scale = if *op == BinOp::Sub { -scale } else { scale };
                    self.emit(Op::PtrAdd { dst: new, src: old, index: Some((v, scale)), disp: 0 });
                } else {
                    self.emit(Op::Binary { dst: new, op: binary_op(*op), lhs: old, rhs: v });
                    if place.ty == Type::Char {
                        self.emit(Op::Unary { dst: new, op: UnaryOp::Trunc8, src: new });
                    }
                }
                match pa.reg {
                    Some(r) => {
                        self.emit(Op::Copy { dst: r, src: new });
                        r
                    }
                    None => {
                        // one check covers the load and the store
                        let pa = PlaceAddr { check: None, ..pa };
                        self.store(&pa, &place.ty, new);
                        new
                    }
                }
            }
            TExprKind::Convert(conv, a) => {
                let src = self.expr(a)?;
                match conv {
                    Conv::Widen | Conv::PtrToInt | Conv::IntToPtr | Conv::Reinterpret => src,
                    Conv::Trunc => {
                        let dst = self.tmp(VarClass::Word);
                        self.emit(Op::Unary { dst, op: UnaryOp::Trunc8, src });
                        dst
                    }
                    Conv::CheckedToRaw => {
                        let dst = self.tmp(VarClass::Word);
                        self.emit(Op::FatToRaw { dst, src });
                        dst
                    }
                }
            }
            TExprKind::Call { func, args } => {
                let args = args.iter().map(|a| self.expr(a).unwrap()).collect();
                let dst = (e.ty != Type::Void).then(|| self.tmp(class_of(&e.ty)));
                self.emit(Op::Call { dst, func: *func, args });
                return dst;
            }
            TExprKind::Builtin(b, args) => {
                let args: Vec<_> = args.iter().map(|a| self.expr(a).unwrap()).collect();
                match b {
                    Builtin::PrintInt => {
                        self.emit(Op::PrintInt { src: args[0] });
                        return None;
                    }
                    Builtin::PrintStr => {
                        if self.class(args[0]) == VarClass::Fat {
                            self.emit(Op::KeyCheck { ptr: args[0] });
                        }
                        self.emit(Op::PrintStr { src: args[0] });
                        return None;
                    }
                    Builtin::ReadInt => {
                        let dst = self.tmp(VarClass::Word);
                        self.emit(Op::ReadInt { dst });
                        dst
                    }
                }
            }
            TExprKind::Alloc { elem, count } => {
                let count = self.expr(count)?;
                let dst = self.tmp(VarClass::Fat);
                self.emit(Op::Alloc { dst, elem_size: self.lay.size_of(elem), count });
                dst
            }
            TExprKind::Free(p) => {
                let ptr = self.expr(p)?;
                self.emit(Op::Free { ptr });
                return None;
            }
            TExprKind::Hint(l) => {
                if let Slot::Reg(ptr) = self.slots[*l] {
                    self.emit(Op::Hint { ptr });
                }
                return None;
            }
            TExprKind::Marshal { array, len } => {
                let array = self.expr(array)?;
                let len = self.expr(len)?;
                self.emit(Op::KeyCheck { ptr: array });
                let dst = self.tmp(VarClass::Word);
                self.emit(Op::Marshal { dst, array, len });
                dst
            }
            TExprKind::Unmarshal { thin, orig, len } => {
                let thin = self.expr(thin)?;
                let orig = self.expr(orig)?;
                let len = self.expr(len)?;
                self.emit(Op::KeyCheck { ptr: orig });
                let dst = self.tmp(VarClass::Fat);
                self.emit(Op::Unmarshal { dst, thin, orig, len });
                dst
            }
        };
        Some(v)
    }

    fn class(&self, v: VarId) -> VarClass {
        self.vars[v.0 as usize].class
    }

    fn raw_of(&mut self, e: &TExpr) -> Option<VarId> {
        let v = self.expr(e)?;
        if self.class(v) == VarClass::Word {
            return Some(v);
        }
        let dst = self.tmp(VarClass::Word);
        self.emit(Op::FatToRaw { dst, src: v });
        Some(dst)
    }
}

fn binary_op(op: BinOp) -> BinaryOp {
    match op {
        BinOp::Add => BinaryOp::Add,
        BinOp::Sub => BinaryOp::Sub,
        BinOp::Mul => BinaryOp::Mul,
        BinOp::Div => BinaryOp::Div,
        BinOp::Rem => BinaryOp::Rem,
        BinOp::Lt => BinaryOp::Lt,
        BinOp::Le => BinaryOp::Le,
        BinOp::Gt => BinaryOp::Gt,
        BinOp::Ge => BinaryOp::Ge,
        BinOp::Eq => BinaryOp::Eq,
        BinOp::Ne => BinaryOp::Ne,
        BinOp::And | BinOp::Or => unreachable!("logical operators lower to branches"),
    }
}
