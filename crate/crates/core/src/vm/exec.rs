use std::collections::VecDeque;

use super::stats::{Divergence, DivergenceKind, DivergenceReport, FuncStats, StatsReport};
use super::trap::{Site, Trap};
use super::{Backend, GuestInput, RunOutcome, VmConfig};
use crate::frontend::Span;
use crate::runtime::disjoint::{dj_alloc, dj_check, dj_free, dj_fresh, dj_propagate};
use crate::runtime::inplace::{key_check, mm_alloc, mm_free};
use crate::runtime::memory::{GLOBAL_BASE, HEAP_BASE, LOCK_BASE, PAGE_SIZE, STACK_TOP};
use crate::runtime::{
    AllocId, AllocKind, DisjointTable, DjEntry, Heap, HeapStats, KeyGen, Liveness, LockArena, MarshalSnapshots,
    MetaCounters, Oracle, SimMemory, TrapCode, Value,
};
use crate::tir::layout::{align_up, HEADER_BYTES, PAYLOAD_ALIGN};
use crate::tir::{
    Addr, Base, BinaryOp, MetaLayout, MetaWord, Op, Region, SlotInit, Terminator, TirProgram, UnaryOp, VarClass,
    VarId, Width, GLOBAL_KEY,
};
use crate::typeck::FuncId;

/// Longest string `print_str` will emit before giving up on a terminator.
const MAX_STR: u64 = 1 << 20;

struct Fault {
    code: TrapCode,
    detail: String,
}

impl From<TrapCode> for Fault {
    fn from(code: TrapCode) -> Self {
        Fault { code, detail: String::new() }
    }
}

fn fault(code: TrapCode, detail: String) -> Fault {
    Fault { code, detail }
}

type R<T> = Result<T, Fault>;

#[derive(Debug, Clone, Copy, Default)]
struct VlaState {
    payload: u64,
    size: u64,
    lock: u64,
    prov: AllocId,
}

struct Frame {
    func: FuncId,
    regs: Vec<Value>,
    block: usize,
    ip: usize,
    ret_dst: Option<VarId>,
    saved_sp: u64,
    plain: u64,
    locked: u64,
    frame_lock: u64,
    frame_prov: AllocId,
    vlas: Vec<VlaState>,
}

pub struct Vm<'p> {
    prog: &'p TirProgram,
    cfg: VmConfig,
    backend: Backend,
    meta: MetaLayout,
    mem: SimMemory,
    heap: Heap,
    arena: LockArena,
    table: DisjointTable,
    kg: KeyGen,
    snaps: MarshalSnapshots,
    oracle: Option<Oracle>,
    c: MetaCounters,
    hs: HeapStats,
    frames: Vec<Frame>,
    sp: u64,
    stack_limit: u64,
    globals: Vec<u64>,
    global_provs: Vec<AllocId>,
    strings: Vec<u64>,
    string_provs: Vec<AllocId>,
    globals_end: u64,
    args: Vec<i64>,
    input: VecDeque<i64>,
    output: Vec<u8>,
    ir_count: u64,
    steps: u64,
    last_meta: u64,
    per_func: Vec<FuncStats>,
    div: DivergenceReport,
    span: Span,
    keys_issued: u64,
    reserved_keys_issued: u64,
    last_freed: Option<(u64, u64)>,
}

impl<'p> Vm<'p> {
    pub fn new(prog: &'p TirProgram, cfg: VmConfig, input: GuestInput) -> Self {
        assert_eq!(prog.repr, cfg.backend.repr(), "program lowered for a different representation");
        let mut mem = SimMemory::new();
        let arena = LockArena::new(&mut mem, LOCK_BASE, cfg.lock_arena_size);
        let mut vm = Vm {
            prog,
            backend: cfg.backend,
            meta: prog.meta,
            heap: Heap::new(HEAP_BASE, cfg.heap_size),
            arena,
            table: DisjointTable::new(),
            kg: KeyGen::new(cfg.seed, prog.meta),
            snaps: MarshalSnapshots::new(),
            oracle: cfg.oracle.then(Oracle::new),
            c: MetaCounters::default(),
            hs: HeapStats::default(),
            frames: Vec::new(),
            sp: STACK_TOP,
            stack_limit: STACK_TOP - cfg.stack_size,
            globals: Vec::new(),
            global_provs: Vec::new(),
            strings: Vec::new(),
            string_provs: Vec::new(),
            globals_end: GLOBAL_BASE,
            args: input.args,
            input: input.input.into(),
            output: Vec::new(),
            ir_count: 0,
            steps: 0,
            last_meta: 0,
            per_func: vec![FuncStats::default(); prog.funcs.len()],
            div: DivergenceReport::default(),
            span: Span::default(),
            keys_issued: 0,
            reserved_keys_issued: 0,
            last_freed: None,
            mem,
            cfg,
        };
        vm.init_globals();
        vm.c = MetaCounters::default();
        vm
    }

    fn fat_repr(&self) -> bool {
        self.backend == Backend::InPlace
    }

    fn ptr_size(&self) -> u64 {
        if self.fat_repr() {
            16
        } else {
            8
        }
    }

    fn init_globals(&mut self) {
        let prog = self.prog;
        let fat = self.fat_repr();
        let mut at = GLOBAL_BASE;
        for g in &prog.globals {
            let header = if g.locked && fat { HEADER_BYTES } else { 0 };
            let payload = align_up(at, PAYLOAD_ALIGN) + header;
            if g.locked && fat {
                self.mem.write64(payload - 8, GLOBAL_KEY);
            }
            self.globals.push(payload);
            let prov = self.oracle.as_mut().map_or(0, |o| o.alloc(payload, g.size, AllocKind::Global));
            self.global_provs.push(prov);
            at = payload + g.size.max(1);
        }
        for s in &prog.strings {
            let header = if fat { HEADER_BYTES } else { 0 };
            let payload = align_up(at, PAYLOAD_ALIGN) + header;
            if fat {
                self.mem.write64(payload - 8, GLOBAL_KEY);
            }
            self.mem.write_bytes(payload, s);
            self.strings.push(payload);
            let prov = self.oracle.as_mut().map_or(0, |o| o.alloc(payload, s.len() as u64, AllocKind::Str));
            self.string_provs.push(prov);
            at = payload + s.len() as u64;
        }
        self.globals_end = align_up(at, PAYLOAD_ALIGN);
        for (i, g) in prog.globals.iter().enumerate() {
            let a = self.globals[i];
            let target = match g.init {
                SlotInit::Zero => continue,
                SlotInit::Word { value, width } => {
                    match width {
                        Width::I8 => self.mem.write8(a, value as u8),
                        _ => self.mem.write64(a, value as u64),
                    }
                    continue;
                }
                SlotInit::Str { id, fat } => (Region::Str(id), fat),
                SlotInit::Addr { global, fat } => (Region::Global(global), fat),
            };
            let (start, lock, prov) = self.region_info(target.0);
            if target.1 {
                let v = self.fat_from(start, start, GLOBAL_KEY, lock, prov).ok().expect("offset zero fits");
                self.store_fat(a, v);
            } else {
                self.mem.write64(a, start);
            }
        }
    }

    // ---- public inspection ----

    pub fn memory(&self) -> &SimMemory {
        &self.mem
    }

    /// Current value of the lock guarding the named global, if it has one.
    pub fn global_lock_value(&self, name: &str) -> Option<u64> {
        let i = self.prog.globals.iter().position(|g| g.name == name)?;
        if !self.prog.globals[i].locked {
            return None;
        }
        match self.backend {
            Backend::InPlace => Some(self.mem.read64(self.globals[i] - 8)),
            Backend::Disjoint => Some(self.mem.read64(self.arena.global_lock())),
            Backend::Unchecked => None,
        }
    }

    /// Lock value guarding string literal `id`.
    pub fn string_lock_value(&self, id: usize) -> Option<u64> {
        match self.backend {
            Backend::InPlace => Some(self.mem.read64(self.strings[id] - 8)),
            Backend::Disjoint => Some(self.mem.read64(self.arena.global_lock())),
            Backend::Unchecked => None,
        }
    }

    /// Payload and lock address of the most recently freed heap object.
    pub fn last_freed(&self) -> Option<(u64, u64)> {
        self.last_freed
    }

    pub fn keys_issued(&self) -> u64 {
        self.keys_issued
    }

    /// How many issued keys were 0 or 1; always 0 for a sound generator.
    pub fn reserved_keys_issued(&self) -> u64 {
        self.reserved_keys_issued
    }

    // ---- run loop ----

    pub fn run(&mut self) -> RunOutcome {
        let result = self.run_main();
        let (status, ret, trap) = match result {
            Ok(ret) => ((ret & 0xff) as i32, Some(ret), None),
            Err(f) => {
                let site = self.site();
                (f.code.code(), None, Some(Trap { code: f.code, site, detail: f.detail }))
            }
        };
        RunOutcome {
            status,
            ret,
            output: std::mem::take(&mut self.output),
            trap,
            stats: self.stats(),
            divergence: self.oracle.as_ref().map(|_| self.div.clone()),
        }
    }

    fn site(&self) -> Site {
        let func = self.frames.last().map_or(String::new(), |f| self.prog.funcs[f.func].name.clone());
        Site { func, line: self.span.line, col: self.span.col }
    }

    fn stats(&self) -> StatsReport {
        let prog = self.prog;
        let per_function = prog
            .funcs
            .iter()
            .zip(&self.per_func)
            .filter(|(_, s)| s.calls > 0)
            .map(|(f, s)| (f.name.clone(), s.clone()))
            .collect();
        StatsReport {
            backend: self.backend.name().into(),
            key_bits: self.meta.key_bits(),
            opt_checks: prog.optimized,
            instr_count: self.ir_count + self.c.meta_loads + self.c.meta_stores,
            key_checks_exec: self.c.key_checks,
            key_checks_elided_static: prog.checks_elided,
            meta_loads: self.c.meta_loads,
            meta_loads_check: self.c.meta_loads_check,
            meta_stores: self.c.meta_stores,
            alloc_count: self.hs.alloc_count,
            free_count: self.hs.free_count,
            heap_bytes_payload: self.hs.payload_bytes,
            heap_bytes_metadata: self.hs.metadata_bytes + self.table.table_bytes(),
            peak_live_bytes: self.hs.peak_live_bytes,
            dj_entry_bytes: self.table.entry_bytes(),
            per_function,
        }
    }

    fn run_main(&mut self) -> R<i64> {
        let prog = self.prog;
        let main = &prog.funcs[prog.main];
        let args = (0..main.params.len()).map(|i| Value::word(self.args.get(i).copied().unwrap_or(0) as u64)).collect();
        self.push_frame(prog.main, args, None)?;
        loop {
            if let Some(limit) = self.cfg.max_steps {
                self.steps += 1;
                if self.steps > limit {
                    return Err(fault(TrapCode::InternalFault, format!("step limit {limit} exceeded")));
                }
            }
            let fr = self.frames.last_mut().unwrap();
            let f = &prog.funcs[fr.func];
            let block = &f.blocks[fr.block];
            let fid = fr.func;
            if fr.ip < block.instrs.len() {
                let ins = &block.instrs[fr.ip];
                fr.ip += 1;
                self.span = ins.span;
                let cost = self.cost(&ins.op);
                self.ir_count += cost;
                self.per_func[fid].instr_count += cost;
                let checks = self.c.key_checks;
                self.exec(&ins.op)?;
                self.per_func[fid].key_checks_exec += self.c.key_checks - checks;
            } else {
                self.ir_count += 1;
                self.per_func[fid].instr_count += 1;
                if let Some(ret) = self.terminate(&block.term)? {
                    return Ok(ret);
                }
            }
            let meta = self.c.meta_loads + self.c.meta_stores;
            self.per_func[fid].instr_count += meta - self.last_meta;
            self.last_meta = meta;
        }
    }

    fn cost(&self, op: &Op) -> u64 {
        match op {
            Op::Hint { .. } => 0,
            Op::KeyCheck { .. } | Op::KeyNext { .. } | Op::LockInit { .. } | Op::LockKill { .. }
                if self.backend == Backend::Unchecked =>
            {
                0
            }
            _ => 1,
        }
    }

    fn push_frame(&mut self, func: FuncId, args: Vec<Value>, ret_dst: Option<VarId>) -> R<()> {
        let f = &self.prog.funcs[func];
        let saved_sp = self.sp;
        let mut sp = self.sp;
        sp -= align_up(f.frame.plain_size, PAYLOAD_ALIGN);
        let plain = sp;
        let mut locked = 0;
        if f.frame.has_locked_region() {
            let header = if self.fat_repr() { HEADER_BYTES } else { 0 };
            sp = sp.saturating_sub(align_up(header + f.frame.locked_size, PAYLOAD_ALIGN));
            locked = sp + header;
        }
        if sp < self.stack_limit {
            return Err(fault(TrapCode::OutOfMemory, format!("stack overflow entering {}", f.name)));
        }
        self.sp = sp;
        let mut regs = vec![Value::default(); f.vars.len()];
        for (p, a) in f.params.iter().zip(args) {
            regs[p.0 as usize] = a;
        }
        self.per_func[func].calls += 1;
        self.frames.push(Frame {
            func,
            regs,
            block: 0,
            ip: 0,
            ret_dst,
            saved_sp,
            plain,
            locked,
            frame_lock: 0,
            frame_prov: 0,
            vlas: vec![VlaState::default(); f.frame.vlas.len()],
        });
        Ok(())
    }

    fn terminate(&mut self, t: &Terminator) -> R<Option<i64>> {
        let fr = self.frames.last_mut().unwrap();
        match *t {
            Terminator::Jump(b) => {
                fr.block = b.0 as usize;
                fr.ip = 0;
            }
            Terminator::Branch { cond, then_bb, else_bb } => {
                fr.block = if fr.regs[cond.0 as usize].raw != 0 { then_bb.0 } else { else_bb.0 } as usize;
                fr.ip = 0;
            }
            Terminator::Ret(v) => {
                let fr = self.frames.pop().unwrap();
                self.sp = fr.saved_sp;
                let value = v.map(|v| fr.regs[v.0 as usize]).unwrap_or_default();
                let fat = self.prog.funcs[fr.func].ret == Some(VarClass::Fat);
                let Some(caller) = self.frames.last_mut() else { return Ok(Some(value.raw as i64)) };
                if let Some(d) = fr.ret_dst {
                    caller.regs[d.0 as usize] = value;
                    if fat && self.backend == Backend::Disjoint {
                        dj_propagate(&mut self.c);
                    }
                }
            }
        }
        Ok(None)
    }

    // ---- helpers ----

    fn frame(&self) -> &Frame {
        self.frames.last().unwrap()
    }

    fn reg(&self, v: VarId) -> Value {
        self.frame().regs[v.0 as usize]
    }

    fn set(&mut self, v: VarId, val: Value) {
        self.frames.last_mut().unwrap().regs[v.0 as usize] = val;
    }

    fn class(&self, v: VarId) -> VarClass {
        self.prog.funcs[self.frame().func].class(v)
    }

    fn scaled(&self, index: Option<(VarId, i64)>, disp: i64) -> i64 {
        let i = index.map_or(0, |(v, s)| (self.reg(v).raw as i64).wrapping_mul(s));
        i.wrapping_add(disp)
    }

    fn eval_addr(&self, a: &Addr) -> u64 {
        let fr = self.frame();
        let base = match a.base {
            Base::Var(v) => fr.regs[v.0 as usize].raw,
            Base::Frame => fr.locked,
            Base::Plain => fr.plain,
            Base::Vla(i) => fr.vlas[i as usize].payload,
            Base::Global(g) => self.globals[g],
            Base::Str(s) => self.strings[s],
        };
        base.wrapping_add(self.scaled(a.index, a.disp) as u64)
    }

    fn check_access(&self, addr: u64, len: u64) -> R<()> {
        if addr < PAGE_SIZE {
            return Err(fault(TrapCode::NullDeref, format!("access at {addr:#x}")));
        }
        let end = addr.checked_add(len).ok_or(TrapCode::BadAccess)?;
        let within = |lo: u64, hi: u64| addr >= lo && end <= hi;
        if within(GLOBAL_BASE, self.globals_end)
            || within(HEAP_BASE, HEAP_BASE + self.cfg.heap_size)
            || within(self.stack_limit, STACK_TOP)
        {
            Ok(())
        } else {
            Err(fault(TrapCode::BadAccess, format!("access at {addr:#x} outside mapped memory")))
        }
    }

    fn note_key(&mut self, key: u64) {
        self.keys_issued += 1;
        if key < 2 {
            self.reserved_keys_issued += 1;
        }
    }

    fn region_info(&self, r: Region) -> (u64, u64, AllocId) {
        let global_lock = self.arena.global_lock();
        match r {
            Region::Frame => {
                let fr = self.frame();
                (fr.locked, fr.frame_lock, fr.frame_prov)
            }
            Region::Vla(i) => {
                let v = self.frame().vlas[i as usize];
                (v.payload, v.lock, v.prov)
            }
            Region::Global(g) => (self.globals[g], global_lock, self.global_provs[g]),
            Region::Str(s) => (self.strings[s], global_lock, self.string_provs[s]),
        }
    }

    /// A new checked pointer to `raw` inside the object starting at `start`.
    fn fat_from(&mut self, raw: u64, start: u64, key: u64, lock: u64, prov: AllocId) -> R<Value> {
        match self.backend {
            Backend::InPlace => {
                let off = raw.wrapping_sub(start) as i64;
                if off < 0 || off as u64 > self.meta.max_offset() {
                    return Err(fault(TrapCode::ObjectTooLarge, format!("offset {off} does not fit the metadata word")));
                }
                let m = self.meta.pack(key, off as u64).map_err(|e| fault(TrapCode::InternalFault, e.to_string()))?;
                Ok(Value { raw, meta: m.0, lock: 0, prov })
            }
            Backend::Disjoint => {
                dj_fresh(&mut self.c);
                Ok(Value { raw, meta: key, lock, prov })
            }
            Backend::Unchecked => Ok(Value { raw, prov, ..Value::default() }),
        }
    }

    /// Move a checked pointer by `delta` bytes.
    fn shift(&mut self, v: Value, delta: i64) -> R<Value> {
        let raw = v.raw.wrapping_add(delta as u64);
        match self.backend {
            Backend::InPlace => {
                let m = self.meta.add_offset(MetaWord(v.meta), delta).map_err(|e| fault(TrapCode::ObjectTooLarge, e.to_string()))?;
                Ok(Value { raw, meta: m.0, ..v })
            }
            Backend::Disjoint => {
                dj_propagate(&mut self.c);
                Ok(Value { raw, ..v })
            }
            Backend::Unchecked => Ok(Value { raw, ..v }),
        }
    }

    fn key_check(&mut self, v: Value) -> R<()> {
        let res = match self.backend {
            Backend::InPlace => key_check(&self.mem, v.raw, MetaWord(v.meta), self.meta, &mut self.c)
                .map_err(|m| format!("key {:#x} does not match lock {:#x} for {:#x}", m.key, m.lock, v.raw)),
            Backend::Disjoint => dj_check(&self.mem, DjEntry { key: v.meta, lock_addr: v.lock }, &mut self.c)
                .map_err(|l| format!("key {:#x} does not match lock {:#x} for {:#x}", v.meta, l, v.raw)),
            Backend::Unchecked => return Ok(()),
        };
        if let Some(o) = &self.oracle {
            self.div.checks_observed += 1;
            if self.backend == Backend::InPlace && v.prov != 0 {
                let start = v.raw.wrapping_sub(self.meta.offset(MetaWord(v.meta)));
                if o.record(v.prov).is_some_and(|r| r.start != start) {
                    self.div.offset_violations += 1;
                }
            }
            if res.is_err() && o.is_live(v.prov) {
                let site = self.site();
                self.div.events.push(Divergence { kind: DivergenceKind::FalsePositive, site, detail: "check failed on a live object".into() });
            }
        }
        res.map_err(|d| fault(TrapCode::UseAfterFree, d))
    }

    /// Record an access through a checked pointer whose referent is already gone.
    fn note_access(&mut self, v: Value) {
        if let Some(o) = &self.oracle {
            if v.prov != 0 && !o.is_live(v.prov) {
                let site = self.site();
                self.div.events.push(Divergence {
                    kind: DivergenceKind::FalseNegative,
                    site,
                    detail: format!("access to freed memory at {:#x}", v.raw),
                });
            }
        }
    }

    fn load_fat(&mut self, a: u64) -> Value {
        let raw = self.mem.read64(a);
        let prov = self.oracle.as_ref().map_or(0, |o| o.load_prov(a));
        match self.backend {
            Backend::InPlace => {
                self.c.meta_loads += 1;
                Value { raw, meta: self.mem.read64(a + 8), lock: 0, prov }
            }
            Backend::Disjoint => {
                dj_propagate(&mut self.c);
                let e = if raw == 0 { DjEntry::default() } else { self.table.get(a).unwrap_or_default() };
                Value { raw, meta: e.key, lock: e.lock_addr, prov }
            }
            Backend::Unchecked => Value { raw, prov, ..Value::default() },
        }
    }

    fn store_fat(&mut self, a: u64, v: Value) {
        self.mem.write64(a, v.raw);
        match self.backend {
            Backend::InPlace => {
                self.mem.write64(a + 8, v.meta);
                self.c.meta_stores += 1;
            }
            Backend::Disjoint => {
                self.table.set(a, DjEntry { key: v.meta, lock_addr: v.lock });
                dj_propagate(&mut self.c);
            }
            Backend::Unchecked => {}
        }
        if let Some(o) = &mut self.oracle {
            o.store_prov(a, v.prov);
        }
    }

    fn width_bytes(&self, w: Width) -> u64 {
        match w {
            Width::I8 => 1,
            Width::I64 => 8,
            Width::Fat => self.ptr_size(),
        }
    }

    fn size_of_count(&self, count: VarId, elem: u64) -> R<u64> {
        let n = self.reg(count).raw as i64;
        if n < 0 {
            return Err(fault(TrapCode::ObjectTooLarge, format!("negative element count {n}")));
        }
        (n as u64).checked_mul(elem).ok_or_else(|| fault(TrapCode::ObjectTooLarge, format!("{n} x {elem} bytes overflows")))
    }

    fn is_fat_base(&self, a: &Addr) -> Option<Value> {
        match a.base {
            Base::Var(v) if self.class(v) == VarClass::Fat => Some(self.reg(v)),
            _ => None,
        }
    }

    // ---- instructions ----

    fn exec(&mut self, op: &Op) -> R<()> {
        match *op {
            Op::Const { dst, value } => {
                if self.class(dst) == VarClass::Fat {
                    if self.backend == Backend::Disjoint {
                        dj_fresh(&mut self.c);
                    }
                    self.set(dst, Value::default());
                } else {
                    self.set(dst, Value::word(value as u64));
                }
            }
            Op::Copy { dst, src } => {
                let v = self.reg(src);
                if self.class(dst) == VarClass::Fat && self.backend == Backend::Disjoint {
                    dj_propagate(&mut self.c);
                }
                self.set(dst, v);
            }
            Op::Unary { dst, op, src } => {
                let x = self.reg(src).raw as i64;
                let r = match op {
                    UnaryOp::Neg => x.wrapping_neg(),
                    UnaryOp::Not => (x == 0) as i64,
                    UnaryOp::Trunc8 => x as i8 as i64,
                };
                self.set(dst, Value::word(r as u64));
            }
            Op::Binary { dst, op, lhs, rhs } => {
                let (a, b) = (self.reg(lhs).raw as i64, self.reg(rhs).raw as i64);
                let r = match op {
                    BinaryOp::Add => a.wrapping_add(b),
                    BinaryOp::Sub => a.wrapping_sub(b),
                    BinaryOp::Mul => a.wrapping_mul(b),
                    BinaryOp::Div | BinaryOp::Rem if b == 0 => return Err(TrapCode::DivByZero.into()),
                    BinaryOp::Div => a.wrapping_div(b),
                    BinaryOp::Rem => a.wrapping_rem(b),
                    BinaryOp::Lt => (a < b) as i64,
                    BinaryOp::Le => (a <= b) as i64,
                    BinaryOp::Gt => (a > b) as i64,
                    BinaryOp::Ge => (a >= b) as i64,
                    BinaryOp::Eq => (a == b) as i64,
                    BinaryOp::Ne => (a != b) as i64,
                };
                self.set(dst, Value::word(r as u64));
            }
            Op::AddrOf { dst, addr } => {
                let a = self.eval_addr(&addr);
                self.set(dst, Value::word(a));
            }
            Op::MakeFat { dst, region, key, index, disp } => {
                let (start, lock, prov) = self.region_info(region);
                let raw = start.wrapping_add(self.scaled(index, disp) as u64);
                let key = key.map_or(GLOBAL_KEY, |k| self.reg(k).raw);
                let v = self.fat_from(raw, start, key, lock, prov)?;
                self.set(dst, v);
            }
            Op::PtrAdd { dst, src, index, disp } => {
                let delta = self.scaled(index, disp);
                let v = self.reg(src);
                let r = if self.class(dst) == VarClass::Fat { self.shift(v, delta)? } else { Value::word(v.raw.wrapping_add(delta as u64)) };
                self.set(dst, r);
            }
            Op::FieldAddr { dst, src, index, disp } => {
                let delta = self.scaled(index, disp);
                let v = self.shift(self.reg(src), delta)?;
                self.set(dst, v);
            }
            Op::FatToRaw { dst, src } => {
                let raw = self.reg(src).raw;
                self.set(dst, Value::word(raw));
            }
            Op::Load { dst, addr, width } => {
                if let Some(p) = self.is_fat_base(&addr) {
                    self.note_access(p);
                }
                let a = self.eval_addr(&addr);
                self.check_access(a, self.width_bytes(width))?;
                let v = match width {
                    Width::I8 => Value::word(self.mem.read8(a) as i8 as i64 as u64),
                    Width::I64 => Value::word(self.mem.read64(a)),
                    Width::Fat => self.load_fat(a),
                };
                self.set(dst, v);
            }
            Op::Store { addr, src, width, .. } => {
                if let Some(p) = self.is_fat_base(&addr) {
                    self.note_access(p);
                }
                let a = self.eval_addr(&addr);
                self.check_access(a, self.width_bytes(width))?;
                let v = self.reg(src);
                match width {
                    Width::I8 => self.mem.write8(a, v.raw as u8),
                    Width::I64 => self.mem.write64(a, v.raw),
                    Width::Fat => self.store_fat(a, v),
                }
                if width != Width::Fat {
                    if let Some(o) = &mut self.oracle {
                        o.store_prov(a, 0);
                    }
                }
            }
            Op::KeyCheck { ptr } => self.key_check(self.reg(ptr))?,
            Op::Hint { .. } => {}
            Op::Call { dst, func, ref args } => {
                let vals: Vec<Value> = args.iter().map(|&a| self.reg(a)).collect();
                if self.backend == Backend::Disjoint {
                    for &a in args {
                        if self.class(a) == VarClass::Fat {
                            dj_propagate(&mut self.c);
                        }
                    }
                }
                self.push_frame(func, vals, dst)?;
            }
            Op::Alloc { dst, elem_size, count } => {
                let size = self.size_of_count(count, elem_size)?;
                let v = self.alloc(size)?;
                self.set(dst, v);
            }
            Op::Free { ptr } => self.free(self.reg(ptr))?,
            Op::KeyNext { dst } => {
                if self.backend.is_checked() {
                    let k = self.kg.next_key();
                    self.note_key(k);
                    self.set(dst, Value::word(k));
                }
            }
            Op::LockInit { region, key } => self.lock_init(region, self.reg(key).raw)?,
            Op::LockKill { region } => self.lock_kill(region),
            Op::VlaAlloc { vla, count, elem_size } => {
                let size = self.size_of_count(count, elem_size)?;
                let f = &self.prog.funcs[self.frame().func];
                let locked = f.frame.vlas[vla as usize].locked;
                if locked && self.fat_repr() && size > self.meta.max_offset() {
                    return Err(fault(TrapCode::ObjectTooLarge, format!("array of {size} bytes")));
                }
                let header = if locked && self.fat_repr() { HEADER_BYTES } else { 0 };
                let total = align_up(header + size, PAYLOAD_ALIGN);
                let sp = self.sp.checked_sub(total).filter(|&sp| sp >= self.stack_limit);
                let Some(sp) = sp else { return Err(fault(TrapCode::OutOfMemory, "stack overflow in array".into())) };
                self.sp = sp;
                self.mem.fill_zero(sp, total);
                let fr = self.frames.last_mut().unwrap();
                fr.vlas[vla as usize] = VlaState { payload: sp + header, size, ..VlaState::default() };
            }
            Op::ZeroFill { addr, size } => {
                let a = self.eval_addr(&addr);
                self.check_access(a, size)?;
                self.mem.fill_zero(a, size);
            }
            Op::Marshal { dst, array, len } => {
                let arr = self.reg(array);
                self.note_access(arr);
                let thin = self.marshal(arr, self.reg(len).raw as i64)?;
                self.set(dst, thin);
            }
            Op::Unmarshal { dst, thin, orig, len } => {
                let o = self.reg(orig);
                self.note_access(o);
                self.unmarshal(self.reg(thin).raw, o, self.reg(len).raw as i64)?;
                if self.backend == Backend::Disjoint {
                    dj_propagate(&mut self.c);
                }
                self.set(dst, o);
            }
            Op::PrintInt { src } => {
                let v = self.reg(src).raw as i64;
                self.output.extend_from_slice(format!("{v}\n").as_bytes());
            }
            Op::PrintStr { src } => {
                let p = self.reg(src);
                if self.class(src) == VarClass::Fat {
                    self.note_access(p);
                }
                let mut a = p.raw;
                loop {
                    self.check_access(a, 1)?;
                    let b = self.mem.read8(a);
                    if b == 0 {
                        break;
                    }
                    self.output.push(b);
                    a += 1;
                    if a - p.raw > MAX_STR {
                        return Err(fault(TrapCode::BadAccess, "unterminated string".into()));
                    }
                }
            }
            Op::ReadInt { dst } => {
                let v = self.input.pop_front().unwrap_or(-1);
                self.set(dst, Value::word(v as u64));
            }
        }
        Ok(())
    }

    fn alloc(&mut self, size: u64) -> R<Value> {
        let v = match self.backend {
            Backend::InPlace => {
                let (raw, m) = mm_alloc(&mut self.mem, &mut self.heap, &mut self.kg, self.meta, size, &mut self.c, &mut self.hs)
                    .map_err(|c| fault(c, format!("allocation of {size} bytes")))?;
                self.note_key(self.meta.key(m));
                Value { raw, meta: m.0, lock: 0, prov: 0 }
            }
            Backend::Disjoint => {
                let (raw, e) = dj_alloc(&mut self.mem, &mut self.heap, &mut self.arena, &mut self.kg, size, &mut self.c, &mut self.hs)
                    .map_err(|c| fault(c, format!("allocation of {size} bytes")))?;
                self.note_key(e.key);
                dj_fresh(&mut self.c);
                Value { raw, meta: e.key, lock: e.lock_addr, prov: 0 }
            }
            Backend::Unchecked => {
                let b = self.heap.alloc(size, 0).ok_or_else(|| fault(TrapCode::OutOfMemory, format!("allocation of {size} bytes")))?;
                self.mem.fill_zero(b.start, b.len);
                self.hs.alloc_count += 1;
                self.hs.payload_bytes += size;
                self.hs.note_live(self.heap.live_bytes());
                Value::word(b.payload)
            }
        };
        let prov = self.oracle.as_mut().map_or(0, |o| o.alloc(v.raw, size, AllocKind::Heap));
        Ok(Value { prov, ..v })
    }

    fn free(&mut self, v: Value) -> R<()> {
        if v.raw == 0 {
            return Ok(());
        }
        let res = match self.backend {
            Backend::InPlace => mm_free(&mut self.mem, &mut self.heap, v.raw, MetaWord(v.meta), self.meta, &mut self.c, &mut self.hs)
                .map(|b| (b, b.payload - 8)),
            Backend::Disjoint => {
                let e = DjEntry { key: v.meta, lock_addr: v.lock };
                dj_free(&mut self.mem, &mut self.heap, &mut self.arena, v.raw, e, &mut self.c, &mut self.hs).map(|b| (b, e.lock_addr))
            }
            Backend::Unchecked => {
                // the baseline ignores bad frees, like a permissive libc
                if self.heap.block_at(v.raw).is_some() {
                    let b = self.heap.free(v.raw).unwrap();
                    self.hs.free_count += 1;
                    Ok((b, 0))
                } else {
                    return Ok(());
                }
            }
        };
        match res {
            Ok((b, lock)) => {
                self.last_freed = Some((b.payload, lock));
                if let Some(o) = &mut self.oracle {
                    if let Liveness::Live(id) = o.check(b.payload) {
                        o.kill(id);
                    }
                }
                Ok(())
            }
            Err(code) => {
                if let Some(o) = &self.oracle {
                    if code == TrapCode::DoubleFree && o.is_live(v.prov) {
                        let site = self.site();
                        self.div.events.push(Divergence { kind: DivergenceKind::FalsePositive, site, detail: "double free reported for a live object".into() });
                    }
                }
                Err(fault(code, format!("free of {:#x}", v.raw)))
            }
        }
    }

    fn lock_init(&mut self, region: Region, key: u64) -> R<()> {
        let (start, size) = match region {
            Region::Frame => {
                let f = &self.prog.funcs[self.frame().func];
                (self.frame().locked, f.frame.locked_size)
            }
            Region::Vla(i) => {
                let v = self.frame().vlas[i as usize];
                (v.payload, v.size)
            }
            Region::Global(_) | Region::Str(_) => return Err(fault(TrapCode::InternalFault, "static regions are locked at load time".into())),
        };
        let mut lock = 0;
        match self.backend {
            Backend::InPlace => {
                self.mem.write64(start - 8, key);
                self.c.meta_stores += 1;
            }
            Backend::Disjoint => {
                lock = self.arena.acquire(&mut self.mem, key)?;
                self.c.meta_stores += 1;
            }
            Backend::Unchecked => {}
        }
        let kind = if region == Region::Frame { AllocKind::Frame } else { AllocKind::Vla };
        let prov = self.oracle.as_mut().map_or(0, |o| o.alloc(start, size, kind));
        let fr = self.frames.last_mut().unwrap();
        match region {
            Region::Frame => {
                fr.frame_lock = lock;
                fr.frame_prov = prov;
            }
            Region::Vla(i) => {
                fr.vlas[i as usize].lock = lock;
                fr.vlas[i as usize].prov = prov;
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn lock_kill(&mut self, region: Region) {
        let (start, lock, prov) = self.region_info(region);
        match self.backend {
            Backend::InPlace => {
                self.mem.write64(start - 8, 0);
                self.c.meta_stores += 1;
            }
            Backend::Disjoint => {
                self.arena.release(&mut self.mem, lock);
                self.c.meta_stores += 1;
            }
            Backend::Unchecked => {}
        }
        if let Some(o) = &mut self.oracle {
            o.kill(prov);
        }
    }

    fn marshal(&mut self, arr: Value, n: i64) -> R<Value> {
        if n < 0 {
            return Err(fault(TrapCode::MarshalError, format!("negative length {n}")));
        }
        if self.backend == Backend::Unchecked {
            return Ok(Value::word(arr.raw));
        }
        let n = n as u64;
        let stride = self.ptr_size();
        let mut elems = Vec::with_capacity(n as usize);
        for i in 0..n {
            let a = arr.raw.wrapping_add(i * stride);
            self.check_access(a, stride)?;
            elems.push(self.load_fat(a));
        }
        let b = self.heap.alloc(n * 8, 0).ok_or_else(|| fault(TrapCode::OutOfMemory, "marshal buffer".into()))?;
        self.hs.payload_bytes += n * 8;
        self.hs.note_live(self.heap.live_bytes());
        for (i, e) in elems.iter().enumerate() {
            self.mem.write64(b.payload + 8 * i as u64, e.raw);
        }
        self.snaps.record(b.payload, &elems);
        Ok(Value::word(b.payload))
    }

    fn unmarshal(&mut self, thin: u64, orig: Value, n: i64) -> R<()> {
        if self.backend == Backend::Unchecked {
            return Ok(());
        }
        if n < 0 || !self.snaps.is_thin_array(thin) {
            return Err(fault(TrapCode::MarshalError, format!("{thin:#x} is not a marshalled array")));
        }
        let raws: Vec<u64> = (0..n as u64).map(|i| self.mem.read64(thin + 8 * i)).collect();
        let vals = self.snaps.revive(thin, &raws).map_err(|c| fault(c, "raw pointer unknown to the marshal snapshot".into()))?;
        let stride = self.ptr_size();
        for (i, v) in vals.into_iter().enumerate() {
            let a = orig.raw.wrapping_add(i as u64 * stride);
            self.check_access(a, stride)?;
            self.store_fat(a, v);
        }
        self.snaps.release(thin);
        self.heap.free(thin);
        Ok(())
    }
}
