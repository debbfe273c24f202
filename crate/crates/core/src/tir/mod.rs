//! Typed intermediate representation with explicit key checks and lock
//! management, plus the lowering from the typed AST.

pub mod layout;
mod lower;
pub mod meta;
pub mod verify;

use std::fmt::{self, Write};

use serde::Serialize;

use crate::frontend::Span;
use crate::typeck::{FuncId, GlobalId, StrId};

pub use layout::{FrameLayout, Layouts, Repr};
pub use lower::{lower_program, LowerError};
pub use meta::{MetaLayout, MetaWord, GLOBAL_KEY, INVALID_KEY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BlockId(pub u32);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bb{}", self.0)
    }
}

/// A one-word value or a fat (address, metadata) pair. Fat values always move whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarClass {
    Word,
    Fat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarInfo {
    pub class: VarClass,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Width {
    I8,
    I64,
    /// A checked pointer: 16 bytes in place, or 8 bytes plus a table entry.
    Fat,
}

/// A memory region that carries its own lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Frame,
    Vla(u32),
    Global(GlobalId),
    Str(StrId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Base {
    /// The address held in a variable (the raw half when fat).
    Var(VarId),
    /// Payload of the frame's locked region.
    Frame,
    /// The frame's unlocked memory.
    Plain,
    Vla(u32),
    Global(GlobalId),
    Str(StrId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Addr {
    pub base: Base,
    pub index: Option<(VarId, i64)>,
    pub disp: i64,
}

impl Addr {
    pub fn at(base: Base, disp: i64) -> Addr {
        Addr { base, index: None, disp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnaryOp {
    Neg,
    Not,
    /// Keep the low byte.
    Trunc8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Op {
    Const { dst: VarId, value: i64 },
    Copy { dst: VarId, src: VarId },
    Unary { dst: VarId, op: UnaryOp, src: VarId },
    /// Operates on words; fat operands contribute their address only.
    Binary { dst: VarId, op: BinaryOp, lhs: VarId, rhs: VarId },
    /// Raw address computation.
    AddrOf { dst: VarId, addr: Addr },
    /// Checked pointer into a locked region; the key is `key` or, when
    /// absent, the global key.
    MakeFat { dst: VarId, region: Region, key: Option<VarId>, index: Option<(VarId, i64)>, disp: i64 },
    /// Pointer arithmetic; a fat result keeps its key and shifts its offset.
    PtrAdd { dst: VarId, src: VarId, index: Option<(VarId, i64)>, disp: i64 },
    /// `&p->f` / `&p[i]` through a checked pointer; must follow a KeyCheck of `src`.
    FieldAddr { dst: VarId, src: VarId, index: Option<(VarId, i64)>, disp: i64 },
    FatToRaw { dst: VarId, src: VarId },
    Load { dst: VarId, addr: Addr, width: Width },
    /// `kills` marks stores that may retarget checked pointers or free memory
    /// behind the analysis' back.
    Store { addr: Addr, src: VarId, width: Width, kills: bool },
    KeyCheck { ptr: VarId },
    Hint { ptr: VarId },
    Call { dst: Option<VarId>, func: FuncId, args: Vec<VarId> },
    Alloc { dst: VarId, elem_size: u64, count: VarId },
    Free { ptr: VarId },
    KeyNext { dst: VarId },
    LockInit { region: Region, key: VarId },
    LockKill { region: Region },
    VlaAlloc { vla: u32, count: VarId, elem_size: u64 },
    ZeroFill { addr: Addr, size: u64 },
    Marshal { dst: VarId, array: VarId, len: VarId },
    Unmarshal { dst: VarId, thin: VarId, orig: VarId, len: VarId },
    PrintInt { src: VarId },
    PrintStr { src: VarId },
    ReadInt { dst: VarId },
}

impl Op {
    /// The variable this instruction defines, if any.
    pub fn def(&self) -> Option<VarId> {
        match *self {
            Op::Const { dst, .. }
            | Op::Copy { dst, .. }
            | Op::Unary { dst, .. }
            | Op::Binary { dst, .. }
            | Op::AddrOf { dst, .. }
            | Op::MakeFat { dst, .. }
            | Op::PtrAdd { dst, .. }
            | Op::FieldAddr { dst, .. }
            | Op::FatToRaw { dst, .. }
            | Op::Load { dst, .. }
            | Op::Alloc { dst, .. }
            | Op::KeyNext { dst }
            | Op::Marshal { dst, .. }
            | Op::Unmarshal { dst, .. }
            | Op::ReadInt { dst } => Some(dst),
            Op::Call { dst, .. } => dst,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instr {
    pub op: Op,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Terminator {
    Jump(BlockId),
    Branch { cond: VarId, then_bb: BlockId, else_bb: BlockId },
    Ret(Option<VarId>),
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match *self {
            Terminator::Jump(b) => vec![b],
            Terminator::Branch { then_bb, else_bb, .. } => vec![then_bb, else_bb],
            Terminator::Ret(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TirFunc {
    pub name: String,
    pub unchecked: bool,
    pub params: Vec<VarId>,
    pub ret: Option<VarClass>,
    pub vars: Vec<VarInfo>,
    pub blocks: Vec<Block>,
    pub exit: BlockId,
    pub frame: FrameLayout,
    pub span: Span,
}

impl TirFunc {
    pub fn class(&self, v: VarId) -> VarClass {
        self.vars[v.0 as usize].class
    }

    pub fn block(&self, b: BlockId) -> &Block {
        &self.blocks[b.0 as usize]
    }

    pub fn instrs(&self) -> impl Iterator<Item = &Instr> {
        self.blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn count_key_checks(&self) -> usize {
        self.instrs().filter(|i| matches!(i.op, Op::KeyCheck { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SlotInit {
    Zero,
    Word { value: i64, width: Width },
    Str { id: StrId, fat: bool },
    Addr { global: GlobalId, fat: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalSlot {
    pub name: String,
    pub size: u64,
    pub align: u64,
    /// Preceded by a lock holding the global key.
    pub locked: bool,
    pub init: SlotInit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TirProgram {
    pub funcs: Vec<TirFunc>,
    pub globals: Vec<GlobalSlot>,
    /// String literals, each NUL-terminated and always locked.
    pub strings: Vec<Vec<u8>>,
    pub main: FuncId,
    pub meta: MetaLayout,
    pub repr: Repr,
    /// Whether the check optimizer ran.
    pub optimized: bool,
    /// Key checks removed by the optimizer.
    pub checks_elided: u64,
}

impl TirProgram {
    pub fn func(&self, name: &str) -> Option<&TirFunc> {
        self.funcs.iter().find(|f| f.name == name)
    }

    pub fn count_key_checks(&self) -> usize {
        self.funcs.iter().map(|f| f.count_key_checks()).sum()
    }
}

// ---- textual dump ----

fn idx(index: &Option<(VarId, i64)>) -> String {
    match index {
        Some((v, s)) => format!(" + {v}*{s}"),
        None => String::new(),
    }
}

fn disp(d: i64) -> String {
    match d {
        0 => String::new(),
        d if d < 0 => format!(" - {}", -d),
        d => format!(" + {d}"),
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Frame => f.write_str("frame"),
            Region::Vla(i) => write!(f, "vla{i}"),
            Region::Global(g) => write!(f, "g{g}"),
            Region::Str(s) => write!(f, "s{s}"),
        }
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            Base::Var(v) => v.to_string(),
            Base::Frame => "frame".into(),
            Base::Plain => "plain".into(),
            Base::Vla(i) => format!("vla{i}"),
            Base::Global(g) => format!("g{g}"),
            Base::Str(s) => format!("s{s}"),
        };
        write!(f, "[{base}{}{}]", idx(&self.index), disp(self.disp))
    }
}

fn width(w: Width) -> &'static str {
    match w {
        Width::I8 => "i8",
        Width::I64 => "i64",
        Width::Fat => "fat",
    }
}

fn lower_name<T: fmt::Debug>(t: T) -> String {
    format!("{t:?}").to_lowercase()
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Const { dst, value } => write!(f, "{dst} = const {value}"),
            Op::Copy { dst, src } => write!(f, "{dst} = copy {src}"),
            Op::Unary { dst, op, src } => write!(f, "{dst} = {} {src}", lower_name(op)),
            Op::Binary { dst, op, lhs, rhs } => write!(f, "{dst} = {} {lhs}, {rhs}", lower_name(op)),
            Op::AddrOf { dst, addr } => write!(f, "{dst} = addr {addr}"),
            Op::MakeFat { dst, region, key, index, disp: d } => {
                let key = key.map_or("global".to_string(), |k| k.to_string());
                write!(f, "{dst} = makefat {region} key={key}{}{}", idx(index), disp(*d))
            }
            Op::PtrAdd { dst, src, index, disp: d } => write!(f, "{dst} = ptradd {src}{}{}", idx(index), disp(*d)),
            Op::FieldAddr { dst, src, index, disp: d } => {
                write!(f, "{dst} = fieldaddr {src}{}{}", idx(index), disp(*d))
            }
            Op::FatToRaw { dst, src } => write!(f, "{dst} = fat2raw {src}"),
            Op::Load { dst, addr, width: w } => write!(f, "{dst} = load.{} {addr}", width(*w)),
            Op::Store { addr, src, width: w, kills } => {
                write!(f, "store.{} {addr}, {src}{}", width(*w), if *kills { " !kills" } else { "" })
            }
            Op::KeyCheck { ptr } => write!(f, "keycheck {ptr}"),
            Op::Hint { ptr } => write!(f, "hint {ptr}"),
            Op::Call { dst, func, args } => {
                let args: Vec<_> = args.iter().map(|a| a.to_string()).collect();
                match dst {
                    Some(d) => write!(f, "{d} = call f{func}({})", args.join(", ")),
                    None => write!(f, "call f{func}({})", args.join(", ")),
                }
            }
            Op::Alloc { dst, elem_size, count } => write!(f, "{dst} = alloc {count} x {elem_size}"),
            Op::Free { ptr } => write!(f, "free {ptr}"),
            Op::KeyNext { dst } => write!(f, "{dst} = keynext"),
            Op::LockInit { region, key } => write!(f, "lockinit {region}, {key}"),
            Op::LockKill { region } => write!(f, "lockkill {region}"),
            Op::VlaAlloc { vla, count, elem_size } => write!(f, "vlaalloc vla{vla}, {count} x {elem_size}"),
            Op::ZeroFill { addr, size } => write!(f, "zerofill {addr}, {size}"),
            Op::Marshal { dst, array, len } => write!(f, "{dst} = marshal {array}, {len}"),
            Op::Unmarshal { dst, thin, orig, len } => write!(f, "{dst} = unmarshal {thin}, {orig}, {len}"),
            Op::PrintInt { src } => write!(f, "print_int {src}"),
            Op::PrintStr { src } => write!(f, "print_str {src}"),
            Op::ReadInt { dst } => write!(f, "{dst} = read_int"),
        }
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Jump(b) => write!(f, "jump {b}"),
            Terminator::Branch { cond, then_bb, else_bb } => write!(f, "br {cond}, {then_bb}, {else_bb}"),
            Terminator::Ret(Some(v)) => write!(f, "ret {v}"),
            Terminator::Ret(None) => f.write_str("ret"),
        }
    }
}

impl TirFunc {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let params: Vec<_> = self
            .params
            .iter()
            .map(|p| {
                let c = if self.class(*p) == VarClass::Fat { ":fat" } else { "" };
                format!("{p}{c}")
            })
            .collect();
        let ret = match self.ret {
            None => "void",
            Some(VarClass::Word) => "word",
            Some(VarClass::Fat) => "fat",
        };
        let qual = if self.unchecked { "unchecked " } else { "" };
        let _ = writeln!(out, "{qual}func {}({}) -> {ret}", self.name, params.join(", "));
        let fl = &self.frame;
        if !fl.is_empty() {
            let members = |ms: &[layout::FrameMember]| {
                ms.iter().map(|m| format!("{}@{}", m.name, m.offset)).collect::<Vec<_>>().join(" ")
            };
            let _ = writeln!(out, "  frame locked={} [{}] plain={} [{}]", fl.locked_size, members(&fl.locked), fl.plain_size, members(&fl.plain));
            for (i, v) in fl.vlas.iter().enumerate() {
                let _ = writeln!(out, "  vla{i} {} elem={}{}", v.name, v.elem_size, if v.locked { " locked" } else { "" });
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "{}:", BlockId(i as u32));
            for ins in &b.instrs {
                let _ = writeln!(out, "    {}", ins.op);
            }
            let _ = writeln!(out, "    {}", b.term);
        }
        out
    }
}

impl TirProgram {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "; key_bits={} repr={:?}", self.meta.key_bits(), self.repr);
        for (i, g) in self.globals.iter().enumerate() {
            let lock = if g.locked { " locked" } else { "" };
            let _ = writeln!(out, "global g{i} {} size={}{lock} init={:?}", g.name, g.size, g.init);
        }
        for (i, s) in self.strings.iter().enumerate() {
            let text = crate::frontend::token::escape(&s[..s.len() - 1], '"');
            let _ = writeln!(out, "string s{i} \"{text}\"");
        }
        for (i, f) in self.funcs.iter().enumerate() {
            let _ = writeln!(out, "\n; f{i}");
            out.push_str(&f.dump());
        }
        out
    }
}
