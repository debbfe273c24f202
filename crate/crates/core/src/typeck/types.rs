//! Guest types and the typed program produced by the checker.

use std::fmt;

use crate::frontend::ast::{BinOp, UnOp};
use crate::frontend::Span;

pub type StructId = usize;
pub type GlobalId = usize;
pub type FuncId = usize;
pub type LocalId = usize;
pub type StrId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum Type {
    Int,
    Char,
    #[default]
    Void,
    Struct(String),
    /// Fixed array when the length is known, otherwise a VLA.
    Array(Box<Type>, Option<u64>),
    RawPtr(Box<Type>),
    MmPtr(Box<Type>),
    MmArrayPtr(Box<Type>),
    /// Type of the `null` literal before it meets a pointer destination.
    Null,
    /// Placeholder after a reported error; compatible with everything.
    Error,
}

impl Type {
    pub fn raw(t: Type) -> Type {
        Type::RawPtr(Box::new(t))
    }

    pub fn mm(t: Type) -> Type {
        Type::MmPtr(Box::new(t))
    }

    pub fn mm_array(t: Type) -> Type {
        Type::MmArrayPtr(Box::new(t))
    }

    pub fn is_checked(&self) -> bool {
        matches!(self, Type::MmPtr(_) | Type::MmArrayPtr(_))
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, Type::RawPtr(_) | Type::MmPtr(_) | Type::MmArrayPtr(_))
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Type::Int | Type::Char)
    }

    /// Usable as a branch condition.
    pub fn is_truthy(&self) -> bool {
        self.is_integer() || self.is_ptr() || matches!(self, Type::Null | Type::Error)
    }

    pub fn is_scalar(&self) -> bool {
        self.is_integer() || self.is_ptr()
    }

    pub fn pointee(&self) -> Option<&Type> {
        match self {
            Type::RawPtr(t) | Type::MmPtr(t) | Type::MmArrayPtr(t) => Some(t),
            _ => None,
        }
    }

    pub fn elem(&self) -> Option<&Type> {
        match self {
            Type::Array(t, _) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Char => f.write_str("char"),
            Type::Void => f.write_str("void"),
            Type::Struct(n) => write!(f, "struct {n}"),
            Type::Array(t, Some(n)) => write!(f, "{t}[{n}]"),
            Type::Array(t, None) => write!(f, "{t}[]"),
            Type::RawPtr(t) => write!(f, "{t}*"),
            Type::MmPtr(t) => write!(f, "mm_ptr<{t}>"),
            Type::MmArrayPtr(t) => write!(f, "mm_array_ptr<{t}>"),
            Type::Null => f.write_str("null"),
            Type::Error => f.write_str("<error>"),
        }
    }
}

/// Typing context of the enclosing function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ctx {
    Checked,
    Unchecked,
}

/// Whether a value of type `src` may flow into a `dst` slot without a cast.
pub fn assignable(dst: &Type, src: &Type, ctx: Ctx) -> bool {
    if dst == src || matches!(dst, Type::Error) || matches!(src, Type::Error) {
        return true;
    }
    match (dst, src) {
        (Type::Int, Type::Char) => true,
        (d, Type::Null) => d.is_ptr(),
        (Type::RawPtr(d), Type::MmPtr(s) | Type::MmArrayPtr(s)) => ctx == Ctx::Unchecked && d == s,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
    pub span: Span,
}

impl StructDef {
    pub fn field(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDef {
    pub name: String,
    pub ty: Type,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GlobalInit {
    Zero,
    Int(i64),
    Str(StrId),
    AddrOf(GlobalId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDef {
    pub name: String,
    pub ty: Type,
    pub init: GlobalInit,
    /// Its address flows into a checked pointer, so it needs a lock.
    pub addr_taken_checked: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDef {
    pub name: String,
    pub ty: Type,
    pub is_param: bool,
    pub addr_taken_raw: bool,
    pub addr_taken_checked: bool,
    pub span: Span,
}

/// Where a local lives at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    /// A virtual register; never addressed.
    Register,
    /// Plain frame memory without a lock.
    Memory,
    /// Member of the frame's shared locked region.
    Locked,
    /// Variable-length array with its own lock when `locked`.
    Vla { locked: bool },
}

impl LocalDef {
    pub fn storage(&self) -> Storage {
        match &self.ty {
            Type::Array(_, None) => Storage::Vla { locked: self.addr_taken_checked },
            _ if self.addr_taken_checked => Storage::Locked,
            Type::Array(..) | Type::Struct(_) => Storage::Memory,
            _ if self.addr_taken_raw => Storage::Memory,
            _ => Storage::Register,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TFunc {
    pub name: String,
    pub unchecked: bool,
    pub ret: Type,
    pub params: Vec<LocalId>,
    pub locals: Vec<LocalDef>,
    pub body: Vec<TStmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypedProgram {
    pub structs: Vec<StructDef>,
    pub globals: Vec<GlobalDef>,
    pub funcs: Vec<TFunc>,
    pub strings: Vec<Vec<u8>>,
}

impl TypedProgram {
    pub fn struct_def(&self, name: &str) -> &StructDef {
        self.structs.iter().find(|s| s.name == name).expect("struct resolved by the checker")
    }

    pub fn func(&self, name: &str) -> Option<FuncId> {
        self.funcs.iter().position(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TStmt {
    pub kind: TStmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TStmtKind {
    Decl { local: LocalId, len: Option<TExpr>, init: Option<TExpr> },
    Expr(TExpr),
    If { cond: TExpr, then_branch: Box<TStmt>, else_branch: Option<Box<TStmt>> },
    While { cond: TExpr, body: Box<TStmt> },
    Return(Option<TExpr>),
    Block(Vec<TStmt>),
    Break,
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TExpr {
    pub kind: TExprKind,
    pub ty: Type,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conv {
    /// char to int.
    Widen,
    /// int to char.
    Trunc,
    /// Drop the metadata of a checked pointer.
    CheckedToRaw,
    PtrToInt,
    IntToPtr,
    /// Pointer to pointer of the same representation.
    Reinterpret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    PrintInt,
    PrintStr,
    ReadInt,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "print_int" => Some(Builtin::PrintInt),
            "print_str" => Some(Builtin::PrintStr),
            "read_int" => Some(Builtin::ReadInt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TExprKind {
    Int(i64),
    Str(StrId),
    Null,
    Load(Box<Place>),
    /// Address of a place; arrays decay through this too. The expression
    /// type says whether the result is raw or checked.
    AddrOf(Box<Place>),
    Unary(UnOp, Box<TExpr>),
    Binary(BinOp, Box<TExpr>, Box<TExpr>),
    PtrAdd { ptr: Box<TExpr>, offset: Box<TExpr>, negate: bool },
    PtrDiff(Box<TExpr>, Box<TExpr>),
    Assign { place: Box<Place>, value: Box<TExpr> },
    Compound { op: BinOp, place: Box<Place>, value: Box<TExpr> },
    Convert(Conv, Box<TExpr>),
    Call { func: FuncId, args: Vec<TExpr> },
    Builtin(Builtin, Vec<TExpr>),
    Alloc { elem: Type, count: Box<TExpr> },
    Free(Box<TExpr>),
    Hint(LocalId),
    Marshal { array: Box<TExpr>, len: Box<TExpr> },
    Unmarshal { thin: Box<TExpr>, orig: Box<TExpr>, len: Box<TExpr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub kind: PlaceKind,
    pub ty: Type,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlaceKind {
    Local(LocalId),
    Global(GlobalId),
    /// `*ptr`, or `ptr[index]` when indexed.
    Deref { ptr: Box<TExpr>, index: Option<Box<TExpr>> },
    Field { base: Box<Place>, field: usize },
    Index { base: Box<Place>, index: Box<TExpr> },
}

/// What a place is ultimately addressed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Root {
    Local(LocalId),
    Global(GlobalId),
    RawDeref,
    CheckedDeref,
}

impl Place {
    pub fn root(&self) -> Root {
        match &self.kind {
            PlaceKind::Local(l) => Root::Local(*l),
            PlaceKind::Global(g) => Root::Global(*g),
            PlaceKind::Deref { ptr, .. } if ptr.ty.is_checked() => Root::CheckedDeref,
            PlaceKind::Deref { .. } => Root::RawDeref,
            PlaceKind::Field { base, .. } | PlaceKind::Index { base, .. } => base.root(),
        }
    }
}
