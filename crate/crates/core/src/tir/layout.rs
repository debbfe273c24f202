//! Sizes, struct layouts and stack-frame layout.

use std::collections::HashMap;

use serde::Serialize;

use crate::typeck::{LocalId, Storage, TFunc, Type, TypedProgram};

/// How checked pointers are represented in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Repr {
    /// Address plus metadata word (16 bytes); locks live in object headers.
    Fat,
    /// Bare 8-byte address; metadata, if any, lives elsewhere.
    Thin,
}

/// Bytes of padding plus lock that precede a locked payload in the fat representation.
pub const HEADER_BYTES: u64 = 16;
pub const PAYLOAD_ALIGN: u64 = 16;

pub fn align_up(n: u64, a: u64) -> u64 {
    n.div_ceil(a) * a
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructLayout {
    pub size: u64,
    pub align: u64,
    pub offsets: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Layouts {
    pub repr: Repr,
    structs: HashMap<String, StructLayout>,
}

impl Layouts {
    pub fn new(prog: &TypedProgram, repr: Repr) -> Self {
        let mut lay = Layouts { repr, structs: HashMap::new() };
        // struct definitions may appear in any order; resolve on demand
        let mut pending: Vec<&str> = prog.structs.iter().map(|s| s.name.as_str()).collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|name| {
                let def = prog.struct_def(name);
                if !def.fields.iter().all(|f| lay.ready(&f.ty)) {
                    return true;
                }
                let mut off = 0;
                let mut align = 1;
                let mut offsets = Vec::new();
                for f in &def.fields {
                    let a = lay.align_of(&f.ty);
                    off = align_up(off, a);
                    offsets.push(off);
                    off += lay.size_of(&f.ty);
                    align = align.max(a);
                }
                let size = align_up(off.max(1), align);
                lay.structs.insert(name.to_string(), StructLayout { size, align, offsets });
                false
            });
            assert!(pending.len() < before, "recursive struct layout");
        }
        lay
    }

    fn ready(&self, t: &Type) -> bool {
        match t {
            Type::Struct(n) => self.structs.contains_key(n),
            Type::Array(e, _) => self.ready(e),
            _ => true,
        }
    }

    pub fn header(&self) -> u64 {
        match self.repr {
            Repr::Fat => HEADER_BYTES,
            Repr::Thin => 0,
        }
    }

    pub fn checked_ptr_size(&self) -> u64 {
        match self.repr {
            Repr::Fat => 16,
            Repr::Thin => 8,
        }
    }

    pub fn size_of(&self, t: &Type) -> u64 {
        match t {
            Type::Int | Type::RawPtr(_) | Type::Null => 8,
            Type::Char => 1,
            Type::MmPtr(_) | Type::MmArrayPtr(_) => self.checked_ptr_size(),
            Type::Struct(n) => self.structs[n].size,
            Type::Array(e, Some(n)) => self.size_of(e) * n,
            Type::Array(_, None) | Type::Void | Type::Error => 0,
        }
    }

    pub fn align_of(&self, t: &Type) -> u64 {
        match t {
            Type::Char => 1,
            Type::Struct(n) => self.structs[n].align,
            Type::Array(e, _) => self.align_of(e),
            _ => 8,
        }
    }

    pub fn struct_layout(&self, name: &str) -> &StructLayout {
        &self.structs[name]
    }

    pub fn field_offset(&self, name: &str, field: usize) -> u64 {
        self.structs[name].offsets[field]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMember {
    pub local: LocalId,
    pub name: String,
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VlaSlot {
    pub local: LocalId,
    pub name: String,
    pub elem_size: u64,
    pub locked: bool,
}

/// Stack layout of one function. Offsets in `locked` are from the payload
/// start of the shared locked region; its lock sits 8 bytes before that.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FrameLayout {
    pub locked: Vec<FrameMember>,
    pub locked_size: u64,
    pub plain: Vec<FrameMember>,
    pub plain_size: u64,
    pub vlas: Vec<VlaSlot>,
}

impl FrameLayout {
    pub fn has_locked_region(&self) -> bool {
        !self.locked.is_empty()
    }

    /// The frame needs a fresh key in its prologue.
    pub fn needs_key(&self) -> bool {
        self.has_locked_region() || self.vlas.iter().any(|v| v.locked)
    }

    pub fn is_empty(&self) -> bool {
        self.locked.is_empty() && self.plain.is_empty() && self.vlas.is_empty()
    }
}

fn place_members(members: &mut Vec<FrameMember>, size: &mut u64, f: &TFunc, local: LocalId, lay: &Layouts) {
    let ty = &f.locals[local].ty;
    let off = align_up(*size, lay.align_of(ty));
    let sz = lay.size_of(ty);
    members.push(FrameMember { local, name: f.locals[local].name.clone(), offset: off, size: sz });
    *size = off + sz;
}

pub fn layout_stack_frame(f: &TFunc, lay: &Layouts) -> FrameLayout {
    let mut fl = FrameLayout::default();
    for (id, l) in f.locals.iter().enumerate() {
        match l.storage() {
            Storage::Register => {}
            Storage::Locked => place_members(&mut fl.locked, &mut fl.locked_size, f, id, lay),
            Storage::Memory => place_members(&mut fl.plain, &mut fl.plain_size, f, id, lay),
            Storage::Vla { locked } => fl.vlas.push(VlaSlot {
                local: id,
                name: l.name.clone(),
                elem_size: lay.size_of(l.ty.elem().unwrap()),
                locked,
            }),
        }
    }
    fl
}
