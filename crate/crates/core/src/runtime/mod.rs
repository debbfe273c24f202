//! Simulated memory, allocation, key generation and the two key-lock schemes.

pub mod disjoint;
pub mod heap;
pub mod inplace;
pub mod keygen;
pub mod marshal;
pub mod memory;
pub mod oracle;

use std::fmt;

use serde::Serialize;

pub use disjoint::{DisjointTable, DjEntry, LockArena};
pub use heap::{Heap, HeapBlock};
pub use keygen::KeyGen;
pub use marshal::MarshalSnapshots;
pub use memory::SimMemory;
pub use oracle::{AllocId, AllocKind, Liveness, Oracle};

/// Process exit status of a trapped run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TrapCode {
    UseAfterFree,
    DoubleFree,
    InvalidFree,
    ObjectTooLarge,
    MarshalError,
    OutOfMemory,
    NullDeref,
    BadAccess,
    DivByZero,
    InternalFault,
}

impl TrapCode {
    pub fn code(self) -> i32 {
        match self {
            TrapCode::UseAfterFree => 11,
            TrapCode::DoubleFree => 12,
            TrapCode::InvalidFree => 13,
            TrapCode::ObjectTooLarge => 14,
            TrapCode::MarshalError => 15,
            TrapCode::OutOfMemory => 16,
            TrapCode::NullDeref => 17,
            TrapCode::BadAccess => 18,
            TrapCode::DivByZero => 19,
            TrapCode::InternalFault => 70,
        }
    }

    pub fn from_code(c: i32) -> Option<TrapCode> {
        use TrapCode::*;
        [UseAfterFree, DoubleFree, InvalidFree, ObjectTooLarge, MarshalError, OutOfMemory, NullDeref, BadAccess, DivByZero, InternalFault]
            .into_iter()
            .find(|t| t.code() == c)
    }
}

impl fmt::Display for TrapCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrapCode::UseAfterFree => "use after free",
            TrapCode::DoubleFree => "double free",
            TrapCode::InvalidFree => "invalid free",
            TrapCode::ObjectTooLarge => "object too large",
            TrapCode::MarshalError => "marshal error",
            TrapCode::OutOfMemory => "out of memory",
            TrapCode::NullDeref => "null dereference",
            TrapCode::BadAccess => "bad memory access",
            TrapCode::DivByZero => "division by zero",
            TrapCode::InternalFault => "internal fault",
        };
        f.write_str(s)
    }
}

/// A register value. `meta` is the packed metadata word in place, or the key
/// in the disjoint scheme, where `lock` holds the lock address. `prov` is the
/// oracle's allocation id and is ignored by the checking schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Value {
    pub raw: u64,
    pub meta: u64,
    pub lock: u64,
    pub prov: AllocId,
}

impl Value {
    pub fn word(raw: u64) -> Value {
        Value { raw, ..Value::default() }
    }
}

/// Metadata traffic, split so check cost can be read separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MetaCounters {
    pub key_checks: u64,
    pub meta_loads: u64,
    pub meta_loads_check: u64,
    pub meta_stores: u64,
}

/// Heap accounting shared by both schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct HeapStats {
    pub alloc_count: u64,
    pub free_count: u64,
    pub payload_bytes: u64,
    pub metadata_bytes: u64,
    pub peak_live_bytes: u64,
}

impl HeapStats {
    pub fn note_live(&mut self, live: u64) {
        self.peak_live_bytes = self.peak_live_bytes.max(live);
    }
}
