//! Disjoint key-lock metadata: a two-level table indexed by the storage
//! address of each pointer, and locks in a separate arena.

use std::collections::HashMap;

use super::{Heap, HeapBlock, HeapStats, KeyGen, MetaCounters, SimMemory, TrapCode};
use crate::tir::{GLOBAL_KEY, INVALID_KEY};

pub const ENTRY_BYTES: u64 = 16;
pub const PAGE_ENTRIES: usize = 1024;
pub const PAGE_BYTES: u64 = ENTRY_BYTES * PAGE_ENTRIES as u64;
pub const DIR_ENTRY_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DjEntry {
    pub key: u64,
    pub lock_addr: u64,
}

type Page = Box<[Option<DjEntry>; PAGE_ENTRIES]>;

#[derive(Default)]
pub struct DisjointTable {
    dir: HashMap<u64, Page>,
    populated: u64,
}

impl DisjointTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn split(addr: u64) -> (u64, usize) {
        let slot = addr >> 3;
        (slot / PAGE_ENTRIES as u64, (slot % PAGE_ENTRIES as u64) as usize)
    }

    pub fn get(&self, addr: u64) -> Option<DjEntry> {
        let (hi, lo) = Self::split(addr);
        self.dir.get(&hi).and_then(|p| p[lo])
    }

    pub fn set(&mut self, addr: u64, e: DjEntry) {
        let (hi, lo) = Self::split(addr);
        let page = self.dir.entry(hi).or_insert_with(|| Box::new([None; PAGE_ENTRIES]));
        if page[lo].is_none() {
            self.populated += 1;
        }
        page[lo] = Some(e);
    }

    /// Bytes of populated entries.
    pub fn entry_bytes(&self) -> u64 {
        self.populated * ENTRY_BYTES
    }

    /// Bytes reserved by the table: directory entries plus whole pages.
    pub fn table_bytes(&self) -> u64 {
        self.dir.len() as u64 * (DIR_ENTRY_BYTES + PAGE_BYTES)
    }
}

/// Locks live in 8-byte slots; slot 0 is the shared lock of all globals.
pub struct LockArena {
    base: u64,
    slots: u64,
    next: u64,
    free: Vec<u64>,
}

impl LockArena {
    pub fn new(mem: &mut SimMemory, base: u64, size: u64) -> Self {
        mem.write64(base, GLOBAL_KEY);
        LockArena { base, slots: size / 8, next: 1, free: Vec::new() }
    }

    pub fn global_lock(&self) -> u64 {
        self.base
    }

    pub fn contains(&self, addr: u64) -> bool {
        (self.base..self.base + self.slots * 8).contains(&addr)
    }

    pub fn acquire(&mut self, mem: &mut SimMemory, key: u64) -> Result<u64, TrapCode> {
        let addr = match self.free.pop() {
            Some(a) => a,
            None if self.next < self.slots => {
                self.next += 1;
                self.base + (self.next - 1) * 8
            }
            None => return Err(TrapCode::OutOfMemory),
        };
        mem.write64(addr, key);
        Ok(addr)
    }

    pub fn release(&mut self, mem: &mut SimMemory, addr: u64) {
        mem.write64(addr, INVALID_KEY);
        self.free.push(addr);
    }
}

/// Check cost is fixed: directory, entry key, entry lock address, lock.
pub const CHECK_LOADS: u64 = 4;

pub fn dj_check(mem: &SimMemory, e: DjEntry, c: &mut MetaCounters) -> Result<(), u64> {
    c.key_checks += 1;
    c.meta_loads += CHECK_LOADS;
    c.meta_loads_check += CHECK_LOADS;
    let lock = if e.lock_addr == 0 { INVALID_KEY } else { mem.read64(e.lock_addr) };
    if lock == e.key {
        Ok(())
    } else {
        Err(lock)
    }
}

/// Copy one 16-byte entry between metadata homes.
pub fn dj_propagate(c: &mut MetaCounters) {
    c.meta_loads += 2;
    c.meta_stores += 2;
}

/// Write a fresh entry for a newly created pointer value.
pub fn dj_fresh(c: &mut MetaCounters) {
    c.meta_stores += 2;
}

#[allow(clippy::too_many_arguments)]
pub fn dj_alloc(
    mem: &mut SimMemory,
    heap: &mut Heap,
    arena: &mut LockArena,
    kg: &mut KeyGen,
    size: u64,
    c: &mut MetaCounters,
    hs: &mut HeapStats,
) -> Result<(u64, DjEntry), TrapCode> {
    let b = heap.alloc(size, 0).ok_or(TrapCode::OutOfMemory)?;
    mem.fill_zero(b.start, b.len);
    let key = kg.next_key();
    let lock_addr = arena.acquire(mem, key)?;
    c.meta_stores += 1;
    hs.alloc_count += 1;
    hs.payload_bytes += size;
    hs.metadata_bytes += 8;
    hs.note_live(heap.live_bytes());
    Ok((b.payload, DjEntry { key, lock_addr }))
}

#[allow(clippy::too_many_arguments)]
pub fn dj_free(
    mem: &mut SimMemory,
    heap: &mut Heap,
    arena: &mut LockArena,
    raw: u64,
    e: DjEntry,
    c: &mut MetaCounters,
    hs: &mut HeapStats,
) -> Result<HeapBlock, TrapCode> {
    c.meta_loads += 1;
    let lock = if e.lock_addr == 0 { INVALID_KEY } else { mem.read64(e.lock_addr) };
    if lock != e.key || e.key == INVALID_KEY {
        return Err(TrapCode::DoubleFree);
    }
    if heap.block_at(raw).is_none() || e.lock_addr == arena.global_lock() {
        return Err(TrapCode::InvalidFree);
    }
    arena.release(mem, e.lock_addr);
    c.meta_stores += 1;
    hs.free_count += 1;
    Ok(heap.free(raw).expect("checked live"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::memory::{HEAP_BASE, LOCK_BASE};
    use crate::tir::MetaLayout;

    struct Rt {
        mem: SimMemory,
        heap: Heap,
        arena: LockArena,
        kg: KeyGen,
        c: MetaCounters,
        hs: HeapStats,
    }

    fn rt() -> Rt {
        let mut mem = SimMemory::new();
        let arena = LockArena::new(&mut mem, LOCK_BASE, 1 << 16);
        Rt {
            mem,
            heap: Heap::new(HEAP_BASE, 1 << 24),
            arena,
            kg: KeyGen::starting_at(77, MetaLayout::default()),
            c: MetaCounters::default(),
            hs: HeapStats::default(),
        }
    }

    impl Rt {
        fn alloc(&mut self, n: u64) -> (u64, DjEntry) {
            dj_alloc(&mut self.mem, &mut self.heap, &mut self.arena, &mut self.kg, n, &mut self.c, &mut self.hs).unwrap()
        }
        fn free(&mut self, raw: u64, e: DjEntry) -> Result<HeapBlock, TrapCode> {
            dj_free(&mut self.mem, &mut self.heap, &mut self.arena, raw, e, &mut self.c, &mut self.hs)
        }
    }

    #[test]
    fn object_has_no_header_and_lock_lives_apart() {
        let mut r = rt();
        let (p, e) = r.alloc(24);
        assert_eq!(p % 16, 0);
        assert!(r.arena.contains(e.lock_addr));
        assert_eq!(r.mem.read64(e.lock_addr), 77);
        assert_eq!(r.hs.metadata_bytes, 8);
    }

    #[test]
    fn check_costs_four_loads() {
        let mut r = rt();
        let (_, e) = r.alloc(24);
        let before = r.c.meta_loads;
        dj_check(&r.mem, e, &mut r.c).unwrap();
        assert_eq!(r.c.meta_loads - before, 4);
    }

    #[test]
    fn free_then_check_and_double_free() {
        let mut r = rt();
        let (p, e) = r.alloc(24);
        r.free(p, e).unwrap();
        assert_eq!(dj_check(&r.mem, e, &mut r.c), Err(0));
        assert_eq!(r.free(p, e).unwrap_err(), TrapCode::DoubleFree);
    }

    #[test]
    fn interior_free_is_invalid() {
        let mut r = rt();
        let (p, e) = r.alloc(24);
        assert_eq!(r.free(p + 8, e).unwrap_err(), TrapCode::InvalidFree);
    }

    #[test]
    fn table_counts_distinct_storage_slots() {
        let mut t = DisjointTable::new();
        let e = DjEntry { key: 3, lock_addr: LOCK_BASE + 8 };
        for i in 0..1000 {
            t.set(HEAP_BASE + 8 * i, e);
        }
        t.set(HEAP_BASE, e);
        assert_eq!(t.entry_bytes(), 16 * 1000);
        assert_eq!(t.get(HEAP_BASE + 8 * 999), Some(e));
        assert_eq!(t.get(HEAP_BASE + 8 * 1000), None);
        assert_eq!(t.table_bytes(), PAGE_BYTES + DIR_ENTRY_BYTES);
        t.set(HEAP_BASE + 8 * 1024, e);
        assert_eq!(t.table_bytes(), 2 * (PAGE_BYTES + DIR_ENTRY_BYTES));
    }
}
