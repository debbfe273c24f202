//! Key-lock checking with metadata in the pointer and the lock in a header
//! right before the object.

use super::{Heap, HeapBlock, HeapStats, KeyGen, MetaCounters, SimMemory, TrapCode};
use crate::tir::layout::HEADER_BYTES;
use crate::tir::{MetaLayout, MetaWord, INVALID_KEY};

pub fn lock_addr(raw: u64, meta: MetaWord, layout: MetaLayout) -> u64 {
    raw.wrapping_sub(layout.offset(meta)).wrapping_sub(8)
}

/// Result of a failed check: the key carried and the lock found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mismatch {
    pub key: u64,
    pub lock: u64,
}

pub fn key_check(mem: &SimMemory, raw: u64, meta: MetaWord, layout: MetaLayout, c: &mut MetaCounters) -> Result<(), Mismatch> {
    c.key_checks += 1;
    c.meta_loads += 1;
    c.meta_loads_check += 1;
    let lock = mem.read64(lock_addr(raw, meta, layout));
    let key = layout.key(meta);
    if lock == key {
        Ok(())
    } else {
        Err(Mismatch { key, lock })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mm_alloc(
    mem: &mut SimMemory,
    heap: &mut Heap,
    kg: &mut KeyGen,
    layout: MetaLayout,
    size: u64,
    c: &mut MetaCounters,
    hs: &mut HeapStats,
) -> Result<(u64, MetaWord), TrapCode> {
    if size > layout.max_offset() {
        return Err(TrapCode::ObjectTooLarge);
    }
    let b = heap.alloc(size, HEADER_BYTES).ok_or(TrapCode::OutOfMemory)?;
    let key = kg.next_key();
    mem.fill_zero(b.start, b.len);
    mem.write64(b.payload - 8, key);
    c.meta_stores += 1;
    hs.alloc_count += 1;
    hs.payload_bytes += size;
    hs.metadata_bytes += HEADER_BYTES;
    hs.note_live(heap.live_bytes());
    Ok((b.payload, layout.pack(key, 0).expect("fresh key fits")))
}

pub fn mm_free(
    mem: &mut SimMemory,
    heap: &mut Heap,
    raw: u64,
    meta: MetaWord,
    layout: MetaLayout,
    c: &mut MetaCounters,
    hs: &mut HeapStats,
) -> Result<HeapBlock, TrapCode> {
    let (key, offset) = layout.unpack(meta);
    if offset != 0 {
        return Err(TrapCode::InvalidFree);
    }
    let la = lock_addr(raw, meta, layout);
    c.meta_loads += 1;
    if mem.read64(la) != key {
        return Err(TrapCode::DoubleFree);
    }
    if heap.block_at(raw).is_none() {
        return Err(TrapCode::InvalidFree);
    }
    mem.write64(la, INVALID_KEY);
    c.meta_stores += 1;
    hs.free_count += 1;
    Ok(heap.free(raw).expect("checked live"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::memory::HEAP_BASE;

    struct Rt {
        mem: SimMemory,
        heap: Heap,
        kg: KeyGen,
        m: MetaLayout,
        c: MetaCounters,
        hs: HeapStats,
    }

    fn rt(first_key: u64, key_bits: u32) -> Rt {
        let m = MetaLayout::new(key_bits).unwrap();
        Rt {
            mem: SimMemory::new(),
            heap: Heap::new(HEAP_BASE, 1 << 26),
            kg: KeyGen::starting_at(first_key, m),
            m,
            c: MetaCounters::default(),
            hs: HeapStats::default(),
        }
    }

    impl Rt {
        fn alloc(&mut self, n: u64) -> Result<(u64, MetaWord), TrapCode> {
            mm_alloc(&mut self.mem, &mut self.heap, &mut self.kg, self.m, n, &mut self.c, &mut self.hs)
        }
        fn free(&mut self, raw: u64, meta: MetaWord) -> Result<HeapBlock, TrapCode> {
            mm_free(&mut self.mem, &mut self.heap, raw, meta, self.m, &mut self.c, &mut self.hs)
        }
        fn check(&mut self, raw: u64, meta: MetaWord) -> Result<(), Mismatch> {
            key_check(&self.mem, raw, meta, self.m, &mut self.c)
        }
    }

    #[test]
    fn alloc_writes_key_into_lock() {
        let mut r = rt(42, 32);
        let (p, meta) = r.alloc(24).unwrap();
        assert_eq!(meta, MetaWord(0x0000_002A_0000_0000));
        assert_eq!(r.mem.read64(lock_addr(p, meta, r.m)), 42);
        assert_eq!(r.hs.metadata_bytes, 16);
    }

    #[test]
    fn lock_address_is_invariant_under_offset_shifts() {
        let m = MetaLayout::default();
        let p = 0x4000_0010;
        let base = m.pack(9, 0).unwrap();
        assert_eq!(lock_addr(p, base, m), p - 8);
        let shifted = m.add_offset(base, 0x14).unwrap();
        assert_eq!(lock_addr(p + 0x14, shifted, m), p - 8);
    }

    #[test]
    fn check_fails_after_free_and_after_reuse() {
        let mut r = rt(100, 32);
        let (p, meta) = r.alloc(24).unwrap();
        r.check(p, meta).unwrap();
        r.free(p, meta).unwrap();
        assert_eq!(r.mem.read64(p - 8), 0);
        assert_eq!(r.check(p, meta), Err(Mismatch { key: 100, lock: 0 }));
        let (q, _) = r.alloc(24).unwrap();
        assert_eq!(q, p);
        assert_eq!(r.check(p, meta), Err(Mismatch { key: 100, lock: 101 }));
        assert_eq!(r.c.meta_loads_check, 3);
    }

    #[test]
    fn free_path_order() {
        let mut r = rt(5, 32);
        let (p, meta) = r.alloc(32).unwrap();
        let interior = r.m.add_offset(meta, 8).unwrap();
        assert_eq!(r.free(p + 8, interior), Err(TrapCode::InvalidFree));
        r.free(p, meta).unwrap();
        assert_eq!(r.free(p, meta), Err(TrapCode::DoubleFree));
    }

    #[test]
    fn size_guard_at_forty_bit_keys() {
        let mut r = rt(5, 40);
        assert_eq!(r.alloc(1 << 24).unwrap_err(), TrapCode::ObjectTooLarge);
        assert!(r.alloc((1 << 24) - 1).is_ok());
    }

    #[test]
    fn zero_sized_allocation_frees_cleanly() {
        let mut r = rt(5, 32);
        let (p, meta) = r.alloc(0).unwrap();
        r.check(p, meta).unwrap();
        r.free(p, meta).unwrap();
    }
}
