//! First-fit heap allocator with coalescing over a fixed arena.

use std::collections::BTreeMap;

use crate::tir::layout::{align_up, PAYLOAD_ALIGN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeapBlock {
    /// Start of the block, including any header.
    pub start: u64,
    pub len: u64,
    pub payload: u64,
    pub size: u64,
}

#[derive(Debug, Clone)]
pub struct Heap {
    base: u64,
    limit: u64,
    free: BTreeMap<u64, u64>,
    live: BTreeMap<u64, HeapBlock>,
    live_bytes: u64,
}

impl Heap {
    pub fn new(base: u64, size: u64) -> Self {
        assert_eq!(base % PAYLOAD_ALIGN, 0);
        let mut free = BTreeMap::new();
        free.insert(base, size);
        Heap { base, limit: base + size, free, live: BTreeMap::new(), live_bytes: 0 }
    }

    pub fn contains(&self, addr: u64) -> bool {
        (self.base..self.limit).contains(&addr)
    }

    /// Allocate `size` payload bytes behind `header` bytes. The payload is
    /// 16-aligned. Returns `None` when no free block is large enough.
    pub fn alloc(&mut self, size: u64, header: u64) -> Option<HeapBlock> {
        debug_assert_eq!(header % PAYLOAD_ALIGN, 0);
        let len = align_up(header + size.max(1), PAYLOAD_ALIGN);
        let (&start, &flen) = self.free.iter().find(|(_, &l)| l >= len)?;
        self.free.remove(&start);
        if flen > len {
            self.free.insert(start + len, flen - len);
        }
        let b = HeapBlock { start, len, payload: start + header, size };
        self.live.insert(b.payload, b);
        self.live_bytes += len;
        Some(b)
    }

    /// The live block whose payload begins exactly at `payload`.
    pub fn block_at(&self, payload: u64) -> Option<HeapBlock> {
        self.live.get(&payload).copied()
    }

    pub fn free(&mut self, payload: u64) -> Option<HeapBlock> {
        let b = self.live.remove(&payload)?;
        self.live_bytes -= b.len;
        let (mut start, mut len) = (b.start, b.len);
        if let Some((&ps, &pl)) = self.free.range(..start).next_back() {
            if ps + pl == start {
                self.free.remove(&ps);
                start = ps;
                len += pl;
            }
        }
        if let Some(&nl) = self.free.get(&(start + len)) {
            self.free.remove(&(start + len));
            len += nl;
        }
        self.free.insert(start, len);
        Some(b)
    }

    pub fn live_bytes(&self) -> u64 {
        self.live_bytes
    }

    pub fn live_blocks(&self) -> impl Iterator<Item = &HeapBlock> {
        self.live.values()
    }

    pub fn free_bytes(&self) -> u64 {
        self.free.values().sum()
    }

    pub fn free_runs(&self) -> usize {
        self.free.len()
    }
}
