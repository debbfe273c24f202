//! Sparse, byte-addressable 64-bit guest memory.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

pub const PAGE_SIZE: u64 = 4096;

pub const GLOBAL_BASE: u64 = 0x1000_0000;
pub const HEAP_BASE: u64 = 0x4000_0000;
pub const LOCK_BASE: u64 = 0x6000_0000;
pub const STACK_TOP: u64 = 0x7fff_0000_0000;

pub const DEFAULT_HEAP_SIZE: u64 = 256 << 20;
pub const DEFAULT_STACK_SIZE: u64 = 8 << 20;
pub const DEFAULT_LOCK_ARENA_SIZE: u64 = 16 << 20;

/// Page numbers are already well distributed; a multiplicative mix is enough.
#[derive(Default)]
struct PageHasher(u64);

impl Hasher for PageHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = n.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
}

type Page = Box<[u8; PAGE_SIZE as usize]>;

/// Memory that reads as zero until written. Freed memory keeps its bytes.
#[derive(Default)]
pub struct SimMemory {
    pages: HashMap<u64, Page, BuildHasherDefault<PageHasher>>,
}

impl SimMemory {
    pub fn new() -> Self {
        Self::default()
    }

    fn page_mut(&mut self, addr: u64) -> &mut [u8; PAGE_SIZE as usize] {
        self.pages.entry(addr / PAGE_SIZE).or_insert_with(|| Box::new([0; PAGE_SIZE as usize]))
    }

    pub fn read8(&self, addr: u64) -> u8 {
        self.pages.get(&(addr / PAGE_SIZE)).map_or(0, |p| p[(addr % PAGE_SIZE) as usize])
    }

    pub fn write8(&mut self, addr: u64, v: u8) {
        self.page_mut(addr)[(addr % PAGE_SIZE) as usize] = v;
    }

    pub fn read64(&self, addr: u64) -> u64 {
        let off = (addr % PAGE_SIZE) as usize;
        if off + 8 <= PAGE_SIZE as usize {
            return self
                .pages
                .get(&(addr / PAGE_SIZE))
                .map_or(0, |p| u64::from_le_bytes(p[off..off + 8].try_into().unwrap()));
        }
        let mut b = [0u8; 8];
        for (i, x) in b.iter_mut().enumerate() {
            *x = self.read8(addr.wrapping_add(i as u64));
        }
        u64::from_le_bytes(b)
    }

    pub fn write64(&mut self, addr: u64, v: u64) {
        let off = (addr % PAGE_SIZE) as usize;
        if off + 8 <= PAGE_SIZE as usize {
            self.page_mut(addr)[off..off + 8].copy_from_slice(&v.to_le_bytes());
            return;
        }
        for (i, x) in v.to_le_bytes().into_iter().enumerate() {
            self.write8(addr.wrapping_add(i as u64), x);
        }
    }

    pub fn read_bytes(&self, addr: u64, len: u64) -> Vec<u8> {
        (0..len).map(|i| self.read8(addr + i)).collect()
    }

    pub fn write_bytes(&mut self, addr: u64, bytes: &[u8]) {
        for (i, &b) in bytes.iter().enumerate() {
            self.write8(addr + i as u64, b);
        }
    }

    pub fn fill_zero(&mut self, addr: u64, len: u64) {
        let mut a = addr;
        let end = addr + len;
        while a < end {
            let off = a % PAGE_SIZE;
            let n = (PAGE_SIZE - off).min(end - a);
            if let Some(p) = self.pages.get_mut(&(a / PAGE_SIZE)) {
                p[off as usize..(off + n) as usize].fill(0);
            }
            a += n;
        }
    }

    pub fn resident_pages(&self) -> usize {
        self.pages.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unwritten_reads_zero() {
        let m = SimMemory::new();
        assert_eq!(m.read64(HEAP_BASE + 123), 0);
        assert_eq!(m.resident_pages(), 0);
    }

    #[test]
    fn word_across_page_boundary() {
        let mut m = SimMemory::new();
        let a = HEAP_BASE + PAGE_SIZE - 3;
        m.write64(a, 0x1122_3344_5566_7788);
        assert_eq!(m.read64(a), 0x1122_3344_5566_7788);
        assert_eq!(m.read8(a), 0x88);
        assert_eq!(m.resident_pages(), 2);
    }

    #[test]
    fn zero_fill_clears_only_the_range() {
        let mut m = SimMemory::new();
        m.write_bytes(GLOBAL_BASE, &[1; 32]);
        m.fill_zero(GLOBAL_BASE + 8, 16);
        assert_eq!(m.read_bytes(GLOBAL_BASE, 32), [[1; 8], [0; 8], [0; 8], [1; 8]].concat());
    }

    proptest! {
        #[test]
        fn last_write_wins(writes in proptest::collection::vec((0u64..20_000, any::<u64>()), 1..50)) {
            let mut m = SimMemory::new();
            let mut shadow = std::collections::HashMap::new();
            for &(off, v) in &writes {
                m.write64(HEAP_BASE + off, v);
                for (i, b) in v.to_le_bytes().into_iter().enumerate() {
                    shadow.insert(off + i as u64, b);
                }
            }
            for (&off, &b) in &shadow {
                prop_assert_eq!(m.read8(HEAP_BASE + off), b);
            }
        }
    }
}
