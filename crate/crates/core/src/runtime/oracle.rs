//! Ground-truth liveness: every allocation gets an id, and each fat value
//! remembers which allocation it was derived from.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

/// Allocation id; 0 means "no allocation" (null or forged values).
pub type AllocId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AllocKind {
    Heap,
    Frame,
    Vla,
    Global,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AllocRecord {
    pub start: u64,
    pub size: u64,
    pub kind: AllocKind,
    pub live: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Liveness {
    Live(AllocId),
    Dead(AllocId),
    Unknown,
}

#[derive(Debug, Default)]
pub struct Oracle {
    allocs: Vec<AllocRecord>,
    /// Most recent allocation starting at each address.
    owners: BTreeMap<u64, AllocId>,
    /// Provenance of fat values stored in memory, by storage address.
    stored: HashMap<u64, AllocId>,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, start: u64, size: u64, kind: AllocKind) -> AllocId {
        let end = start + size.max(1);
        // owners never overlap, so only the one before `start` can reach into the range
        let mut stale: Vec<u64> = self.owners.range(start..end).map(|(&s, _)| s).collect();
        if let Some((&s, &id)) = self.owners.range(..start).next_back() {
            if self.end_of(id) > start {
                stale.push(s);
            }
        }
        for s in stale {
            self.owners.remove(&s);
        }
        self.allocs.push(AllocRecord { start, size, kind, live: true });
        let id = self.allocs.len() as AllocId;
        self.owners.insert(start, id);
        id
    }

    fn end_of(&self, id: AllocId) -> u64 {
        let r = &self.allocs[id as usize - 1];
        r.start + r.size.max(1)
    }

    /// Mark an allocation dead; returns false if it already was.
    pub fn kill(&mut self, id: AllocId) -> bool {
        match self.allocs.get_mut((id as usize).wrapping_sub(1)) {
            Some(r) if r.live => {
                r.live = false;
                true
            }
            _ => false,
        }
    }

    pub fn record(&self, id: AllocId) -> Option<&AllocRecord> {
        self.allocs.get((id as usize).wrapping_sub(1))
    }

    pub fn is_live(&self, id: AllocId) -> bool {
        self.record(id).is_some_and(|r| r.live)
    }

    /// Liveness of the byte at `raw` by its most recent owner.
    pub fn check(&self, raw: u64) -> Liveness {
        match self.owners.range(..=raw).next_back() {
            Some((_, &id)) if raw < self.end_of(id) => {
                if self.is_live(id) {
                    Liveness::Live(id)
                } else {
                    Liveness::Dead(id)
                }
            }
            _ => Liveness::Unknown,
        }
    }

    pub fn store_prov(&mut self, addr: u64, id: AllocId) {
        if id == 0 {
            self.stored.remove(&addr);
        } else {
            self.stored.insert(addr, id);
        }
    }

    pub fn load_prov(&self, addr: u64) -> AllocId {
        self.stored.get(&addr).copied().unwrap_or(0)
    }

    pub fn alloc_count(&self) -> usize {
        self.allocs.len()
    }
}
