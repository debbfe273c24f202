//! Snapshots that let a thin copy of a fat-pointer array be turned back into
//! fat pointers after metadata-unaware code has permuted it.

use std::collections::HashMap;

use super::{TrapCode, Value};

#[derive(Debug, Default)]
pub struct MarshalSnapshots {
    by_thin: HashMap<u64, HashMap<u64, Value>>,
}

impl MarshalSnapshots {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the metadata of `elems` for the thin array at `thin`.
    pub fn record(&mut self, thin: u64, elems: &[Value]) {
        let snap = elems.iter().map(|v| (v.raw, *v)).collect();
        self.by_thin.insert(thin, snap);
    }

    pub fn is_thin_array(&self, thin: u64) -> bool {
        self.by_thin.contains_key(&thin)
    }

    /// Pair each raw address with the metadata it had when marshalled.
    pub fn revive(&self, thin: u64, raws: &[u64]) -> Result<Vec<Value>, TrapCode> {
        let snap = self.by_thin.get(&thin).ok_or(TrapCode::MarshalError)?;
        raws.iter().map(|r| snap.get(r).copied().ok_or(TrapCode::MarshalError)).collect()
    }

    pub fn release(&mut self, thin: u64) {
        self.by_thin.remove(&thin);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fat(raw: u64, key: u64) -> Value {
        Value { raw, meta: key << 32, lock: 0, prov: key as u32 }
    }

    #[test]
    fn identity_round_trip() {
        let elems: Vec<_> = (0..4).map(|i| fat(0x4000_0000 + 32 * i, 10 + i)).collect();
        let mut s = MarshalSnapshots::new();
        s.record(0x5000, &elems);
        let raws: Vec<_> = elems.iter().map(|v| v.raw).collect();
        assert_eq!(s.revive(0x5000, &raws).unwrap(), elems);
    }

    #[test]
    fn metadata_follows_permuted_raws() {
        let elems: Vec<_> = (0..4).map(|i| fat(0x4000_0000 + 32 * i, 10 + i)).collect();
        let mut s = MarshalSnapshots::new();
        s.record(0x5000, &elems);
        let raws: Vec<_> = elems.iter().rev().map(|v| v.raw).collect();
        let back = s.revive(0x5000, &raws).unwrap();
        assert_eq!(back, elems.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn forged_raw_is_rejected() {
        let mut s = MarshalSnapshots::new();
        s.record(0x5000, &[fat(0x4000_0000, 3)]);
        assert_eq!(s.revive(0x5000, &[0x4000_0008]), Err(TrapCode::MarshalError));
        assert_eq!(s.revive(0x6000, &[]), Err(TrapCode::MarshalError));
        assert_eq!(s.revive(0x5000, &[]), Ok(vec![]));
    }
}
