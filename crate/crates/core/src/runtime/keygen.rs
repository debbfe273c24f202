//! Sequential key generation from a seeded random starting point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tir::{MetaLayout, GLOBAL_KEY};

#[derive(Debug, Clone)]
pub struct KeyGen {
    next: u64,
    max: u64,
}

impl KeyGen {
    pub fn new(seed: u64, meta: MetaLayout) -> Self {
        let first = ChaCha8Rng::seed_from_u64(seed).random::<u64>() & meta.max_key();
        Self::starting_at(first, meta)
    }

    /// A generator whose first key is `first` (bumped past the reserved keys).
    pub fn starting_at(first: u64, meta: MetaLayout) -> Self {
        KeyGen { next: first.max(GLOBAL_KEY + 1), max: meta.max_key() }
    }

    pub fn next_key(&mut self) -> u64 {
        let k = self.next;
        self.next = if k == self.max { GLOBAL_KEY + 1 } else { k + 1 };
        k
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn consecutive_keys() {
        let mut kg = KeyGen::new(7, MetaLayout::default());
        let k0 = kg.next_key();
        assert!(k0 > 1);
        assert_eq!(kg.next_key(), k0 + 1);
    }

    #[test]
    fn wraps_past_reserved_keys() {
        let mut kg = KeyGen::starting_at(255, MetaLayout::new(8).unwrap());
        assert_eq!(kg.next_key(), 255);
        assert_eq!(kg.next_key(), 2);
    }

    #[test]
    fn same_seed_same_sequence() {
        let m = MetaLayout::default();
        let a: Vec<_> = {
            let mut k = KeyGen::new(99, m);
            (0..5).map(|_| k.next_key()).collect()
        };
        let mut k = KeyGen::new(99, m);
        assert_eq!(a, (0..5).map(|_| k.next_key()).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn never_reserved(bits in 2u32..=12, seed in any::<u64>()) {
            let m = MetaLayout::new(bits).unwrap();
            let mut kg = KeyGen::new(seed, m);
            for _ in 0..3 * (1u64 << bits) {
                let k = kg.next_key();
                prop_assert!(k >= 2 && k <= m.max_key());
            }
        }
    }
}
