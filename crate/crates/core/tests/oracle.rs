use proptest::prelude::*;

use tempcc::driver::{compile, Options};
use tempcc::runtime::TrapCode;
use tempcc::vm::{oracle_run, Backend, GuestInput};

// p's slot is recycled for r after n other allocations. With two usable keys
// the key sequence alternates, so r reuses p's key exactly when n is odd.
const STALE_AFTER_CHURN: &str = "int main(int n) {
    mm_ptr<int> p = mm_alloc<int>(1);
    mm_free(p);
    int i = 0;
    while (i < n) {
        mm_ptr<int> q = mm_alloc<int>(1);
        mm_free(q);
        i = i + 1;
    }
    mm_ptr<int> r = mm_alloc<int>(1);
    *r = 5;
    return *p;
}
";

fn stale_read(bits: u32, seed: u64, n: i64) -> (Option<TrapCode>, usize, usize) {
    let opts = Options::new(Backend::InPlace).key_bits(bits).seed(seed);
    let prog = compile(STALE_AFTER_CHURN, &opts).unwrap();
    let (out, rep) = oracle_run(&prog, &opts.vm_config(), &GuestInput::args(&[n]));
    (out.trap.map(|t| t.code), rep.false_negatives(), rep.false_positives())
}

#[test]
fn two_key_space_misses_on_odd_churn() {
    for n in 0..16 {
        let (trap, fn_, fp) = stale_read(2, 0x5eed, n);
        assert_eq!(fp, 0, "n {n}");
        if n % 2 == 0 {
            assert_eq!((trap, fn_), (Some(TrapCode::UseAfterFree), 0), "n {n}");
        } else {
            assert_eq!((trap, fn_), (None, 1), "n {n}");
        }
    }
}

#[test]
fn wide_keys_never_miss() {
    for n in 0..16 {
        assert_eq!(stale_read(32, 0x5eed, n), (Some(TrapCode::UseAfterFree), 0, 0), "n {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn miss_parity_holds_for_every_seed(seed in any::<u64>(), n in 0i64..12) {
        let (trap, fn_, fp) = stale_read(2, seed, n);
        prop_assert_eq!(fp, 0);
        prop_assert_eq!(trap.is_none(), n % 2 == 1);
        prop_assert_eq!(fn_, (n % 2) as usize);
    }

    // a window of 2^bits - 2 usable keys wraps back to p's key after that many issues
    #[test]
    fn miss_period_matches_key_space(bits in 2u32..=4, seed in any::<u64>()) {
        let period = (1i64 << bits) - 2;
        for n in 0..2 * period {
            let (trap, fn_, _) = stale_read(bits, seed, n);
            let wraps = (n + 1) % period == 0;
            prop_assert_eq!(trap.is_none(), wraps, "bits {} n {}", bits, n);
            prop_assert_eq!(fn_ == 1, wraps);
        }
    }
}
