//! Deterministic sampling utilities.
//!
//! All randomness in the crate flows through ChaCha8 streams keyed by a
//! caller-supplied 64-bit seed, so identical seeds reproduce identical
//! searches, fixtures, and reports on any platform.

use crate::clopen::ClopenSet;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// The crate-wide deterministic generator.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a labeled subtask of a run.
pub fn sub_rng(seed: u64, label: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(label);
    r
}

/// Stateless 64-bit mix for deriving per-subtask seeds from a run seed.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw from `[0, bound)` by rejection; `bound > 0`.
pub fn below(r: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let x = r.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// A uniformly random mask at exactly the given level.
pub fn clopen_at_level(r: &mut ChaCha8Rng, level: u32) -> ClopenSet {
    let bits = 1u64 << (level + 1);
    let mut indices = Vec::new();
    for i in 0..bits {
        if r.next_u64() & 1 == 1 {
            indices.push(i);
        }
    }
    ClopenSet::from_atom_indices(level, &indices)
}

/// A random clopen set at a level drawn from `[0, max_level]`.
pub fn clopen(r: &mut ChaCha8Rng, max_level: u32) -> ClopenSet {
    let level = below(r, max_level as u64 + 1) as u32;
    clopen_at_level(r, level)
}

/// A random non-empty clopen set.
pub fn clopen_nonempty(r: &mut ChaCha8Rng, max_level: u32) -> ClopenSet {
    loop {
        let s = clopen(r, max_level);
        if !s.is_empty() {
            return s;
        }
    }
}

/// A random subset of the member atoms of `base`, at `base`'s level.
pub fn subset_of(r: &mut ChaCha8Rng, base: &ClopenSet) -> ClopenSet {
    let indices: Vec<u64> = base.iter_atoms().filter(|_| r.next_u64() & 1 == 1).collect();
    ClopenSet::from_atom_indices(base.level(), &indices)
}

/// `k` distinct values from `[0, bound)` in ascending order (Floyd's walk).
pub fn distinct_below(r: &mut ChaCha8Rng, bound: u64, k: usize) -> Vec<u64> {
    debug_assert!(k as u64 <= bound);
    let mut chosen = std::collections::BTreeSet::new();
    for top in bound - k as u64..bound {
        let x = below(r, top + 1);
        if !chosen.insert(x) {
            chosen.insert(top);
        }
    }
    chosen.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_of_streams() {
        let a: Vec<u64> = (0..8).map(|_| below(&mut rng(7), 1000)).collect();
        let b: Vec<u64> = (0..8).map(|_| below(&mut rng(7), 1000)).collect();
        assert_eq!(a, b);
        let s1 = clopen(&mut rng(42), 6);
        let s2 = clopen(&mut rng(42), 6);
        assert_eq!(s1, s2);
    }

    #[test]
    fn distinct_below_is_distinct_and_sorted() {
        let mut r = rng(3);
        for _ in 0..50 {
            let v = distinct_below(&mut r, 40, 7);
            assert_eq!(v.len(), 7);
            assert!(v.windows(2).all(|w| w[0] < w[1]));
            assert!(v.iter().all(|&x| x < 40));
        }
    }

    #[test]
    fn subset_stays_within_base() {
        let mut r = rng(11);
        let base = clopen_nonempty(&mut r, 5);
        for _ in 0..20 {
            let s = subset_of(&mut r, &base);
            assert!(s.is_subset_of(&base));
        }
    }
}
