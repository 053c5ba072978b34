//! Shared fixtures and seeded generators for the integration suites.

use dyadic_core::clopen::{AtomId, ClopenSet};
use dyadic_core::construction::{Decomposition, QuadrupleContext};
use dyadic_core::measures::{PrefixEntry, SignedMeasure, WitnessPrefix};
use dyadic_core::rational::Rat;
use dyadic_core::talagrand::Instance;
use rand_chacha::ChaCha8Rng;

pub use dyadic_core::sample::{below, clopen, clopen_at_level, clopen_nonempty, rng, subset_of};

/// A context of unit point masses on disjoint single-atom blocks at the
/// given level, with a zero limit measure (living at `theta_level`) and its
/// trivial split.
pub fn point_mass_context(
    count: u32,
    level: u32,
    theta_level: u32,
    atom_of: impl Fn(u32) -> u64,
) -> QuadrupleContext {
    let entries = (0..count)
        .map(|i| PrefixEntry {
            index: i,
            nu: SignedMeasure::from_entries(level, [(atom_of(i), Rat::one())]),
            h: AtomId::new(level, atom_of(i)).to_set(),
        })
        .collect();
    QuadrupleContext {
        prefix: WitnessPrefix { entries },
        theta: SignedMeasure::zero(theta_level),
        decomposition: Some(Decomposition {
            theta1: SignedMeasure::zero(theta_level),
            theta2: SignedMeasure::zero(theta_level),
            // gamma lands on delta/2 with this non-dyadic modulus bound,
            // which keeps the solver's target-measure atom count even at
            // the minimal feasible level.
            modulus: vec![(Rat::ratio(1, 30), Rat::pow2(-17) * Rat::from_int(9))],
            ortho: vec![(Rat::ratio(1, 1000), ClopenSet::empty())],
        }),
    }
}

/// The extension fixture: two point masses on level-18 atoms placed in two
/// different quarters, away from the quarter being adjoined.
pub fn extension_context() -> QuadrupleContext {
    // Atom 1 sits in the quarter with coordinates (1, 0); atom 2 in (0, 1).
    // The zero limit measure lives deeper than any set the pipeline builds.
    point_mass_context(2, 18, 21, |i| (i + 1) as u64)
}

/// A family of random clopen sets.
pub fn clopen_family(r: &mut ChaCha8Rng, max_len: usize, max_level: u32) -> Vec<ClopenSet> {
    let len = 1 + below(r, max_len as u64) as usize;
    (0..len).map(|_| clopen(r, max_level)).collect()
}

/// A random relaxed solver instance on a level-`t` block, sized so that
/// exhaustive enumeration stays cheap.
pub fn small_relaxed_instance(r: &mut ChaCha8Rng) -> Instance {
    let t = 1 + below(r, 2) as u32;
    let n = t + 2 + below(r, 2) as u32;
    let g_index = below(r, 1 << (t + 1));
    let g = AtomId::new(t, g_index);
    let q = g.to_set();
    let refined = q.refine_to(n);
    let side = |r: &mut ChaCha8Rng| {
        // A sparse subset of the block: roughly a quarter of its atoms.
        let indices: Vec<u64> = refined
            .iter_atoms()
            .filter(|_| below(r, 4) == 0)
            .collect();
        ClopenSet::from_atom_indices(n, &indices)
    };
    let etas = [Rat::ratio(1, 4), Rat::ratio(1, 8), Rat::ratio(3, 16)];
    Instance {
        t,
        eta: etas[below(r, 3) as usize].clone(),
        n,
        p: side(r),
        r: side(r),
        z: side(r),
        q,
        g,
        relaxed: true,
    }
}

/// An instance shaped like the strict regime at toy scale: the block is
/// nearly filled, side sets are tiny, and the flip-overlap region keeps
/// most of the block.
pub fn strict_shaped_instance(r: &mut ChaCha8Rng) -> Instance {
    let t = 1u32;
    let n = 5 + below(r, 2) as u32;
    let g = AtomId::new(t, below(r, 4));
    let q = g.to_set();
    let refined = q.refine_to(n);
    let atoms: Vec<u64> = refined.iter_atoms().collect();
    // One deep atom of side mass, far less than 1/20 of the block.
    let z = AtomId::new(n + 2, (atoms[below(r, atoms.len() as u64) as usize]) & ((1 << (n + 1)) - 1))
        .to_set();
    Instance {
        t,
        eta: Rat::ratio(1, 8),
        n,
        p: ClopenSet::empty(),
        r: ClopenSet::empty(),
        z: z.meet(&q),
        q,
        g,
        relaxed: true,
    }
}
