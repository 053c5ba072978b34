//! Finite subalgebras of the clopen algebra and the quasi-projection onto a
//! level algebra.
//!
//! [`build_tau`] realizes the map sending each member of a finite algebra to
//! the union of the level-`n` atoms it nearly fills. Under the hypothesis
//! that every member nearly omits or nearly fills every atom (with bound
//! `eps·lambda(V)/n`, `0 < eps < 1/4`), the map is a Boolean homomorphism
//! and moves no member by more than `eps/n` in measure. Both facts are
//! replayed exactly on the constructed map, never assumed.

use crate::clopen::ClopenSet;
use crate::config::{Config, ScaleReport};
use crate::rational::Rat;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, thiserror::Error)]
pub enum TauError {
    #[error("generator list is empty")]
    EmptyGenerators,
    #[error("algebra closure needs {classes} constituent atoms, exceeding the cap of {cap} elements")]
    ClosureCapExceeded { classes: usize, cap: usize },
    #[error("element list is not a Boolean algebra: {reason}")]
    NotClosed { reason: String },
    #[error("epsilon must lie in (0, 1/4), got {0}")]
    EpsilonOutOfRange(Rat),
    #[error("projection level must be positive")]
    ZeroLevel,
    #[error("{0}")]
    Scale(ScaleReport),
    #[error("hypothesis fails for element {element} at atom {atom}: lambda inside = {lambda_inside}, lambda missing = {lambda_missing}, bound = {bound}")]
    HypothesisFailed {
        element: usize,
        atom: u64,
        lambda_inside: Rat,
        lambda_missing: Rat,
        bound: Rat,
    },
    #[error("replayed law {law} failed; the construction is defective")]
    LawReplayFailed { law: &'static str },
}

/// A generated finite algebra: all Boolean combinations of the generators,
/// together with its constituent atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratedAlgebra {
    pub elements: Vec<ClopenSet>,
    pub atoms: Vec<ClopenSet>,
}

/// Close a generator list under complement, meet, and join.
///
/// The constituent atoms are the distinct membership-signature classes of
/// the deep atoms; elements are enumerated as unions of constituent atoms
/// in subset-index order, so the output order is deterministic.
pub fn generate_algebra(
    generators: &[ClopenSet],
    cfg: &Config,
) -> Result<GeneratedAlgebra, TauError> {
    if generators.is_empty() {
        return Err(TauError::EmptyGenerators);
    }
    let level = generators.iter().map(|g| g.canonical_level()).max().unwrap();
    let refined: Vec<ClopenSet> = generators.iter().map(|g| g.refine_to(level)).collect();

    // Group deep atoms by membership signature, in first-seen (= lowest
    // atom index) order.
    let mut class_of_signature: HashMap<u64, usize> = HashMap::new();
    let mut class_atoms: Vec<Vec<u64>> = Vec::new();
    assert!(refined.len() <= 64, "signature packing supports up to 64 generators");
    for i in 0..(1u64 << (level + 1)) {
        let mut sig = 0u64;
        for (g, set) in refined.iter().enumerate() {
            if set.get(i) {
                sig |= 1 << g;
            }
        }
        let next_id = class_atoms.len();
        let id = *class_of_signature.entry(sig).or_insert(next_id);
        if id == next_id {
            class_atoms.push(Vec::new());
        }
        class_atoms[id].push(i);
    }

    let classes = class_atoms.len();
    if classes >= usize::BITS as usize || (1usize << classes) > cfg.closure_cap {
        return Err(TauError::ClosureCapExceeded { classes, cap: cfg.closure_cap });
    }

    let atom_sets: Vec<ClopenSet> = class_atoms
        .iter()
        .map(|idxs| ClopenSet::from_atom_indices(level, idxs).canonicalize())
        .collect();

    let mut elements = Vec::with_capacity(1 << classes);
    for subset in 0u64..(1u64 << classes) {
        let mut acc = ClopenSet::empty();
        for (c, set) in atom_sets.iter().enumerate() {
            if (subset >> c) & 1 == 1 {
                acc = acc.join(set);
            }
        }
        elements.push(acc);
    }

    Ok(GeneratedAlgebra { elements, atoms: atom_sets })
}

/// Check that a deduplicated element list is closed under the Boolean
/// operations: its signature partition must have exactly `log2(len)`
/// classes, which by counting forces every union of classes to be present.
/// Returns the constituent atoms of the algebra.
fn verify_closed(elements: &[ClopenSet]) -> Result<Vec<ClopenSet>, TauError> {
    let mut seen: HashMap<Vec<u8>, usize> = HashMap::new();
    for (i, e) in elements.iter().enumerate() {
        if let Some(j) = seen.insert(e.canonical_bytes(), i) {
            return Err(TauError::NotClosed { reason: format!("elements {j} and {i} are equal") });
        }
    }
    if elements.len() < 2 {
        return Err(TauError::NotClosed {
            reason: "an algebra has at least two elements".to_owned(),
        });
    }
    if !elements.len().is_power_of_two() {
        return Err(TauError::NotClosed {
            reason: format!("{} elements is not a power of two", elements.len()),
        });
    }
    let want_classes = elements.len().trailing_zeros() as usize;

    let mut classes = vec![ClopenSet::full()];
    for e in elements {
        let mut next = Vec::with_capacity(classes.len() * 2);
        for cl in &classes {
            let inside = cl.meet(e);
            let outside = cl.difference(e);
            if !inside.is_empty() {
                next.push(inside);
            }
            if !outside.is_empty() {
                next.push(outside);
            }
        }
        classes = next;
        if classes.len() > want_classes.max(1) {
            return Err(TauError::NotClosed {
                reason: format!(
                    "the list splits into more than {want_classes} constituent atoms"
                ),
            });
        }
    }
    let got = classes.len();
    if (want_classes == 0 && got != 1) || (want_classes > 0 && got != want_classes) {
        return Err(TauError::NotClosed {
            reason: format!("expected {want_classes} constituent atoms, found {got}"),
        });
    }
    Ok(classes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TauApprox {
    pub element: usize,
    pub distance: Rat,
    pub bound: Rat,
}

/// Exact replay results for the constructed map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TauTranscript {
    pub units_ok: bool,
    pub complement_pairs: u64,
    pub join_pairs: u64,
    pub hypothesis_pairs: u64,
    /// "all-pairs": every complement and join literally replayed.
    /// "atom-partition": the constituent-atom images are verified to
    /// partition the space and every element image to equal the union of
    /// its atoms' images, which forces all pairwise laws.
    pub law_verification: String,
    pub approximations: Vec<TauApprox>,
    pub max_distance: Rat,
}

/// The quasi-projection of a finite algebra into the level-`n` algebra.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TauMap {
    pub elements: Vec<ClopenSet>,
    pub n: u32,
    pub epsilon: Rat,
    pub images: Vec<ClopenSet>,
    pub transcript: TauTranscript,
}

impl TauMap {
    /// Image lookup by element value rather than index.
    pub fn image_of(&self, set: &ClopenSet) -> Option<&ClopenSet> {
        let key = set.canonical_bytes();
        self.elements
            .iter()
            .position(|e| e.canonical_bytes() == key)
            .map(|i| &self.images[i])
    }
}

/// Build and verify the quasi-projection. The element list must be a
/// Boolean algebra; the near-omit/near-fill hypothesis is checked for every
/// `(element, atom)` pair and failure names the offending pair.
pub fn build_tau(
    elements: &[ClopenSet],
    n: u32,
    epsilon: &Rat,
    cfg: &Config,
) -> Result<TauMap, TauError> {
    if n == 0 {
        return Err(TauError::ZeroLevel);
    }
    if !epsilon.is_positive() || *epsilon >= Rat::ratio(1, 4) {
        return Err(TauError::EpsilonOutOfRange(epsilon.clone()));
    }
    if n > cfg.max_level {
        return Err(TauError::Scale(ScaleReport::for_level(n, cfg)));
    }
    let constituents = verify_closed(elements)?;

    let lambda_v = Rat::pow2(-(n as i64) - 1);
    let bound = epsilon * &lambda_v / Rat::from_int(n as i64);
    let atom_count = 1u64 << (n + 1);

    let mut images = Vec::with_capacity(elements.len());
    let mut hypothesis_pairs = 0u64;
    for (i, e) in elements.iter().enumerate() {
        let canon = e.canonicalize();
        if canon.level() <= n {
            // Clean splits: every atom is inside or disjoint, and the image
            // is the element itself.
            hypothesis_pairs += atom_count;
            images.push(canon);
            continue;
        }
        let mut fills = Vec::new();
        for u in 0..atom_count {
            hypothesis_pairs += 1;
            let inside = canon.lambda_within_atom(&crate::clopen::AtomId::new(n, u));
            let missing = &lambda_v - &inside;
            let omits = inside <= bound;
            let fills_atom = missing <= bound;
            if fills_atom {
                fills.push(u);
            } else if !omits {
                return Err(TauError::HypothesisFailed {
                    element: i,
                    atom: u,
                    lambda_inside: inside,
                    lambda_missing: missing,
                    bound: bound.clone(),
                });
            }
        }
        images.push(ClopenSet::from_atom_indices(n, &fills).canonicalize());
    }

    // Replay the laws exactly on the constructed images.
    let index_of: HashMap<Vec<u8>, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.canonical_bytes(), i))
        .collect();
    let lookup = |set: &ClopenSet| -> Result<usize, TauError> {
        index_of.get(&set.canonical_bytes()).copied().ok_or(TauError::NotClosed {
            reason: "a Boolean combination left the element list".to_owned(),
        })
    };

    let zero = lookup(&ClopenSet::empty())?;
    let unit = lookup(&ClopenSet::full())?;
    let units_ok = images[zero].is_empty() && images[unit].is_full();
    if !units_ok {
        return Err(TauError::LawReplayFailed { law: "units" });
    }

    let mut complement_pairs = 0u64;
    let mut join_pairs = 0u64;
    let all_pairs = elements.len() <= 512;
    let law_verification;
    if all_pairs {
        law_verification = "all-pairs".to_owned();
        for (i, e) in elements.iter().enumerate() {
            let j = lookup(&e.complement())?;
            complement_pairs += 1;
            if images[j] != images[i].complement() {
                return Err(TauError::LawReplayFailed { law: "complement" });
            }
        }
        for (i, a) in elements.iter().enumerate() {
            for (j, b) in elements.iter().enumerate().skip(i) {
                let k = lookup(&a.join(b))?;
                join_pairs += 1;
                if images[k] != images[i].join(&images[j]) {
                    return Err(TauError::LawReplayFailed { law: "join" });
                }
            }
        }
    } else {
        // Partition route: once the constituent-atom images tile the space
        // and every element image is the union of its atoms' images, both
        // pairwise laws follow for every pair at once.
        law_verification = "atom-partition".to_owned();
        let atom_images: Vec<(ClopenSet, ClopenSet)> = constituents
            .iter()
            .map(|c| lookup(c).map(|i| (c.clone(), images[i].clone())))
            .collect::<Result<_, _>>()?;
        let mut cover = ClopenSet::empty();
        for (i, (_, img)) in atom_images.iter().enumerate() {
            for (_, other) in &atom_images[i + 1..] {
                complement_pairs += 1;
                if !img.is_disjoint_from(other) {
                    return Err(TauError::LawReplayFailed { law: "atom-disjointness" });
                }
            }
            cover = cover.join(img);
        }
        if !cover.is_full() {
            return Err(TauError::LawReplayFailed { law: "atom-cover" });
        }
        for (i, e) in elements.iter().enumerate() {
            let mut union = ClopenSet::empty();
            for (atom, img) in &atom_images {
                if atom.is_subset_of(e) {
                    union = union.join(img);
                }
            }
            join_pairs += 1;
            if union != images[i] {
                return Err(TauError::LawReplayFailed { law: "atom-union" });
            }
        }
    }

    let dist_bound = epsilon / Rat::from_int(n as i64);
    let mut approximations = Vec::with_capacity(elements.len());
    let mut max_distance = Rat::zero();
    for (i, e) in elements.iter().enumerate() {
        let distance = e.symdiff(&images[i]).lambda();
        if distance > dist_bound {
            return Err(TauError::LawReplayFailed { law: "approximation" });
        }
        if distance > max_distance {
            max_distance = distance.clone();
        }
        approximations.push(TauApprox { element: i, distance, bound: dist_bound.clone() });
    }

    Ok(TauMap {
        elements: elements.to_vec(),
        n,
        epsilon: epsilon.clone(),
        images,
        transcript: TauTranscript {
            units_ok,
            complement_pairs,
            join_pairs,
            hypothesis_pairs,
            law_verification,
            approximations,
            max_distance,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(m: u32, i: u8) -> ClopenSet {
        ClopenSet::coordinate(m, i)
    }

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn single_generator_algebra() {
        let alg = generate_algebra(&[v(0, 0)], &cfg()).unwrap();
        assert_eq!(alg.elements.len(), 4);
        assert_eq!(alg.atoms.len(), 2);
        assert!(alg.elements.contains(&ClopenSet::empty()));
        assert!(alg.elements.contains(&ClopenSet::full()));
        assert!(alg.elements.contains(&v(0, 0)));
        assert!(alg.elements.contains(&v(0, 1)));
    }

    #[test]
    fn two_generators_and_degenerate_generator() {
        let alg = generate_algebra(&[v(0, 0), v(1, 0)], &cfg()).unwrap();
        assert_eq!(alg.elements.len(), 16);
        assert_eq!(alg.atoms.len(), 4);

        let alg = generate_algebra(&[ClopenSet::empty()], &cfg()).unwrap();
        assert_eq!(alg.elements.len(), 2);
        assert_eq!(alg.elements, vec![ClopenSet::empty(), ClopenSet::full()]);
    }

    #[test]
    fn closure_cap_respected() {
        let tight = Config { closure_cap: 8, ..Config::default() };
        let err = generate_algebra(&[v(0, 0), v(1, 0)], &tight);
        assert!(matches!(err, Err(TauError::ClosureCapExceeded { classes: 4, cap: 8 })));
    }

    #[test]
    fn identity_embedding_on_level_sets() {
        // The algebra of V_0^0 at level 3 with eps = 1/8: every element is a
        // union of level-3 atoms, so the map is the identity embedding and
        // every distance is zero against the bound 1/24.
        let alg = generate_algebra(&[v(0, 0)], &cfg()).unwrap();
        let tau = build_tau(&alg.elements, 3, &Rat::ratio(1, 8), &cfg()).unwrap();
        for (e, img) in tau.elements.iter().zip(&tau.images) {
            assert_eq!(e, img);
        }
        assert_eq!(tau.transcript.max_distance, Rat::zero());
        assert!(tau.transcript.units_ok);
        assert_eq!(
            tau.transcript.approximations[0].bound,
            Rat::ratio(1, 24)
        );
        assert_eq!(tau.image_of(&ClopenSet::empty()).unwrap(), &ClopenSet::empty());
    }

    #[test]
    fn rounding_map_on_perturbed_set() {
        // One generator: a half perturbed by a deep sliver inside one
        // level-2 atom. At n = 2 with eps = 1/5 the sliver weighs
        // 1/64 <= (1/5)(1/8)/2 = 1/80? No: 1/64 > 1/80, pick level deeper.
        // Sliver at level 5: 1/64 -> 1/64? lambda(atom5) = 1/64. Use a
        // level-6 sliver of mass 1/128 <= 1/80.
        let sliver = crate::clopen::AtomId::new(6, 64).to_set(); // inside atom 0 of level 2
        let a = v(0, 0).symdiff(&sliver);
        let alg = vec![ClopenSet::empty(), a.clone(), a.complement(), ClopenSet::full()];
        let eps = Rat::ratio(1, 5);
        let tau = build_tau(&alg, 2, &eps, &cfg()).unwrap();
        let img = tau.image_of(&a).unwrap();
        // The sliver is rounded away: the image is the plain half.
        assert_eq!(img, &v(0, 0));
        let dist = a.symdiff(img).lambda();
        assert_eq!(dist, Rat::ratio(1, 128));
        assert!(dist <= eps / Rat::from_int(2));
    }

    #[test]
    fn hypothesis_failure_is_named() {
        // A quarter on coordinates 1,2 covers exactly half of two level-1
        // atoms; with a tiny eps that is neither near-omit nor near-fill.
        let bad = v(1, 0).meet(&v(2, 0));
        let alg = vec![ClopenSet::empty(), bad.clone(), bad.complement(), ClopenSet::full()];
        match build_tau(&alg, 1, &Rat::ratio(1, 100), &cfg()) {
            Err(TauError::HypothesisFailed { element, .. }) => assert_eq!(element, 1),
            other => panic!("expected hypothesis failure, got {other:?}"),
        }
    }

    #[test]
    fn epsilon_range_enforced() {
        let alg = generate_algebra(&[v(0, 0)], &cfg()).unwrap();
        assert!(matches!(
            build_tau(&alg.elements, 2, &Rat::ratio(1, 4), &cfg()),
            Err(TauError::EpsilonOutOfRange(_))
        ));
        assert!(matches!(
            build_tau(&alg.elements, 2, &Rat::zero(), &cfg()),
            Err(TauError::EpsilonOutOfRange(_))
        ));
    }

    #[test]
    fn non_algebra_rejected() {
        let not_closed = vec![ClopenSet::empty(), v(0, 0)];
        assert!(matches!(
            build_tau(&not_closed, 2, &Rat::ratio(1, 8), &cfg()),
            Err(TauError::NotClosed { .. })
        ));
    }
}
