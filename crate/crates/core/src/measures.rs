//! Finitely additive signed measures on finite level algebras.
//!
//! A [`SignedMeasure`] fixes a level and assigns one exact rational to each
//! atom; values of clopen sets are atom sums, so finite additivity holds by
//! construction, and the total variation is the sum of absolute atom
//! values. Storage is sparse (nonzero atoms only); the wire format is the
//! dense value list.

use crate::clopen::ClopenSet;
use crate::config::Config;
use crate::prop_t::{self, Certificate};
use crate::rational::Rat;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;

#[derive(Debug, Clone, thiserror::Error)]
pub enum MeasureError {
    #[error("set at canonical level {set_level} is not representable at measure level {measure_level}")]
    SetTooFine { set_level: u32, measure_level: u32 },
    #[error("measures live at different levels: {0} vs {1}")]
    LevelMismatch(u32, u32),
    #[error("witness index {n} needs level >= {n}, got {level}")]
    LevelBelowIndex { n: u32, level: u32 },
    #[error("{which} takes value {value} < 0 on atom {atom}; a nonnegative part is required")]
    NegativePart { which: &'static str, atom: u64, value: Rat },
    #[error("witness prefix invalid: {0:?}")]
    PrefixInvalid(Vec<String>),
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("{0}")]
    PropT(#[from] prop_t::PropTError),
}

/// A signed finitely additive measure on the level-`level` algebra.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedMeasure {
    level: u32,
    values: BTreeMap<u64, Rat>,
}

impl SignedMeasure {
    pub fn zero(level: u32) -> Self {
        SignedMeasure { level, values: BTreeMap::new() }
    }

    pub fn from_entries(level: u32, entries: impl IntoIterator<Item = (u64, Rat)>) -> Self {
        let bits = 1u64 << (level + 1);
        let mut values = BTreeMap::new();
        for (atom, v) in entries {
            assert!(atom < bits, "atom index {atom} out of range at level {level}");
            if !v.is_zero() {
                values.insert(atom, v);
            }
        }
        SignedMeasure { level, values }
    }

    pub fn from_dense(level: u32, dense: Vec<Rat>) -> Self {
        assert_eq!(dense.len() as u64, 1u64 << (level + 1), "wrong value count");
        SignedMeasure::from_entries(level, dense.into_iter().enumerate().map(|(i, v)| (i as u64, v)))
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn value_at(&self, atom: u64) -> Rat {
        self.values.get(&atom).cloned().unwrap_or_else(Rat::zero)
    }

    /// Nonzero entries, ascending by atom index.
    pub fn entries(&self) -> impl Iterator<Item = (u64, &Rat)> {
        self.values.iter().map(|(&a, v)| (a, v))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.values().all(|v| !v.is_negative())
    }

    fn check_representable(&self, a: &ClopenSet) -> Result<u32, MeasureError> {
        let c = a.canonical_level();
        if c > self.level {
            Err(MeasureError::SetTooFine { set_level: c, measure_level: self.level })
        } else {
            Ok(c)
        }
    }

    /// `nu(A)` for a set representable at this measure's level.
    pub fn eval(&self, a: &ClopenSet) -> Result<Rat, MeasureError> {
        self.check_representable(a)?;
        let canon = a.canonicalize();
        let wrap = canon.bit_len() as u64 - 1;
        let mut sum = Rat::zero();
        for (atom, v) in &self.values {
            if canon.get(atom & wrap) {
                sum += v;
            }
        }
        Ok(sum)
    }

    /// Variation `|nu|(A)`, or the total variation norm when `a` is absent.
    pub fn total_variation(&self, a: Option<&ClopenSet>) -> Result<Rat, MeasureError> {
        match a {
            None => Ok(self.values.values().map(Rat::abs).fold(Rat::zero(), |s, v| s + v)),
            Some(a) => {
                self.check_representable(a)?;
                let canon = a.canonicalize();
                let wrap = canon.bit_len() as u64 - 1;
                let mut sum = Rat::zero();
                for (atom, v) in &self.values {
                    if canon.get(atom & wrap) {
                        sum += &v.abs();
                    }
                }
                Ok(sum)
            }
        }
    }

    /// Atom-wise sum at a common level.
    pub fn add(&self, other: &SignedMeasure) -> Result<SignedMeasure, MeasureError> {
        if self.level != other.level {
            return Err(MeasureError::LevelMismatch(self.level, other.level));
        }
        let mut values = self.values.clone();
        for (&atom, v) in &other.values {
            let entry = values.entry(atom).or_insert_with(Rat::zero);
            *entry += v;
        }
        values.retain(|_, v| !v.is_zero());
        Ok(SignedMeasure { level: self.level, values })
    }
}

impl Serialize for SignedMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Wire {
            level: u32,
            atom_values: Vec<String>,
        }
        let bits = 1u64 << (self.level + 1);
        let atom_values = (0..bits).map(|a| self.value_at(a).to_string()).collect();
        Wire { level: self.level, atom_values }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SignedMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase", deny_unknown_fields)]
        struct Wire {
            level: u32,
            atom_values: Vec<String>,
        }
        let wire = Wire::deserialize(deserializer)?;
        if wire.level > crate::clopen::MAX_REPRESENTABLE_LEVEL {
            return Err(D::Error::custom("measure level beyond representable range"));
        }
        let bits = 1u64 << (wire.level + 1);
        if wire.atom_values.len() as u64 != bits {
            return Err(D::Error::custom(format!(
                "level {} needs exactly {bits} atom values, got {}",
                wire.level,
                wire.atom_values.len()
            )));
        }
        let mut entries = Vec::new();
        for (i, s) in wire.atom_values.iter().enumerate() {
            let v: Rat = s.parse().map_err(D::Error::custom)?;
            if !v.is_zero() {
                entries.push((i as u64, v));
            }
        }
        Ok(SignedMeasure::from_entries(wire.level, entries))
    }
}

/// The norm-`n` witness measure: atoms inside `V_n^0` weigh `+n·lambda`,
/// atoms inside `V_n^1` weigh `-n·lambda`. Its value on any clopen `A` is
/// `n·(lambda(A ∩ V_n^0) - lambda(A ∩ V_n^1))` and its norm is exactly `n`.
pub fn nikodym_witness(n: u32, level: u32) -> Result<SignedMeasure, MeasureError> {
    if level < n {
        return Err(MeasureError::LevelBelowIndex { n, level });
    }
    let weight = Rat::from_int(n as i64) * Rat::pow2(-(level as i64) - 1);
    let bits = 1u64 << (level + 1);
    let entries = (0..bits).map(|atom| {
        let v = if (atom >> n) & 1 == 0 { weight.clone() } else { -&weight };
        (atom, v)
    });
    Ok(SignedMeasure::from_entries(level, entries))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoEvaluation {
    pub member: usize,
    /// `|mu_m(A)|` evaluated through the materialized measure.
    pub via_measure: Rat,
    /// `m · phi_m(A)` re-derived from the raw mask; equals `via_measure`.
    pub via_phi: Rat,
    pub bound: Rat,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoRow {
    pub m: u32,
    /// Total variation of the witness measure at index `m`: exactly `m`.
    pub norm: Rat,
    pub evaluations: Vec<DemoEvaluation>,
}

/// The finite-scale exhibit of pointwise-null but norm-unbounded witnesses:
/// past the certified level every family member sees vanishingly small
/// values while the norms grow without bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NikodymDemoReport {
    pub n: u32,
    pub epsilon: Rat,
    pub certificate: Certificate,
    /// Values checked exactly for `m` in `(n, scanned_to]`.
    pub scanned_to: u32,
    /// For `m > symbolic_beyond`, `phi_m` of every member vanishes
    /// identically, so `|mu_m(A)| = 0 <= epsilon` with no scan.
    pub symbolic_beyond: u32,
    pub rows: Vec<DemoRow>,
    pub pass: bool,
}

pub fn nikodym_demo(
    family: &[ClopenSet],
    epsilon: &Rat,
    m_max: u32,
    cfg: &Config,
) -> Result<NikodymDemoReport, MeasureError> {
    if !epsilon.is_positive() {
        return Err(MeasureError::NonPositiveEpsilon);
    }
    let (n, certificate) = prop_t::find_prop_t_level(family, epsilon, 1, cfg)?;
    let max_canonical = family.iter().map(|s| s.canonical_level()).max().unwrap_or(0);
    let scanned_to = m_max.max(max_canonical).max(n);
    let mut rows = Vec::new();
    let mut pass = true;
    for m in n + 1..=scanned_to {
        let level = m.max(max_canonical);
        let mu = nikodym_witness(m, level)?;
        let norm = mu.total_variation(None)?;
        debug_assert_eq!(norm, Rat::from_int(m as i64));
        let mut evaluations = Vec::new();
        for (i, a) in family.iter().enumerate() {
            let via_measure = mu.eval(a)?.abs();
            let via_phi = Rat::from_int(m as i64) * a.canonicalize().refine_to(level).phi(m);
            let ok = via_measure <= *epsilon && via_measure == via_phi;
            pass &= ok;
            evaluations.push(DemoEvaluation {
                member: i,
                via_measure,
                via_phi,
                bound: epsilon.clone(),
                ok,
            });
        }
        rows.push(DemoRow { m, norm, evaluations });
    }
    Ok(NikodymDemoReport {
        n,
        epsilon: epsilon.clone(),
        certificate,
        scanned_to,
        symbolic_beyond: scanned_to,
        rows,
        pass,
    })
}

/// One indexed entry of a witness sequence prefix: a unit-norm measure
/// concentrated on its antichain block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrefixEntry {
    pub index: u32,
    pub nu: SignedMeasure,
    pub h: ClopenSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WitnessPrefix {
    pub entries: Vec<PrefixEntry>,
}

impl WitnessPrefix {
    /// Check the standing hypotheses: unit norms, 19/20 concentration on
    /// the blocks, pairwise-disjoint blocks, strictly increasing indices.
    pub fn validate(&self) -> Result<(), MeasureError> {
        let mut problems = Vec::new();
        let conc = Rat::ratio(19, 20);
        for (i, e) in self.entries.iter().enumerate() {
            match e.nu.total_variation(None) {
                Ok(norm) if norm == Rat::one() => {}
                Ok(norm) => problems.push(format!("entry {i}: norm {norm} != 1")),
                Err(err) => problems.push(format!("entry {i}: {err}")),
            }
            match e.nu.total_variation(Some(&e.h)) {
                Ok(v) if v >= conc => {}
                Ok(v) => problems.push(format!("entry {i}: |nu|(H) = {v} < 19/20")),
                Err(err) => problems.push(format!("entry {i}: {err}")),
            }
            for (j, f) in self.entries.iter().enumerate().skip(i + 1) {
                if !e.h.is_disjoint_from(&f.h) {
                    problems.push(format!("blocks {i} and {j} intersect"));
                }
            }
            if i + 1 < self.entries.len() && self.entries[i + 1].index <= e.index {
                problems.push(format!("indices not strictly increasing at position {i}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MeasureError::PrefixInvalid(problems))
        }
    }

    pub fn entry_with_index(&self, index: u32) -> Option<&PrefixEntry> {
        self.entries.iter().find(|e| e.index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OscillationEntry {
    pub position: usize,
    pub index: u32,
    pub parity: String,
    pub nu_b_cap_h_abs: Rat,
    pub nu_complement_variation: Rat,
    pub nu_b_abs: Rat,
    /// Even positions: `|nu(B ∩ H)| <= 1/10`; odd: `>= 3/10`.
    pub hypothesis_met: bool,
    /// Even positions: `|nu(B)| <= 3/20`; odd: `|nu(B)| >= 1/4`.
    pub implied_bound: Rat,
    pub bound_satisfied: bool,
}

/// The oscillation split: even entries stay small on `B`, odd entries stay
/// large, so the values of `B` along the prefix cannot settle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OscillationReport {
    pub entries: Vec<OscillationEntry>,
    pub even_max: Option<Rat>,
    pub odd_min: Option<Rat>,
    pub separated: bool,
    pub gap: Option<Rat>,
    pub all_hypotheses_met: bool,
}

pub fn oscillation_check(
    prefix: &WitnessPrefix,
    b: &ClopenSet,
) -> Result<OscillationReport, MeasureError> {
    prefix.validate()?;
    let mut entries = Vec::new();
    let mut even_max: Option<Rat> = None;
    let mut odd_min: Option<Rat> = None;
    let mut all_hypotheses_met = true;
    for (pos, e) in prefix.entries.iter().enumerate() {
        let b_cap_h = b.meet(&e.h);
        let nu_b_cap_h_abs = e.nu.eval(&b_cap_h)?.abs();
        let nu_b_abs = e.nu.eval(b)?.abs();
        let hc_var = e.nu.total_variation(None)? - e.nu.total_variation(Some(&e.h))?;
        let even = pos % 2 == 0;
        let (hypothesis_met, implied_bound, bound_satisfied) = if even {
            let hyp = nu_b_cap_h_abs <= Rat::ratio(1, 10);
            // |nu(B)| <= |nu(B ∩ H)| + |nu|(H^c) <= 1/10 + 1/20 = 3/20.
            let bound = Rat::ratio(3, 20);
            (hyp, bound.clone(), !hyp || nu_b_abs <= bound)
        } else {
            let hyp = nu_b_cap_h_abs >= Rat::ratio(3, 10);
            // |nu(B)| >= |nu(B ∩ H)| - |nu|(H^c) >= 3/10 - 1/20 = 1/4.
            let bound = Rat::ratio(1, 4);
            (hyp, bound.clone(), !hyp || nu_b_abs >= bound)
        };
        all_hypotheses_met &= hypothesis_met;
        if even {
            even_max = Some(match even_max {
                Some(m) => m.max(nu_b_abs.clone()),
                None => nu_b_abs.clone(),
            });
        } else {
            odd_min = Some(match odd_min {
                Some(m) => m.min(nu_b_abs.clone()),
                None => nu_b_abs.clone(),
            });
        }
        entries.push(OscillationEntry {
            position: pos,
            index: e.index,
            parity: (if even { "even" } else { "odd" }).to_owned(),
            nu_b_cap_h_abs,
            nu_complement_variation: hc_var,
            nu_b_abs,
            hypothesis_met,
            implied_bound,
            bound_satisfied,
        });
    }
    let (separated, gap) = match (&even_max, &odd_min) {
        (Some(e), Some(o)) => (o > e, Some(o - e)),
        _ => (false, None),
    };
    Ok(OscillationReport { entries, even_max, odd_min, separated, gap, all_hypotheses_met })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModulusRow {
    pub epsilon: Rat,
    pub delta: Rat,
    /// Largest member-atom count a set may have while staying strictly
    /// under `delta` in measure.
    pub allowed_atoms: u64,
    /// The extremal value: the absolutely continuous part summed over its
    /// heaviest `allowed_atoms` atoms. Every admissible set is dominated by
    /// this union, so the implication holds iff this value is below epsilon.
    pub worst_value: Rat,
    pub worst_set: ClopenSet,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrthogonalityCheck {
    pub lambda_x: Rat,
    pub theta2_off_x: Rat,
    pub epsilon_x: Rat,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecompositionReport {
    pub sum_ok: bool,
    pub first_sum_mismatch: Option<u64>,
    pub modulus_rows: Vec<ModulusRow>,
    pub orthogonality: OrthogonalityCheck,
    pub pass: bool,
}

/// Validate a supplied split of `theta` into an absolutely continuous part
/// (with an explicit epsilon/delta modulus) and a part concentrated on a
/// small set.
///
/// The modulus check quantifies over every clopen set at the level. Atoms
/// at one level share the same measure, so the worst set for the
/// implication is the union of the heaviest `theta1` atoms that still fits
/// strictly under `delta`; sorting replaces the exponential subset scan.
pub fn validate_decomposition(
    theta: &SignedMeasure,
    theta1: &SignedMeasure,
    theta2: &SignedMeasure,
    modulus: &[(Rat, Rat)],
    x: &ClopenSet,
    epsilon_x: &Rat,
) -> Result<DecompositionReport, MeasureError> {
    if theta.level() != theta1.level() {
        return Err(MeasureError::LevelMismatch(theta.level(), theta1.level()));
    }
    if theta.level() != theta2.level() {
        return Err(MeasureError::LevelMismatch(theta.level(), theta2.level()));
    }
    for (which, part) in [("theta1", theta1), ("theta2", theta2)] {
        if let Some((atom, v)) = part.entries().find(|(_, v)| v.is_negative()) {
            return Err(MeasureError::NegativePart { which, atom, value: v.clone() });
        }
    }

    let level = theta.level();
    let total_atoms = 1u64 << (level + 1);
    let sum = theta1.add(theta2)?;
    let first_sum_mismatch = (0..total_atoms).find(|&a| theta.value_at(a) != sum.value_at(a));
    let sum_ok = first_sum_mismatch.is_none();

    // Heaviest-first positive entries of the absolutely continuous part.
    let mut heavy: Vec<(u64, Rat)> =
        theta1.entries().map(|(a, v)| (a, v.clone())).collect();
    heavy.sort_by(|(a1, v1), (a2, v2)| v2.cmp(v1).then(a1.cmp(a2)));

    let mut modulus_rows = Vec::new();
    for (eps, delta) in modulus {
        let threshold = delta * Rat::pow2(level as i64 + 1);
        let mut allowed: num::BigInt = threshold.ceil_int() - 1;
        if allowed.sign() == num::bigint::Sign::Minus {
            allowed = num::BigInt::from(0);
        }
        let allowed_atoms =
            allowed.min(num::BigInt::from(total_atoms)).try_into().unwrap_or(total_atoms);
        let take = (allowed_atoms as usize).min(heavy.len());
        let worst_value =
            heavy[..take].iter().fold(Rat::zero(), |s, (_, v)| s + v);
        let worst_indices: Vec<u64> = heavy[..take].iter().map(|(a, _)| *a).collect();
        let worst_set = ClopenSet::from_atom_indices(level, &worst_indices).canonicalize();
        let ok = worst_value < *eps;
        modulus_rows.push(ModulusRow {
            epsilon: eps.clone(),
            delta: delta.clone(),
            allowed_atoms,
            worst_value,
            worst_set,
            ok,
        });
    }

    let lambda_x = x.lambda();
    let theta2_off_x = theta2.total_variation(Some(&x.complement()))?;
    let ortho_ok = lambda_x < *epsilon_x && theta2_off_x < *epsilon_x;
    let orthogonality = OrthogonalityCheck {
        lambda_x,
        theta2_off_x,
        epsilon_x: epsilon_x.clone(),
        ok: ortho_ok,
    };

    let pass = sum_ok && modulus_rows.iter().all(|r| r.ok) && ortho_ok;
    Ok(DecompositionReport { sum_ok, first_sum_mismatch, modulus_rows, orthogonality, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clopen::AtomId;

    fn v(m: u32, i: u8) -> ClopenSet {
        ClopenSet::coordinate(m, i)
    }

    #[test]
    fn total_variation_basics() {
        let nu = SignedMeasure::from_entries(1, [(2, Rat::ratio(-3, 4))]);
        assert_eq!(nu.total_variation(None).unwrap(), Rat::ratio(3, 4));
        let a = v(0, 0);
        let tv_a = nu.total_variation(Some(&a)).unwrap();
        let tv_ac = nu.total_variation(Some(&a.complement())).unwrap();
        assert_eq!(tv_a + tv_ac, nu.total_variation(None).unwrap());
    }

    #[test]
    fn eval_rejects_finer_sets() {
        let nu = SignedMeasure::from_entries(1, [(0, Rat::one())]);
        let fine = AtomId::new(4, 3).to_set();
        assert!(matches!(
            nu.eval(&fine),
            Err(MeasureError::SetTooFine { set_level: 4, measure_level: 1 })
        ));
    }

    #[test]
    fn witness_measure_matches_formula() {
        // mu_2(V_2^0) = 2 * (1/2 - 0) = 1, and the norm at level m is m.
        let mu2 = nikodym_witness(2, 2).unwrap();
        assert_eq!(mu2.eval(&v(2, 0)).unwrap(), Rat::one());
        assert_eq!(mu2.eval(&ClopenSet::full()).unwrap(), Rat::zero());
        assert_eq!(mu2.total_variation(None).unwrap(), Rat::from_int(2));
        for m in 1..=6u32 {
            let mu = nikodym_witness(m, 7).unwrap();
            assert_eq!(mu.total_variation(None).unwrap(), Rat::from_int(m as i64));
            // Coarser sets split evenly across deeper coordinates.
            assert_eq!(mu.eval(&v(0, 0)).unwrap(), Rat::zero());
        }
        assert!(nikodym_witness(3, 2).is_err());
    }

    #[test]
    fn witness_equals_balance_formula_on_random_sets() {
        let mut r = crate::sample::rng(17);
        for _ in 0..50 {
            let a = crate::sample::clopen(&mut r, 6);
            for m in 0..=6u32 {
                let mu = nikodym_witness(m, 6).unwrap();
                let direct = Rat::from_int(m as i64) * a.canonicalize().refine_to(6).balance(m);
                assert_eq!(mu.eval(&a).unwrap(), direct);
            }
        }
    }

    #[test]
    fn demo_on_coordinate_half() {
        let cfg = Config::default();
        let rep = nikodym_demo(&[v(0, 0)], &Rat::ratio(1, 10), 6, &cfg).unwrap();
        assert_eq!(rep.n, 1);
        assert!(rep.pass);
        for row in &rep.rows {
            assert_eq!(row.norm, Rat::from_int(row.m as i64));
            for e in &row.evaluations {
                assert_eq!(e.via_measure, Rat::zero());
            }
        }
    }

    fn point_mass_prefix(signs: &[i64]) -> WitnessPrefix {
        // Entry i is a unit point mass of the given sign sitting on its own
        // level-4 block atom i.
        let entries = signs
            .iter()
            .enumerate()
            .map(|(i, &sign)| PrefixEntry {
                index: i as u32,
                nu: SignedMeasure::from_entries(4, [(i as u64, Rat::from_int(sign))]),
                h: AtomId::new(4, i as u64).to_set(),
            })
            .collect();
        WitnessPrefix { entries }
    }

    #[test]
    fn oscillation_exact_bounds() {
        // Even entries: |nu(B ∩ H)| = 1/10 with 1/20 mass off-block, so
        // |nu(B)| can reach exactly 3/20. Odd entries: 3/10 on-block mass
        // drops to exactly 1/4 when the off-block 1/20 opposes it.
        let nu_even = SignedMeasure::from_entries(
            4,
            [(0, Rat::ratio(1, 10)), (1, Rat::ratio(17, 20)), (31, Rat::ratio(1, 20))],
        );
        let nu_odd = SignedMeasure::from_entries(
            4,
            [(2, Rat::ratio(3, 10)), (3, Rat::ratio(13, 20)), (31, Rat::ratio(-1, 20))],
        );
        let prefix = WitnessPrefix {
            entries: vec![
                PrefixEntry {
                    index: 0,
                    nu: nu_even,
                    h: ClopenSet::from_atom_indices(4, &[0, 1]),
                },
                PrefixEntry {
                    index: 1,
                    nu: nu_odd,
                    h: ClopenSet::from_atom_indices(4, &[2, 3]),
                },
            ],
        };
        // B picks the small even atom plus the big odd atom plus atom 31.
        let b = ClopenSet::from_atom_indices(4, &[0, 2, 31]);
        let rep = oscillation_check(&prefix, &b).unwrap();
        assert!(rep.all_hypotheses_met);
        assert_eq!(rep.entries[0].nu_b_abs, Rat::ratio(3, 20));
        assert_eq!(rep.entries[1].nu_b_abs, Rat::ratio(1, 4));
        assert!(rep.entries.iter().all(|e| e.bound_satisfied));
        assert!(rep.separated);
        assert_eq!(rep.gap, Some(Rat::ratio(1, 10)));
    }

    #[test]
    fn oscillation_point_mass_prefix_of_six() {
        let prefix = point_mass_prefix(&[1, -1, 1, 1, 1, -1]);
        prefix.validate().unwrap();
        // B picks exactly the odd blocks' atoms, so even entries see zero
        // and odd entries see their full unit mass.
        let b = ClopenSet::from_atom_indices(4, &[1, 3, 5]);
        let rep = oscillation_check(&prefix, &b).unwrap();
        assert!(rep.separated);
        assert!(rep.gap.unwrap() >= Rat::ratio(1, 10));
        assert_eq!(rep.even_max, Some(Rat::zero()));
        assert_eq!(rep.odd_min, Some(Rat::one()));
    }

    #[test]
    fn prefix_validation_catches_problems() {
        let bad = WitnessPrefix {
            entries: vec![PrefixEntry {
                index: 0,
                nu: SignedMeasure::from_entries(2, [(0, Rat::ratio(1, 2))]),
                h: AtomId::new(2, 1).to_set(),
            }],
        };
        match bad.validate() {
            Err(MeasureError::PrefixInvalid(problems)) => assert_eq!(problems.len(), 2),
            other => panic!("expected invalid prefix, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_trivial_orthogonal_part() {
        // theta2 = 0 with X empty passes orthogonality for any positive
        // epsilon; theta1 = lambda satisfies the modulus (eps, eps).
        let level = 2u32;
        let lam = Rat::pow2(-(level as i64) - 1);
        let theta1 =
            SignedMeasure::from_entries(level, (0..8).map(|a| (a, lam.clone())));
        let theta2 = SignedMeasure::zero(level);
        let theta = theta1.clone();
        let eps = Rat::ratio(1, 4);
        let rep = validate_decomposition(
            &theta,
            &theta1,
            &theta2,
            &[(eps.clone(), eps.clone())],
            &ClopenSet::empty(),
            &Rat::ratio(1, 100),
        )
        .unwrap();
        assert!(rep.pass, "{rep:?}");
        // lambda(A) < 1/4 allows one atom; theta1 of one atom is 1/8 < 1/4.
        assert_eq!(rep.modulus_rows[0].allowed_atoms, 1);
        assert_eq!(rep.modulus_rows[0].worst_value, Rat::ratio(1, 8));
    }

    #[test]
    fn decomposition_sum_mismatch_names_atom() {
        let theta = SignedMeasure::from_entries(1, [(2, Rat::one())]);
        let theta1 = SignedMeasure::zero(1);
        let theta2 = SignedMeasure::zero(1);
        let rep = validate_decomposition(
            &theta,
            &theta1,
            &theta2,
            &[],
            &ClopenSet::empty(),
            &Rat::one(),
        )
        .unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.first_sum_mismatch, Some(2));
    }

    #[test]
    fn decomposition_greedy_matches_enumeration() {
        // Exhaustive comparison at 8 atoms: the greedy extremal check must
        // agree with scanning all 256 subsets.
        let mut r = crate::sample::rng(5);
        for _ in 0..30 {
            let level = 2u32;
            let theta1 = SignedMeasure::from_entries(
                level,
                (0..8).map(|a| (a, Rat::ratio(crate::sample::below(&mut r, 5) as i64, 16))),
            );
            let delta = Rat::ratio(1 + crate::sample::below(&mut r, 8) as i64, 8);
            let eps = Rat::ratio(1 + crate::sample::below(&mut r, 6) as i64, 6);
            let rep = validate_decomposition(
                &theta1,
                &theta1,
                &SignedMeasure::zero(level),
                &[(eps.clone(), delta.clone())],
                &ClopenSet::empty(),
                &Rat::one(),
            )
            .unwrap();
            let mut brute_ok = true;
            for mask in 0u64..256 {
                let set = ClopenSet::from_atom_indices(
                    level,
                    &(0..8).filter(|b| (mask >> b) & 1 == 1).collect::<Vec<_>>(),
                );
                if set.lambda() < delta && theta1.eval(&set).unwrap() >= eps {
                    brute_ok = false;
                }
            }
            assert_eq!(rep.modulus_rows[0].ok, brute_ok);
        }
    }
}
