//! Uniform-approximation certificates for finite clopen families.
//!
//! A family `A_1..A_p` is certified at `(epsilon, n)` when for every atom
//! `U` of the level-`n` algebra and every member `A_i`:
//!
//! * first condition — the member nearly omits or nearly fills the atom:
//!   `lambda(A_i ∩ U) <= eps·lambda(U)/n` or `lambda(U \ A_i) <= eps·lambda(U)/n`;
//! * second condition — for every `m > n` the member is nearly coordinate
//!   symmetric inside the atom: `phi_m(A_i ∩ U) <= eps·lambda(U)/m`.
//!
//! For clopen members the second condition needs only a finite scan: beyond
//! the canonical level of `A_i ∩ U` every atom splits evenly and `phi_m`
//! vanishes identically, which the certificate records as an infinite
//! symbolic tail rather than a truncated scan.

use crate::clopen::{AtomId, ClopenSet};
use crate::config::Config;
use crate::rational::Rat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseTag {
    /// `lambda(A ∩ U) <= eps·lambda(U)/n`.
    Omits,
    /// `lambda(U \ A) <= eps·lambda(U)/n`.
    Fills,
}

/// Where the per-`m` scan of the second condition stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MScan {
    /// Every member is a union of level-`n` atoms, so `phi_m` vanishes for
    /// all `m > n`; nothing needed scanning.
    Infinite,
    /// Scanned `m in (n, upTo]` exactly; `phi_m = 0` symbolically beyond.
    UpTo(u32),
}

/// One `(member, atom)` record of a certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AtomRecord {
    pub member: usize,
    pub atom_index: u64,
    pub tag: CaseTag,
    pub t1_achieved: Rat,
    pub t1_bound: Rat,
    pub t1_slack: Rat,
    /// Max over the scanned range of `m · phi_m(A_i ∩ U)`; zero when the
    /// scan was empty. Compare against `t2_bound = eps · lambda(U)`.
    pub t2_max_scaled: Rat,
    pub t2_bound: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    /// Order-independent content hash of the family (canonical encodings,
    /// sorted and deduplicated).
    pub family_digest: String,
    pub epsilon: Rat,
    pub n: u32,
    pub m_scan: MScan,
    /// Full per-atom records at small levels; beyond
    /// [`Config::transcript_atom_level`] only each member's extremal records
    /// (minimal first-condition slack, maximal scaled `phi`).
    pub per_atom: Vec<AtomRecord>,
    pub pairs_checked: u64,
    pub full_records: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ViolatedCondition {
    T1,
    T2 { m: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub member: usize,
    pub atom_index: u64,
    pub condition: ViolatedCondition,
    pub achieved: Rat,
    pub bound: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CheckOutcome {
    Certified(Certificate),
    Violated(Vec<Violation>),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PropTError {
    #[error("n must be positive: the approximation level is quantified over n > 0")]
    ZeroLevel,
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(Rat),
    #[error("witness base set is empty")]
    EmptyWitnessBase,
    #[error("no passing level at or below {0}; this cannot happen for clopen input")]
    SearchExhausted(u32),
}

/// Order-independent digest of a family of clopen sets.
pub fn family_digest(family: &[ClopenSet]) -> String {
    let mut encodings: Vec<Vec<u8>> = family.iter().map(|s| s.canonical_bytes()).collect();
    encodings.sort();
    encodings.dedup();
    let mut h = Sha256::new();
    for enc in &encodings {
        h.update((enc.len() as u64).to_le_bytes());
        h.update(enc);
    }
    hex::encode(h.finalize())
}

/// Signed per-coordinate counts of `A ∩ U` for all `m` in `(n, level]`,
/// without materializing the intersection: walk the level-`level` atoms of
/// `A` congruent to `u` modulo the level-`n` block size.
pub(crate) fn balances_within_atom(a: &ClopenSet, n: u32, u: u64, out: &mut [i64]) {
    out.iter_mut().for_each(|x| *x = 0);
    let level = a.level();
    debug_assert!(level > n);
    let stride = 1u64 << (n + 1);
    let mut j = u;
    let total = a.bit_len() as u64;
    while j < total {
        if a.get(j) {
            for (slot, m) in (n + 1..=level).enumerate() {
                if (j >> m) & 1 == 0 {
                    out[slot] += 1;
                } else {
                    out[slot] -= 1;
                }
            }
        }
        j += stride;
    }
}

/// Decide the certificate at one fixed level `n`. Exact; returns either a
/// re-verifiable certificate or the complete violation list.
pub fn check_prop_t_at(
    family: &[ClopenSet],
    epsilon: &Rat,
    n: u32,
    cfg: &Config,
) -> Result<CheckOutcome, PropTError> {
    if n == 0 {
        return Err(PropTError::ZeroLevel);
    }
    if !epsilon.is_positive() {
        return Err(PropTError::NonPositiveEpsilon(epsilon.clone()));
    }

    let canonical: Vec<ClopenSet> = family.iter().map(|s| s.canonicalize()).collect();
    let max_canonical = canonical.iter().map(|s| s.level()).max().unwrap_or(0);
    let m_scan = if max_canonical <= n { MScan::Infinite } else { MScan::UpTo(max_canonical) };

    let lambda_u = Rat::pow2(-(n as i64) - 1);
    let t1_bound = epsilon * &lambda_u / Rat::from_int(n as i64);
    let t2_bound = epsilon * &lambda_u;

    let atom_count = 1u64 << (n + 1);
    let full_records = n <= cfg.transcript_atom_level;

    let mut records: Vec<AtomRecord> = Vec::new();
    let mut violations: Vec<Violation> = Vec::new();
    // Extremal records per member when summarizing: (min slack, max phi).
    let mut extremal: Vec<(Option<AtomRecord>, Option<AtomRecord>)> =
        vec![(None, None); family.len()];
    let mut pairs = 0u64;
    let mut scratch: Vec<i64> = Vec::new();

    for (i, a) in canonical.iter().enumerate() {
        let needs_strided = a.level() > n;
        if !needs_strided && !full_records {
            // Clean splits: every atom is inside or disjoint, both sides of
            // the first condition achieve zero, and the tail vanishes. One
            // representative record (atom 0) stands for the whole row.
            pairs += atom_count;
            let tag = if a.get(0) { CaseTag::Fills } else { CaseTag::Omits };
            extremal[i] = (
                Some(AtomRecord {
                    member: i,
                    atom_index: 0,
                    tag,
                    t1_achieved: Rat::zero(),
                    t1_bound: t1_bound.clone(),
                    t1_slack: t1_bound.clone(),
                    t2_max_scaled: Rat::zero(),
                    t2_bound: t2_bound.clone(),
                }),
                None,
            );
            continue;
        }
        scratch.clear();
        scratch.resize(a.level().saturating_sub(n) as usize, 0);
        for u in 0..atom_count {
            pairs += 1;
            let (ach_omit, ach_fill) = if !needs_strided {
                let inside = a.get(u & (a.bit_len() as u64 - 1));
                if inside {
                    (lambda_u.clone(), Rat::zero())
                } else {
                    (Rat::zero(), lambda_u.clone())
                }
            } else {
                let inter = a.lambda_within_atom(&AtomId::new(n, u));
                let fill = &lambda_u - &inter;
                (inter, fill)
            };

            let omit_ok = ach_omit <= t1_bound;
            let fill_ok = ach_fill <= t1_bound;
            let record_t1 = if omit_ok || fill_ok {
                let tag = if omit_ok && (!fill_ok || ach_omit <= ach_fill) {
                    CaseTag::Omits
                } else {
                    CaseTag::Fills
                };
                let achieved = match tag {
                    CaseTag::Omits => ach_omit,
                    CaseTag::Fills => ach_fill,
                };
                Some((tag, achieved))
            } else {
                violations.push(Violation {
                    member: i,
                    atom_index: u,
                    condition: ViolatedCondition::T1,
                    achieved: ach_omit.min(ach_fill),
                    bound: t1_bound.clone(),
                });
                None
            };

            // Second condition: exact scan over (n, canonical]; zero beyond.
            let mut t2_max_scaled = Rat::zero();
            if needs_strided {
                balances_within_atom(a, n, u, &mut scratch);
                for (slot, m) in (n + 1..=a.level()).enumerate() {
                    let phi = Rat::dyadic(scratch[slot].abs(), -(a.level() as i64) - 1);
                    let scaled = Rat::from_int(m as i64) * &phi;
                    if scaled > t2_bound {
                        violations.push(Violation {
                            member: i,
                            atom_index: u,
                            condition: ViolatedCondition::T2 { m },
                            achieved: phi,
                            bound: &t2_bound / Rat::from_int(m as i64),
                        });
                    }
                    if scaled > t2_max_scaled {
                        t2_max_scaled = scaled;
                    }
                }
            }

            if let Some((tag, achieved)) = record_t1 {
                let rec = AtomRecord {
                    member: i,
                    atom_index: u,
                    tag,
                    t1_achieved: achieved.clone(),
                    t1_bound: t1_bound.clone(),
                    t1_slack: &t1_bound - &achieved,
                    t2_max_scaled,
                    t2_bound: t2_bound.clone(),
                };
                if full_records {
                    records.push(rec);
                } else {
                    let slot = &mut extremal[i];
                    if slot.0.as_ref().map_or(true, |r| rec.t1_slack < r.t1_slack) {
                        slot.0 = Some(rec.clone());
                    }
                    if slot.1.as_ref().map_or(true, |r| rec.t2_max_scaled > r.t2_max_scaled) {
                        slot.1 = Some(rec);
                    }
                }
            }
        }
    }

    if !violations.is_empty() {
        return Ok(CheckOutcome::Violated(violations));
    }
    if !full_records {
        for (min_rec, max_rec) in extremal {
            records.extend(min_rec);
            records.extend(max_rec);
        }
        records.sort_by(|a, b| (a.member, a.atom_index).cmp(&(b.member, b.atom_index)));
        records.dedup();
    }
    Ok(CheckOutcome::Certified(Certificate {
        family_digest: family_digest(family),
        epsilon: epsilon.clone(),
        n,
        m_scan,
        per_atom: records,
        pairs_checked: pairs,
        full_records,
    }))
}

/// Re-derive every recorded slack from the raw masks. Audits certificates
/// independently of the code path that produced them.
pub fn verify_certificate(family: &[ClopenSet], cert: &Certificate) -> bool {
    if cert.family_digest != family_digest(family) {
        return false;
    }
    let n = cert.n;
    let lambda_u = Rat::pow2(-(n as i64) - 1);
    let t1_bound = &cert.epsilon * &lambda_u / Rat::from_int(n as i64);
    let t2_bound = &cert.epsilon * &lambda_u;
    let mut scratch: Vec<i64> = Vec::new();
    for rec in &cert.per_atom {
        let Some(a) = family.get(rec.member) else { return false };
        let a = a.canonicalize();
        let u = AtomId::new(n, rec.atom_index);
        let inter = a.lambda_within_atom(&u);
        let achieved = match rec.tag {
            CaseTag::Omits => inter,
            CaseTag::Fills => &lambda_u - &inter,
        };
        if achieved != rec.t1_achieved
            || rec.t1_bound != t1_bound
            || rec.t1_slack != &t1_bound - &achieved
            || rec.t1_slack.is_negative()
        {
            return false;
        }
        let mut t2_max = Rat::zero();
        if a.level() > n {
            scratch.clear();
            scratch.resize((a.level() - n) as usize, 0);
            balances_within_atom(&a, n, rec.atom_index, &mut scratch);
            for (slot, m) in (n + 1..=a.level()).enumerate() {
                let scaled =
                    Rat::dyadic(scratch[slot].abs() * m as i64, -(a.level() as i64) - 1);
                if scaled > t2_max {
                    t2_max = scaled;
                }
            }
        }
        if t2_max != rec.t2_max_scaled || rec.t2_bound != t2_bound || t2_max > t2_bound {
            return false;
        }
    }
    true
}

/// A certain-failure test that avoids scanning atoms: a member whose
/// canonical level exceeds `n` is split by some atom, and each side of that
/// split weighs at least one deep atom; failure is certain once that weight
/// exceeds the bound.
pub(crate) fn certainly_fails(family: &[ClopenSet], epsilon: &Rat, n: u32) -> bool {
    family.iter().any(|a| {
        let c = a.canonical_level();
        c > n && Rat::dyadic(n as i64, n as i64 - c as i64) > *epsilon
    })
}

/// The smallest certified level `n >= max(1, min_level)`. Terminates for
/// clopen input: any level at or above every member's canonical level
/// certifies with clean splits and a vanishing symmetric tail.
pub fn find_prop_t_level(
    family: &[ClopenSet],
    epsilon: &Rat,
    min_level: u32,
    cfg: &Config,
) -> Result<(u32, Certificate), PropTError> {
    if !epsilon.is_positive() {
        return Err(PropTError::NonPositiveEpsilon(epsilon.clone()));
    }
    let max_canonical = family.iter().map(|s| s.canonical_level()).max().unwrap_or(0);
    let stop = min_level.max(max_canonical).max(1);
    let mut n = min_level.max(1);
    while n <= stop {
        if !certainly_fails(family, epsilon, n) {
            match check_prop_t_at(family, epsilon, n, cfg)? {
                CheckOutcome::Certified(cert) => return Ok((n, cert)),
                CheckOutcome::Violated(_) => {}
            }
        }
        n += 1;
    }
    Err(PropTError::SearchExhausted(stop))
}

/// One witness atom of the open-set counterexample: an atom the open set
/// fills in exactly half its measure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VwWitness {
    pub n: u32,
    pub atom: AtomId,
    pub lambda_vw_cap_u: Rat,
    pub lambda_u_minus_vw: Rat,
    /// Count of other cylinder pieces whose disjointness from the atom was
    /// verified exactly on masks. Every piece beyond the truncation is
    /// disjoint by the index-bit argument: it carries a forced 1 where the
    /// atom's word holds a 0.
    pub disjointness_checked: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VwCounterexample {
    pub sigma: AtomId,
    pub base_level: u32,
    /// Cylinder pieces: piece `k` extends sigma's word by `k` ones and two
    /// zeros, an atom at level `base_level + k + 2`.
    pub tau_list: Vec<AtomId>,
    pub witnesses: Vec<VwWitness>,
}

/// Build the open-set counterexample data for a non-empty clopen base `w`:
/// inside `w`, an open union of shrinking cylinders meets one atom of every
/// deep level in exactly half of the atom's measure.
pub fn build_vw_counterexample(
    w: &ClopenSet,
    depth: u32,
) -> Result<VwCounterexample, PropTError> {
    if w.is_empty() {
        return Err(PropTError::EmptyWitnessBase);
    }
    // Lowest-index atom of minimal level contained in w: reproducible choice.
    let w_canon = w.canonicalize();
    let mut sigma = None;
    'levels: for lvl in 0..=w_canon.level() {
        for idx in 0..(1u64 << (lvl + 1)) {
            if w_canon.contains_atom_of(lvl, idx) {
                sigma = Some(AtomId::new(lvl, idx));
                break 'levels;
            }
        }
    }
    let sigma = sigma.expect("non-empty set contains an atom at its canonical level");
    let base = sigma.level;

    let mut taus = Vec::with_capacity(depth as usize + 1);
    for k in 0..=depth {
        let mut word = sigma.word();
        word.extend(std::iter::repeat(1).take(k as usize));
        word.push(0);
        word.push(0);
        taus.push(AtomId::from_word(&word));
    }

    let mut witnesses = Vec::with_capacity(depth as usize);
    for n in base + 1..=base + depth {
        let k = (n - base - 1) as usize;
        // The level-n atom carrying the half/half split: the k-th cylinder
        // word truncated by its final coordinate.
        let rho_word = &taus[k].word()[..(n as usize + 1)];
        let u = AtomId::from_word(rho_word);
        let u_set = u.to_set();
        let tau_k_set = taus[k].to_set();
        assert!(tau_k_set.is_subset_of(&u_set), "the chosen cylinder refines its witness atom");
        let mut checked = 0u32;
        for (j, tau) in taus.iter().enumerate() {
            if j != k {
                assert!(
                    tau.to_set().is_disjoint_from(&u_set),
                    "cylinder {j} must miss the level-{n} witness atom"
                );
                checked += 1;
            }
        }
        let inside = tau_k_set.lambda();
        let outside = u.lambda() - &inside;
        witnesses.push(VwWitness {
            n,
            atom: u,
            lambda_vw_cap_u: inside,
            lambda_u_minus_vw: outside,
            disjointness_checked: checked,
        });
    }

    Ok(VwCounterexample { sigma, base_level: base, tau_list: taus, witnesses })
}
