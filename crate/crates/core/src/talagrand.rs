//! Balanced-subset solver on a level algebra.
//!
//! Given blocks `P, R, Z, Q` at level `n` and a budget `eta`, the task is a
//! subset `M` of `Q` of prescribed measure `eta'` that avoids `P ∪ R ∪ Z`
//! and keeps `psi_m(M ∪ (Z ∩ Q), R ∩ Q) <= eta/m` for every coordinate
//! `m` in `(t, n]`. The solver minimizes the score
//!
//! ```text
//! S(M) = sum over t < m <= n of (b_m(M) + a_m)^2
//! ```
//!
//! where `a_m` is the signed coordinate balance of `Z ∩ Q` against `R ∩ Q`
//! and `b_m` the balance of `M`, by steepest-descent swap moves
//! `M -> (M \ U) ∪ V` over single atoms, with exact integer arithmetic
//! (everything scales by `2^(n+1)`) and a deterministic lowest-index
//! tie-break. Seeded restarts and an exhaustive oracle guard small
//! instances; every reported quantity is re-derived from raw masks.

use crate::clopen::{psi, AtomId, ClopenSet};
use crate::config::{Config, ScaleReport};
use crate::rational::Rat;
use crate::sample;
use num::BigUint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum TalagrandError {
    #[error("t must be positive")]
    ZeroT,
    #[error("instance level n = {n} is below t = {t}")]
    LevelBelowT { n: u32, t: u32 },
    #[error("{which} has canonical level {level}, beyond the instance level {n}")]
    SetBeyondLevel { which: &'static str, level: u32, n: u32 },
    #[error("block atom has level {g_level}, expected t = {t}")]
    GLevelMismatch { g_level: u32, t: u32 },
    #[error("eta must be positive")]
    NonPositiveEta,
    #[error("strict mode requires eta < 2^-(t+11): eta = {eta}, bound = {bound}")]
    EtaTooLarge { eta: Rat, bound: Rat },
    #[error("strict mode requires lambda({which}) <= 2^-8 eta^2: got {lambda}, bound {bound}")]
    MassTooLarge { which: &'static str, lambda: Rat, bound: Rat },
    #[error("strict mode requires lambda(Q ∩ G) >= (19/20) lambda(G): got {achieved}, bound {bound}")]
    ConcentrationTooLow { achieved: Rat, bound: Rat },
    #[error("strict mode requires n >= {n_zero} (minimal feasible level for this eta), got {n}")]
    LevelBelowFloor { n: u32, n_zero: u32 },
    #[error("{0}")]
    Scale(ScaleReport),
    #[error("no multiple of 2^-(n+1) lies strictly between eta/2 and eta at n = {n}; increase n")]
    EtaPrimeUnselectable { eta: Rat, n: u32 },
    #[error("Q' = Q \\ (P ∪ R ∪ Z) is empty")]
    EmptyQPrime,
    #[error("Q' holds {available} atoms but the prescribed measure needs {needed}")]
    InsufficientAtoms { available: u64, needed: u64 },
    #[error("candidate count {count} exceeds the enumeration cap {cap}")]
    InfeasibleCount { count: String, cap: u64 },
    #[error("xi must lie strictly between 0 and 1")]
    XiOutOfRange,
    #[error("no coordinates in (t, n]: t = {t}, n = {n}")]
    NoCoordinates { t: u32, n: u32 },
    #[error("the flip-overlap region is empty; the shape preconditions are violated")]
    OmegaEmpty,
}

/// One solver instance. `relaxed` skips the scalar preconditions (budget
/// size, block masses, concentration, level floor) but never the typing
/// ones (levels, positivity).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Instance {
    pub t: u32,
    pub eta: Rat,
    pub n: u32,
    pub p: ClopenSet,
    pub r: ClopenSet,
    pub z: ClopenSet,
    pub q: ClopenSet,
    pub g: AtomId,
    #[serde(default)]
    pub relaxed: bool,
}

impl Instance {
    pub fn validate(&self, cfg: &Config) -> Result<(), TalagrandError> {
        if self.t == 0 {
            return Err(TalagrandError::ZeroT);
        }
        if self.n < self.t {
            return Err(TalagrandError::LevelBelowT { n: self.n, t: self.t });
        }
        if !self.eta.is_positive() {
            return Err(TalagrandError::NonPositiveEta);
        }
        for (which, set) in [("P", &self.p), ("R", &self.r), ("Z", &self.z), ("Q", &self.q)] {
            let level = set.canonical_level();
            if level > self.n {
                return Err(TalagrandError::SetBeyondLevel { which, level, n: self.n });
            }
        }
        if self.g.level != self.t {
            return Err(TalagrandError::GLevelMismatch { g_level: self.g.level, t: self.t });
        }
        if self.n > cfg.max_level {
            let floor = n_zero(self.t, &self.eta);
            return Err(TalagrandError::Scale(ScaleReport::for_level(self.n.max(floor), cfg)));
        }
        if !self.relaxed {
            let eta_bound = Rat::pow2(-(self.t as i64) - 11);
            if self.eta >= eta_bound {
                return Err(TalagrandError::EtaTooLarge {
                    eta: self.eta.clone(),
                    bound: eta_bound,
                });
            }
            let mass_bound = Rat::pow2(-8) * self.eta.square();
            for (which, set) in [("P", &self.p), ("R", &self.r), ("Z", &self.z)] {
                let lambda = set.lambda();
                if lambda > mass_bound {
                    return Err(TalagrandError::MassTooLarge {
                        which,
                        lambda,
                        bound: mass_bound,
                    });
                }
            }
            let g_set = self.g.to_set();
            let achieved = self.q.meet(&g_set).lambda();
            let bound = Rat::ratio(19, 20) * g_set.lambda();
            if achieved < bound {
                return Err(TalagrandError::ConcentrationTooLow { achieved, bound });
            }
            let floor = n_zero(self.t, &self.eta);
            if self.n < floor {
                return Err(TalagrandError::LevelBelowFloor { n: self.n, n_zero: floor });
            }
        }
        Ok(())
    }
}

/// Minimal `n >= t` with `n^3 · 2^-n <= eta`, by exact comparison.
pub fn n_zero(t: u32, eta: &Rat) -> u32 {
    let mut n = t.max(1);
    loop {
        let cube = Rat::from_int(n as i64).square() * Rat::from_int(n as i64);
        if cube <= eta * Rat::pow2(n as i64) {
            return n;
        }
        n += 1;
    }
}

/// The largest multiple of `2^-(n+1)` strictly inside `(eta/2, eta)`.
/// Largest maximizes the search space and is deterministic.
pub fn select_eta_prime(eta: &Rat, n: u32) -> Result<Rat, TalagrandError> {
    if !eta.is_positive() {
        return Err(TalagrandError::NonPositiveEta);
    }
    let granule = Rat::pow2(-(n as i64) - 1);
    let k: num::BigInt = (eta / &granule).ceil_int() - 1;
    if k.sign() != num::bigint::Sign::Plus {
        return Err(TalagrandError::EtaPrimeUnselectable { eta: eta.clone(), n });
    }
    let eta_prime = Rat::from_big(k, num::BigInt::from(1)) * &granule;
    if eta_prime <= eta / Rat::from_int(2) {
        return Err(TalagrandError::EtaPrimeUnselectable { eta: eta.clone(), n });
    }
    Ok(eta_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    BoundMet,
    BoundMissed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PerCoordinate {
    pub m: u32,
    pub a: Rat,
    pub b: Rat,
    /// `psi_m(M ∪ (Z ∩ Q), R ∩ Q)`, re-derived from raw masks.
    pub psi: Rat,
    pub bound: Rat,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchTrace {
    pub seed: u64,
    pub restarts_run: u32,
    pub best_restart: u32,
    pub swap_count: u64,
    pub convergence: String,
    /// Best locally optimal score before any escalation.
    pub local_s: Rat,
    pub escalated: bool,
    pub oracle_candidates: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub m_set: ClopenSet,
    pub eta_prime: Rat,
    pub s_score: Rat,
    pub per_m: Vec<PerCoordinate>,
    pub verdict: Verdict,
    pub trace: SearchTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Budget {
    pub restarts: u32,
    pub oracle_cap: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { restarts: 4, oracle_cap: 100_000 }
    }
}

/// The effective data all operations share after the without-loss step of
/// replacing `Z, R` by `Z ∩ Q, R ∩ Q`.
struct Prepared {
    n: u32,
    t: u32,
    coords: usize,
    q_prime: ClopenSet,
    z_eff: ClopenSet,
    r_eff: ClopenSet,
    /// `a_m` scaled by `2^(n+1)`, slot `m - t - 1`.
    a: Vec<i64>,
    k: u64,
    eta_prime: Rat,
    q_count: u64,
}

/// Instance preparation. The search path additionally selects the target
/// measure and checks that enough atoms are available; pure evaluation
/// paths (scores, anti-concentration checks) skip those demands.
fn prepare_with(inst: &Instance, cfg: &Config, for_search: bool) -> Result<Prepared, TalagrandError> {
    inst.validate(cfg)?;
    let n = inst.n;
    let z_eff = inst.z.meet(&inst.q);
    let r_eff = inst.r.meet(&inst.q);
    let q_prime = inst.q.difference(&inst.p.join(&r_eff).join(&z_eff)).refine_to(n);
    let q_count = q_prime.popcount();
    let (eta_prime, k) = if for_search {
        if q_prime.is_empty() {
            return Err(TalagrandError::EmptyQPrime);
        }
        let eta_prime = select_eta_prime(&inst.eta, n)?;
        let k_big = (&eta_prime * Rat::pow2(n as i64 + 1)).floor_int();
        let k: u64 = k_big.try_into().expect("atom count fits u64");
        if q_count < k {
            return Err(TalagrandError::InsufficientAtoms { available: q_count, needed: k });
        }
        (eta_prime, k)
    } else {
        (Rat::zero(), 0)
    };
    let coords = (n - inst.t) as usize;
    let zr = z_eff.canonicalize().refine_to(n);
    let rr = r_eff.canonicalize().refine_to(n);
    let a = (inst.t + 1..=n).map(|m| zr.balance_scaled(m) - rr.balance_scaled(m)).collect();
    Ok(Prepared { n, t: inst.t, coords, q_prime, z_eff, r_eff, a, k, eta_prime, q_count })
}

fn prepare(inst: &Instance, cfg: &Config) -> Result<Prepared, TalagrandError> {
    prepare_with(inst, cfg, true)
}

#[inline]
fn sign_at(idx: u64, m: u32) -> i64 {
    if (idx >> m) & 1 == 0 {
        1
    } else {
        -1
    }
}

/// Mutable bit mask over the level-n atoms, for the search inner loop.
struct Bits {
    words: Vec<u64>,
}

impl Bits {
    fn zeroed(bits: usize) -> Self {
        Bits { words: vec![0; bits.div_ceil(64)] }
    }

    fn from_set(set: &ClopenSet) -> Self {
        Bits { words: set.words().to_vec() }
    }

    #[inline]
    fn get(&self, i: u64) -> bool {
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: u64) {
        self.words[(i / 64) as usize] |= 1 << (i % 64);
    }

    #[inline]
    fn clear(&mut self, i: u64) {
        self.words[(i / 64) as usize] &= !(1 << (i % 64));
    }

    fn iter_atoms(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros() as u64;
                    rest &= rest - 1;
                    Some(wi as u64 * 64 + b)
                }
            })
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum DescentMode {
    Full,
    Fast,
}

struct SearchState<'a> {
    prep: &'a Prepared,
    q_bits: Bits,
    m_bits: Bits,
    m_atoms: Vec<u64>,
    /// `c[slot] = a[slot] + b[slot]`, scaled by `2^(n+1)`.
    c: Vec<i64>,
}

impl<'a> SearchState<'a> {
    fn new(prep: &'a Prepared, mut m_atoms: Vec<u64>) -> Self {
        debug_assert_eq!(m_atoms.len() as u64, prep.k);
        m_atoms.sort_unstable();
        let bits = prep.q_prime.bit_len();
        let q_bits = Bits::from_set(&prep.q_prime);
        let mut m_bits = Bits::zeroed(bits);
        let mut c = prep.a.clone();
        for &atom in &m_atoms {
            debug_assert!(q_bits.get(atom));
            m_bits.set(atom);
            for (slot, m) in (prep.t + 1..=prep.n).enumerate() {
                c[slot] += sign_at(atom, m);
            }
        }
        SearchState { prep, q_bits, m_bits, m_atoms, c }
    }

    #[inline]
    fn available(&self, idx: u64) -> bool {
        self.q_bits.get(idx) && !self.m_bits.get(idx)
    }

    fn s_scaled(&self) -> i128 {
        self.c.iter().map(|&x| (x as i128) * (x as i128)).sum()
    }

    fn delta(&self, u_idx: u64, v_idx: u64) -> i64 {
        let mut d = 0i64;
        for (slot, m) in (self.prep.t + 1..=self.prep.n).enumerate() {
            let u = sign_at(u_idx, m);
            let v = sign_at(v_idx, m);
            if u != v {
                d += 4 - 4 * u * self.c[slot];
            }
        }
        d
    }

    /// Best strictly improving swap under the exact lowest-(out, in)
    /// tie-break, or None at a local optimum. Both modes compute the same
    /// answer; the fast mode prunes via per-coordinate separability.
    fn best_swap(&self, mode: DescentMode) -> Option<(i64, u64, u64)> {
        let mut best: Option<(i64, u64, u64)> = None;
        for &u_idx in &self.m_atoms {
            let per_u = match mode {
                DescentMode::Full => self.best_in_for_out_scan(u_idx),
                DescentMode::Fast => self.best_in_for_out_fast(u_idx),
            };
            if let Some((d, v_idx)) = per_u {
                debug_assert!(d < 0);
                let cand = (d, u_idx, v_idx);
                if best.map_or(true, |b| cand < b) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    /// Reference scan: every available in-atom, ascending.
    fn best_in_for_out_scan(&self, u_idx: u64) -> Option<(i64, u64)> {
        let mut best: Option<(i64, u64)> = None;
        for v_idx in self.q_bits.iter_atoms() {
            if self.m_bits.get(v_idx) {
                continue;
            }
            let d = self.delta(u_idx, v_idx);
            if d < best.map_or(0, |(bd, _)| bd) {
                best = Some((d, v_idx));
            }
        }
        best
    }

    /// Separable shortcut. The swap gain decomposes over coordinates as
    /// `delta = sum over flipped m of (4 - 4·u_m·c_m)`, so the ideal
    /// in-pattern flips exactly the negative terms and is free on the zero
    /// terms. Candidates realizing the ideal are enumerated in ascending
    /// index order; if none is present in `Q' \ M` the exact scan decides.
    fn best_in_for_out_fast(&self, u_idx: u64) -> Option<(i64, u64)> {
        let prep = self.prep;
        let mut ideal = 0i64;
        let mut forced_flip = 0u64;
        let mut free_positions: Vec<u32> = (0..=prep.t).collect();
        for (slot, m) in (prep.t + 1..=prep.n).enumerate() {
            let u = sign_at(u_idx, m);
            let w = 4 - 4 * u * self.c[slot];
            if w < 0 {
                ideal += w;
                forced_flip |= 1 << m;
            } else if w == 0 {
                free_positions.push(m);
            }
        }
        if ideal >= 0 {
            return None;
        }
        let mut base = u_idx ^ forced_flip;
        for &pos in &free_positions {
            base &= !(1u64 << pos);
        }
        const ENUMERATION_CAP: u64 = 256;
        let combos = 1u64 << free_positions.len().min(63);
        for c in 0..combos.min(ENUMERATION_CAP) {
            let mut idx = base;
            for (bit, &pos) in free_positions.iter().enumerate() {
                if (c >> bit) & 1 == 1 {
                    idx |= 1 << pos;
                }
            }
            if self.available(idx) {
                return Some((ideal, idx));
            }
        }
        // No atom realizes the ideal pattern; the exact scan decides.
        self.best_in_for_out_scan(u_idx)
    }

    fn apply(&mut self, u_idx: u64, v_idx: u64) {
        self.m_bits.clear(u_idx);
        self.m_bits.set(v_idx);
        let pos = self.m_atoms.binary_search(&u_idx).expect("out-atom is in M");
        self.m_atoms.remove(pos);
        let ins = self.m_atoms.binary_search(&v_idx).unwrap_err();
        self.m_atoms.insert(ins, v_idx);
        for (slot, m) in (self.prep.t + 1..=self.prep.n).enumerate() {
            self.c[slot] += sign_at(v_idx, m) - sign_at(u_idx, m);
        }
    }

    /// Run steepest descent to a local optimum; returns the swap count.
    fn descend(&mut self, mode: DescentMode) -> u64 {
        let mut swaps = 0u64;
        while let Some((_, u_idx, v_idx)) = self.best_swap(mode) {
            self.apply(u_idx, v_idx);
            swaps += 1;
        }
        swaps
    }
}

pub(crate) fn choose_mode(k: u64, q_count: u64) -> DescentMode {
    if (k as u128) * ((q_count - k) as u128) <= 1 << 18 {
        DescentMode::Full
    } else {
        DescentMode::Fast
    }
}

fn lowest_k_atoms(prep: &Prepared) -> Vec<u64> {
    prep.q_prime.iter_atoms().take(prep.k as usize).collect()
}

fn random_k_atoms(prep: &Prepared, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u64> {
    let ranks = sample::distinct_below(rng, prep.q_count, prep.k as usize);
    let mut out = Vec::with_capacity(prep.k as usize);
    let mut next = 0usize;
    for (rank, atom) in prep.q_prime.iter_atoms().enumerate() {
        if next < ranks.len() && ranks[next] == rank as u64 {
            out.push(atom);
            next += 1;
        }
    }
    debug_assert_eq!(out.len() as u64, prep.k);
    out
}

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n.saturating_sub(k));
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for i in 0..k {
        num *= BigUint::from(n - i);
        den *= BigUint::from(i + 1);
    }
    num / den
}

fn scaled_to_rat(x: i64, n: u32) -> Rat {
    Rat::dyadic(x, -(n as i64) - 1)
}

fn s_scaled_to_rat(s: i128, n: u32) -> Rat {
    Rat::from_big(num::BigInt::from(s), num::BigInt::from(1)) * Rat::pow2(-2 * (n as i64 + 1))
}

/// Exact score of a candidate set against an instance, from raw masks.
pub fn s_score(m_set: &ClopenSet, inst: &Instance, cfg: &Config) -> Result<Rat, TalagrandError> {
    let prep = prepare_with(inst, cfg, false)?;
    let mr = m_set.canonicalize().refine_to(prep.n);
    let mut s = Rat::zero();
    for m in prep.t + 1..=prep.n {
        let b = mr.balance(m);
        let a = scaled_to_rat(prep.a[(m - prep.t - 1) as usize], prep.n);
        s += &(&a + &b).square();
    }
    Ok(s)
}

fn build_report(prep: &Prepared, inst: &Instance, m_atoms: &[u64], trace: SearchTrace) -> Report {
    let m_set = ClopenSet::from_atom_indices(prep.n, m_atoms);
    let union = m_set.join(&prep.z_eff);
    let zr = prep.z_eff.canonicalize().refine_to(prep.n);
    let rr = prep.r_eff.canonicalize().refine_to(prep.n);
    let mut per_m = Vec::with_capacity(prep.coords);
    let mut met = true;
    for m in prep.t + 1..=prep.n {
        let a = scaled_to_rat(zr.balance_scaled(m) - rr.balance_scaled(m), prep.n);
        let b = m_set.balance(m);
        let psi_val = psi(&union, &prep.r_eff, m);
        let bound = &inst.eta / Rat::from_int(m as i64);
        let ok = psi_val <= bound;
        met &= ok;
        per_m.push(PerCoordinate { m, a, b, psi: psi_val, bound, ok });
    }
    let s_scaled: i128 = {
        let mut c = prep.a.clone();
        for &atom in m_atoms {
            for (slot, m) in (prep.t + 1..=prep.n).enumerate() {
                c[slot] += sign_at(atom, m);
            }
        }
        c.iter().map(|&x| (x as i128) * (x as i128)).sum()
    };
    Report {
        m_set: m_set.canonicalize(),
        eta_prime: prep.eta_prime.clone(),
        s_score: s_scaled_to_rat(s_scaled, prep.n),
        per_m,
        verdict: if met { Verdict::BoundMet } else { Verdict::BoundMissed },
        trace,
    }
}

/// Steepest-descent solve with seeded restarts. On a missed bound the
/// search escalates to the exhaustive oracle when the candidate count fits
/// the budget; otherwise the verdict stands with its trace.
pub fn solve(inst: &Instance, seed: u64, budget: &Budget, cfg: &Config) -> Result<Report, TalagrandError> {
    let prep = prepare(inst, cfg)?;
    let mode = choose_mode(prep.k, prep.q_count);
    solve_prepared(inst, &prep, mode, seed, budget)
}

#[cfg(test)]
pub(crate) fn solve_with_mode(
    inst: &Instance,
    mode: DescentMode,
    seed: u64,
    budget: &Budget,
    cfg: &Config,
) -> Result<Report, TalagrandError> {
    let prep = prepare(inst, cfg)?;
    solve_prepared(inst, &prep, mode, seed, budget)
}

fn solve_prepared(
    inst: &Instance,
    prep: &Prepared,
    mode: DescentMode,
    seed: u64,
    budget: &Budget,
) -> Result<Report, TalagrandError> {
    let mut best: Option<(i128, Vec<u64>, u32)> = None;
    let mut swap_count = 0u64;
    for restart in 0..=budget.restarts {
        let start = if restart == 0 {
            lowest_k_atoms(prep)
        } else {
            let mut rng = sample::sub_rng(seed, restart as u64);
            random_k_atoms(prep, &mut rng)
        };
        let mut state = SearchState::new(prep, start);
        swap_count += state.descend(mode);
        let s = state.s_scaled();
        if best.as_ref().map_or(true, |(bs, _, _)| s < *bs) {
            best = Some((s, state.m_atoms.clone(), restart));
        }
        if s == 0 {
            break;
        }
    }
    let (local_s, m_atoms, best_restart) = best.expect("at least one start runs");
    let mut trace = SearchTrace {
        seed,
        restarts_run: budget.restarts + 1,
        best_restart,
        swap_count,
        convergence: "local-optimum".to_owned(),
        local_s: s_scaled_to_rat(local_s, prep.n),
        escalated: false,
        oracle_candidates: None,
    };
    let report = build_report(prep, inst, &m_atoms, trace.clone());
    if report.verdict == Verdict::BoundMet {
        return Ok(report);
    }
    // Missed: adopt the global minimizer when enumeration fits the budget.
    let count = binomial(prep.q_count, prep.k);
    if count <= BigUint::from(budget.oracle_cap) {
        let oracle_atoms = oracle_minimizer(prep);
        trace.escalated = true;
        trace.convergence = "exhaustive".to_owned();
        trace.oracle_candidates = Some(count.to_string());
        return Ok(build_report(prep, inst, &oracle_atoms, trace));
    }
    trace.oracle_candidates = Some(count.to_string());
    Ok(build_report(prep, inst, &m_atoms, trace))
}

/// Replay the local-optimality certificate on a final set: no single swap
/// lowers the score. Exact, via the reference scan.
pub fn verify_local_optimum(inst: &Instance, m_set: &ClopenSet, cfg: &Config) -> Result<bool, TalagrandError> {
    let prep = prepare(inst, cfg)?;
    let atoms: Vec<u64> = m_set.canonicalize().refine_to(prep.n).iter_atoms().collect();
    let state = SearchState::new(&prep, atoms);
    Ok(state.m_atoms.iter().all(|&u| state.best_in_for_out_scan(u).is_none()))
}

/// Global minimizer by lexicographic combination enumeration; ties keep the
/// first (lexicographically smallest) combination.
fn oracle_minimizer(prep: &Prepared) -> Vec<u64> {
    let atoms: Vec<u64> = prep.q_prime.iter_atoms().collect();
    let k = prep.k as usize;
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best: Option<(i128, Vec<u64>)> = None;
    loop {
        let chosen: Vec<u64> = combo.iter().map(|&i| atoms[i]).collect();
        let mut c = prep.a.clone();
        for &atom in &chosen {
            for (slot, m) in (prep.t + 1..=prep.n).enumerate() {
                c[slot] += sign_at(atom, m);
            }
        }
        let s: i128 = c.iter().map(|&x| (x as i128) * (x as i128)).sum();
        if best.as_ref().map_or(true, |(bs, _)| s < *bs) {
            best = Some((s, chosen));
        }
        // Next combination in lexicographic order.
        let mut i = k;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if combo[i] != i + atoms.len() - k {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break true;
            }
        };
        if !advanced {
            return best.expect("at least one candidate").1;
        }
    }
}

/// Exhaustive ground truth: enumerate every candidate subset when the count
/// fits under `cap`.
pub fn exhaustive_oracle(inst: &Instance, cap: u64, cfg: &Config) -> Result<Report, TalagrandError> {
    let prep = prepare(inst, cfg)?;
    let count = binomial(prep.q_count, prep.k);
    if count > BigUint::from(cap) {
        return Err(TalagrandError::InfeasibleCount { count: count.to_string(), cap });
    }
    let atoms = oracle_minimizer(&prep);
    let trace = SearchTrace {
        seed: 0,
        restarts_run: 0,
        best_restart: 0,
        swap_count: 0,
        convergence: "exhaustive".to_owned(),
        local_s: Rat::zero(),
        escalated: false,
        oracle_candidates: Some(count.to_string()),
    };
    let mut report = build_report(&prep, inst, &atoms, trace);
    report.trace.local_s = report.s_score.clone();
    Ok(report)
}

/// The coordinate-flip involution on `(t, n]`: atom index bits `t+1..=n`
/// invert; a measure-preserving homeomorphism at level `n`.
pub fn flip_involution(set: &ClopenSet, t: u32, n: u32) -> ClopenSet {
    let refined = set.canonicalize().refine_to(n);
    let flip = ((1u64 << (n + 1)) - 1) ^ ((1u64 << (t + 1)) - 1);
    let indices: Vec<u64> = refined.iter_atoms().map(|i| i ^ flip).collect();
    ClopenSet::from_atom_indices(n, &indices)
}

/// `(1 - xi^2)^2 · min(1/3, 1/C)` with `C = 1`: the success probability
/// floor for the anti-concentration step.
pub fn zeta(xi: &Rat) -> Rat {
    (Rat::one() - xi.square()).square() * Rat::ratio(1, 3)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PzMode {
    Enumerate,
    Sample { count: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PzReport {
    pub xi: Rat,
    pub zeta: Rat,
    pub s_score: Rat,
    /// Exact probability under ENUMERATE; a seeded frequency (hits/draws)
    /// under SAMPLE, flagged by `estimate`.
    pub lhs_probability: Rat,
    pub estimate: bool,
    pub sample_seed: Option<u64>,
    pub omega_atoms: u64,
    pub lambda_omega: Rat,
    pub lambda_g: Rat,
    pub pass: bool,
    /// All summands vanish, so the strict threshold is unreachable; the
    /// anti-concentration step is never needed in that case.
    pub degenerate_zero_score: bool,
}

/// Check the anti-concentration inequality on the flip-overlap region
/// `Omega = (Q' \ M) ∩ T[Q' \ M]`: the probability that the signed sum
/// `sum over m of x_m(y)·(b_m + a_m)` exceeds `xi·sqrt(S(M))` in absolute
/// value is greater than `zeta(xi)`. Square-root comparisons are done by
/// exact squaring.
pub fn paley_zygmund_check(
    inst: &Instance,
    m_set: &ClopenSet,
    xi: &Rat,
    mode: &PzMode,
    cfg: &Config,
) -> Result<PzReport, TalagrandError> {
    if !xi.is_positive() || *xi >= Rat::one() {
        return Err(TalagrandError::XiOutOfRange);
    }
    let prep = prepare_with(inst, cfg, false)?;
    if prep.n == prep.t {
        return Err(TalagrandError::NoCoordinates { t: prep.t, n: prep.n });
    }
    let mr = m_set.canonicalize().refine_to(prep.n);
    let free = prep.q_prime.difference(&mr).canonicalize().refine_to(prep.n);
    let omega = free.meet(&flip_involution(&free, prep.t, prep.n)).canonicalize().refine_to(prep.n);
    if omega.is_empty() {
        return Err(TalagrandError::OmegaEmpty);
    }

    let mut c = prep.a.clone();
    for (slot, m) in (prep.t + 1..=prep.n).enumerate() {
        c[slot] += mr.balance_scaled(m);
    }
    let s_scaled: i128 = c.iter().map(|&x| (x as i128) * (x as i128)).sum();
    let degenerate = s_scaled == 0;

    // |sum_m x_m c_m| > xi · sqrt(S) compared as squares in the scaled
    // integers: dot^2 · xi_den^2 > xi_num^2 · S_scaled.
    let xi_num2 = xi.numer() * xi.numer();
    let xi_den2 = xi.denom() * xi.denom();
    let rhs = num::BigInt::from(s_scaled) * &xi_num2;
    let exceeds = |atom: u64| -> bool {
        let dot: i128 = (prep.t + 1..=prep.n)
            .enumerate()
            .map(|(slot, m)| (sign_at(atom, m) * c[slot]) as i128)
            .sum();
        num::BigInt::from(dot * dot) * &xi_den2 > rhs
    };

    let omega_atoms = omega.popcount();
    let (lhs_probability, estimate, sample_seed) = match mode {
        PzMode::Enumerate => {
            let hits = omega.iter_atoms().filter(|&a| exceeds(a)).count() as i64;
            (Rat::from_int(hits) / Rat::from_int(omega_atoms as i64), false, None)
        }
        PzMode::Sample { count, seed } => {
            let atoms: Vec<u64> = omega.iter_atoms().collect();
            let mut rng = sample::rng(*seed);
            let mut hits = 0i64;
            for _ in 0..*count {
                let a = atoms[sample::below(&mut rng, atoms.len() as u64) as usize];
                if exceeds(a) {
                    hits += 1;
                }
            }
            (Rat::from_int(hits) / Rat::from_int(*count as i64), true, Some(*seed))
        }
    };

    let zeta_val = zeta(xi);
    let pass = lhs_probability > zeta_val;
    Ok(PzReport {
        xi: xi.clone(),
        zeta: zeta_val,
        s_score: s_scaled_to_rat(s_scaled, prep.n),
        lhs_probability,
        estimate,
        sample_seed,
        omega_atoms,
        lambda_omega: omega.lambda(),
        lambda_g: inst.g.lambda(),
        pass,
        degenerate_zero_score: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Config {
        Config::default()
    }

    fn v(m: u32, i: u8) -> ClopenSet {
        ClopenSet::coordinate(m, i)
    }

    /// A relaxed instance on a level-t block with empty side sets.
    fn block_instance(t: u32, n: u32, eta: Rat) -> Instance {
        let g = AtomId::new(t, 0);
        Instance {
            t,
            eta,
            n,
            p: ClopenSet::empty(),
            r: ClopenSet::empty(),
            z: ClopenSet::empty(),
            q: g.to_set(),
            g,
            relaxed: true,
        }
    }

    #[test]
    fn n_zero_values() {
        assert_eq!(n_zero(1, &Rat::pow2(-13)), 28);
        assert_eq!(n_zero(1, &Rat::one()), 1);
        assert_eq!(n_zero(5, &Rat::from_int(1000)), 5);
    }

    #[test]
    fn eta_prime_selection() {
        assert_eq!(select_eta_prime(&Rat::ratio(5, 16), 3).unwrap(), Rat::ratio(1, 4));
        assert_eq!(select_eta_prime(&Rat::ratio(1, 8), 4).unwrap(), Rat::ratio(3, 32));
        assert!(matches!(
            select_eta_prime(&Rat::ratio(1, 32), 3),
            Err(TalagrandError::EtaPrimeUnselectable { .. })
        ));
    }

    #[test]
    fn s_score_examples() {
        // Z = R makes every a_m vanish; the empty set scores zero.
        let mut inst = block_instance(1, 4, Rat::ratio(1, 4));
        inst.z = v(3, 0);
        inst.r = v(3, 0);
        assert_eq!(s_score(&ClopenSet::empty(), &inst, &cfg()).unwrap(), Rat::zero());

        // A single atom contributes one granule at every coordinate:
        // S = (n - t) · 4^-(n+1).
        let inst = block_instance(1, 4, Rat::ratio(1, 4));
        let single = AtomId::new(4, 0).to_set();
        assert_eq!(s_score(&single, &inst, &cfg()).unwrap(), Rat::from_int(3) * Rat::pow2(-10));
    }

    #[test]
    fn strict_mode_scale_refusal_names_floor() {
        let g = AtomId::new(1, 0);
        let inst = Instance {
            t: 1,
            eta: Rat::pow2(-13),
            n: 28,
            p: ClopenSet::empty(),
            r: ClopenSet::empty(),
            z: ClopenSet::empty(),
            q: g.to_set(),
            g,
            relaxed: false,
        };
        match inst.validate(&cfg()) {
            Err(TalagrandError::Scale(r)) => assert_eq!(r.required_level, 28),
            other => panic!("expected scale refusal, got {other:?}"),
        }
    }

    #[test]
    fn strict_mode_floor_enforced() {
        let g = AtomId::new(1, 0);
        let inst = Instance {
            t: 1,
            eta: Rat::pow2(-13),
            n: 20,
            p: ClopenSet::empty(),
            r: ClopenSet::empty(),
            z: ClopenSet::empty(),
            q: g.to_set(),
            g,
            relaxed: false,
        };
        assert!(matches!(
            inst.validate(&cfg()),
            Err(TalagrandError::LevelBelowFloor { n_zero: 28, .. })
        ));
    }

    #[test]
    fn relaxed_block_solve_meets_bound() {
        // Eight atoms, seven chosen: the leftover pattern bounds every
        // coordinate balance by one granule, within eta/m for all m.
        let inst = block_instance(1, 4, Rat::ratio(1, 4));
        let report = solve(&inst, 1, &Budget::default(), &cfg()).unwrap();
        assert_eq!(report.eta_prime, Rat::ratio(7, 32));
        assert_eq!(report.m_set.popcount(), 7);
        assert_eq!(report.verdict, Verdict::BoundMet);
        for pm in &report.per_m {
            assert_eq!(pm.psi, (&pm.a + &pm.b).abs());
        }
        assert!(report.m_set.is_subset_of(&inst.q));
        assert!(verify_local_optimum(&inst, &report.m_set, &cfg()).unwrap());
    }

    #[test]
    fn sibling_pairs_zero_the_top_coordinate() {
        // Sibling atoms differ exactly in the top coordinate bit, so a
        // union of such pairs balances it exactly.
        let paired = ClopenSet::from_atom_indices(4, &[0, 16, 1, 17]);
        assert_eq!(paired.balance(4), Rat::zero());
        let unpaired = ClopenSet::from_atom_indices(4, &[0, 16, 1]);
        assert_eq!(unpaired.balance(4).abs(), Rat::pow2(-5));
    }

    #[test]
    fn oracle_never_loses_to_the_solver() {
        let mut r = sample::rng(99);
        for trial in 0..25u64 {
            let n = 4u32;
            let t = 1u32;
            let q = v(0, 0);
            let z = sample::subset_of(&mut r, &q.refine_to(n));
            let g = AtomId::new(t, 0);
            let inst = Instance {
                t,
                eta: Rat::ratio(1, 4),
                n,
                p: ClopenSet::empty(),
                r: ClopenSet::empty(),
                z,
                q: q.clone(),
                g,
                relaxed: true,
            };
            let budget = Budget { restarts: 2, oracle_cap: 0 };
            let solve_rep = match solve(&inst, trial, &budget, &cfg()) {
                Ok(rep) => rep,
                Err(TalagrandError::EmptyQPrime | TalagrandError::InsufficientAtoms { .. }) => {
                    continue
                }
                Err(e) => panic!("{e}"),
            };
            let oracle_rep = exhaustive_oracle(&inst, 1_000_000, &cfg()).unwrap();
            assert!(
                oracle_rep.s_score <= solve_rep.s_score,
                "oracle {} beat by solver {}",
                oracle_rep.s_score,
                solve_rep.s_score
            );
        }
    }

    #[test]
    fn descent_modes_agree_exactly() {
        let mut r = sample::rng(7);
        for trial in 0..20u64 {
            let n = 5u32;
            let q = v(0, 0);
            let z = sample::subset_of(&mut r, &q.refine_to(n));
            let g = AtomId::new(1, 0);
            let inst = Instance {
                t: 1,
                eta: Rat::ratio(1, 4),
                n,
                p: ClopenSet::empty(),
                r: ClopenSet::empty(),
                z,
                q,
                g,
                relaxed: true,
            };
            let budget = Budget { restarts: 1, oracle_cap: 0 };
            let full = solve_with_mode(&inst, DescentMode::Full, trial, &budget, &cfg());
            let fast = solve_with_mode(&inst, DescentMode::Fast, trial, &budget, &cfg());
            match (full, fast) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.m_set, b.m_set);
                    assert_eq!(a.s_score, b.s_score);
                    assert_eq!(a.trace.swap_count, b.trace.swap_count);
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!("modes diverged: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn zeta_at_one_quarter() {
        assert_eq!(zeta(&Rat::ratio(1, 4)), Rat::ratio(75, 256));
        assert_eq!(zeta(&Rat::ratio(1, 4)), Rat::ratio(225, 256) * Rat::ratio(1, 3));
    }

    #[test]
    fn pz_single_coordinate_probability_one() {
        // One coordinate in (t, n] and a nonzero summand: every point of
        // the overlap region exceeds the threshold, so the probability is 1.
        let mut inst = block_instance(1, 2, Rat::ratio(1, 2));
        inst.q = ClopenSet::full();
        inst.z = AtomId::new(2, 0).to_set();
        let m_set = ClopenSet::empty();
        let rep = paley_zygmund_check(&inst, &m_set, &Rat::ratio(1, 4), &PzMode::Enumerate, &cfg())
            .unwrap();
        assert!(!rep.degenerate_zero_score);
        assert_eq!(rep.lhs_probability, Rat::one());
        assert!(rep.pass);
    }

    #[test]
    fn pz_sampling_is_deterministic() {
        let mut inst = block_instance(1, 4, Rat::ratio(1, 4));
        inst.q = ClopenSet::full();
        inst.z = AtomId::new(4, 0).to_set();
        let m_set = ClopenSet::empty();
        let mode = PzMode::Sample { count: 200, seed: 5 };
        let a = paley_zygmund_check(&inst, &m_set, &Rat::ratio(1, 4), &mode, &cfg()).unwrap();
        let b = paley_zygmund_check(&inst, &m_set, &Rat::ratio(1, 4), &mode, &cfg()).unwrap();
        assert_eq!(a, b);
        assert!(a.estimate);
    }

    #[test]
    fn flip_involution_is_involutive_and_measure_preserving() {
        let mut r = sample::rng(21);
        for _ in 0..20 {
            let s = sample::clopen(&mut r, 6);
            let f = flip_involution(&s, 1, 6);
            assert_eq!(f.lambda(), s.lambda());
            assert_eq!(flip_involution(&f, 1, 6), s);
        }
    }

    #[test]
    fn determinism_of_solve() {
        let inst = block_instance(1, 4, Rat::ratio(1, 4));
        let a = solve(&inst, 123, &Budget::default(), &cfg()).unwrap();
        let b = solve(&inst, 123, &Budget::default(), &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swap_identity_under_recomputation() {
        // b_m of a swapped set recomputed from the mask equals
        // b_m + 2^-(n+1)·(x_m(V) - x_m(U)) for every coordinate.
        let mut r = sample::rng(31);
        for _ in 0..40 {
            let n = 5u32;
            let base = sample::clopen_nonempty(&mut r, n).refine_to(n);
            let atoms = base.atom_indices();
            if atoms.len() < 2 {
                continue;
            }
            let u = atoms[sample::below(&mut r, atoms.len() as u64) as usize];
            let complement = base.complement().refine_to(n);
            let outside = complement.atom_indices();
            if outside.is_empty() {
                continue;
            }
            let w = outside[sample::below(&mut r, outside.len() as u64) as usize];
            let swapped_indices: Vec<u64> =
                atoms.iter().copied().filter(|&x| x != u).chain([w]).collect();
            let swapped = ClopenSet::from_atom_indices(n, &swapped_indices);
            for m in 0..=n {
                let expected = base.balance(m)
                    + Rat::pow2(-(n as i64) - 1)
                        * Rat::from_int(sign_at(w, m) - sign_at(u, m));
                assert_eq!(swapped.balance(m), expected);
            }
        }
    }
}
