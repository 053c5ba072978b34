//! Clopen subsets of the Cantor space `2^N` at finite levels.
//!
//! The finite algebra at level `n` is generated by the first `n + 1`
//! coordinate cylinders and has `2^(n+1)` atoms. A [`ClopenSet`] stores a
//! level together with a bit mask over those atoms.
//!
//! Atom index convention (little-endian): bit `j` of the atom index equals
//! the coordinate value `x(j)` shared by every point of the atom. Two
//! consequences drive the whole representation:
//!
//! * the coordinate half `V_m^0 = {x : x(m) = 0}` is a stride pattern in the
//!   mask (for `m` at the top of the level it is literally the lower half),
//! * refining a set one level deeper duplicates the mask, so the canonical
//!   (minimal-level) form of a set is a prefix of any refinement.

use crate::config::{Config, ScaleReport};
use crate::rational::Rat;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::hash::{Hash, Hasher};

/// Hard representational limit: atom indices must fit comfortably in `u64`.
/// Practical limits are far lower and enforced via [`Config::max_level`].
pub const MAX_REPRESENTABLE_LEVEL: u32 = 56;

/// In-word patterns of `V_m^0` for `m < 6`: bit `i` is set iff bit `m` of
/// `i` is zero. For `m >= 6` the word index decides instead.
const V0_WORD_PATTERNS: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

#[inline]
fn bits_at_level(level: u32) -> usize {
    1usize << (level + 1)
}

#[inline]
fn words_for_bits(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Mask selecting the live bits of the final word (all-ones when full).
#[inline]
fn last_word_mask(bits: usize) -> u64 {
    let rem = bits % 64;
    if rem == 0 {
        u64::MAX
    } else {
        (1u64 << rem) - 1
    }
}

/// The atom of the level-`level` algebra with the given index; equivalently
/// the cylinder on the coordinate word read off the index bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct AtomId {
    pub level: u32,
    pub index: u64,
}

impl AtomId {
    pub fn new(level: u32, index: u64) -> Self {
        assert!(level <= MAX_REPRESENTABLE_LEVEL, "atom level too large");
        assert!(
            index < (1u64 << (level + 1)),
            "atom index {index} out of range at level {level}"
        );
        AtomId { level, index }
    }

    /// Coordinate word of the cylinder: `word()[j] = x(j)`, length `level + 1`.
    pub fn word(&self) -> Vec<u8> {
        (0..=self.level).map(|j| ((self.index >> j) & 1) as u8).collect()
    }

    /// Build from a coordinate word (index bits little-endian).
    pub fn from_word(word: &[u8]) -> Self {
        assert!(!word.is_empty() && word.len() <= MAX_REPRESENTABLE_LEVEL as usize + 1);
        let mut index = 0u64;
        for (j, &b) in word.iter().enumerate() {
            assert!(b <= 1, "coordinate values are bits");
            index |= (b as u64) << j;
        }
        AtomId { level: word.len() as u32 - 1, index }
    }

    pub fn to_set(&self) -> ClopenSet {
        ClopenSet::atom(*self)
    }

    pub fn lambda(&self) -> Rat {
        Rat::pow2(-(self.level as i64) - 1)
    }
}

/// A finite union of atoms at some level. All operations are exact.
///
/// The stored level is not required to be minimal; equality and hashing are
/// canonical (level-independent). Freshly computed results of set algebra
/// are always emitted in canonical form.
#[derive(Clone)]
pub struct ClopenSet {
    level: u32,
    words: Vec<u64>,
}

impl ClopenSet {
    fn from_words(level: u32, mut words: Vec<u64>) -> Self {
        let bits = bits_at_level(level);
        debug_assert_eq!(words.len(), words_for_bits(bits));
        if let Some(last) = words.last_mut() {
            *last &= last_word_mask(bits);
        }
        ClopenSet { level, words }
    }

    /// The empty set (canonical level 0).
    pub fn empty() -> Self {
        ClopenSet { level: 0, words: vec![0] }
    }

    /// The whole space (canonical level 0).
    pub fn full() -> Self {
        ClopenSet { level: 0, words: vec![0b11] }
    }

    /// The coordinate half `V_m^i = {x : x(m) = i}`, at its canonical level `m`.
    pub fn coordinate(m: u32, i: u8) -> Self {
        assert!(i <= 1);
        assert!(m <= MAX_REPRESENTABLE_LEVEL);
        let bits = bits_at_level(m);
        let half = bits / 2;
        let mut words = vec![0u64; words_for_bits(bits)];
        if half >= 64 {
            let hw = half / 64;
            let range = if i == 0 { 0..hw } else { hw..2 * hw };
            for w in &mut words[range] {
                *w = u64::MAX;
            }
        } else {
            let lo = (1u64 << half) - 1;
            words[0] = if i == 0 { lo } else { lo << half };
        }
        ClopenSet { level: m, words }
    }

    pub fn atom(id: AtomId) -> Self {
        let bits = bits_at_level(id.level);
        let mut words = vec![0u64; words_for_bits(bits)];
        words[(id.index / 64) as usize] |= 1u64 << (id.index % 64);
        ClopenSet { level: id.level, words }
    }

    pub fn from_atom_indices(level: u32, indices: &[u64]) -> Self {
        assert!(level <= MAX_REPRESENTABLE_LEVEL);
        let bits = bits_at_level(level);
        let mut words = vec![0u64; words_for_bits(bits)];
        for &i in indices {
            assert!((i as usize) < bits, "atom index {i} out of range at level {level}");
            words[(i / 64) as usize] |= 1u64 << (i % 64);
        }
        ClopenSet { level, words }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn bit_len(&self) -> usize {
        bits_at_level(self.level)
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.popcount() as usize == self.bit_len()
    }

    /// Membership of the atom with the given index at this set's level.
    pub fn get(&self, index: u64) -> bool {
        debug_assert!((index as usize) < self.bit_len());
        (self.words[(index / 64) as usize] >> (index % 64)) & 1 == 1
    }

    /// Does this set contain the atom `(level, index)`? Works in both
    /// directions: a coarser set contains a finer atom iff the atom's
    /// level-truncated index is a member; a finer set contains a coarser
    /// atom iff every refinement of the atom is a member.
    pub fn contains_atom_of(&self, level: u32, index: u64) -> bool {
        if level >= self.level {
            self.get(index & (self.bit_len() as u64 - 1))
        } else {
            let stride = 1u64 << (level + 1);
            let mut j = index;
            while (j as usize) < self.bit_len() {
                if !self.get(j) {
                    return false;
                }
                j += stride;
            }
            true
        }
    }

    /// `lambda(self ∩ [u])` exactly, for an atom `u` of any level.
    pub fn lambda_within_atom(&self, u: &AtomId) -> Rat {
        if u.level >= self.level {
            if self.get(u.index & (self.bit_len() as u64 - 1)) {
                u.lambda()
            } else {
                Rat::zero()
            }
        } else {
            let stride = 1u64 << (u.level + 1);
            let mut count = 0u64;
            let mut j = u.index;
            while (j as usize) < self.bit_len() {
                if self.get(j) {
                    count += 1;
                }
                j += stride;
            }
            Rat::dyadic(count as i64, -(self.level as i64) - 1)
        }
    }

    /// Product measure of the set: `popcount / 2^(level+1)`.
    pub fn lambda(&self) -> Rat {
        Rat::dyadic(self.popcount() as i64, -(self.level as i64) - 1)
    }

    fn halves_equal_at(&self, level: u32) -> bool {
        let half = 1usize << level;
        if half >= 64 {
            let hw = half / 64;
            (0..hw).all(|i| self.words[i] == self.words[i + hw])
        } else {
            let w = self.words[0];
            let m = (1u64 << half) - 1;
            (w & m) == ((w >> half) & m)
        }
    }

    /// The minimal level at which this set is a union of atoms.
    pub fn canonical_level(&self) -> u32 {
        let mut lvl = self.level;
        while lvl > 0 && self.halves_equal_at(lvl) {
            lvl -= 1;
        }
        lvl
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical_level() == self.level
    }

    /// The same set at its minimal level (a prefix of the current mask).
    pub fn canonicalize(&self) -> ClopenSet {
        let c = self.canonical_level();
        if c == self.level {
            return self.clone();
        }
        let bits = bits_at_level(c);
        let words = self.words[..words_for_bits(bits)].to_vec();
        ClopenSet::from_words(c, words)
    }

    /// The same set represented at a deeper level (mask duplication).
    pub fn refine_to(&self, target: u32) -> ClopenSet {
        assert!(target >= self.level, "refine_to goes to a deeper level");
        assert!(target <= MAX_REPRESENTABLE_LEVEL);
        if target == self.level {
            return self.clone();
        }
        let cur_bits = self.bit_len();
        let new_bits = bits_at_level(target);
        if cur_bits >= 64 {
            let copies = new_bits / cur_bits;
            let mut words = Vec::with_capacity(self.words.len() * copies);
            for _ in 0..copies {
                words.extend_from_slice(&self.words);
            }
            ClopenSet { level: target, words }
        } else {
            let mut w = self.words[0];
            let mut bits = cur_bits;
            while bits < 64 && bits < new_bits {
                w |= w << bits;
                bits *= 2;
            }
            if new_bits <= 64 {
                ClopenSet::from_words(target, vec![w])
            } else {
                ClopenSet { level: target, words: vec![w; new_bits / 64] }
            }
        }
    }

    fn zip(&self, other: &ClopenSet, f: impl Fn(u64, u64) -> u64) -> ClopenSet {
        let lvl = self.level.max(other.level);
        let a = self.refine_to(lvl);
        let b = other.refine_to(lvl);
        let words = a.words.iter().zip(&b.words).map(|(&x, &y)| f(x, y)).collect();
        ClopenSet::from_words(lvl, words).canonicalize()
    }

    pub fn meet(&self, other: &ClopenSet) -> ClopenSet {
        self.zip(other, |x, y| x & y)
    }

    pub fn join(&self, other: &ClopenSet) -> ClopenSet {
        self.zip(other, |x, y| x | y)
    }

    pub fn difference(&self, other: &ClopenSet) -> ClopenSet {
        self.zip(other, |x, y| x & !y)
    }

    pub fn symdiff(&self, other: &ClopenSet) -> ClopenSet {
        self.zip(other, |x, y| x ^ y)
    }

    pub fn complement(&self) -> ClopenSet {
        let words = self.words.iter().map(|&w| !w).collect();
        ClopenSet::from_words(self.level, words).canonicalize()
    }

    pub fn is_subset_of(&self, other: &ClopenSet) -> bool {
        let lvl = self.level.max(other.level);
        let a = self.refine_to(lvl);
        let b = other.refine_to(lvl);
        a.words.iter().zip(&b.words).all(|(&x, &y)| x & !y == 0)
    }

    pub fn is_disjoint_from(&self, other: &ClopenSet) -> bool {
        let lvl = self.level.max(other.level);
        let a = self.refine_to(lvl);
        let b = other.refine_to(lvl);
        a.words.iter().zip(&b.words).all(|(&x, &y)| x & y == 0)
    }

    /// Counts of member atoms inside `V_m^0` and `V_m^1`, for `m <= level`.
    pub fn balance_counts(&self, m: u32) -> (u64, u64) {
        assert!(m <= self.level);
        let mut c0 = 0u64;
        let mut c1 = 0u64;
        if m >= 6 {
            let sel = 1usize << (m - 6);
            for (wi, &w) in self.words.iter().enumerate() {
                let pc = w.count_ones() as u64;
                if wi & sel == 0 {
                    c0 += pc;
                } else {
                    c1 += pc;
                }
            }
        } else {
            let pat = V0_WORD_PATTERNS[m as usize];
            for &w in &self.words {
                c0 += (w & pat).count_ones() as u64;
                c1 += (w & !pat).count_ones() as u64;
            }
        }
        (c0, c1)
    }

    /// `(count in V_m^0) - (count in V_m^1)` in units of one level-`level`
    /// atom. Callers own the `2^-(level+1)` scale.
    pub fn balance_scaled(&self, m: u32) -> i64 {
        let (c0, c1) = self.balance_counts(m);
        c0 as i64 - c1 as i64
    }

    /// `lambda(A ∩ V_m^0) - lambda(A ∩ V_m^1)`, exactly. Zero for any `m`
    /// beyond the stored level: each atom then splits evenly across the
    /// deeper coordinate.
    pub fn balance(&self, m: u32) -> Rat {
        if m > self.level {
            return Rat::zero();
        }
        Rat::dyadic(self.balance_scaled(m), -(self.level as i64) - 1)
    }

    /// Coordinate asymmetry `phi_m(A) = |lambda(A ∩ V_m^0) - lambda(A ∩ V_m^1)|`.
    pub fn phi(&self, m: u32) -> Rat {
        self.balance(m).abs()
    }

    /// Indices of member atoms, ascending.
    pub fn iter_atoms(&self) -> impl Iterator<Item = u64> + '_ {
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

    pub fn atom_indices(&self) -> Vec<u64> {
        self.iter_atoms().collect()
    }

    /// Lowest-index member atom at this set's level, if any.
    pub fn first_atom(&self) -> Option<u64> {
        self.iter_atoms().next()
    }

    /// Canonical byte encoding (level LE, then mask bytes LSB-first); equal
    /// sets encode equally. Used for digests and deduplication keys.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let c = self.canonicalize();
        let mut out = Vec::with_capacity(4 + c.words.len() * 8);
        out.extend_from_slice(&c.level.to_le_bytes());
        let nbytes = c.bit_len().div_ceil(8);
        let mut bytes = Vec::with_capacity(c.words.len() * 8);
        for w in &c.words {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        bytes.truncate(nbytes);
        out.extend_from_slice(&bytes);
        out
    }
}

impl ClopenSet {
    /// Hex encoding of the mask, most significant nibble first: the mask is
    /// read as the integer `sum of 2^i` over member atom indices `i` and
    /// printed with enough digits to cover all `2^(level+1)` bits.
    pub fn mask_hex(&self) -> String {
        let bits = self.bit_len();
        let ndigits = bits.div_ceil(4);
        let mut out = String::with_capacity(ndigits);
        for pos in (0..ndigits).rev() {
            let bit = pos * 4;
            let word = self.words.get(bit / 64).copied().unwrap_or(0);
            let nib = (word >> (bit % 64)) & 0xf;
            out.push(char::from_digit(nib as u32, 16).unwrap());
        }
        out
    }

    /// Parse a mask from the hex form produced by [`ClopenSet::mask_hex`].
    pub fn from_mask_hex(level: u32, hex_str: &str) -> Result<Self, String> {
        if level > MAX_REPRESENTABLE_LEVEL {
            return Err(format!("level {level} beyond representable range"));
        }
        let bits = bits_at_level(level);
        let ndigits = bits.div_ceil(4);
        if hex_str.len() != ndigits {
            return Err(format!(
                "mask for level {level} needs exactly {ndigits} hex digits, got {}",
                hex_str.len()
            ));
        }
        let mut words = vec![0u64; words_for_bits(bits)];
        for (pos, ch) in hex_str.chars().rev().enumerate() {
            let nib = ch.to_digit(16).ok_or_else(|| format!("bad hex digit {ch:?}"))? as u64;
            let bit = pos * 4;
            words[bit / 64] |= nib << (bit % 64);
        }
        let set = ClopenSet { level, words };
        if set.words.last().copied().unwrap_or(0) & !last_word_mask(bits) != 0 {
            return Err("mask has bits beyond the atom range".to_owned());
        }
        Ok(set)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ClopenWire<'a> {
    level: u32,
    atoms: &'a str,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ClopenWireIn {
    level: u32,
    #[serde(default)]
    atoms: Option<String>,
    #[serde(default)]
    atom_list: Option<Vec<u64>>,
}

impl Serialize for ClopenSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let hex_mask = self.mask_hex();
        ClopenWire { level: self.level, atoms: &hex_mask }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClopenSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = ClopenWireIn::deserialize(deserializer)?;
        if wire.level > MAX_REPRESENTABLE_LEVEL {
            return Err(D::Error::custom(format!("level {} beyond representable range", wire.level)));
        }
        match (wire.atoms, wire.atom_list) {
            (Some(h), None) => {
                ClopenSet::from_mask_hex(wire.level, &h).map_err(D::Error::custom)
            }
            (None, Some(list)) => {
                let bits = bits_at_level(wire.level) as u64;
                for &i in &list {
                    if i >= bits {
                        return Err(D::Error::custom(format!(
                            "atom index {i} out of range at level {}",
                            wire.level
                        )));
                    }
                }
                Ok(ClopenSet::from_atom_indices(wire.level, &list))
            }
            (Some(_), Some(_)) => Err(D::Error::custom("give either atoms or atomList, not both")),
            (None, None) => Err(D::Error::custom("missing atoms (hex) or atomList")),
        }
    }
}

impl PartialEq for ClopenSet {
    fn eq(&self, other: &Self) -> bool {
        let c1 = self.canonical_level();
        if c1 != other.canonical_level() {
            return false;
        }
        let bits = bits_at_level(c1);
        let n_full = bits / 64;
        if bits >= 64 {
            if self.words[..n_full] != other.words[..n_full] {
                return false;
            }
            true
        } else {
            let m = last_word_mask(bits);
            self.words[0] & m == other.words[0] & m
        }
    }
}

impl Eq for ClopenSet {}

impl Hash for ClopenSet {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let c = self.canonical_level();
        c.hash(state);
        let bits = bits_at_level(c);
        if bits >= 64 {
            self.words[..bits / 64].hash(state);
        } else {
            (self.words[0] & last_word_mask(bits)).hash(state);
        }
    }
}

impl fmt::Debug for ClopenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pc = self.popcount();
        if pc <= 16 {
            write!(f, "ClopenSet(level={}, atoms={:?})", self.level, self.atom_indices())
        } else {
            write!(f, "ClopenSet(level={}, |atoms|={})", self.level, pc)
        }
    }
}

/// `psi_m(A, B)`: the gap between the coordinate balances of two sets.
pub fn psi(a: &ClopenSet, b: &ClopenSet, m: u32) -> Rat {
    (a.balance(m) - b.balance(m)).abs()
}

/// Level alignment. Fails below the canonical level or above the level cap.
pub fn normalize(set: &ClopenSet, target: u32, cfg: &Config) -> Result<ClopenSet, NormalizeError> {
    let minimal = set.canonical_level();
    if target < minimal {
        return Err(NormalizeError::BelowMinimalLevel { target, minimal });
    }
    if target > cfg.max_level {
        return Err(NormalizeError::Scale(ScaleReport::for_level(target, cfg)));
    }
    Ok(set.canonicalize().refine_to(target))
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum NormalizeError {
    #[error("target level {target} is below the minimal level {minimal} of the set")]
    BelowMinimalLevel { target: u32, minimal: u32 },
    #[error("{0}")]
    Scale(ScaleReport),
}

/// Boolean operations exposed as a single dispatchable surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgebraOp {
    Meet,
    Join,
    Complement,
    Difference,
    SymDiff,
}

impl AlgebraOp {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "meet" => AlgebraOp::Meet,
            "join" => AlgebraOp::Join,
            "complement" => AlgebraOp::Complement,
            "difference" => AlgebraOp::Difference,
            "symdiff" => AlgebraOp::SymDiff,
            _ => return None,
        })
    }

    pub fn is_unary(self) -> bool {
        matches!(self, AlgebraOp::Complement)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AlgebraError {
    #[error("operation {op:?} takes exactly {expected} argument(s)")]
    Arity { op: AlgebraOp, expected: usize },
}

/// Exact set algebra in canonical form; checks arity.
pub fn algebra(op: AlgebraOp, a: &ClopenSet, b: Option<&ClopenSet>) -> Result<ClopenSet, AlgebraError> {
    match (op, b) {
        (AlgebraOp::Complement, None) => Ok(a.complement()),
        (AlgebraOp::Complement, Some(_)) => Err(AlgebraError::Arity { op, expected: 1 }),
        (_, None) => Err(AlgebraError::Arity { op, expected: 2 }),
        (AlgebraOp::Meet, Some(b)) => Ok(a.meet(b)),
        (AlgebraOp::Join, Some(b)) => Ok(a.join(b)),
        (AlgebraOp::Difference, Some(b)) => Ok(a.difference(b)),
        (AlgebraOp::SymDiff, Some(b)) => Ok(a.symdiff(b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(m: u32, i: u8) -> ClopenSet {
        ClopenSet::coordinate(m, i)
    }

    #[test]
    fn lambda_of_halves_and_atoms() {
        assert_eq!(v(0, 0).lambda(), Rat::ratio(1, 2));
        assert_eq!(v(7, 1).lambda(), Rat::ratio(1, 2));
        assert_eq!(ClopenSet::empty().lambda(), Rat::zero());
        assert_eq!(ClopenSet::full().lambda(), Rat::one());
        assert_eq!(AtomId::new(2, 5).to_set().lambda(), Rat::ratio(1, 8));
    }

    #[test]
    fn refinement_preserves_point_set() {
        // V_0^0 refined to level 1 selects atoms {0, 2}: coordinate 0 stays 0.
        let r = v(0, 0).refine_to(1);
        assert_eq!(r.atom_indices(), vec![0, 2]);
        assert_eq!(r.lambda(), Rat::ratio(1, 2));
        assert_eq!(r, v(0, 0));
    }

    #[test]
    fn identity_and_round_trip_canonicalization() {
        let a = ClopenSet::from_atom_indices(2, &[1, 3, 6]);
        assert_eq!(a.refine_to(2), a);
        let r = a.refine_to(5);
        assert_eq!(r.canonical_level(), 2);
        assert_eq!(r.canonicalize(), a);
        assert_eq!(r, a);
    }

    #[test]
    fn meet_of_two_coordinate_halves() {
        // Enumerating the four level-1 atoms: only index 0 has x(0)=0 and x(1)=0.
        let got = v(0, 0).meet(&v(1, 0));
        assert_eq!(got.level(), 1);
        assert_eq!(got.atom_indices(), vec![0]);
    }

    #[test]
    fn complement_involution_and_symdiff_identity() {
        let a = ClopenSet::from_atom_indices(3, &[0, 2, 9, 10, 15]);
        assert_eq!(a.complement().complement(), a);
        assert_eq!(a.symdiff(&ClopenSet::empty()), a);
        assert_eq!(a.join(&a.complement()), ClopenSet::full());
        assert_eq!(a.meet(&a.complement()), ClopenSet::empty());
    }

    #[test]
    fn balance_and_phi_basics() {
        assert_eq!(ClopenSet::empty().phi(4), Rat::zero());
        // V_0^0 never meets V_0^1, so the full imbalance 1/2 shows at m=0.
        assert_eq!(v(0, 0).phi(0), Rat::ratio(1, 2));
        // Any level-0 set splits evenly across a deeper coordinate.
        assert_eq!(v(0, 0).phi(2), Rat::zero());
        assert_eq!(psi(&ClopenSet::empty(), &v(0, 0), 0), v(0, 0).phi(0));
        assert_eq!(psi(&v(0, 0), &v(0, 0), 3), Rat::zero());
    }

    #[test]
    fn balance_counts_match_across_word_boundary() {
        // Level 7 has 256 atoms = 4 words; check m below and above 6.
        let s = ClopenSet::from_atom_indices(7, &[0, 1, 64, 65, 128, 200, 255]);
        for m in 0..=7u32 {
            let mut c0 = 0u64;
            let mut c1 = 0u64;
            for i in s.atom_indices() {
                if (i >> m) & 1 == 0 {
                    c0 += 1;
                } else {
                    c1 += 1;
                }
            }
            assert_eq!(s.balance_counts(m), (c0, c1), "m={m}");
        }
    }

    #[test]
    fn normalize_errors() {
        let cfg = Config::default();
        let a = v(0, 0);
        let err = normalize(&a.refine_to(3), 0, &cfg);
        assert!(err.is_ok(), "level 0 is the canonical level of V_0^0");
        let quarter = v(0, 0).meet(&v(1, 0));
        match normalize(&quarter, 0, &cfg) {
            Err(NormalizeError::BelowMinimalLevel { minimal, .. }) => assert_eq!(minimal, 1),
            other => panic!("expected refusal, got {other:?}"),
        }
        match normalize(&quarter, cfg.max_level + 1, &cfg) {
            Err(NormalizeError::Scale(r)) => assert_eq!(r.required_level, cfg.max_level + 1),
            other => panic!("expected scale refusal, got {other:?}"),
        }
    }

    #[test]
    fn algebra_arity_checks() {
        let a = v(0, 0);
        assert!(algebra(AlgebraOp::Complement, &a, Some(&a)).is_err());
        assert!(algebra(AlgebraOp::Meet, &a, None).is_err());
    }

    #[test]
    fn subset_and_disjoint_across_levels() {
        let quarter = v(0, 0).meet(&v(1, 0));
        assert!(quarter.is_subset_of(&v(0, 0)));
        assert!(!v(0, 0).is_subset_of(&quarter));
        assert!(quarter.is_disjoint_from(&v(0, 1)));
        assert!(!quarter.is_disjoint_from(&v(1, 0)));
    }

    #[test]
    fn lambda_within_atom_strided() {
        let s = ClopenSet::from_atom_indices(4, &[0, 4, 8, 12, 16, 20, 24, 28, 1]);
        // Atom 0 of level 1: indices congruent to 0 mod 4.
        let u = AtomId::new(1, 0);
        assert_eq!(s.lambda_within_atom(&u), Rat::ratio(8, 32));
        // Finer atom than the set: membership decides.
        let fine = AtomId::new(6, 4);
        assert_eq!(s.lambda_within_atom(&fine), fine.lambda());
    }

    #[test]
    fn json_round_trip_and_atom_list_form() {
        let a = ClopenSet::from_atom_indices(2, &[0, 3, 5]);
        let j = serde_json::to_string(&a).unwrap();
        assert_eq!(j, r#"{"level":2,"atoms":"29"}"#); // bits {0,3,5} = 0x29
        let back: ClopenSet = serde_json::from_str(&j).unwrap();
        assert_eq!(back, a);
        let from_list: ClopenSet =
            serde_json::from_str(r#"{"level":2,"atomList":[0,3,5]}"#).unwrap();
        assert_eq!(from_list, a);
        // Level 0 uses a single hex digit.
        assert_eq!(serde_json::to_string(&ClopenSet::full()).unwrap(), r#"{"level":0,"atoms":"3"}"#);
        assert!(serde_json::from_str::<ClopenSet>(r#"{"level":0,"atoms":"7"}"#).is_err());
        assert!(serde_json::from_str::<ClopenSet>(r#"{"level":1,"atomList":[4]}"#).is_err());
    }

    #[test]
    fn additivity_of_lambda() {
        let a = ClopenSet::from_atom_indices(3, &[0, 1, 2, 9]);
        let b = ClopenSet::from_atom_indices(3, &[2, 9, 11]);
        assert_eq!(
            a.lambda() + b.lambda(),
            a.join(&b).lambda() + a.meet(&b).lambda()
        );
    }
}
