//! Observation patterns over `{0,1}^d` and the antichain machinery built on
//! the coordinatewise partial order.
//!
//! A [`Pattern`] is stored as a bitmask with bit `j` holding coordinate
//! `j + 1`. The textual form is a string of `0`/`1` characters whose leftmost
//! character is coordinate 1, so `"0110"` observes coordinates 2 and 3.
//!
//! Patterns order canonically by `(dim, bits)`. Every enumeration in the crate
//! uses that order so that scans over the lattice are reproducible.

use crate::error::{HamError, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

pub const MAX_DIM: usize = 24;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pattern {
    bits: u32,
    d: u8,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        Err(HamError::InvalidDimension(d))
    } else {
        Ok(())
    }
}

impl Pattern {
    pub fn from_bits(bits: u32, d: usize) -> Result<Self> {
        check_dim(d)?;
        if d < 32 && bits >> d != 0 {
            return Err(HamError::InvalidPattern(format!(
                "bits {bits:#b} exceed dimension {d}"
            )));
        }
        Ok(Pattern { bits, d: d as u8 })
    }

    /// `0_d`, the pattern that observes nothing.
    pub fn zeros(d: usize) -> Result<Self> {
        Self::from_bits(0, d)
    }

    /// `1_d`, the fully observed pattern.
    pub fn ones(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Pattern {
            bits: full_mask(d),
            d: d as u8,
        })
    }

    /// Unit pattern `e_j` (zero-based coordinate index).
    pub fn unit(j: usize, d: usize) -> Result<Self> {
        check_dim(d)?;
        if j >= d {
            return Err(HamError::InvalidPattern(format!(
                "coordinate {j} out of range for d = {d}"
            )));
        }
        Ok(Pattern {
            bits: 1 << j,
            d: d as u8,
        })
    }

    pub fn from_flags(flags: &[bool]) -> Result<Self> {
        check_dim(flags.len())?;
        let bits = flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .fold(0u32, |acc, (j, _)| acc | (1 << j));
        Ok(Pattern {
            bits,
            d: flags.len() as u8,
        })
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn d(self) -> usize {
        self.d as usize
    }

    /// Number of observed coordinates.
    #[inline]
    pub fn dim(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_set(self, j: usize) -> bool {
        j < self.d() && self.bits & (1 << j) != 0
    }

    pub fn is_zero(self) -> bool {
        self.bits == 0
    }

    /// Zero-based indices of the observed coordinates, ascending.
    pub fn coords(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.d()).filter(move |&j| bits & (1 << j) != 0)
    }

    fn same_dim(self, other: Pattern) -> Result<()> {
        if self.d != other.d {
            Err(HamError::DimensionMismatch {
                expected: self.d(),
                found: other.d(),
            })
        } else {
            Ok(())
        }
    }

    /// `self ⪯ other`: every coordinate observed in `self` is observed in `other`.
    pub fn preceq(self, other: Pattern) -> Result<bool> {
        self.same_dim(other)?;
        Ok(self.le_bits(other))
    }

    /// Strict precedence `self ≺ other`.
    pub fn precedes(self, other: Pattern) -> Result<bool> {
        self.same_dim(other)?;
        Ok(self.lt_bits(other))
    }

    #[inline]
    pub(crate) fn le_bits(self, other: Pattern) -> bool {
        self.bits & !other.bits == 0
    }

    #[inline]
    pub(crate) fn lt_bits(self, other: Pattern) -> bool {
        self.bits != other.bits && self.le_bits(other)
    }

    pub fn meet(self, other: Pattern) -> Result<Pattern> {
        self.same_dim(other)?;
        Ok(Pattern {
            bits: self.bits & other.bits,
            d: self.d,
        })
    }

    pub fn join(self, other: Pattern) -> Result<Pattern> {
        self.same_dim(other)?;
        Ok(Pattern {
            bits: self.bits | other.bits,
            d: self.d,
        })
    }

    /// All patterns `ω′ ⪯ self`, including `self` and `0_d`, in canonical order.
    pub fn sub_patterns(self) -> Vec<Pattern> {
        let mut out = Vec::with_capacity(1 << self.dim());
        let mut sub = self.bits;
        loop {
            out.push(Pattern {
                bits: sub,
                d: self.d,
            });
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & self.bits;
        }
        out.sort();
        out
    }

    /// All patterns strictly below `self`, in canonical order.
    pub fn strict_sub_patterns(self) -> Vec<Pattern> {
        let mut subs = self.sub_patterns();
        subs.pop();
        subs
    }

    /// Copy of `x` with the unobserved coordinates set to zero (`x ⊙ ω`).
    pub fn mask(self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| if self.is_set(j) { v } else { 0.0 })
            .collect()
    }
}

#[inline]
fn full_mask(d: usize) -> u32 {
    if d >= 32 {
        u32::MAX
    } else {
        (1u32 << d) - 1
    }
}

/// Every pattern in `{0,1}^d`, ordered by `(dim, bits)`.
pub fn all_patterns(d: usize) -> Result<Vec<Pattern>> {
    check_dim(d)?;
    let mut out: Vec<Pattern> = (0..=full_mask(d))
        .map(|bits| Pattern { bits, d: d as u8 })
        .collect();
    out.sort();
    Ok(out)
}

impl Ord for Pattern {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.d, self.dim(), self.bits).cmp(&(other.d, other.dim(), other.bits))
    }
}

impl PartialOrd for Pattern {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.d() {
            f.write_str(if self.is_set(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({self})")
    }
}

impl FromStr for Pattern {
    type Err = HamError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let flags = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(HamError::InvalidPattern(format!(
                    "'{s}' must consist of 0/1 characters"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Pattern::from_flags(&flags)
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of patterns sharing one ambient dimension, iterated in canonical order.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PatternSet {
    d: usize,
    members: BTreeSet<Pattern>,
}

impl PatternSet {
    pub fn new(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(PatternSet {
            d,
            members: BTreeSet::new(),
        })
    }

    pub fn from_patterns<I: IntoIterator<Item = Pattern>>(d: usize, patterns: I) -> Result<Self> {
        let mut set = PatternSet::new(d)?;
        for p in patterns {
            set.insert(p)?;
        }
        Ok(set)
    }

    /// Parses a list of pattern strings; the dimension is taken from the first.
    pub fn parse_list<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let patterns = items
            .iter()
            .map(|s| s.as_ref().parse::<Pattern>())
            .collect::<Result<Vec<_>>>()?;
        let d = patterns
            .first()
            .map(|p| p.d())
            .ok_or_else(|| HamError::InvalidPattern("empty pattern list".into()))?;
        PatternSet::from_patterns(d, patterns)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Returns `false` when the pattern was already present.
    pub fn insert(&mut self, p: Pattern) -> Result<bool> {
        if p.d() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: p.d(),
            });
        }
        Ok(self.members.insert(p))
    }

    pub fn contains(&self, p: &Pattern) -> bool {
        self.members.contains(p)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pattern> + '_ {
        self.members.iter()
    }

    pub fn is_subset(&self, other: &PatternSet) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn union(&self, other: &PatternSet) -> Result<PatternSet> {
        let mut out = self.clone();
        for p in other.iter() {
            out.insert(*p)?;
        }
        Ok(out)
    }

    /// Returns the first comparable pair, if any.
    fn comparable_pair(&self) -> Option<(Pattern, Pattern)> {
        let members: Vec<Pattern> = self.members.iter().copied().collect();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if a.le_bits(b) || b.le_bits(a) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn is_antichain(&self) -> bool {
        self.comparable_pair().is_none()
    }

    pub fn require_antichain(&self) -> Result<()> {
        match self.comparable_pair() {
            Some((a, b)) => Err(HamError::NotAntichain(a, b)),
            None => Ok(()),
        }
    }

    /// `L(S)`: patterns strictly below some member of `S`.
    pub fn lower_set(&self) -> PatternSet {
        let mut members = BTreeSet::new();
        for p in &self.members {
            members.extend(p.strict_sub_patterns());
        }
        PatternSet { d: self.d, members }
    }

    /// `S ∪ L(S)`, the downward closure.
    pub fn down_closure(&self) -> PatternSet {
        let mut closure = self.lower_set();
        closure.members.extend(self.members.iter().copied());
        closure
    }

    /// `U(S) = {0,1}^d \ (S ∪ L(S))`; `S` must be an antichain.
    pub fn upper_complement(&self) -> Result<PatternSet> {
        self.require_antichain()?;
        let closure = self.down_closure();
        let members = all_patterns(self.d)?
            .into_iter()
            .filter(|p| !closure.contains(p))
            .collect();
        Ok(PatternSet { d: self.d, members })
    }

    /// Members `ω′` of this set with `ω ≺ ω′`.
    pub fn strict_dominators(&self, omega: Pattern) -> Result<PatternSet> {
        if omega.d() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: omega.d(),
            });
        }
        let members = self
            .members
            .iter()
            .copied()
            .filter(|m| omega.lt_bits(*m))
            .collect();
        Ok(PatternSet { d: self.d, members })
    }
}

impl fmt::Display for PatternSet {
    /// `|`-joined pattern strings; the empty set renders as an empty string.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a PatternSet {
    type Item = &'a Pattern;
    type IntoIter = std::collections::btree_set::Iter<'a, Pattern>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Pattern {
        s.parse().unwrap()
    }

    fn set(items: &[&str]) -> PatternSet {
        PatternSet::parse_list(items).unwrap()
    }

    #[test]
    fn string_form_is_left_to_right() {
        let q = p("0110");
        assert!(!q.is_set(0) && q.is_set(1) && q.is_set(2) && !q.is_set(3));
        assert_eq!(q.to_string(), "0110");
        assert_eq!(q.dim(), 2);
        assert!("01a".parse::<Pattern>().is_err());
        assert!("".parse::<Pattern>().is_err());
    }

    #[test]
    fn preceq_examples() {
        assert!(p("011").preceq(p("111")).unwrap());
        assert!(p("101").preceq(p("101")).unwrap());
        assert!(!p("10").preceq(p("01")).unwrap());
        assert!(matches!(
            p("10").preceq(p("100")),
            Err(HamError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn meet_and_join() {
        assert_eq!(p("110").meet(p("011")).unwrap(), p("010"));
        assert_eq!(p("10").join(p("01")).unwrap(), p("11"));
        let zero = Pattern::zeros(3).unwrap();
        assert_eq!(p("101").meet(zero).unwrap(), zero);
        assert!(p("10").meet(p("1")).is_err());
    }

    #[test]
    fn antichain_examples() {
        assert!(set(&["0110", "0001"]).is_antichain());
        assert!(!set(&["010", "011"]).is_antichain());
        assert!(PatternSet::new(3).unwrap().is_antichain());
        assert!(set(&["101"]).is_antichain());
    }

    #[test]
    fn lower_set_examples() {
        assert_eq!(set(&["011"]).lower_set(), set(&["010", "001", "000"]));
        assert!(set(&["000"]).lower_set().is_empty());
        assert_eq!(set(&["10", "01"]).lower_set(), set(&["00"]));
    }

    #[test]
    fn upper_complement_examples() {
        assert_eq!(
            set(&["011"]).upper_complement().unwrap(),
            set(&["100", "110", "101", "111"])
        );
        assert!(set(&["111"]).upper_complement().unwrap().is_empty());
        assert_eq!(set(&["10"]).upper_complement().unwrap(), set(&["01", "11"]));
        assert!(matches!(
            set(&["01", "11"]).upper_complement(),
            Err(HamError::NotAntichain(..))
        ));
    }

    #[test]
    fn strict_dominator_examples() {
        let s = set(&["011", "100"]);
        assert_eq!(s.strict_dominators(p("010")).unwrap(), set(&["011"]));
        assert!(s.strict_dominators(p("111")).unwrap().is_empty());
        assert!(set(&["0110"])
            .strict_dominators(p("0001"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn canonical_order_is_dim_then_bits() {
        let all = all_patterns(3).unwrap();
        let dims: Vec<usize> = all.iter().map(|q| q.dim()).collect();
        assert_eq!(dims, vec![0, 1, 1, 1, 2, 2, 2, 3]);
        assert_eq!(all[1], p("100"));
        assert_eq!(all[7], p("111"));
    }

    #[test]
    fn dimension_cap() {
        assert!(Pattern::zeros(0).is_err());
        assert!(Pattern::zeros(25).is_err());
        assert_eq!(Pattern::ones(24).unwrap().dim(), 24);
        assert!(Pattern::from_bits(0b100, 2).is_err());
    }

    /// Enumerates every antichain over `{0,1}^d` by filtering all subsets of the
    /// cube; only usable for d ≤ 4 (2^16 subsets).
    fn all_antichains(d: usize) -> Vec<PatternSet> {
        let cube = all_patterns(d).unwrap();
        let n = cube.len();
        (0u64..(1u64 << n))
            .filter_map(|mask| {
                let s = PatternSet::from_patterns(
                    d,
                    (0..n).filter(|i| mask & (1 << i) != 0).map(|i| cube[i]),
                )
                .unwrap();
                s.is_antichain().then_some(s)
            })
            .collect()
    }

    #[test]
    fn antichains_partition_the_cube() {
        for d in 1..=3 {
            let cube = all_patterns(d).unwrap();
            for s in all_antichains(d) {
                let low = s.lower_set();
                let up = s.upper_complement().unwrap();
                for q in &cube {
                    let hits = [s.contains(q), low.contains(q), up.contains(q)]
                        .iter()
                        .filter(|&&b| b)
                        .count();
                    assert_eq!(hits, 1, "{q} in {s}");
                }
            }
        }
    }

    #[test]
    fn antichain_counts_are_dedekind_numbers() {
        // Antichains of the boolean lattice are counted by Dedekind numbers.
        let counts: Vec<usize> = (1..=3).map(|d| all_antichains(d).len()).collect();
        assert_eq!(counts, vec![3, 6, 20]);
    }

    fn arb_pattern(d: usize) -> impl Strategy<Value = Pattern> {
        (0u32..(1 << d)).prop_map(move |b| Pattern::from_bits(b, d).unwrap())
    }

    proptest! {
        #[test]
        fn partial_order_laws(a in arb_pattern(6), b in arb_pattern(6), c in arb_pattern(6)) {
            prop_assert!(a.preceq(a).unwrap());
            if a.preceq(b).unwrap() && b.preceq(a).unwrap() {
                prop_assert_eq!(a, b);
            }
            if a.preceq(b).unwrap() && b.preceq(c).unwrap() {
                prop_assert!(a.preceq(c).unwrap());
            }
        }

        #[test]
        fn absorption(a in arb_pattern(8), b in arb_pattern(8)) {
            prop_assert_eq!(a.meet(a.join(b).unwrap()).unwrap(), a);
            prop_assert_eq!(a.join(a.meet(b).unwrap()).unwrap(), a);
        }

        #[test]
        fn string_round_trip(a in arb_pattern(10)) {
            prop_assert_eq!(a.to_string().parse::<Pattern>().unwrap(), a);
        }

        #[test]
        fn lower_set_is_monotone(
            s in proptest::collection::vec(arb_pattern(5), 0..4),
            t in proptest::collection::vec(arb_pattern(5), 0..4),
        ) {
            let s = PatternSet::from_patterns(5, s).unwrap();
            let t = PatternSet::from_patterns(5, t).unwrap();
            let st = s.union(&t).unwrap();
            prop_assert!(s.lower_set().is_subset(&st.lower_set()));
        }

        #[test]
        fn random_antichain_partition(raw in proptest::collection::vec(arb_pattern(5), 0..6)) {
            // Prune to the maximal elements, which always form an antichain.
            let maximal: Vec<Pattern> = raw
                .iter()
                .copied()
                .filter(|a| !raw.iter().any(|b| a.lt_bits(*b)))
                .collect();
            let s = PatternSet::from_patterns(5, maximal).unwrap();
            prop_assert!(s.is_antichain());
            let low = s.lower_set();
            let up = s.upper_complement().unwrap();
            prop_assert_eq!(s.len() + low.len() + up.len(), 32);
            for q in all_patterns(5).unwrap() {
                let hits = [s.contains(&q), low.contains(&q), up.contains(&q)]
                    .iter().filter(|&&b| b).count();
                prop_assert_eq!(hits, 1);
            }
        }
    }
}
