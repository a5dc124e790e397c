//! Exact ANOVA decomposition of a regression function over a finite-support
//! feature distribution.
//!
//! `f_0 = E[η] − 1/2`, and for `dim(ω) ≥ 1`
//! `f_ω(x) = E[η(X) − 1/2 − Σ_{ω′≺ω} f_{ω′}(X) | X^ω = x^ω]`,
//! computed as exact weighted averages over atoms grouped by their masked
//! coordinates. Grouping uses exact floating-point equality, so callers that
//! discretise a continuous law must emit bit-identical grid coordinates.

use crate::error::{HamError, Result};
use crate::pattern::{all_patterns, Pattern, PatternSet};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

const WEIGHT_TOL: f64 = 1e-12;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Finite-support joint law of `(X, η(X))`, optionally with the laws of
/// `X | O = o` as per-atom weight vectors.
#[derive(Clone, Debug)]
pub struct FiniteDistribution {
    d: usize,
    xs: Vec<f64>,
    p: Vec<f64>,
    eta: Vec<f64>,
    conditional: Option<BTreeMap<Pattern, Vec<f64>>>,
}

impl FiniteDistribution {
    /// `xs` holds the atoms row-major (`n_atoms × d`).
    pub fn new(
        d: usize,
        xs: Vec<f64>,
        p: Vec<f64>,
        eta: Vec<f64>,
        conditional: Option<BTreeMap<Pattern, Vec<f64>>>,
    ) -> Result<Self> {
        Pattern::zeros(d)?;
        let n = p.len();
        let invalid = |msg: String| Err(HamError::InvalidDistribution(msg));
        if n == 0 {
            return invalid("distribution has no atoms".into());
        }
        if xs.len() != n * d {
            return invalid(format!(
                "expected {} coordinates for {n} atoms of dimension {d}, found {}",
                n * d,
                xs.len()
            ));
        }
        if eta.len() != n {
            return invalid(format!("{} eta values for {n} atoms", eta.len()));
        }
        if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
            return invalid(format!("atom {} has a non-finite coordinate", i / d));
        }
        check_weights(&p, "p")?;
        if let Some(i) = eta
            .iter()
            .position(|e| !(e.is_finite() && (0.0..=1.0).contains(e)))
        {
            return invalid(format!("atom {i}: eta = {} outside [0, 1]", eta[i]));
        }
        if let Some(cond) = &conditional {
            for (o, w) in cond {
                if o.d() != d {
                    return invalid(format!("conditional pattern {o} has wrong dimension"));
                }
                if w.len() != n {
                    return invalid(format!(
                        "conditional weights for {o}: {} entries for {n} atoms",
                        w.len()
                    ));
                }
                check_weights(w, &format!("conditional weights for {o}"))?;
            }
        }
        let dist = FiniteDistribution {
            d,
            xs,
            p,
            eta,
            conditional,
        };
        dist.check_distinct_atoms()?;
        Ok(dist)
    }

    fn check_distinct_atoms(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.n_atoms()).collect();
        let cmp = |a: &usize, b: &usize| {
            let (xa, xb) = (self.atom(*a), self.atom(*b));
            xa.iter()
                .zip(xb)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        order.sort_unstable_by(cmp);
        for w in order.windows(2) {
            if self.atom(w[0]).iter().zip(self.atom(w[1])).all(|(u, v)| u == v) {
                return Err(HamError::InvalidDistribution(format!(
                    "atoms {} and {} share the same coordinates",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_atoms(&self) -> usize {
        self.p.len()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn conditional(&self) -> Option<&BTreeMap<Pattern, Vec<f64>>> {
        self.conditional.as_ref()
    }

    /// Patterns carrying a conditional law, if any were supplied.
    pub fn observed_patterns(&self) -> Option<PatternSet> {
        self.conditional.as_ref().map(|c| {
            PatternSet::from_patterns(self.d, c.keys().copied())
                .expect("conditional patterns validated at construction")
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DistributionFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn to_file(&self) -> DistributionFile {
        DistributionFile {
            d: self.d,
            atoms: (0..self.n_atoms())
                .map(|i| AtomRecord {
                    x: self.atom(i).to_vec(),
                    p: self.p[i],
                    eta: self.eta[i],
                })
                .collect(),
            conditional: self.conditional.as_ref().map(|c| {
                c.iter()
                    .map(|(o, w)| (o.to_string(), w.clone()))
                    .collect()
            }),
        }
    }
}

fn check_weights(w: &[f64], what: &str) -> Result<()> {
    if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(HamError::InvalidDistribution(format!(
            "{what}: entry {i} = {} is negative or non-finite",
            w[i]
        )));
    }
    let total = compensated_sum(w.iter().copied());
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(HamError::InvalidDistribution(format!(
            "{what} sum to {total}, not 1"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomRecord {
    pub x: Vec<f64>,
    pub p: f64,
    pub eta: f64,
}

/// JSON layout: `{"d", "atoms": [{"x","p","eta"}], "conditional"?: {"<pattern>": [w...]}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistributionFile {
    pub d: usize,
    pub atoms: Vec<AtomRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<BTreeMap<String, Vec<f64>>>,
}

impl TryFrom<DistributionFile> for FiniteDistribution {
    type Error = HamError;

    fn try_from(file: DistributionFile) -> Result<Self> {
        let d = file.d;
        let mut xs = Vec::with_capacity(file.atoms.len() * d);
        let mut p = Vec::with_capacity(file.atoms.len());
        let mut eta = Vec::with_capacity(file.atoms.len());
        for (i, atom) in file.atoms.into_iter().enumerate() {
            if atom.x.len() != d {
                return Err(HamError::InvalidDistribution(format!(
                    "atom {i} has {} coordinates, expected {d}",
                    atom.x.len()
                )));
            }
            xs.extend(atom.x);
            p.push(atom.p);
            eta.push(atom.eta);
        }
        let conditional = file
            .conditional
            .map(|c| {
                c.into_iter()
                    .map(|(k, w)| Ok((k.parse::<Pattern>()?, w)))
                    .collect::<Result<BTreeMap<_, _>>>()
            })
            .transpose()?;
        FiniteDistribution::new(d, xs, p, eta, conditional)
    }
}

/// `f_ω` for one pattern, stored per group of atoms sharing `x^ω`.
#[derive(Clone, Debug)]
struct Component {
    atom_group: Vec<u32>,
    values: Vec<f64>,
}

impl Component {
    #[inline]
    fn at(&self, atom: usize) -> f64 {
        self.values[self.atom_group[atom] as usize]
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    d: usize,
    n_atoms: usize,
    components: BTreeMap<Pattern, Component>,
}

impl Decomposition {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn patterns(&self) -> impl Iterator<Item = Pattern> + '_ {
        self.components.keys().copied()
    }

    /// `f_0`, the constant term.
    pub fn constant(&self) -> f64 {
        self.components[&Pattern::zeros(self.d).unwrap()].values[0]
    }

    /// `f_ω` at atom `i`.
    pub fn value(&self, omega: Pattern, atom: usize) -> f64 {
        self.components[&omega].at(atom)
    }

    /// `f_ω` at every atom.
    pub fn component(&self, omega: Pattern) -> Vec<f64> {
        let c = &self.components[&omega];
        (0..self.n_atoms).map(|i| c.at(i)).collect()
    }

    /// `1/2 + Σ_{ω′ ⪯ ω} f_{ω′}` at every atom.
    pub fn partial_sum(&self, omega: Pattern) -> Vec<f64> {
        let subs: Vec<&Component> = omega
            .sub_patterns()
            .iter()
            .map(|s| &self.components[s])
            .collect();
        (0..self.n_atoms)
            .map(|i| {
                let mut acc = CompensatedSum::new();
                acc.add(0.5);
                for c in &subs {
                    acc.add(c.at(i));
                }
                acc.value()
            })
            .collect()
    }

    /// `1/2 + Σ_ω f_ω` at every atom.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.partial_sum(Pattern::ones(self.d).unwrap())
    }
}

/// Per-coordinate ranks of the distinct atom values; lets group keys be
/// built from small integers instead of float bit patterns.
struct CoordinateIds {
    ids: Vec<Vec<u32>>,
    cardinality: Vec<u64>,
}

impl CoordinateIds {
    fn new(dist: &FiniteDistribution) -> Self {
        let n = dist.n_atoms();
        let mut ids = Vec::with_capacity(dist.d);
        let mut cardinality = Vec::with_capacity(dist.d);
        for j in 0..dist.d {
            // -0.0 and 0.0 compare equal, so normalise before ranking.
            let column: Vec<f64> = (0..n).map(|i| dist.atom(i)[j] + 0.0).collect();
            let mut distinct = column.clone();
            distinct.sort_unstable_by(|a, b| a.total_cmp(b));
            distinct.dedup();
            let col_ids = column
                .iter()
                .map(|v| distinct.binary_search_by(|u| u.total_cmp(v)).unwrap() as u32)
                .collect();
            ids.push(col_ids);
            cardinality.push(distinct.len() as u64);
        }
        CoordinateIds { ids, cardinality }
    }

    /// Assigns each atom a group index; atoms share a group iff their
    /// ω-coordinates coincide. Returns (atom → group, number of groups).
    fn group(&self, omega: Pattern, n: usize) -> (Vec<u32>, usize) {
        let coords: Vec<usize> = omega.coords().collect();
        let radix_product = coords
            .iter()
            .try_fold(1u64, |acc, &j| acc.checked_mul(self.cardinality[j]));
        let mut atom_group = Vec::with_capacity(n);
        let mut next = 0u32;
        match radix_product {
            Some(total) if total <= (4 * n as u64).max(1 << 16) => {
                let mut table = vec![u32::MAX; total as usize];
                for i in 0..n {
                    let key = self.key(&coords, i) as usize;
                    if table[key] == u32::MAX {
                        table[key] = next;
                        next += 1;
                    }
                    atom_group.push(table[key]);
                }
            }
            Some(_) => {
                let mut table: HashMap<u64, u32> = HashMap::new();
                for i in 0..n {
                    let g = *table.entry(self.key(&coords, i)).or_insert_with(|| {
                        next += 1;
                        next - 1
                    });
                    atom_group.push(g);
                }
            }
            None => {
                let mut table: HashMap<Vec<u32>, u32> = HashMap::new();
                for i in 0..n {
                    let key: Vec<u32> = coords.iter().map(|&j| self.ids[j][i]).collect();
                    let g = *table.entry(key).or_insert_with(|| {
                        next += 1;
                        next - 1
                    });
                    atom_group.push(g);
                }
            }
        }
        (atom_group, next as usize)
    }

    #[inline]
    fn key(&self, coords: &[usize], i: usize) -> u64 {
        coords.iter().fold(0u64, |acc, &j| {
            acc * self.cardinality[j] + self.ids[j][i] as u64
        })
    }
}

/// Exact decomposition of `η` into `{f_ω : ω ∈ {0,1}^d}`.
pub fn decompose(dist: &FiniteDistribution) -> Decomposition {
    let n = dist.n_atoms();
    let ids = CoordinateIds::new(dist);
    let mut components: BTreeMap<Pattern, Component> = BTreeMap::new();
    let patterns = all_patterns(dist.d).expect("dimension validated at construction");

    for omega in patterns {
        if omega.is_zero() {
            let mean = compensated_sum(dist.p.iter().zip(&dist.eta).map(|(p, e)| p * e));
            components.insert(
                omega,
                Component {
                    atom_group: vec![0; n],
                    values: vec![mean - 0.5],
                },
            );
            continue;
        }

        // residual = η − 1/2 − Σ_{ω′≺ω} f_{ω′}
        let subs: Vec<&Component> = omega
            .strict_sub_patterns()
            .iter()
            .map(|s| &components[s])
            .collect();
        let residual: Vec<f64> = (0..n)
            .map(|i| {
                let mut acc = CompensatedSum::new();
                acc.add(dist.eta[i]);
                acc.add(-0.5);
                for c in &subs {
                    acc.add(-c.at(i));
                }
                acc.value()
            })
            .collect();

        let (atom_group, n_groups) = ids.group(omega, n);
        let mut num = vec![CompensatedSum::new(); n_groups];
        let mut den = vec![CompensatedSum::new(); n_groups];
        let mut plain = vec![CompensatedSum::new(); n_groups];
        let mut count = vec![0usize; n_groups];
        for i in 0..n {
            let g = atom_group[i] as usize;
            num[g].add(dist.p[i] * residual[i]);
            den[g].add(dist.p[i]);
            plain[g].add(residual[i]);
            count[g] += 1;
        }
        let values = (0..n_groups)
            .map(|g| {
                let w = den[g].value();
                if w > 0.0 {
                    num[g].value() / w
                } else {
                    // Null groups do not affect any μ-expectation; use the
                    // unweighted mean so the value stays well defined.
                    plain[g].value() / count[g] as f64
                }
            })
            .collect();
        components.insert(omega, Component { atom_group, values });
    }

    Decomposition {
        d: dist.d,
        n_atoms: n,
        components,
    }
}

/// `σ²_ω = min_{o ⪰ ω, o observed} E[f_ω(X)² | O = o]`.
///
/// Without a conditional block, `O` is treated as independent of `X` and the
/// marginal weights are used for every compatible `o`.
pub fn sigma_sq(
    dist: &FiniteDistribution,
    dec: &Decomposition,
    omega: Pattern,
    observed_patterns: &PatternSet,
) -> Result<f64> {
    if omega.d() != dist.d || observed_patterns.d() != dist.d {
        return Err(HamError::DimensionMismatch {
            expected: dist.d,
            found: if omega.d() != dist.d {
                omega.d()
            } else {
                observed_patterns.d()
            },
        });
    }
    let f = &dec.components[&omega];
    let second_moment = |w: &[f64]| {
        compensated_sum(w.iter().enumerate().map(|(i, wi)| {
            let v = f.at(i);
            wi * v * v
        }))
    };
    let mut best: Option<f64> = None;
    for o in observed_patterns.iter().filter(|o| omega.le_bits(**o)) {
        let value = match &dist.conditional {
            Some(cond) => {
                let w = cond.get(o).ok_or_else(|| {
                    HamError::InvalidDistribution(format!("no conditional weights for {o}"))
                })?;
                second_moment(w)
            }
            None => second_moment(&dist.p),
        };
        best = Some(best.map_or(value, |b: f64| b.min(value)));
    }
    best.ok_or(HamError::Unobservable(omega))
}

/// Ordered Bell number via `B_0 = B_1 = 1`, `B_k = 1 + Σ_{j=1}^{k−1} C(k,j) B_j`.
pub fn ordered_bell(k: usize) -> Result<u128> {
    if k > 24 {
        return Err(HamError::BellOverflow(k));
    }
    let mut bell = vec![1u128; k.max(1) + 1];
    for m in 2..=k {
        let mut binom = 1u128; // C(m, 0)
        let mut acc = 1u128;
        for j in 1..m {
            binom = binom * (m - j + 1) as u128 / j as u128;
            acc += binom * bell[j];
        }
        bell[m] = acc;
    }
    Ok(bell[k])
}
