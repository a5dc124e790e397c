//! Pattern-restricted nearest-neighbour search.
//!
//! Distances are Euclidean over the coordinates a pattern observes. Points are
//! ranked by squared distance (the same order as the distance itself) with
//! ties broken by ascending row id, which makes every query deterministic.

use crate::error::{HamError, Result};
use crate::pattern::Pattern;
use std::cmp::Ordering;

#[derive(Clone, Debug)]
pub struct IndexedPoints {
    d: usize,
    coords: Vec<f64>,
    row_ids: Vec<usize>,
}

impl IndexedPoints {
    /// Builds an index over `(x, row_id)` pairs. Row ids must be unique.
    pub fn build<I>(d: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, usize)>,
    {
        let mut coords = Vec::new();
        let mut row_ids = Vec::new();
        for (x, row) in points {
            if x.len() != d {
                return Err(HamError::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            coords.extend(x);
            row_ids.push(row);
        }
        let mut sorted = row_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(HamError::InvalidParameter("duplicate row ids".into()));
        }
        Ok(IndexedPoints { d, coords, row_ids })
    }

    /// Index over `points[i]` with row id `i`.
    pub fn from_rows(d: usize, points: &[Vec<f64>]) -> Result<Self> {
        Self::build(d, points.iter().cloned().zip(0..))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    fn position(&self, row: usize) -> Option<usize> {
        // Row ids are usually 0..n in order; fall back to a scan otherwise.
        if self.row_ids.get(row) == Some(&row) {
            Some(row)
        } else {
            self.row_ids.iter().position(|&r| r == row)
        }
    }

    pub fn point(&self, row: usize) -> Option<&[f64]> {
        self.position(row)
            .map(|i| &self.coords[i * self.d..(i + 1) * self.d])
    }

    /// The `min(k, |candidates|)` candidate rows closest to `query` in the
    /// coordinates observed by `omega`, nearest first.
    pub fn k_nearest(
        &self,
        omega: Pattern,
        query: &[f64],
        k: usize,
        candidate_rows: &[usize],
    ) -> Result<Vec<usize>> {
        self.check_query(omega, query, k)?;
        if candidate_rows.is_empty() {
            return Err(HamError::NoAvailableCases);
        }
        let coords: Vec<usize> = omega.coords().collect();
        let mut scored = candidate_rows
            .iter()
            .map(|&row| {
                let x = self.point(row).ok_or_else(|| {
                    HamError::InvalidParameter(format!("unknown row id {row}"))
                })?;
                Ok((masked_sq_dist(&coords, x, query), row))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(take_nearest(&mut scored, k))
    }

    fn check_query(&self, omega: Pattern, query: &[f64], k: usize) -> Result<()> {
        if omega.d() != self.d || query.len() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: if omega.d() != self.d {
                    omega.d()
                } else {
                    query.len()
                },
            });
        }
        if k == 0 {
            return Err(HamError::InvalidParameter("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Packs the ω-coordinates of `candidate_rows` for repeated queries
    /// against the same pattern and candidate set.
    pub fn pattern_view(&self, omega: Pattern, candidate_rows: &[usize]) -> Result<PatternView> {
        if omega.d() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: omega.d(),
            });
        }
        let coords: Vec<usize> = omega.coords().collect();
        let mut packed = Vec::with_capacity(coords.len() * candidate_rows.len());
        for &row in candidate_rows {
            let x = self
                .point(row)
                .ok_or_else(|| HamError::InvalidParameter(format!("unknown row id {row}")))?;
            packed.extend(coords.iter().map(|&j| x[j]));
        }
        Ok(PatternView {
            d: self.d,
            coords,
            packed,
            rows: candidate_rows.to_vec(),
        })
    }
}

#[inline]
fn masked_sq_dist(coords: &[usize], x: &[f64], query: &[f64]) -> f64 {
    coords.iter().fold(0.0, |acc, &j| {
        let diff = x[j] - query[j];
        acc + diff * diff
    })
}

#[inline]
fn by_distance_then_row(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn take_nearest(scored: &mut [(f64, usize)], k: usize) -> Vec<usize> {
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_distance_then_row);
    }
    let head = &mut scored[..k];
    head.sort_unstable_by(by_distance_then_row);
    head.iter().map(|&(_, row)| row).collect()
}

/// Candidate points of one pattern with only the observed coordinates kept,
/// laid out contiguously.
#[derive(Clone, Debug)]
pub struct PatternView {
    d: usize,
    coords: Vec<usize>,
    packed: Vec<f64>,
    rows: Vec<usize>,
}

impl PatternView {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same contract and output as [`IndexedPoints::k_nearest`] over the
    /// view's candidate rows.
    pub fn k_nearest(&self, query: &[f64], k: usize) -> Result<Vec<usize>> {
        if query.len() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: query.len(),
            });
        }
        if k == 0 {
            return Err(HamError::InvalidParameter("k must be at least 1".into()));
        }
        if self.rows.is_empty() {
            return Err(HamError::NoAvailableCases);
        }
        let q: Vec<f64> = self.coords.iter().map(|&j| query[j]).collect();
        let mut scored = self.scores(&q);
        Ok(take_nearest(&mut scored, k))
    }

    fn scores(&self, q: &[f64]) -> Vec<(f64, usize)> {
        let w = q.len();
        if w == 0 {
            return self.rows.iter().map(|&r| (0.0, r)).collect();
        }
        self.packed
            .chunks_exact(w)
            .zip(&self.rows)
            .map(|(x, &row)| {
                let dist = x.iter().zip(q).fold(0.0, |acc, (a, b)| {
                    let diff = a - b;
                    acc + diff * diff
                });
                (dist, row)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> Pattern {
        s.parse().unwrap()
    }

    /// Oracle: full sort of every candidate by (distance, row).
    fn brute_force(points: &[Vec<f64>], omega: Pattern, q: &[f64], k: usize, cands: &[usize]) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = cands
            .iter()
            .map(|&r| {
                let d2: f64 = omega
                    .coords()
                    .map(|j| (points[r][j] - q[j]).powi(2))
                    .sum();
                (d2.sqrt(), r)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, r)| r).collect()
    }

    #[test]
    fn masked_distance_ignores_unobserved_coordinate() {
        let pts = vec![vec![0.0, 9.0], vec![1.0, 0.0], vec![2.0, -9.0]];
        let idx = IndexedPoints::from_rows(2, &pts).unwrap();
        let got = idx.k_nearest(p("10"), &[0.9, 100.0], 2, &[0, 1, 2]).unwrap();
        assert_eq!(got, vec![1, 0]);
    }

    #[test]
    fn truncation_and_self_inclusion() {
        let pts = vec![vec![0.0], vec![3.0], vec![1.0]];
        let idx = IndexedPoints::from_rows(1, &pts).unwrap();
        assert_eq!(idx.k_nearest(p("1"), &[0.0], 10, &[0, 1, 2]).unwrap(), vec![0, 2, 1]);
        assert_eq!(idx.k_nearest(p("1"), &[3.0], 1, &[0, 1, 2]).unwrap(), vec![1]);
    }

    #[test]
    fn ties_resolve_by_row_id() {
        let pts = vec![vec![1.0, 5.0], vec![0.0, 0.0], vec![1.0, 7.0], vec![1.0, 6.0]];
        let idx = IndexedPoints::from_rows(2, &pts).unwrap();
        let got = idx.k_nearest(p("10"), &[1.0, 0.0], 3, &[3, 2, 1, 0]).unwrap();
        assert_eq!(got, vec![0, 2, 3]);
    }

    #[test]
    fn zero_pattern_returns_lowest_rows() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 10.0]).collect();
        let idx = IndexedPoints::from_rows(1, &pts).unwrap();
        let got = idx.k_nearest(p("0"), &[33.0], 3, &[5, 4, 2, 1]).unwrap();
        assert_eq!(got, vec![1, 2, 4]);
    }

    #[test]
    fn errors() {
        let idx = IndexedPoints::from_rows(2, &[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            idx.k_nearest(p("11"), &[0.0, 0.0], 1, &[]),
            Err(HamError::NoAvailableCases)
        ));
        assert!(idx.k_nearest(p("11"), &[0.0], 1, &[0]).is_err());
        assert!(idx.k_nearest(p("11"), &[0.0, 0.0], 0, &[0]).is_err());
        assert!(IndexedPoints::build(1, vec![(vec![0.0], 3), (vec![1.0], 3)]).is_err());
    }

    #[test]
    fn empty_index_is_valid() {
        let idx = IndexedPoints::from_rows(3, &[]).unwrap();
        assert!(idx.is_empty());
    }

    #[test]
    fn backends_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=4 {
            // Coarse grid coordinates so that ties occur often.
            let pts: Vec<Vec<f64>> = (0..200)
                .map(|_| (0..d).map(|_| rng.gen_range(0..5) as f64 * 0.25).collect())
                .collect();
            let idx = IndexedPoints::from_rows(d, &pts).unwrap();
            for bits in 0..(1u32 << d) {
                let omega = Pattern::from_bits(bits, d).unwrap();
                let cands: Vec<usize> = (0..200).filter(|_| rng.gen_bool(0.7)).collect();
                let view = idx.pattern_view(omega, &cands).unwrap();
                for _ in 0..20 {
                    let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.2..1.2)).collect();
                    let k = rng.gen_range(1..40);
                    let expected = brute_force(&pts, omega, &q, k, &cands);
                    assert_eq!(idx.k_nearest(omega, &q, k, &cands).unwrap(), expected);
                    assert_eq!(view.k_nearest(&q, k).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn output_distances_nondecreasing_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let idx = IndexedPoints::from_rows(3, &pts).unwrap();
        let cands: Vec<usize> = (0..50).collect();
        let q = [0.5, 0.5, 0.5];
        let a = idx.k_nearest(p("101"), &q, 17, &cands).unwrap();
        let b = idx.k_nearest(p("101"), &q, 17, &cands).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 17);
        let dist = |r: usize| (pts[r][0] - 0.5).powi(2) + (pts[r][2] - 0.5).powi(2);
        assert!(a.windows(2).all(|w| dist(w[0]) <= dist(w[1])));
    }
}
