//! Synthetic settings with known regression function, missingness mechanism
//! and true signal antichain `Ω⋆`.
//!
//! * Setting 1: a two-component Gaussian mixture in `d = 2`, only `x1`
//!   informative, every coordinate observed independently with probability `p`.
//! * Setting 2: uniform on `[0,1]^4`, `O ∈ {1110, 1001}` with
//!   `P(O = 1110 | X) = x1`; no point is ever fully observed.
//! * Setting 3: uniform on `[0,1]^2` with an additive `η` and a missingness
//!   mechanism that depends on `x2`.

use crate::anova::{compensated_sum, FiniteDistribution};
use crate::data::{LabeledSample, MaskedSample};
use crate::error::{HamError, Result};
use crate::pattern::{Pattern, PatternSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_P: f64 = 0.7;
pub const DEFAULT_QUADRATURE_NODES: usize = 400;
/// Half-width of the truncated grid used for Setting 1.
pub const SETTING1_HALF_WIDTH: f64 = 6.0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// `base_seed ⊕ hash(repeat, purpose)`; stable across platforms and releases.
pub fn stream_seed(base_seed: u64, repeat: u64, purpose: &str) -> u64 {
    base_seed ^ splitmix64(splitmix64(repeat) ^ fnv1a(purpose.as_bytes()))
}

pub fn stream_rng(base_seed: u64, repeat: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base_seed, repeat, purpose))
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scenario {
    Setting1 { p: f64 },
    Setting2,
    Setting3,
}

impl Scenario {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Scenario::Setting1 { p: DEFAULT_P }),
            2 => Ok(Scenario::Setting2),
            3 => Ok(Scenario::Setting3),
            _ => Err(HamError::InvalidParameter(format!("unknown setting {i}"))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Scenario::Setting1 { .. } => 1,
            Scenario::Setting2 => 2,
            Scenario::Setting3 => 3,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Scenario::Setting1 { .. } | Scenario::Setting3 => 2,
            Scenario::Setting2 => 4,
        }
    }

    pub fn omega_star(&self) -> PatternSet {
        let items: &[&str] = match self {
            Scenario::Setting1 { .. } => &["10"],
            Scenario::Setting2 => &["0110", "0001"],
            Scenario::Setting3 => &["10", "01"],
        };
        PatternSet::parse_list(items).expect("static antichain")
    }

    pub fn true_eta(&self, x: &[f64]) -> f64 {
        match self {
            Scenario::Setting1 { .. } => 0.5 + (-SQRT_2 * x[0]).tanh() / 2.0,
            Scenario::Setting2 => 0.5 + (x[1] - 0.5) * x[2] * x[2] / 2.0 + (x[3] - 0.5) / 2.0,
            Scenario::Setting3 => 0.25 + x[0] / 2.0 + (4.0 * PI * x[1]).cos() / 4.0,
        }
    }

    pub fn bayes_classify(&self, x: &[f64]) -> u8 {
        u8::from(self.true_eta(x) >= 0.5)
    }

    /// `E[min(η, 1 − η)]` with the default quadrature resolution.
    pub fn bayes_risk(&self) -> f64 {
        self.bayes_risk_with(DEFAULT_QUADRATURE_NODES)
    }

    /// Setting 1 is closed form, `Φ(−√2)`. Settings 2 and 3 use a midpoint
    /// rule with `nodes` points per axis; Setting 2's `η` ignores `x1`, so that
    /// axis is integrated out.
    pub fn bayes_risk_with(&self, nodes: usize) -> f64 {
        let loss = |eta: f64| eta.min(1.0 - eta);
        let mid = |i: usize| (2 * i + 1) as f64 / (2 * nodes) as f64;
        match self {
            Scenario::Setting1 { .. } => std_normal_cdf(-SQRT_2),
            Scenario::Setting2 => {
                let mut total = 0.0;
                for a in 0..nodes {
                    for b in 0..nodes {
                        let mut inner = 0.0;
                        for c in 0..nodes {
                            inner += loss(self.true_eta(&[0.5, mid(a), mid(b), mid(c)]));
                        }
                        total += inner;
                    }
                }
                total / (nodes as f64).powi(3)
            }
            Scenario::Setting3 => {
                let mut total = 0.0;
                for a in 0..nodes {
                    for b in 0..nodes {
                        total += loss(self.true_eta(&[mid(a), mid(b)]));
                    }
                }
                total / (nodes as f64).powi(2)
            }
        }
    }

    fn draw_xy<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, u8) {
        match self {
            Scenario::Setting1 { .. } => {
                let y: u8 = u8::from(rng.gen_bool(0.5));
                let sign = if y == 1 { -1.0 } else { 1.0 };
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                (vec![sign * SQRT_2 + z0, z1], y)
            }
            _ => {
                let x: Vec<f64> = (0..self.d()).map(|_| rng.gen::<f64>()).collect();
                let y = u8::from(rng.gen::<f64>() < self.true_eta(&x));
                (x, y)
            }
        }
    }

    fn draw_pattern<R: Rng>(&self, x: &[f64], rng: &mut R) -> Pattern {
        let pat = |s: &str| s.parse::<Pattern>().expect("static pattern");
        match self {
            Scenario::Setting1 { p } => {
                let flags: Vec<bool> = (0..2).map(|_| rng.gen::<f64>() < *p).collect();
                Pattern::from_flags(&flags).expect("d = 2")
            }
            Scenario::Setting2 => {
                if rng.gen::<f64>() < x[0] {
                    pat("1110")
                } else {
                    pat("1001")
                }
            }
            Scenario::Setting3 => {
                let [p11, p10, p01, _] = setting3_mechanism(x[1]);
                let u: f64 = rng.gen();
                if u < p11 {
                    pat("11")
                } else if u < p11 + p10 {
                    pat("10")
                } else if u < p11 + p10 + p01 {
                    pat("01")
                } else {
                    pat("00")
                }
            }
        }
    }

    pub fn sample_train<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<MaskedSample> {
        (0..n)
            .map(|_| {
                let (x, y) = self.draw_xy(rng);
                let o = self.draw_pattern(&x, rng);
                MaskedSample::new(&x, y, o).expect("scenario dimensions are consistent")
            })
            .collect()
    }

    pub fn sample_test<R: Rng>(&self, m: usize, rng: &mut R) -> Vec<LabeledSample> {
        (0..m)
            .map(|_| {
                let (x, y) = self.draw_xy(rng);
                LabeledSample { x, y }
            })
            .collect()
    }

    /// Midpoint grid with `grid_m` points per axis. Settings 2 and 3 carry the
    /// missingness mechanism as conditional weights; Setting 1 uses the
    /// truncated square `[−6, 6]²` with renormalised mixture weights and no
    /// conditional block, since `O` is independent of `X` there.
    pub fn to_finite_distribution(&self, grid_m: usize) -> Result<FiniteDistribution> {
        if grid_m < 2 {
            return Err(HamError::Unsupported(format!("grid size {grid_m} < 2")));
        }
        let d = self.d();
        let n_atoms = (grid_m as u128).pow(d as u32);
        if n_atoms > u32::MAX as u128 {
            return Err(HamError::Unsupported(format!("grid of {n_atoms} atoms is too large")));
        }
        let n_atoms = n_atoms as usize;
        let axis: Vec<f64> = match self {
            Scenario::Setting1 { .. } => {
                let h = 2.0 * SETTING1_HALF_WIDTH / grid_m as f64;
                (0..grid_m).map(|i| -SETTING1_HALF_WIDTH + (i as f64 + 0.5) * h).collect()
            }
            _ => (0..grid_m)
                .map(|i| (2 * i + 1) as f64 / (2 * grid_m) as f64)
                .collect(),
        };
        let mut xs = Vec::with_capacity(n_atoms * d);
        let mut idx = vec![0usize; d];
        for _ in 0..n_atoms {
            xs.extend(idx.iter().map(|&i| axis[i]));
            // Last coordinate varies fastest.
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < grid_m {
                    break;
                }
                idx[j] = 0;
            }
        }
        let atom = |i: usize| &xs[i * d..(i + 1) * d];
        let eta: Vec<f64> = (0..n_atoms).map(|i| self.true_eta(atom(i))).collect();

        let normalise = |w: Vec<f64>| {
            let s = compensated_sum(w.iter().copied());
            w.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let (p, conditional) = match self {
            Scenario::Setting1 { .. } => {
                let dens = |x: &[f64]| {
                    let r = x[1] * x[1];
                    (-((x[0] - SQRT_2).powi(2) + r) / 2.0).exp()
                        + (-((x[0] + SQRT_2).powi(2) + r) / 2.0).exp()
                };
                (normalise((0..n_atoms).map(|i| dens(atom(i))).collect()), None)
            }
            Scenario::Setting2 => {
                let uniform = vec![1.0 / n_atoms as f64; n_atoms];
                let mut cond = BTreeMap::new();
                cond.insert(
                    "1110".parse()?,
                    normalise((0..n_atoms).map(|i| atom(i)[0]).collect()),
                );
                cond.insert(
                    "1001".parse()?,
                    normalise((0..n_atoms).map(|i| 1.0 - atom(i)[0]).collect()),
                );
                (uniform, Some(cond))
            }
            Scenario::Setting3 => {
                let uniform = vec![1.0 / n_atoms as f64; n_atoms];
                let mut cond = BTreeMap::new();
                for (k, key) in ["11", "10", "01", "00"].iter().enumerate() {
                    let w = (0..n_atoms)
                        .map(|i| setting3_mechanism(atom(i)[1])[k])
                        .collect();
                    cond.insert(key.parse()?, normalise(w));
                }
                (uniform, Some(cond))
            }
        };
        FiniteDistribution::new(d, xs, p, eta, conditional)
    }

    /// Patterns with positive probability under the missingness mechanism.
    pub fn observed_patterns(&self) -> PatternSet {
        let items: &[&str] = match self {
            Scenario::Setting1 { .. } | Scenario::Setting3 => &["11", "10", "01", "00"],
            Scenario::Setting2 => &["1110", "1001"],
        };
        PatternSet::parse_list(items).expect("static patterns")
    }
}

/// `P(O = o | x2)` for `o = 11, 10, 01, 00` in Setting 3.
fn setting3_mechanism(x2: f64) -> [f64; 4] {
    let low = x2 <= 0.5;
    let full = 0.25 + if low { 0.25 } else { 0.0 };
    let other = 1.0 / 6.0 + if low { 0.0 } else { 1.0 / 12.0 };
    [full, other, other, other]
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl FromStr for Scenario {
    type Err = HamError;

    fn from_str(s: &str) -> Result<Self> {
        let i: u8 = s
            .trim()
            .parse()
            .map_err(|_| HamError::InvalidParameter(format!("setting '{s}' is not 1, 2 or 3")))?;
        Scenario::from_index(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anova::{decompose, sigma_sq};
    use approx::assert_abs_diff_eq;

    const ALL: [Scenario; 3] = [Scenario::Setting1 { p: DEFAULT_P }, Scenario::Setting2, Scenario::Setting3];

    #[test]
    fn eta_examples() {
        let s1 = ALL[0];
        assert_eq!(s1.true_eta(&[0.0, 3.7]), 0.5);
        assert_eq!(Scenario::Setting2.true_eta(&[0.3, 0.5, 0.9, 0.5]), 0.5);
        assert_abs_diff_eq!(Scenario::Setting3.true_eta(&[1.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_eq!(s1.bayes_classify(&[-0.1, 0.0]), 1);
        assert_eq!(s1.bayes_classify(&[0.0, 0.0]), 1);
        assert_eq!(s1.bayes_classify(&[0.1, 0.0]), 0);
    }

    #[test]
    fn eta_in_unit_interval() {
        let mut rng = stream_rng(3, 0, "eta");
        for s in ALL {
            for x in s.sample_test(500, &mut rng) {
                let e = s.true_eta(&x.x);
                assert!((0.0..=1.0).contains(&e));
            }
        }
    }

    #[test]
    fn setting1_bayes_risk() {
        assert_abs_diff_eq!(ALL[0].bayes_risk(), 0.078650, epsilon = 5e-7);
    }

    #[test]
    fn setting3_quadrature_converges() {
        let a = Scenario::Setting3.bayes_risk_with(400);
        let b = Scenario::Setting3.bayes_risk_with(800);
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }

    #[test]
    fn setting3_mechanism_sums_to_one() {
        for x2 in [0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(setting3_mechanism(x2).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn samples_are_masked_and_use_mechanism_patterns() {
        let mut rng = stream_rng(1, 0, "train");
        for s in ALL {
            let allowed = s.observed_patterns();
            for t in s.sample_train(400, &mut rng) {
                assert!(allowed.contains(&t.o()));
                for j in 0..s.d() {
                    if !t.o().is_set(j) {
                        assert_eq!(t.x()[j], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn setting1_full_pattern_frequency() {
        let mut rng = stream_rng(11, 0, "train");
        let n = 100_000;
        let full = ALL[0]
            .sample_train(n, &mut rng)
            .iter()
            .filter(|s| s.o().bits() == 0b11)
            .count();
        assert!((full as f64 / n as f64 - 0.49).abs() < 0.005);
    }

    #[test]
    fn setting1_regression_check() {
        // Bin x1 into deciles of [-3, 3] and compare label means with η.
        let s = ALL[0];
        let mut rng = stream_rng(2, 0, "test");
        let data = s.sample_test(200_000, &mut rng);
        for b in 0..10 {
            let lo = -3.0 + 0.6 * b as f64;
            let hits: Vec<&LabeledSample> = data.iter().filter(|t| t.x[0] >= lo && t.x[0] < lo + 0.6).collect();
            let mean = hits.iter().map(|t| t.y as f64).sum::<f64>() / hits.len() as f64;
            let eta_lo = s.true_eta(&[lo + 0.6, 0.0]);
            let eta_hi = s.true_eta(&[lo, 0.0]);
            let se = (0.25 / hits.len() as f64).sqrt();
            assert!(mean >= eta_lo - 3.0 * se && mean <= eta_hi + 3.0 * se, "bin {b}: {mean}");
        }
    }

    #[test]
    fn setting2_pattern_depends_on_x1() {
        let mut rng = stream_rng(4, 0, "train");
        // O is drawn after (X, Y); reproduce it by re-drawing with the x1 kept.
        let s = Scenario::Setting2;
        let mut counts = [(0usize, 0usize, 0.0f64); 5];
        for _ in 0..50_000 {
            let (x, _) = s.draw_xy(&mut rng);
            let o = s.draw_pattern(&x, &mut rng);
            let bin = ((x[0] * 5.0) as usize).min(4);
            counts[bin].0 += 1;
            counts[bin].1 += usize::from(o.to_string() == "1110");
            counts[bin].2 += x[0];
        }
        for (n, hits, sx) in counts {
            let rate = hits as f64 / n as f64;
            let target = sx / n as f64;
            assert!((rate - target).abs() < 3.0 * (0.25 / n as f64).sqrt());
        }
    }

    #[test]
    fn seeding_is_reproducible() {
        let a = ALL[2].sample_train(50, &mut stream_rng(9, 3, "train"));
        let b = ALL[2].sample_train(50, &mut stream_rng(9, 3, "train"));
        assert_eq!(a, b);
        let c = ALL[2].sample_train(50, &mut stream_rng(9, 4, "train"));
        assert_ne!(a, c);
        assert_ne!(stream_seed(0, 0, "train"), stream_seed(0, 0, "test"));
    }

    #[test]
    fn grid_weights_normalised() {
        for s in ALL {
            let dist = s.to_finite_distribution(6).unwrap();
            assert_abs_diff_eq!(dist.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(Scenario::Setting2.to_finite_distribution(1).is_err());
    }

    #[test]
    fn setting3_signal_variances() {
        let s = Scenario::Setting3;
        let dist = s.to_finite_distribution(200).unwrap();
        let dec = decompose(&dist);
        let obs = s.observed_patterns();
        let e1 = sigma_sq(&dist, &dec, "10".parse().unwrap(), &obs).unwrap();
        let e2 = sigma_sq(&dist, &dec, "01".parse().unwrap(), &obs).unwrap();
        let e12 = sigma_sq(&dist, &dec, "11".parse().unwrap(), &obs).unwrap();
        assert_abs_diff_eq!(e1, 1.0 / 48.0, epsilon = 1e-3);
        assert_abs_diff_eq!(e2, 1.0 / 32.0, epsilon = 1e-3);
        assert!(e12 < 1e-20);
    }

    #[test]
    fn setting2_signal_variances_coarse() {
        let s = Scenario::Setting2;
        let dist = s.to_finite_distribution(12).unwrap();
        let dec = decompose(&dist);
        let obs = s.observed_patterns();
        let sig = |p: &str| sigma_sq(&dist, &dec, p.parse().unwrap(), &obs).unwrap();
        assert_abs_diff_eq!(sig("0110"), 1.0 / 540.0, epsilon = 1e-3);
        assert_abs_diff_eq!(sig("0100"), 1.0 / 432.0, epsilon = 1e-3);
        assert_abs_diff_eq!(sig("0001"), 1.0 / 48.0, epsilon = 1e-3);
        assert!(sig("1000") < 1e-20);
    }
}
