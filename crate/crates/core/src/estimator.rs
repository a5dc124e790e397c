//! The hard-thresholding ANOVA missing-data (HAM) classifier.
//!
//! Fitting estimates `f_ω` for every pattern with available cases by a
//! nearest-neighbour recursion in increasing dimension, scores each pattern
//! by its mean squared fitted value `σ̂²_ω`, and keeps an antichain `Ω̂` of
//! patterns whose score clears the threshold `τ_ω`. Predictions sum the
//! estimated components over `Ω̂ ∪ L(Ω̂)`.
//!
//! Selection scans patterns by decreasing dimension and skips a pattern only
//! when `Ω̂` already holds a pattern strictly above it. Incomparable patterns
//! already in `Ω̂` do not block a candidate, so multi-element antichains such
//! as `{0110, 0001}` can be recovered.

use crate::anova::ordered_bell;
use crate::data::MaskedSample;
use crate::error::{HamError, Result};
use crate::neighbors::{IndexedPoints, PatternView};
use crate::pattern::{Pattern, PatternSet};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const DEFAULT_THRESHOLD_SCALE: f64 = 1.0 / 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct HamHyperParams {
    /// Tail exponents, one per coordinate.
    pub gamma: Vec<f64>,
    /// Smoothness, in `(0, 1]`.
    pub beta: f64,
    /// Margin exponent.
    pub alpha: f64,
    pub threshold_scale: f64,
    /// When set, selection is skipped and this antichain is used instead.
    pub omega_oracle: Option<PatternSet>,
}

impl HamHyperParams {
    /// `γ = 1_d`, `β = α = 1`, threshold scale `1/16`.
    pub fn new(d: usize) -> Self {
        HamHyperParams {
            gamma: vec![1.0; d],
            beta: 1.0,
            alpha: 1.0,
            threshold_scale: DEFAULT_THRESHOLD_SCALE,
            omega_oracle: None,
        }
    }

    pub fn with_oracle(mut self, omega: PatternSet) -> Self {
        self.omega_oracle = Some(omega);
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(HamError::InvalidParameter(m));
        if self.gamma.len() != d {
            return bad(format!("gamma has {} entries, expected {d}", self.gamma.len()));
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("gamma entries must be finite and non-negative".into());
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta = {} outside (0, 1]", self.beta));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha = {} must be finite and >= 0", self.alpha));
        }
        if !(self.threshold_scale.is_finite() && self.threshold_scale > 0.0) {
            return bad(format!("threshold scale = {} must be > 0", self.threshold_scale));
        }
        if let Some(oracle) = &self.omega_oracle {
            if oracle.d() != d {
                return Err(HamError::DimensionMismatch {
                    expected: d,
                    found: oracle.d(),
                });
            }
            oracle.require_antichain()?;
        }
        Ok(())
    }
}

/// `γ_ω = min{γ_j : ω_j = 1}`; infinite for `0_d`.
pub fn gamma_omega(gamma: &[f64], omega: Pattern) -> f64 {
    omega
        .coords()
        .map(|j| gamma[j])
        .fold(f64::INFINITY, f64::min)
}

/// Denominator `γ_ω(2β + d_ω) + αβ` shared by the k, τ and rate exponents.
fn rate_denominator(gamma_w: f64, beta: f64, alpha: f64, d_w: usize) -> f64 {
    gamma_w * (2.0 * beta + d_w as f64) + alpha * beta
}

/// `⌊base^exponent⌋`, snapping results within a few ulps of an integer so that
/// e.g. `1000^{2/3}` floors to 100 rather than 99.
pub fn floor_pow(base: f64, exponent: f64) -> usize {
    let v = base.powf(exponent);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.floor() as usize
    }
}

/// `k_ω = 1 + ⌊n_ω^{2βγ_ω / (γ_ω(2β+d_ω)+αβ)}⌋`, capped at `n_ω`.
///
/// A zero denominator (`γ_ω = 0` and `αβ = 0`) yields `k = n_ω`.
pub fn compute_k(n_w: usize, gamma_w: f64, beta: f64, alpha: f64, d_w: usize) -> usize {
    let denom = rate_denominator(gamma_w, beta, alpha, d_w);
    if denom == 0.0 {
        log::debug!("degenerate k exponent for n = {n_w}; using k = n");
        return n_w.max(1);
    }
    let exponent = 2.0 * beta * gamma_w / denom;
    let k = 1 + floor_pow(n_w as f64, exponent);
    if k > n_w {
        log::debug!("k = {k} exceeds n = {n_w}; capped");
    }
    k.min(n_w).max(1)
}

/// `τ_ω = s · n_ω^{−βγ_ω / (2[γ_ω(2β+d_ω)+αβ])}` with `s` the threshold scale.
pub fn compute_tau(
    n_w: usize,
    gamma_w: f64,
    beta: f64,
    alpha: f64,
    d_w: usize,
    threshold_scale: f64,
) -> f64 {
    let denom = rate_denominator(gamma_w, beta, alpha, d_w);
    if denom == 0.0 {
        return threshold_scale;
    }
    let exponent = -beta * gamma_w / (2.0 * denom);
    threshold_scale * (n_w as f64).powf(exponent)
}

#[derive(Clone, Debug)]
pub struct PatternEstimate {
    pub omega: Pattern,
    pub n: usize,
    pub k: usize,
    pub tau: f64,
    pub sigma_hat_sq: f64,
    /// Available-case rows, ascending.
    rows: Vec<usize>,
    /// `f̂_ω` at each row of `rows`.
    fitted: Vec<f64>,
}

impl PatternEstimate {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn fitted_values(&self) -> &[f64] {
        &self.fitted
    }

    /// `f̂_ω` at training row `row`, if the row is an available case.
    pub fn fitted_f(&self, row: usize) -> Option<f64> {
        self.rows.binary_search(&row).ok().map(|i| self.fitted[i])
    }

    /// Test helper for hand-built selection scenarios.
    pub fn summary(omega: Pattern, n: usize, k: usize, tau: f64, sigma_hat_sq: f64) -> Self {
        PatternEstimate {
            omega,
            n,
            k,
            tau,
            sigma_hat_sq,
            rows: Vec::new(),
            fitted: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub eta_hat: f64,
}

#[derive(Clone, Debug)]
pub struct FittedHam {
    d: usize,
    hyper: HamHyperParams,
    f0_hat: f64,
    /// One entry per pattern with available cases, except `0_d`.
    estimates: BTreeMap<Pattern, PatternEstimate>,
    omega_hat: PatternSet,
    active: PatternSet,
    warnings: Vec<String>,
    labels: Vec<u8>,
    views: BTreeMap<Pattern, PatternView>,
}

impl FittedHam {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hyper(&self) -> &HamHyperParams {
        &self.hyper
    }

    pub fn f0_hat(&self) -> f64 {
        self.f0_hat
    }

    pub fn estimates(&self) -> &BTreeMap<Pattern, PatternEstimate> {
        &self.estimates
    }

    pub fn omega_hat(&self) -> &PatternSet {
        &self.omega_hat
    }

    /// `Ω̂ ∪ L(Ω̂) ∪ {0_d}`.
    pub fn active_patterns(&self) -> &PatternSet {
        &self.active
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Patterns with at least one available case (`N`), including `0_d`.
    pub fn observable_patterns(&self) -> PatternSet {
        let mut set = PatternSet::new(self.d).unwrap();
        set.insert(Pattern::zeros(self.d).unwrap()).unwrap();
        for p in self.estimates.keys() {
            set.insert(*p).unwrap();
        }
        set
    }

    /// `f̂_ω(x0)` via the neighbour recursion at the query point.
    pub fn estimate_f(&self, omega: Pattern, x0: &[f64]) -> Result<f64> {
        self.check_query(x0)?;
        let mut memo = HashMap::new();
        self.estimate_f_memo(omega, x0, &mut memo)
    }

    fn check_query(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: x0.len(),
            });
        }
        Ok(())
    }

    fn estimate_f_memo(
        &self,
        omega: Pattern,
        x0: &[f64],
        memo: &mut HashMap<Pattern, f64>,
    ) -> Result<f64> {
        if omega.d() != self.d {
            return Err(HamError::DimensionMismatch {
                expected: self.d,
                found: omega.d(),
            });
        }
        if omega.is_zero() {
            return Ok(self.f0_hat);
        }
        if let Some(v) = memo.get(&omega) {
            return Ok(*v);
        }
        let est = self
            .estimates
            .get(&omega)
            .ok_or(HamError::Unobservable(omega))?;
        let view = &self.views[&omega];
        let mut value = neighbour_mean(view, &self.labels, x0, est.k)? - 0.5;
        for sub in omega.strict_sub_patterns() {
            value -= self.estimate_f_memo(sub, x0, memo)?;
        }
        memo.insert(omega, value);
        Ok(value)
    }

    /// `η̂(x0) = 1/2 + Σ_{ω ∈ Ω̂ ∪ L(Ω̂)} f̂_ω(x0)`; label 1 iff `η̂ ≥ 1/2`.
    pub fn predict(&self, x0: &[f64]) -> Result<Prediction> {
        self.check_query(x0)?;
        let mut memo = HashMap::new();
        let mut eta_hat = 0.5;
        for omega in self.active.iter() {
            eta_hat += self.estimate_f_memo(*omega, x0, &mut memo)?;
        }
        Ok(Prediction {
            label: u8::from(eta_hat >= 0.5),
            eta_hat,
        })
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

fn neighbour_mean(view: &PatternView, labels: &[u8], x: &[f64], k: usize) -> Result<f64> {
    let nn = view.k_nearest(x, k)?;
    let ones: usize = nn.iter().map(|&r| labels[r] as usize).sum();
    Ok(ones as f64 / nn.len() as f64)
}

/// Every pattern below some observed pattern, i.e. with `n_ω > 0`.
fn observable_patterns(train: &[MaskedSample], d: usize) -> Vec<Pattern> {
    let observed: BTreeSet<Pattern> = train.iter().map(|s| s.o()).collect();
    let mut all = BTreeSet::new();
    for o in observed {
        all.extend(o.sub_patterns());
    }
    debug_assert!(all.iter().all(|p| p.d() == d));
    all.into_iter().collect()
}

pub fn fit(train: &[MaskedSample], hyper: &HamHyperParams) -> Result<FittedHam> {
    let first = train.first().ok_or(HamError::EmptyTrainingSet)?;
    let d = first.d();
    if let Some(s) = train.iter().find(|s| s.d() != d) {
        return Err(HamError::DimensionMismatch {
            expected: d,
            found: s.d(),
        });
    }
    hyper.validate(d)?;

    let n = train.len();
    let labels: Vec<u8> = train.iter().map(|s| s.y()).collect();
    let ones: usize = labels.iter().map(|&y| y as usize).sum();
    let f0_hat = ones as f64 / n as f64 - 0.5;

    let index = IndexedPoints::build(d, train.iter().map(|s| s.x().to_vec()).zip(0..))?;
    let mut estimates: BTreeMap<Pattern, PatternEstimate> = BTreeMap::new();
    let mut views = BTreeMap::new();

    for omega in observable_patterns(train, d) {
        if omega.is_zero() {
            continue;
        }
        let rows: Vec<usize> = (0..n).filter(|&i| omega.le_bits(train[i].o())).collect();
        let n_w = rows.len();
        let gamma_w = gamma_omega(&hyper.gamma, omega);
        let d_w = omega.dim();
        let k = compute_k(n_w, gamma_w, hyper.beta, hyper.alpha, d_w);
        let tau = compute_tau(n_w, gamma_w, hyper.beta, hyper.alpha, d_w, hyper.threshold_scale);
        let view = index.pattern_view(omega, &rows)?;
        let subs: Vec<&PatternEstimate> = omega
            .strict_sub_patterns()
            .iter()
            .filter(|s| !s.is_zero())
            .map(|s| &estimates[s])
            .collect();

        let mut fitted = Vec::with_capacity(n_w);
        for &i in &rows {
            let mut value = neighbour_mean(&view, &labels, train[i].x(), k)? - 0.5 - f0_hat;
            for sub in &subs {
                value -= sub
                    .fitted_f(i)
                    .expect("available cases of ω are available for every ω′ ≺ ω");
            }
            fitted.push(value);
        }
        let sigma_hat_sq = fitted.iter().map(|f| f * f).sum::<f64>() / n_w as f64;
        estimates.insert(
            omega,
            PatternEstimate {
                omega,
                n: n_w,
                k,
                tau,
                sigma_hat_sq,
                rows,
                fitted,
            },
        );
        views.insert(omega, view);
    }

    let mut warnings = Vec::new();
    let omega_hat = match &hyper.omega_oracle {
        Some(oracle) => {
            let mut kept = PatternSet::new(d)?;
            for p in oracle {
                if p.is_zero() || estimates.contains_key(p) {
                    kept.insert(*p)?;
                } else {
                    let msg = format!("oracle pattern {p} has no available cases; dropped");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
            kept
        }
        None => select_omega(d, &estimates)?,
    };
    let mut active = omega_hat.down_closure();
    active.insert(Pattern::zeros(d)?)?;

    Ok(FittedHam {
        d,
        hyper: hyper.clone(),
        f0_hat,
        estimates,
        omega_hat,
        active,
        warnings,
        labels,
        views,
    })
}

/// Hard-thresholding scan over patterns by decreasing dimension.
pub fn select_omega(d: usize, estimates: &BTreeMap<Pattern, PatternEstimate>) -> Result<PatternSet> {
    let mut omega_hat = PatternSet::new(d)?;
    // BTreeMap iterates in canonical (dim, bits) order; walk dimensions downward
    // while keeping the canonical order inside each dimension.
    let mut by_dim: BTreeMap<usize, Vec<&PatternEstimate>> = BTreeMap::new();
    for est in estimates.values().filter(|e| !e.omega.is_zero()) {
        by_dim.entry(est.omega.dim()).or_default().push(est);
    }
    for (_, group) in by_dim.iter().rev() {
        for est in group {
            if !omega_hat.strict_dominators(est.omega)?.is_empty() {
                continue;
            }
            if est.sigma_hat_sq >= est.tau {
                omega_hat.insert(est.omega)?;
            }
        }
    }
    debug_assert!(omega_hat.is_antichain());
    Ok(omega_hat)
}

/// Absolute bound `B_{dim(ω)}` on every `f̂_ω` value.
pub fn component_bound(omega: Pattern) -> f64 {
    ordered_bell(omega.dim()).map(|b| b as f64).unwrap_or(f64::INFINITY)
}
