//! Impute-then-kNN baselines: complete case, zero imputation, mean imputation.

use crate::data::MaskedSample;
use crate::error::{HamError, Result};
use crate::estimator::floor_pow;
use crate::neighbors::{IndexedPoints, PatternView};
use crate::pattern::Pattern;

/// Neighbour count as a function of `(n, d)`.
pub type KRule = fn(usize, usize) -> usize;

/// `max(1, ⌊n^{2/(3+d)}⌋)`.
pub fn default_k_rule(n: usize, d: usize) -> usize {
    floor_pow(n as f64, 2.0 / (3.0 + d as f64)).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    CompleteCase,
    ZeroImpute,
    MeanImpute,
}

#[derive(Clone, Debug)]
pub struct KnnModel {
    d: usize,
    k: usize,
    transform: Transform,
    /// Per-feature observed means; only for mean imputation.
    nu_hat: Option<Vec<f64>>,
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
    view: PatternView,
    warnings: Vec<String>,
}

impl KnnModel {
    fn build(
        d: usize,
        points: Vec<Vec<f64>>,
        labels: Vec<u8>,
        k: usize,
        transform: Transform,
        nu_hat: Option<Vec<f64>>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(HamError::EmptyTrainingSet);
        }
        let index = IndexedPoints::from_rows(d, &points)?;
        let rows: Vec<usize> = (0..points.len()).collect();
        let view = index.pattern_view(Pattern::ones(d)?, &rows)?;
        Ok(KnnModel {
            d,
            k: k.clamp(1, points.len()),
            transform,
            nu_hat,
            points,
            labels,
            view,
            warnings,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn nu_hat(&self) -> Option<&[f64]> {
        self.nu_hat.as_deref()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Mean label of the `k` nearest stored points.
    pub fn score(&self, x0: &[f64]) -> Result<f64> {
        let nn = self.view.k_nearest(x0, self.k)?;
        let ones: usize = nn.iter().map(|&r| self.labels[r] as usize).sum();
        Ok(ones as f64 / nn.len() as f64)
    }
}

/// 1 iff the mean label of the `k` nearest stored points is at least 1/2.
pub fn knn_classify(model: &KnnModel, x0: &[f64]) -> Result<u8> {
    Ok(u8::from(model.score(x0)? >= 0.5))
}

fn check_dims(train: &[MaskedSample]) -> Result<usize> {
    let d = train.first().ok_or(HamError::EmptyTrainingSet)?.d();
    if let Some(s) = train.iter().find(|s| s.d() != d) {
        return Err(HamError::DimensionMismatch {
            expected: d,
            found: s.d(),
        });
    }
    Ok(d)
}

pub fn fit_complete_case(train: &[MaskedSample], k_rule: KRule) -> Result<KnnModel> {
    let d = check_dims(train)?;
    let full = Pattern::ones(d)?;
    let kept: Vec<&MaskedSample> = train.iter().filter(|s| s.o() == full).collect();
    if kept.is_empty() {
        return Err(HamError::NoCompleteCases);
    }
    let k = k_rule(kept.len(), d);
    KnnModel::build(
        d,
        kept.iter().map(|s| s.x().to_vec()).collect(),
        kept.iter().map(|s| s.y()).collect(),
        k,
        Transform::CompleteCase,
        None,
        Vec::new(),
    )
}

pub fn fit_zero_impute(train: &[MaskedSample], k_rule: KRule) -> Result<KnnModel> {
    let d = check_dims(train)?;
    KnnModel::build(
        d,
        train.iter().map(|s| s.x().to_vec()).collect(),
        train.iter().map(|s| s.y()).collect(),
        k_rule(train.len(), d),
        Transform::ZeroImpute,
        None,
        Vec::new(),
    )
}

pub fn fit_mean_impute(train: &[MaskedSample], k_rule: KRule) -> Result<KnnModel> {
    let d = check_dims(train)?;
    let mut warnings = Vec::new();
    let nu_hat: Vec<f64> = (0..d)
        .map(|j| {
            let obs: Vec<f64> = train
                .iter()
                .filter(|s| s.o().is_set(j))
                .map(|s| s.x()[j])
                .collect();
            if obs.is_empty() {
                let msg = format!("feature x{} never observed; imputing 0", j + 1);
                log::warn!("{msg}");
                warnings.push(msg);
                0.0
            } else {
                obs.iter().sum::<f64>() / obs.len() as f64
            }
        })
        .collect();
    let points = train
        .iter()
        .map(|s| {
            (0..d)
                .map(|j| if s.o().is_set(j) { s.x()[j] } else { nu_hat[j] })
                .collect()
        })
        .collect();
    KnnModel::build(
        d,
        points,
        train.iter().map(|s| s.y()).collect(),
        k_rule(train.len(), d),
        Transform::MeanImpute,
        Some(nu_hat),
        warnings,
    )
}
