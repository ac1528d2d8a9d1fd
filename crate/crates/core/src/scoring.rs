//! Information content, description length and subjective interestingness.
//!
//! All logarithms are natural. The spread score approximates the law of the
//! spread statistic, a positive combination of independent `χ²₁` variables,
//! by an affine transform `α·χ²_m + β` with matching first three moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::data::{Extension, Intention};
use crate::linalg;
use crate::model::{BackgroundModel, ModelError};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("mean-marginal covariance is numerically singular")]
    Singular,
    #[error("chi-squared coefficient {0} is not positive")]
    BadCoefficient(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid description-length parameters: gamma {gamma}, eta {eta}")]
    BadDlParams { gamma: f64, eta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlParams {
    pub gamma: f64,
    pub eta: f64,
}

impl Default for DlParams {
    fn default() -> Self {
        Self { gamma: 0.1, eta: 1.0 }
    }
}

impl DlParams {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.gamma > 0.0 && self.eta > 0.0 && self.gamma.is_finite() && self.eta.is_finite() {
            Ok(())
        } else {
            Err(ScoreError::BadDlParams { gamma: self.gamma, eta: self.eta })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Location,
    Spread,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub ic: f64,
    pub dl: f64,
    pub si: f64,
}

impl ScoreBreakdown {
    pub fn new(ic: f64, dl: f64) -> Self {
        Self { ic, dl, si: ic / dl }
    }

    /// Scores with a non-finite SI (the `+∞` spread sentinel) are never
    /// returned as winners.
    pub fn is_valid(&self) -> bool {
        self.si.is_finite()
    }
}

pub fn description_length(intention: &Intention, kind: PatternKind, params: &DlParams) -> f64 {
    let base = params.gamma * intention.len() as f64 + params.eta;
    match kind {
        PatternKind::Location => base,
        PatternKind::Spread => base + 1.0,
    }
}

/// `-log` of the normal density of the subgroup mean at `observed`.
pub fn ic_location_from_marginal(
    mu: &DVector<f64>,
    cov: &DMatrix<f64>,
    observed: &DVector<f64>,
) -> Result<f64, ScoreError> {
    if observed.len() != mu.len() {
        return Err(ScoreError::Dimension { expected: mu.len(), got: observed.len() });
    }
    let chol = linalg::spd_cholesky(cov).ok_or(ScoreError::Singular)?;
    let d = mu.len() as f64;
    let maha = linalg::mahalanobis_sq(&chol, &(observed - mu));
    Ok(0.5 * (d * std::f64::consts::TAU.ln() + linalg::log_det(&chol)) + 0.5 * maha)
}

pub fn ic_location(
    model: &BackgroundModel,
    ext: &Extension,
    observed_mean: &DVector<f64>,
) -> Result<f64, ScoreError> {
    let (mu, cov) = model.mean_marginal(ext)?;
    ic_location_from_marginal(&mu, &cov, observed_mean)
}

pub fn si_location(
    model: &BackgroundModel,
    ext: &Extension,
    observed_mean: &DVector<f64>,
    intention: &Intention,
    params: &DlParams,
) -> Result<ScoreBreakdown, ScoreError> {
    let ic = ic_location(model, ext, observed_mean)?;
    Ok(ScoreBreakdown::new(ic, description_length(intention, PatternKind::Location, params)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2ComboParams {
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
}

impl Chi2ComboParams {
    /// From the power sums `S_k = Σ a_i^k`, k = 1, 2, 3.
    pub fn from_power_sums(s1: f64, s2: f64, s3: f64) -> Self {
        Self { alpha: s3 / s2, beta: s1 - s2 * s2 / s3, m: s2 * s2 * s2 / (s3 * s3) }
    }

    /// `-log` density of `α·χ²_m + β` at `v`; `+∞` outside the support.
    pub fn neg_log_density(&self, v: f64) -> f64 {
        let z = v - self.beta;
        if !(z > 0.0) {
            return f64::INFINITY;
        }
        let half_m = 0.5 * self.m;
        self.alpha.ln() + half_m * std::f64::consts::LN_2 + ln_gamma(half_m)
            - (half_m - 1.0) * (z / self.alpha).ln()
            + z / (2.0 * self.alpha)
    }
}

pub fn chi2_combo_params(a: &[f64]) -> Result<Chi2ComboParams, ScoreError> {
    chi2_combo_weighted(a.iter().map(|&x| (1.0, x)))
}

/// As [`chi2_combo_params`] with each coefficient repeated `count` times.
pub fn chi2_combo_weighted(
    terms: impl IntoIterator<Item = (f64, f64)>,
) -> Result<Chi2ComboParams, ScoreError> {
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    let mut any = false;
    for (count, a) in terms {
        if !(a > 0.0) || !a.is_finite() {
            return Err(ScoreError::BadCoefficient(a));
        }
        any = true;
        s1 += count * a;
        s2 += count * a * a;
        s3 += count * a * a * a;
    }
    if !any {
        return Err(ScoreError::BadCoefficient(0.0));
    }
    Ok(Chi2ComboParams::from_power_sums(s1, s2, s3))
}

/// Per-block `(rows, a_b)` with `a_b = w'Σ_b w / |I|`.
pub(crate) fn spread_coefficients(
    model: &BackgroundModel,
    ext: &Extension,
    w: &DVector<f64>,
) -> Result<Vec<(f64, f64)>, ScoreError> {
    if w.len() != model.dim() {
        return Err(ScoreError::Dimension { expected: model.dim(), got: w.len() });
    }
    if !linalg::is_unit(w, 1e-12) {
        return Err(ModelError::NotUnit(w.norm()).into());
    }
    if ext.is_empty() {
        return Err(ModelError::EmptyExtension.into());
    }
    let k = ext.len() as f64;
    Ok(model
        .block_counts(ext)?
        .into_iter()
        .map(|(b, c)| (c as f64, linalg::quad_form(model.block(b).covariance(), w) / k))
        .collect())
}

/// `-log` of the approximate density of the spread statistic at
/// `observed_var`. Returns `+∞` when the observation lies below the
/// approximation's support.
pub fn ic_spread(
    model: &BackgroundModel,
    ext: &Extension,
    w: &DVector<f64>,
    observed_var: f64,
) -> Result<f64, ScoreError> {
    let params = chi2_combo_weighted(spread_coefficients(model, ext, w)?)?;
    Ok(params.neg_log_density(observed_var))
}

pub fn si_spread(
    model: &BackgroundModel,
    ext: &Extension,
    w: &DVector<f64>,
    observed_var: f64,
    intention: &Intention,
    params: &DlParams,
) -> Result<ScoreBreakdown, ScoreError> {
    let ic = ic_spread(model, ext, w, observed_var)?;
    Ok(ScoreBreakdown::new(ic, description_length(intention, PatternKind::Spread, params)))
}
