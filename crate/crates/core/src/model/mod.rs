//! The background distribution: a product of per-row Gaussians, stored as
//! blocks of rows that share parameters.
//!
//! Rows that have been inside exactly the same assimilated extensions have
//! received the same updates, so they are kept together in one
//! [`GaussianBlock`]. Every update returns a new model; blocks untouched by
//! an update are shared with the previous model through `Arc`.

mod update;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Extension, Intention};
use crate::linalg;

pub use update::{solve_spread_multiplier, SpreadMultiplier};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("covariance is not symmetric positive definite")]
    NotSpd,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("extension is empty")]
    EmptyExtension,
    #[error("row {index} is outside the model's {n} rows")]
    RowOutOfRange { index: usize, n: usize },
    #[error("direction is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("spread pattern has no preceding location pattern for the same extension")]
    SpreadBeforeLocation,
    #[error("location multiplier system is singular")]
    SingularLocationSystem,
    #[error("spread multiplier root not bracketable: {0}")]
    NoRoot(String),
    #[error("blocks do not partition the rows: {0}")]
    BadPartition(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Parameters shared by a set of rows, kept in information form
/// (precision `Σ⁻¹` and shift `Σ⁻¹μ`) with the moment form cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlock {
    members: Vec<usize>,
    precision: DMatrix<f64>,
    shift: DVector<f64>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBlock {
    pub fn from_moments(
        members: Vec<usize>,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self, ModelError> {
        if covariance.nrows() != mean.len() || !covariance.is_square() {
            return Err(ModelError::Dimension { expected: mean.len(), got: covariance.nrows() });
        }
        if linalg::asymmetry(&covariance) > 1e-10 {
            return Err(ModelError::NotSpd);
        }
        let chol = linalg::spd_cholesky(&covariance).ok_or(ModelError::NotSpd)?;
        let mut precision = chol.inverse();
        linalg::symmetrize(&mut precision);
        let shift = &precision * &mean;
        Ok(Self { members, precision, shift, mean, covariance })
    }

    pub fn from_natural(
        members: Vec<usize>,
        precision: DMatrix<f64>,
        shift: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let mut block = Self {
            members,
            mean: DVector::zeros(shift.len()),
            covariance: DMatrix::zeros(shift.len(), shift.len()),
            precision,
            shift,
        };
        block.materialize()?;
        Ok(block)
    }

    /// Recomputes the cached moment form from the natural parameters.
    fn materialize(&mut self) -> Result<(), ModelError> {
        linalg::symmetrize(&mut self.precision);
        let chol = linalg::spd_cholesky(&self.precision).ok_or(ModelError::NotSpd)?;
        self.mean = chol.solve(&self.shift);
        self.covariance = chol.inverse();
        linalg::symmetrize(&mut self.covariance);
        Ok(())
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    fn with_members(&self, members: Vec<usize>) -> Self {
        Self { members, ..self.clone() }
    }

    fn max_param_diff(&self, other: &GaussianBlock) -> f64 {
        let dm = (&self.mean - &other.mean).amax();
        let dc = (&self.covariance - &other.covariance).amax();
        dm.max(dc)
    }
}

/// Every row independently `N(mu, sigma)`.
pub fn init_background(mu: DVector<f64>, sigma: DMatrix<f64>, n: usize) -> Result<BackgroundModel, ModelError> {
    BackgroundModel::new(mu, sigma, n)
}

/// A subgroup together with its observed target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationPattern {
    pub intention: Intention,
    pub extension: Extension,
    #[serde(with = "crate::serde_la::vector")]
    pub mean: DVector<f64>,
}

/// A subgroup, a unit direction and the observed variance along it,
/// measured around the subgroup's observed mean `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadPattern {
    pub intention: Intention,
    pub extension: Extension,
    #[serde(with = "crate::serde_la::vector")]
    pub center: DVector<f64>,
    #[serde(with = "crate::serde_la::vector")]
    pub direction: DVector<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Pattern {
    Location(LocationPattern),
    Spread(SpreadPattern),
}

impl Pattern {
    pub fn intention(&self) -> &Intention {
        match self {
            Pattern::Location(p) => &p.intention,
            Pattern::Spread(p) => &p.intention,
        }
    }

    pub fn extension(&self) -> &Extension {
        match self {
            Pattern::Location(p) => &p.extension,
            Pattern::Spread(p) => &p.extension,
        }
    }

    pub fn kind(&self) -> crate::scoring::PatternKind {
        match self {
            Pattern::Location(_) => crate::scoring::PatternKind::Location,
            Pattern::Spread(_) => crate::scoring::PatternKind::Spread,
        }
    }
}

/// Result of [`BackgroundModel::assimilate`].
#[derive(Debug, Clone)]
pub struct Assimilation {
    pub model: BackgroundModel,
    /// Full passes over the constraints that still moved some parameter by
    /// at least the tolerance.
    pub rounds: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AssimilateOptions {
    pub tol: f64,
    pub max_rounds: usize,
}

impl Default for AssimilateOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_rounds: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    dim: usize,
    blocks: Vec<Arc<GaussianBlock>>,
    row_block: Vec<usize>,
    history: Vec<Pattern>,
}

impl BackgroundModel {
    /// The maximum-entropy model under a prior mean and covariance: every
    /// row independently `N(mu, sigma)`.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, n: usize) -> Result<Self, ModelError> {
        if sigma.nrows() != mu.len() {
            return Err(ModelError::Dimension { expected: mu.len(), got: sigma.nrows() });
        }
        let dim = mu.len();
        let block = GaussianBlock::from_moments((0..n).collect(), mu, sigma)?;
        Ok(Self { dim, blocks: vec![Arc::new(block)], row_block: vec![0; n], history: Vec::new() })
    }

    /// Prior set to the empirical mean and population covariance.
    pub fn empirical(dataset: &crate::data::Dataset) -> Result<Self, ModelError> {
        let (mu, sigma) = dataset.target_moments();
        Self::new(mu, sigma, dataset.n())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.row_block.len()
    }

    pub fn blocks(&self) -> impl ExactSizeIterator<Item = &GaussianBlock> {
        self.blocks.iter().map(|b| b.as_ref())
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn history(&self) -> &[Pattern] {
        &self.history
    }

    pub fn row_mean(&self, i: usize) -> &DVector<f64> {
        self.blocks[self.row_block[i]].mean()
    }

    pub fn row_covariance(&self, i: usize) -> &DMatrix<f64> {
        self.blocks[self.row_block[i]].covariance()
    }

    /// Largest absolute difference in any row's mean or covariance entry, or
    /// `None` when the shapes differ.
    pub fn max_row_difference(&self, other: &BackgroundModel) -> Option<f64> {
        if self.n() != other.n() || self.dim != other.dim {
            return None;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n() {
            worst = worst
                .max((self.row_mean(i) - other.row_mean(i)).amax())
                .max((self.row_covariance(i) - other.row_covariance(i)).amax());
        }
        Some(worst)
    }

    /// Splits every block into its part inside and outside `ext`.
    pub fn refine_blocks(&self, ext: &Extension) -> Result<Self, ModelError> {
        let mut next = self.clone();
        next.refine_in_place(ext)?;
        Ok(next)
    }

    fn refine_in_place(&mut self, ext: &Extension) -> Result<(), ModelError> {
        let n = self.n();
        if let Some(&last) = ext.indices().last() {
            if last >= n {
                return Err(ModelError::RowOutOfRange { index: last, n });
            }
        }
        let mut inside = vec![false; n];
        for &i in ext.indices() {
            inside[i] = true;
        }
        let mut blocks = Vec::with_capacity(self.blocks.len() + 1);
        for block in &self.blocks {
            let (a, b): (Vec<usize>, Vec<usize>) = block.members().iter().partition(|&&i| inside[i]);
            if a.is_empty() || b.is_empty() {
                blocks.push(Arc::clone(block));
            } else {
                blocks.push(Arc::new(block.with_members(a)));
                blocks.push(Arc::new(block.with_members(b)));
            }
        }
        self.blocks = blocks;
        self.reindex();
        Ok(())
    }

    fn reindex(&mut self) {
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block.members() {
                self.row_block[i] = b;
            }
        }
    }

    /// `(block index, rows of ext in that block)` for blocks meeting `ext`,
    /// ordered by block index.
    pub fn block_counts(&self, ext: &Extension) -> Result<Vec<(usize, usize)>, ModelError> {
        self.block_counts_iter(ext.indices().iter().copied())
    }

    pub(crate) fn block_counts_iter(
        &self,
        rows: impl Iterator<Item = usize>,
    ) -> Result<Vec<(usize, usize)>, ModelError> {
        let n = self.n();
        let mut counts = vec![0usize; self.blocks.len()];
        for i in rows {
            if i >= n {
                return Err(ModelError::RowOutOfRange { index: i, n });
            }
            counts[self.row_block[i]] += 1;
        }
        Ok(counts.into_iter().enumerate().filter(|&(_, c)| c > 0).collect())
    }

    pub(crate) fn block(&self, b: usize) -> &GaussianBlock {
        &self.blocks[b]
    }

    /// Mean and covariance of the subgroup mean `f_I(Y)` under the model:
    /// `(Σ μ_i / |I|, Σ Σ_i / |I|²)`.
    pub fn mean_marginal(&self, ext: &Extension) -> Result<(DVector<f64>, DMatrix<f64>), ModelError> {
        let counts = self.block_counts(ext)?;
        self.mean_marginal_from_counts(&counts, ext.len())
    }

    pub(crate) fn mean_marginal_from_counts(
        &self,
        counts: &[(usize, usize)],
        size: usize,
    ) -> Result<(DVector<f64>, DMatrix<f64>), ModelError> {
        if size == 0 {
            return Err(ModelError::EmptyExtension);
        }
        let mut mu = DVector::zeros(self.dim);
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for &(b, c) in counts {
            let block = &self.blocks[b];
            mu.axpy(c as f64, block.mean(), 1.0);
            cov += block.covariance() * c as f64;
        }
        let k = size as f64;
        Ok((mu / k, cov / (k * k)))
    }

    /// Model expectation of the spread statistic along `w`, measured around
    /// the fixed `anchor`.
    pub fn expected_spread(
        &self,
        ext: &Extension,
        w: &DVector<f64>,
        anchor: &DVector<f64>,
    ) -> Result<f64, ModelError> {
        self.check_direction(w)?;
        if ext.is_empty() {
            return Err(ModelError::EmptyExtension);
        }
        let counts = self.block_counts(ext)?;
        let mut total = 0.0;
        for (b, c) in counts {
            let block = &self.blocks[b];
            let s = linalg::quad_form(block.covariance(), w);
            let d = w.dot(&(block.mean() - anchor));
            total += c as f64 * (s + d * d);
        }
        Ok(total / ext.len() as f64)
    }

    fn check_direction(&self, w: &DVector<f64>) -> Result<(), ModelError> {
        if w.len() != self.dim {
            return Err(ModelError::Dimension { expected: self.dim, got: w.len() });
        }
        if !linalg::is_unit(w, 1e-12) {
            return Err(ModelError::NotUnit(w.norm()));
        }
        Ok(())
    }

    fn has_location_for(&self, ext: &Extension) -> bool {
        self.history
            .iter()
            .any(|p| matches!(p, Pattern::Location(l) if &l.extension == ext))
    }

    fn record(&mut self, pattern: Pattern) {
        if !self.history.contains(&pattern) {
            self.history.push(pattern);
        }
    }

    /// Minimum-KL update so that the expected subgroup mean equals the
    /// pattern's observed mean. Rows outside the extension are untouched.
    pub fn apply_location_constraint(&self, pattern: &LocationPattern) -> Result<Self, ModelError> {
        let mut next = self.clone();
        next.refine_in_place(&pattern.extension)?;
        next.project_location(pattern)?;
        next.record(Pattern::Location(pattern.clone()));
        Ok(next)
    }

    /// Minimum-KL update so that the expected spread along the pattern's
    /// direction equals its observed variance. The location pattern for the
    /// same extension must already be in the history.
    pub fn apply_spread_constraint(&self, pattern: &SpreadPattern) -> Result<Self, ModelError> {
        if !self.has_location_for(&pattern.extension) {
            return Err(ModelError::SpreadBeforeLocation);
        }
        let mut next = self.clone();
        next.refine_in_place(&pattern.extension)?;
        next.project_spread(pattern)?;
        next.record(Pattern::Spread(pattern.clone()));
        Ok(next)
    }

    /// Adds `patterns` to the history and runs cyclic coordinate descent over
    /// every constraint in the history until a full pass moves no mean or
    /// covariance entry by `tol` or more.
    pub fn assimilate(&self, patterns: &[Pattern], opts: AssimilateOptions) -> Result<Assimilation, ModelError> {
        if patterns.is_empty() {
            return Ok(Assimilation { model: self.clone(), rounds: 0, converged: true });
        }
        let mut next = self.clone();
        for p in patterns {
            if let Pattern::Spread(s) = p {
                if !next.has_location_for(&s.extension) {
                    return Err(ModelError::SpreadBeforeLocation);
                }
            }
            next.refine_in_place(p.extension())?;
            next.record(p.clone());
        }
        let history = next.history.clone();
        let mut rounds = 0;
        let mut converged = false;
        for _ in 0..opts.max_rounds {
            let before = next.blocks.clone();
            for p in &history {
                match p {
                    Pattern::Location(l) => next.project_location(l)?,
                    Pattern::Spread(s) => next.project_spread(s)?,
                }
            }
            let change = before
                .iter()
                .zip(&next.blocks)
                .map(|(a, b)| a.max_param_diff(b))
                .fold(0.0, f64::max);
            if change < opts.tol {
                converged = true;
                break;
            }
            rounds += 1;
        }
        Ok(Assimilation { model: next, rounds, converged })
    }

    /// Checks the structural invariants: blocks partition the rows, every
    /// block is SPD with matching dimensions.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n();
        let mut seen = vec![false; n];
        for (b, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(ModelError::BadPartition(format!("block {b} is empty")));
            }
            if block.mean().len() != self.dim || block.covariance().nrows() != self.dim {
                return Err(ModelError::Dimension { expected: self.dim, got: block.mean().len() });
            }
            for &i in block.members() {
                if i >= n || seen[i] {
                    return Err(ModelError::BadPartition(format!("row {i} repeated or out of range")));
                }
                seen[i] = true;
            }
            if linalg::spd_cholesky(block.precision()).is_none() || linalg::spd_cholesky(block.covariance()).is_none() {
                return Err(ModelError::NotSpd);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ModelError::BadPartition(format!("row {i} not covered")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(&ModelRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let record: ModelRecord = serde_json::from_str(text)?;
        Self::try_from(record)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockRecord {
    members: Vec<usize>,
    #[serde(with = "crate::serde_la::vector")]
    mu: DVector<f64>,
    #[serde(with = "crate::serde_la::square")]
    sigma: DMatrix<f64>,
}

/// Serialized form: blocks in moment form, matrices as row-major arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename = "BackgroundModel")]
pub struct ModelRecord {
    dim: usize,
    n: usize,
    blocks: Vec<BlockRecord>,
    history: Vec<Pattern>,
}

impl From<&BackgroundModel> for ModelRecord {
    fn from(m: &BackgroundModel) -> Self {
        Self {
            dim: m.dim,
            n: m.n(),
            blocks: m
                .blocks
                .iter()
                .map(|b| BlockRecord {
                    members: b.members.clone(),
                    mu: b.mean.clone(),
                    sigma: b.covariance.clone(),
                })
                .collect(),
            history: m.history.clone(),
        }
    }
}

impl TryFrom<ModelRecord> for BackgroundModel {
    type Error = ModelError;

    fn try_from(r: ModelRecord) -> Result<Self, ModelError> {
        let mut blocks = Vec::with_capacity(r.blocks.len());
        for b in r.blocks {
            if b.mu.len() != r.dim {
                return Err(ModelError::Dimension { expected: r.dim, got: b.mu.len() });
            }
            // the stored moments become the cache verbatim, so a reload
            // serializes to the same bytes
            let block = GaussianBlock::from_moments(b.members, b.mu, b.sigma)?;
            blocks.push(Arc::new(block));
        }
        let mut model = BackgroundModel { dim: r.dim, blocks, row_block: vec![usize::MAX; r.n], history: r.history };
        for (b, block) in model.blocks.iter().enumerate() {
            for &i in block.members() {
                if i >= r.n {
                    return Err(ModelError::BadPartition(format!("row {i} out of range")));
                }
                model.row_block[i] = b;
            }
        }
        model.validate()?;
        Ok(model)
    }
}

impl Serialize for BackgroundModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ModelRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BackgroundModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let record = ModelRecord::deserialize(d)?;
        BackgroundModel::try_from(record).map_err(serde::de::Error::custom)
    }
}
