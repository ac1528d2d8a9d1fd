//! The direction along which a subgroup's spread is most surprising:
//! maximize spread SI over the unit sphere by projected gradient ascent.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::data::{DataError, Dataset, Extension, Intention};
use crate::linalg;
use crate::model::{BackgroundModel, ModelError, Pattern};
use crate::scoring::{description_length, Chi2ComboParams, DlParams, PatternKind};

#[derive(Debug, Error)]
pub enum SpreadOptError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no location pattern for this extension has been assimilated")]
    NoLocation,
    #[error("spread directions need at least two target dimensions")]
    OneDimensional,
    #[error("spread SI is undefined at w: observed variance {v} is not above the approximation's support edge {beta}")]
    SupportEdge { v: f64, beta: f64 },
    #[error("every start ended at an invalid spread score")]
    AllInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectionOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for DirectionOptions {
    fn default() -> Self {
        Self { restarts: 10, seed: 0, max_iter: 500, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    #[serde(with = "crate::serde_la::vector")]
    pub w: DVector<f64>,
    pub si: f64,
    pub ic: f64,
    /// Observed variance of the subgroup along `w`.
    pub variance: f64,
    pub restarts_used: usize,
    /// The winning ascent reached the gradient tolerance, or could make no
    /// further progress at machine precision.
    pub converged: bool,
}

/// Spread SI of a fixed subgroup as a function of the direction.
#[derive(Debug, Clone)]
pub struct SpreadObjective {
    /// `(rows, Σ_b)` for the blocks meeting the extension.
    blocks: Vec<(f64, DMatrix<f64>)>,
    size: f64,
    scatter: DMatrix<f64>,
    dl: f64,
}

impl SpreadObjective {
    /// `anchor` is the subgroup's observed mean, around which the scatter is
    /// taken.
    pub fn new(
        model: &BackgroundModel,
        dataset: &Dataset,
        ext: &Extension,
        anchor: &DVector<f64>,
        intention: &Intention,
        dl: &DlParams,
    ) -> Result<Self, SpreadOptError> {
        if ext.len() < 2 {
            return Err(DataError::TooSmall { needed: 2, got: ext.len() }.into());
        }
        let d = dataset.target_dim();
        if anchor.len() != d || model.dim() != d {
            return Err(ModelError::Dimension { expected: d, got: anchor.len().min(model.dim()) }.into());
        }
        let y = dataset.targets();
        let mut scatter = DMatrix::zeros(d, d);
        for &i in ext.indices() {
            let r = dataset.target_row(i) - anchor;
            scatter += &r * r.transpose();
        }
        scatter /= ext.len() as f64;
        debug_assert_eq!(y.ncols(), d);
        let blocks = model
            .block_counts(ext)?
            .into_iter()
            .map(|(b, c)| (c as f64, model.block(b).covariance().clone()))
            .collect();
        Ok(Self {
            blocks,
            size: ext.len() as f64,
            scatter,
            dl: description_length(intention, PatternKind::Spread, dl),
        })
    }

    pub fn dim(&self) -> usize {
        self.scatter.nrows()
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    pub fn observed_variance(&self, w: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.scatter, w)
    }

    fn power_sums(&self, w: &DVector<f64>) -> (f64, f64, f64) {
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for (n, sigma) in &self.blocks {
            let a = linalg::quad_form(sigma, w) / self.size;
            s1 += n * a;
            s2 += n * a * a;
            s3 += n * a * a * a;
        }
        (s1, s2, s3)
    }

    pub fn ic(&self, w: &DVector<f64>) -> f64 {
        let (s1, s2, s3) = self.power_sums(w);
        Chi2ComboParams::from_power_sums(s1, s2, s3).neg_log_density(self.observed_variance(w))
    }

    /// Spread SI at `w`; `+∞` marks an invalid score.
    pub fn si(&self, w: &DVector<f64>) -> f64 {
        self.ic(w) / self.dl
    }

    /// Euclidean gradient of [`SpreadObjective::si`] with respect to `w`.
    pub fn gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>, SpreadOptError> {
        let (s1, s2, s3) = self.power_sums(w);
        let p = Chi2ComboParams::from_power_sums(s1, s2, s3);
        let v = self.observed_variance(w);
        let z = v - p.beta;
        if !(z > 0.0) {
            return Err(SpreadOptError::SupportEdge { v, beta: p.beta });
        }
        let (alpha, m) = (p.alpha, p.m);
        let d_z = -(0.5 * m - 1.0) / z + 0.5 / alpha;
        let d_alpha = 0.5 * m / alpha - z / (2.0 * alpha * alpha);
        let d_m = 0.5 * std::f64::consts::LN_2 + 0.5 * digamma(0.5 * m) - 0.5 * (z / alpha).ln();

        let dim = self.dim();
        let (mut ds1, mut ds2, mut ds3) = (DVector::zeros(dim), DVector::zeros(dim), DVector::zeros(dim));
        for (n, sigma) in &self.blocks {
            let sw = sigma * w;
            let a = w.dot(&sw) / self.size;
            let da = sw * (2.0 / self.size);
            ds1.axpy(*n, &da, 1.0);
            ds2.axpy(2.0 * n * a, &da, 1.0);
            ds3.axpy(3.0 * n * a * a, &da, 1.0);
        }
        let dalpha = &ds3 / s2 - &ds2 * (s3 / (s2 * s2));
        let dbeta = &ds1 - &ds2 * (2.0 * s2 / s3) + &ds3 * (s2 * s2 / (s3 * s3));
        let dm = &ds2 * (3.0 * s2 * s2 / (s3 * s3)) - &ds3 * (2.0 * s2 * s2 * s2 / (s3 * s3 * s3));
        let dv = &self.scatter * w * 2.0;
        let grad = dv * d_z - dbeta * d_z + dalpha * d_alpha + dm * d_m;
        Ok(grad / self.dl)
    }
}

/// Gradient of spread SI with respect to the direction, for the subgroup
/// `ext` with observed mean `anchor`.
pub fn spread_si_gradient(
    model: &BackgroundModel,
    dataset: &Dataset,
    ext: &Extension,
    anchor: &DVector<f64>,
    w: &DVector<f64>,
    intention: &Intention,
    dl: &DlParams,
) -> Result<DVector<f64>, SpreadOptError> {
    if !linalg::is_unit(w, 1e-12) {
        return Err(ModelError::NotUnit(w.norm()).into());
    }
    SpreadObjective::new(model, dataset, ext, anchor, intention, dl)?.gradient(w)
}

/// Sign convention: the first nonzero entry is positive.
pub fn canonical_sign(mut w: DVector<f64>) -> DVector<f64> {
    if let Some(first) = w.iter().find(|x| **x != 0.0) {
        if *first < 0.0 {
            w.neg_mut();
        }
    }
    w
}

/// Maximization value: invalid scores rank below everything.
fn rank_value(si: f64) -> f64 {
    if si.is_finite() {
        si
    } else {
        f64::NEG_INFINITY
    }
}

struct Ascent {
    w: DVector<f64>,
    si: f64,
    converged: bool,
}

/// Projected gradient ascent with Armijo backtracking. With `plane`, the
/// gradient is also restricted to those two coordinates.
fn ascend(obj: &SpreadObjective, start: DVector<f64>, plane: Option<(usize, usize)>, opts: &DirectionOptions) -> Ascent {
    let mut w = start.normalize();
    let mut f = rank_value(obj.si(&w));
    if f == f64::NEG_INFINITY {
        return Ascent { w, si: f, converged: false };
    }
    // the first trial step is 1; later ones start from twice the last
    // accepted step
    let mut initial = 1.0;
    for _ in 0..opts.max_iter {
        let Ok(mut g) = obj.gradient(&w) else { break };
        if let Some((i, j)) = plane {
            for k in 0..g.len() {
                if k != i && k != j {
                    g[k] = 0.0;
                }
            }
        }
        let tangent = &g - &w * w.dot(&g);
        let tn2 = tangent.norm_squared();
        if tn2.sqrt() < opts.grad_tol {
            return Ascent { w, si: f, converged: true };
        }
        let mut step = initial;
        let mut moved = false;
        while step > 1e-20 {
            let cand = (&w + &tangent * step).normalize();
            let fc = rank_value(obj.si(&cand));
            // a strict increase is required: below the resolution of `f`
            // the sufficient-increase bound rounds away
            if fc > f && fc - f >= 1e-4 * step * tn2 {
                w = cand;
                f = fc;
                moved = true;
                initial = (2.0 * step).min(1e8);
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // no representable ascent step remains
            return Ascent { w, si: f, converged: true };
        }
    }
    Ascent { w, si: f, converged: false }
}

fn top_eigenvector(m: &DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let k = eig.eigenvalues.imax();
    eig.eigenvectors.column(k).into_owned()
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| -> f64 { StandardNormal.sample(rng) });
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

fn better(a: &Ascent, b: &Ascent) -> bool {
    match a.si.total_cmp(&b.si) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.w.iter().zip(b.w.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less),
    }
}

#[cfg(feature = "parallel")]
fn run_all(obj: &SpreadObjective, starts: Vec<(DVector<f64>, Option<(usize, usize)>)>, opts: &DirectionOptions) -> Vec<Ascent> {
    use rayon::prelude::*;
    starts.into_par_iter().map(|(s, plane)| ascend(obj, s, plane, opts)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(obj: &SpreadObjective, starts: Vec<(DVector<f64>, Option<(usize, usize)>)>, opts: &DirectionOptions) -> Vec<Ascent> {
    starts.into_iter().map(|(s, plane)| ascend(obj, s, plane, opts)).collect()
}

fn pick(obj: &SpreadObjective, runs: Vec<Ascent>) -> Result<DirectionResult, SpreadOptError> {
    let restarts_used = runs.len();
    let best = runs
        .into_iter()
        .filter(|a| a.si.is_finite())
        .map(|a| Ascent { w: canonical_sign(a.w), ..a })
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or(SpreadOptError::AllInvalid)?;
    let si = obj.si(&best.w);
    Ok(DirectionResult {
        ic: obj.ic(&best.w),
        variance: obj.observed_variance(&best.w),
        w: best.w,
        si,
        restarts_used,
        converged: best.converged,
    })
}

fn prepare(
    model: &BackgroundModel,
    dataset: &Dataset,
    ext: &Extension,
    intention: &Intention,
    dl: &DlParams,
) -> Result<SpreadObjective, SpreadOptError> {
    if dataset.target_dim() < 2 {
        return Err(SpreadOptError::OneDimensional);
    }
    let assimilated = model
        .history()
        .iter()
        .any(|p| matches!(p, Pattern::Location(l) if &l.extension == ext));
    if !assimilated {
        return Err(SpreadOptError::NoLocation);
    }
    let anchor = dataset.subgroup_mean(ext)?;
    SpreadObjective::new(model, dataset, ext, &anchor, intention, dl)
}

/// Best direction over random starts, the coordinate axes, the top
/// eigenvector of the subgroup scatter and, for more than two targets, the
/// best 2-sparse direction.
pub fn optimize_direction(
    model: &BackgroundModel,
    dataset: &Dataset,
    ext: &Extension,
    intention: &Intention,
    dl: &DlParams,
    opts: &DirectionOptions,
) -> Result<DirectionResult, SpreadOptError> {
    let obj = prepare(model, dataset, ext, intention, dl)?;
    let d = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<(DVector<f64>, Option<(usize, usize)>)> =
        (0..opts.restarts).map(|_| (random_unit(d, &mut rng), None)).collect();
    starts.extend((0..d).map(|k| (DVector::from_fn(d, |i, _| f64::from(u8::from(i == k))), None)));
    starts.push((top_eigenvector(obj.scatter()), None));
    if d > 2 {
        if let Ok(sparse) = pairwise(&obj, opts) {
            starts.push((sparse.w, None));
        }
    }
    pick(&obj, run_all(&obj, starts, opts))
}

/// Best direction with at most two nonzero entries: every coordinate pair
/// is optimized on its own circle.
pub fn optimize_direction_2sparse(
    model: &BackgroundModel,
    dataset: &Dataset,
    ext: &Extension,
    intention: &Intention,
    dl: &DlParams,
    opts: &DirectionOptions,
) -> Result<DirectionResult, SpreadOptError> {
    let obj = prepare(model, dataset, ext, intention, dl)?;
    if obj.dim() == 2 {
        return optimize_direction(model, dataset, ext, intention, dl, opts);
    }
    pairwise(&obj, opts)
}

fn pairwise(obj: &SpreadObjective, opts: &DirectionOptions) -> Result<DirectionResult, SpreadOptError> {
    let d = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let embed = |a: f64, b: f64| {
                let mut w = DVector::zeros(d);
                w[i] = a;
                w[j] = b;
                w
            };
            for _ in 0..opts.restarts {
                let r = random_unit(2, &mut rng);
                starts.push((embed(r[0], r[1]), Some((i, j))));
            }
            starts.push((embed(1.0, 0.0), Some((i, j))));
            starts.push((embed(0.0, 1.0), Some((i, j))));
            let sub = DMatrix::from_row_slice(
                2,
                2,
                &[obj.scatter()[(i, i)], obj.scatter()[(i, j)], obj.scatter()[(j, i)], obj.scatter()[(j, j)]],
            );
            let e = top_eigenvector(&sub);
            starts.push((embed(e[0], e[1]), Some((i, j))));
        }
    }
    pick(obj, run_all(obj, starts, opts))
}
