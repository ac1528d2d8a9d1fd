//! Single-constraint projections used by assimilation.

use nalgebra::{DMatrix, DVector};

use super::{BackgroundModel, GaussianBlock, LocationPattern, ModelError, SpreadPattern};
use crate::linalg;

/// The expected spread after a spread update with multiplier `λ`, as a
/// function of `λ`. Each term is `(rows, s_b, d_b)` with `s_b = w'Σ_b w` and
/// `d_b = w'(ŷ - μ_b)`.
#[derive(Debug, Clone)]
pub struct SpreadMultiplier {
    terms: Vec<(f64, f64, f64)>,
    size: f64,
}

impl SpreadMultiplier {
    pub fn new(terms: Vec<(f64, f64, f64)>) -> Self {
        let size = terms.iter().map(|t| t.0).sum();
        Self { terms, size }
    }

    pub fn value(&self, lambda: f64) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .map(|&(n, s, d)| {
                let q = 1.0 + lambda * s;
                n * (s / q + d * d / (q * q))
            })
            .sum();
        total / self.size
    }

    fn derivative(&self, lambda: f64) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .map(|&(n, s, d)| {
                let q = 1.0 + lambda * s;
                -n * (s * s / (q * q) + 2.0 * s * d * d / (q * q * q))
            })
            .sum();
        total / self.size
    }

    /// Infimum of the multipliers that keep every block positive definite.
    pub fn lower_limit(&self) -> f64 {
        let s_max = self.terms.iter().map(|t| t.1).fold(0.0, f64::max);
        -1.0 / s_max
    }
}

/// Root of `F(λ) = target` on `(-1/s_max, ∞)`. `F` is convex and strictly
/// decreasing there, running from `+∞` down to `0`.
pub fn solve_spread_multiplier(f: &SpreadMultiplier, target: f64) -> Result<f64, ModelError> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(ModelError::NoRoot(format!("target variance {target}")));
    }
    if f.terms.is_empty() || f.terms.iter().any(|t| !(t.1 > 0.0)) {
        return Err(ModelError::NoRoot("no positive variance terms".into()));
    }
    let g = |l: f64| f.value(l) - target;
    let g0 = g(0.0);
    if g0.abs() <= 1e-14 * target.max(1.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if g0 > 0.0 {
        let mut hi = -f.lower_limit();
        let mut tries = 0;
        while g(hi) > 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 1100 || !hi.is_finite() {
                return Err(ModelError::NoRoot("upper bracket diverged".into()));
            }
        }
        (0.0, hi)
    } else {
        let limit = f.lower_limit();
        let mut lo = None;
        for k in 1..=52 {
            let cand = limit * (1.0 - 0.5f64.powi(k));
            if g(cand) > 0.0 {
                lo = Some(cand);
                break;
            }
        }
        (lo.ok_or_else(|| ModelError::NoRoot("lower bracket not found".into()))?, 0.0)
    };
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * mid.abs().max(1.0) {
            break;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..2 {
        let d = f.derivative(lambda);
        if d != 0.0 && d.is_finite() {
            lambda = (lambda - g(lambda) / d).clamp(lo, hi);
        }
    }
    Ok(lambda)
}

impl BackgroundModel {
    /// Blocks meeting `ext` with their counts, after checking each lies
    /// entirely inside it.
    fn covered_blocks(&self, ext: &crate::data::Extension) -> Result<Vec<(usize, usize)>, ModelError> {
        if ext.is_empty() {
            return Err(ModelError::EmptyExtension);
        }
        let counts = self.block_counts(ext)?;
        for &(b, c) in &counts {
            if self.block(b).len() != c {
                return Err(ModelError::BadPartition(format!("block {b} straddles the extension")));
            }
        }
        Ok(counts)
    }

    pub(super) fn project_location(&mut self, p: &LocationPattern) -> Result<(), ModelError> {
        if p.mean.len() != self.dim {
            return Err(ModelError::Dimension { expected: self.dim, got: p.mean.len() });
        }
        let counts = self.covered_blocks(&p.extension)?;
        let mut system = DMatrix::zeros(self.dim, self.dim);
        let mut rhs = &p.mean * p.extension.len() as f64;
        for &(b, c) in &counts {
            let block = self.block(b);
            system += block.covariance() * c as f64;
            rhs.axpy(-(c as f64), block.mean(), 1.0);
        }
        linalg::symmetrize(&mut system);
        let chol = linalg::spd_cholesky(&system).ok_or(ModelError::SingularLocationSystem)?;
        let lambda = chol.solve(&rhs);
        for &(b, _) in &counts {
            let old = self.block(b);
            let mut next = old.clone();
            next.shift += &lambda;
            next.mean += old.covariance() * &lambda;
            self.blocks[b] = std::sync::Arc::new(next);
        }
        Ok(())
    }

    pub(super) fn project_spread(&mut self, p: &SpreadPattern) -> Result<(), ModelError> {
        self.check_direction(&p.direction)?;
        if p.center.len() != self.dim {
            return Err(ModelError::Dimension { expected: self.dim, got: p.center.len() });
        }
        let counts = self.covered_blocks(&p.extension)?;
        let w = &p.direction;
        let terms = counts
            .iter()
            .map(|&(b, c)| {
                let block = self.block(b);
                let s = linalg::quad_form(block.covariance(), w);
                let d = w.dot(&(&p.center - block.mean()));
                (c as f64, s, d)
            })
            .collect();
        let lambda = solve_spread_multiplier(&SpreadMultiplier::new(terms), p.variance)?;
        if lambda == 0.0 {
            return Ok(());
        }
        let outer: DMatrix<f64> = w * w.transpose() * lambda;
        let shift: DVector<f64> = w * (lambda * w.dot(&p.center));
        for &(b, _) in &counts {
            let old = self.block(b);
            let next = GaussianBlock::from_natural(
                old.members().to_vec(),
                old.precision() + &outer,
                old.shift() + &shift,
            )?;
            self.blocks[b] = std::sync::Arc::new(next);
        }
        Ok(())
    }
}
