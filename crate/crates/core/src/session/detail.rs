//! Expected-versus-observed summaries of a pattern under the current model.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::{Candidate, Session, SessionError};
use crate::linalg;
use crate::model::Pattern;
use crate::scoring::{description_length, ScoreBreakdown};

pub const CDF_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDetail {
    pub name: String,
    pub expected_mean: f64,
    /// 95% interval of the subgroup mean under the model.
    pub lower: f64,
    pub upper: f64,
    pub observed_mean: f64,
    /// Single-attribute location SI.
    pub si: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadDetail {
    pub direction: Vec<f64>,
    pub expected_variance: f64,
    pub observed_variance: f64,
    /// Points along `w` at which both CDFs are sampled.
    pub grid: Vec<f64>,
    /// CDF of `w'y` for a random subgroup row under the model.
    pub model_cdf: Vec<f64>,
    /// Empirical CDF of `w'y` over the subgroup.
    pub subgroup_cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDetail {
    pub id: String,
    pub description: String,
    pub coverage: usize,
    pub score: ScoreBreakdown,
    pub pattern: Pattern,
    /// Ordered by `si`, largest first.
    pub attributes: Vec<AttributeDetail>,
    pub spread: Option<SpreadDetail>,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

impl Session {
    /// The candidate or assimilated pattern `id`.
    fn known_pattern(&self, id: &str) -> Option<(Pattern, Option<&Candidate>)> {
        if let Some(c) = self.candidate(id) {
            return Some((c.pattern.clone(), Some(c)));
        }
        let k = self.assimilated.iter().position(|a| a == id)?;
        Some((self.model.history()[k].clone(), None))
    }

    pub fn pattern_detail(&self, id: &str) -> Result<PatternDetail, SessionError> {
        let (pattern, cached) = self.known_pattern(id).ok_or_else(|| SessionError::StaleId(id.to_string()))?;
        let ds = &self.dataset;
        let ext = pattern.extension();
        let observed = ds.subgroup_mean(ext)?;
        let (mu, cov) = self.model.mean_marginal(ext)?;
        let dl_loc = description_length(pattern.intention(), crate::scoring::PatternKind::Location, &self.dl);

        let mut attributes: Vec<AttributeDetail> = ds
            .target_names()
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let var = cov[(j, j)];
                let sd = var.sqrt();
                let diff = observed[j] - mu[j];
                let ic = 0.5 * (std::f64::consts::TAU * var).ln() + 0.5 * diff * diff / var;
                AttributeDetail {
                    name,
                    expected_mean: mu[j],
                    lower: mu[j] - 1.96 * sd,
                    upper: mu[j] + 1.96 * sd,
                    observed_mean: observed[j],
                    si: ic / dl_loc,
                }
            })
            .collect();
        attributes.sort_by(|a, b| b.si.total_cmp(&a.si).then_with(|| a.name.cmp(&b.name)));

        let score = match cached {
            Some(c) => c.score,
            None => match &pattern {
                Pattern::Location(l) => {
                    crate::scoring::si_location(&self.model, ext, &l.mean, &l.intention, &self.dl)?
                }
                Pattern::Spread(s) => crate::scoring::si_spread(
                    &self.model,
                    ext,
                    &s.direction,
                    s.variance,
                    &s.intention,
                    &self.dl,
                )?,
            },
        };

        let spread = match &pattern {
            Pattern::Location(_) => None,
            Pattern::Spread(s) => Some(self.spread_detail(s)?),
        };

        Ok(PatternDetail {
            id: id.to_string(),
            description: ds.describe(pattern.intention()),
            coverage: ext.len(),
            score,
            pattern,
            attributes,
            spread,
        })
    }

    fn spread_detail(&self, s: &crate::model::SpreadPattern) -> Result<SpreadDetail, SessionError> {
        let w = &s.direction;
        let ext = &s.extension;
        let k = ext.len() as f64;
        let comps: Vec<(f64, f64, f64)> = self
            .model
            .block_counts(ext)?
            .into_iter()
            .map(|(b, c)| {
                let block = self.model.block(b);
                (c as f64 / k, w.dot(block.mean()), linalg::quad_form(block.covariance(), w).sqrt())
            })
            .collect();
        // moments of the mixture along w
        let mean: f64 = comps.iter().map(|(p, m, _)| p * m).sum();
        let second: f64 = comps.iter().map(|(p, m, sd)| p * (sd * sd + m * m)).sum();
        let sd = (second - mean * mean).max(0.0).sqrt();
        let projected: Vec<f64> = {
            let mut v: Vec<f64> = ext.indices().iter().map(|&i| w.dot(&self.dataset.target_row(i))).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let grid: Vec<f64> = (0..CDF_POINTS)
            .map(|t| mean - 4.0 * sd + 8.0 * sd * t as f64 / (CDF_POINTS - 1) as f64)
            .collect();
        let model_cdf = grid
            .iter()
            .map(|&x| comps.iter().map(|(p, m, s)| p * normal_cdf((x - m) / s)).sum())
            .collect();
        let subgroup_cdf = grid
            .iter()
            .map(|&x| projected.partition_point(|&p| p <= x) as f64 / k)
            .collect();
        Ok(SpreadDetail {
            direction: w.iter().copied().collect(),
            expected_variance: self.model.expected_spread(ext, w, &s.center)?,
            observed_variance: s.variance,
            grid,
            model_cdf,
            subgroup_cdf,
        })
    }
}
