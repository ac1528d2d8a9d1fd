//! Level-wise beam search over conjunctions of descriptor conditions,
//! ranking location patterns by subjective interestingness.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::data::{Column, Condition, Dataset, Extension, Intention, Predicate, RowMask};
use crate::model::{BackgroundModel, LocationPattern};
use crate::scoring::{self, description_length, DlParams, PatternKind, ScoreBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub beam_width: usize,
    pub max_depth: usize,
    pub num_split_points: usize,
    pub top_log: usize,
    /// Seconds.
    pub time_limit: f64,
    pub min_coverage: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { beam_width: 40, max_depth: 4, num_split_points: 4, top_log: 150, time_limit: 300.0, min_coverage: 2 }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.beam_width == 0 || self.max_depth == 0 || self.num_split_points == 0 || self.top_log == 0 {
            return Err("beam_width, max_depth, num_split_points and top_log must be positive".into());
        }
        if !(self.time_limit > 0.0) {
            return Err(format!("time_limit must be positive, got {}", self.time_limit));
        }
        if self.min_coverage < 2 {
            return Err(format!("min_coverage must be at least 2, got {}", self.min_coverage));
        }
        Ok(())
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        Duration::try_from_secs_f64(self.time_limit).ok().and_then(|d| start.checked_add(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPattern {
    pub pattern: LocationPattern,
    pub score: ScoreBreakdown,
    pub depth: usize,
}

impl RankedPattern {
    fn sort_key(&self) -> (f64, String) {
        (-self.score.si, self.pattern.intention.encode())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    BelowCoverage { size: usize, min: usize },
    InvalidScore(String),
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub patterns: Vec<RankedPattern>,
    pub timed_out: bool,
    pub evaluated: usize,
    pub diagnostic: Option<String>,
}

/// Nearest-rank percentile values of a numeric column: the value at sorted
/// position `ceil(j·N/(k+1))` for `j = 1..=k`, over non-missing entries.
pub fn split_points(values: &[Option<f64>], k: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<f64> = (1..=k).map(|j| sorted[(j * n).div_ceil(k + 1).max(1) - 1]).collect();
    out.dedup();
    out
}

/// `≤` and `≥` at each split point of numeric descriptors and one equality
/// per observed level of categorical ones. Conditions that keep all or none
/// of the non-missing rows are dropped.
pub fn candidate_conditions(dataset: &Dataset, params: &SearchParams) -> Vec<Condition> {
    let mut out = Vec::new();
    for a in dataset.descriptor_indices() {
        match dataset.column(a) {
            Column::Numeric(values) => {
                let present = values.iter().flatten().count();
                for v in split_points(values, params.num_split_points) {
                    for c in [Condition::le(a, v), Condition::ge(a, v)] {
                        let k = dataset.condition_mask(&c).count();
                        if k > 0 && k < present {
                            out.push(c);
                        }
                    }
                }
            }
            Column::Categorical { levels, codes } => {
                let mut seen = vec![false; levels.len()];
                for c in codes.iter().flatten() {
                    seen[*c as usize] = true;
                }
                for (level, _) in levels.iter().zip(&seen).filter(|(_, s)| **s) {
                    out.push(Condition::eq(a, level.clone()));
                }
            }
            Column::Target(_) => {}
        }
    }
    out
}

/// Whether `c` can be conjoined to `intention` while keeping it valid.
fn refines(intention: &Intention, c: &Condition) -> bool {
    intention.conditions().iter().filter(|o| o.attribute == c.attribute).all(|o| {
        match (&o.predicate, &c.predicate) {
            (Predicate::Le(hi), Predicate::Ge(lo)) | (Predicate::Ge(lo), Predicate::Le(hi)) => lo <= hi,
            _ => false,
        }
    })
}

fn score_mask(
    dataset: &Dataset,
    model: &BackgroundModel,
    intention: Intention,
    mask: &RowMask,
    depth: usize,
    min_coverage: usize,
    dl: &DlParams,
) -> Result<RankedPattern, Rejection> {
    let size = mask.count();
    if size < min_coverage {
        return Err(Rejection::BelowCoverage { size, min: min_coverage });
    }
    let y = dataset.targets();
    let mut mean = DVector::zeros(y.ncols());
    for i in mask.iter() {
        for j in 0..y.ncols() {
            mean[j] += y[(i, j)];
        }
    }
    mean /= size as f64;
    let counts = model.block_counts_iter(mask.iter()).map_err(|e| Rejection::InvalidScore(e.to_string()))?;
    let (mu, cov) = model
        .mean_marginal_from_counts(&counts, size)
        .map_err(|e| Rejection::InvalidScore(e.to_string()))?;
    let ic = scoring::ic_location_from_marginal(&mu, &cov, &mean).map_err(|e| Rejection::InvalidScore(e.to_string()))?;
    let score = ScoreBreakdown::new(ic, description_length(&intention, PatternKind::Location, dl));
    if !score.is_valid() {
        return Err(Rejection::InvalidScore(format!("non-finite SI {}", score.si)));
    }
    let pattern = LocationPattern { intention, extension: mask.to_extension(), mean };
    Ok(RankedPattern { pattern, score, depth })
}

/// Scores one intention as a location pattern, or says why it was rejected.
pub fn evaluate_candidate(
    dataset: &Dataset,
    model: &BackgroundModel,
    intention: &Intention,
    params: &SearchParams,
    dl: &DlParams,
) -> Result<RankedPattern, Rejection> {
    let mask = dataset.intention_mask(intention).map_err(|e| Rejection::InvalidScore(e.to_string()))?;
    score_mask(dataset, model, intention.clone(), &mask, intention.len(), params.min_coverage, dl)
}

/// `a` is preferred over `b` for the same extension: shorter, then smaller
/// encoding.
fn preferred(a: &RankedPattern, b: &RankedPattern) -> bool {
    (a.pattern.intention.len(), a.pattern.intention.encode()) < (b.pattern.intention.len(), b.pattern.intention.encode())
}

struct Node {
    intention: Intention,
    mask: RowMask,
}

#[cfg(feature = "parallel")]
fn map_candidates<T: Send, F: Fn(&(usize, Condition, Intention)) -> Option<T> + Sync + Send>(
    items: &[(usize, Condition, Intention)],
    f: F,
) -> Vec<Option<T>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_candidates<T, F: Fn(&(usize, Condition, Intention)) -> Option<T>>(
    items: &[(usize, Condition, Intention)],
    f: F,
) -> Vec<Option<T>> {
    items.iter().map(f).collect()
}

pub fn beam_search(
    dataset: &Dataset,
    model: &BackgroundModel,
    params: &SearchParams,
    dl: &DlParams,
) -> SearchOutcome {
    let start = Instant::now();
    let deadline = params.deadline(start);
    let out_of_time = || deadline.is_some_and(|d| Instant::now() >= d);
    let conditions = candidate_conditions(dataset, params);
    let masks: Vec<RowMask> = conditions.iter().map(|c| dataset.condition_mask(c)).collect();

    let mut best: HashMap<Extension, RankedPattern> = HashMap::new();
    let mut beam = vec![Node { intention: Intention::empty(), mask: RowMask::full(dataset.n()) }];
    let mut timed_out = false;
    let mut evaluated = 0;

    for depth in 1..=params.max_depth {
        let mut seen = HashSet::new();
        let mut work = Vec::new();
        for (p, node) in beam.iter().enumerate() {
            for c in &conditions {
                if !refines(&node.intention, c) {
                    continue;
                }
                let Ok(child) = node.intention.with(c.clone()) else { continue };
                if seen.insert(child.encode()) {
                    work.push((p, c.clone(), child));
                }
            }
        }
        let cond_index: HashMap<String, usize> =
            conditions.iter().enumerate().map(|(i, c)| (c.encode(), i)).collect();
        let results = map_candidates(&work, |(p, c, child)| {
            if out_of_time() {
                return None;
            }
            let mask = beam[*p].mask.intersection(&masks[cond_index[&c.encode()]]);
            let scored = score_mask(dataset, model, child.clone(), &mask, depth, params.min_coverage, dl);
            Some(scored.map(|r| (r, mask)))
        });
        if results.iter().any(Option::is_none) {
            timed_out = true;
        }
        evaluated += results.iter().flatten().count();

        let mut level: HashMap<Extension, (RankedPattern, RowMask)> = HashMap::new();
        for (r, mask) in results.into_iter().flatten().flatten() {
            match level.get(&r.pattern.extension) {
                Some((old, _)) if !preferred(&r, old) => {}
                _ => {
                    level.insert(r.pattern.extension.clone(), (r, mask));
                }
            }
        }
        let mut next: Vec<(RankedPattern, RowMask)> = level
            .into_iter()
            .filter(|(ext, _)| !best.contains_key(ext))
            .map(|(_, v)| v)
            .collect();
        for (r, _) in &next {
            best.insert(r.pattern.extension.clone(), r.clone());
        }
        next.sort_by(|a, b| {
            let (ka, kb) = (a.0.sort_key(), b.0.sort_key());
            ka.0.total_cmp(&kb.0).then_with(|| ka.1.cmp(&kb.1))
        });
        next.truncate(params.beam_width);
        beam = next.into_iter().map(|(r, mask)| Node { intention: r.pattern.intention, mask }).collect();
        if timed_out || beam.is_empty() {
            break;
        }
    }

    let mut patterns: Vec<RankedPattern> = best.into_values().collect();
    patterns.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.0.total_cmp(&kb.0).then_with(|| ka.1.cmp(&kb.1))
    });
    patterns.truncate(params.top_log);
    let diagnostic = if patterns.is_empty() {
        Some(format!(
            "no candidate among {} conditions meets min_coverage {}; try lowering min_coverage or adding split points",
            conditions.len(),
            params.min_coverage
        ))
    } else if timed_out {
        Some(format!("time limit of {} s reached; returning best so far", params.time_limit))
    } else {
        None
    };
    SearchOutcome { patterns, timed_out, evaluated, diagnostic }
}
