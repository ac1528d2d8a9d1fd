//! The iterative mining loop: mine candidates, let the analyst pick one,
//! fold it into the background model, repeat.

mod detail;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use web_time::Instant;

use crate::data::{DataError, Dataset};
use crate::model::{AssimilateOptions, BackgroundModel, LocationPattern, ModelError, Pattern, SpreadPattern};
use crate::scoring::{description_length, DlParams, PatternKind, ScoreBreakdown, ScoreError};
use crate::search::{beam_search, SearchParams};
use crate::spreadopt::{optimize_direction, optimize_direction_2sparse, DirectionOptions, SpreadOptError};

pub use detail::{AttributeDetail, PatternDetail, SpreadDetail, CDF_POINTS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    SpreadOpt(#[from] SpreadOptError),
    #[error("unknown or stale pattern id {0}")]
    StaleId(String),
    #[error("spread mining needs a location pattern assimilated in the current iteration")]
    SpreadWithoutLocation,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("unsupported session schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("invalid session file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to mine next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MineKind {
    Location,
    Spread,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineRequest {
    pub kind: MineKind,
    pub search: SearchParams,
    pub direction: DirectionOptions,
    /// Restrict spread directions to two nonzero weights.
    pub sparse: bool,
}

impl Default for MineRequest {
    fn default() -> Self {
        Self {
            kind: MineKind::Location,
            search: SearchParams::default(),
            direction: DirectionOptions::default(),
            sparse: false,
        }
    }
}

/// A scored pattern offered to the analyst.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub description: String,
    pub coverage: usize,
    pub depth: usize,
    pub score: ScoreBreakdown,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    /// 1-based position in the assimilation sequence.
    pub step: usize,
    pub iteration: usize,
    pub kind: PatternKind,
    pub seconds: f64,
    pub rounds: usize,
    pub converged: bool,
    pub blocks: usize,
}

/// Content hash of a pattern's kind, intention and direction.
pub fn pattern_id(pattern: &Pattern) -> String {
    let mut h = Sha256::new();
    match pattern {
        Pattern::Location(p) => {
            h.update(b"location|");
            h.update(p.intention.encode().as_bytes());
        }
        Pattern::Spread(p) => {
            h.update(b"spread|");
            h.update(p.intention.encode().as_bytes());
            h.update(b"|");
            for x in p.direction.iter() {
                h.update(format!("{x:?},").as_bytes());
            }
        }
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone)]
pub struct Session {
    dataset: Arc<Dataset>,
    dl: DlParams,
    initial: BackgroundModel,
    model: BackgroundModel,
    iteration: usize,
    candidates: Vec<Candidate>,
    assimilated: Vec<String>,
    timings: Vec<TimingRecord>,
    /// The location pattern assimilated in the current iteration, which
    /// unlocks spread mining for its subgroup.
    last_location: Option<LocationPattern>,
}

impl Session {
    /// A session whose prior is the empirical target mean and covariance.
    pub fn new(dataset: impl Into<Arc<Dataset>>, dl: DlParams) -> Result<Self, SessionError> {
        let dataset = dataset.into();
        let initial = BackgroundModel::empirical(&dataset)?;
        Self::with_prior(dataset, initial, dl)
    }

    pub fn with_prior(dataset: impl Into<Arc<Dataset>>, initial: BackgroundModel, dl: DlParams) -> Result<Self, SessionError> {
        let dataset = dataset.into();
        dl.validate()?;
        if initial.n() != dataset.n() || initial.dim() != dataset.target_dim() {
            return Err(SessionError::Invalid(format!(
                "prior has {} rows × {} targets, dataset {} × {}",
                initial.n(),
                initial.dim(),
                dataset.n(),
                dataset.target_dim()
            )));
        }
        if !initial.history().is_empty() {
            return Err(SessionError::Invalid("prior must not carry assimilated patterns".into()));
        }
        Ok(Self {
            dataset,
            dl,
            model: initial.clone(),
            initial,
            iteration: 0,
            candidates: Vec::new(),
            assimilated: Vec::new(),
            timings: Vec::new(),
            last_location: None,
        })
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn dl_params(&self) -> &DlParams {
        &self.dl
    }

    pub fn model(&self) -> &BackgroundModel {
        &self.model
    }

    pub fn initial_model(&self) -> &BackgroundModel {
        &self.initial
    }

    /// Number of location patterns assimilated so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn assimilated(&self) -> &[String] {
        &self.assimilated
    }

    pub fn timings(&self) -> &[TimingRecord] {
        &self.timings
    }

    pub fn spread_available(&self) -> bool {
        self.last_location.is_some()
    }

    /// Mines and caches ranked candidates: beam search for location
    /// patterns, or the best direction for the subgroup whose location was
    /// just assimilated.
    pub fn mine_next(&mut self, request: &MineRequest) -> Result<&[Candidate], SessionError> {
        let candidates = match request.kind {
            MineKind::Location => self.mine_location(&request.search)?,
            MineKind::Spread => self.mine_spread(&request.direction, request.sparse)?,
        };
        self.candidates = candidates;
        Ok(&self.candidates)
    }

    fn mine_location(&self, params: &SearchParams) -> Result<Vec<Candidate>, SessionError> {
        params.validate().map_err(SessionError::BadParams)?;
        let out = beam_search(&self.dataset, &self.model, params, &self.dl);
        Ok(out
            .patterns
            .into_iter()
            .map(|r| {
                let pattern = Pattern::Location(r.pattern);
                Candidate {
                    id: pattern_id(&pattern),
                    description: self.dataset.describe(pattern.intention()),
                    coverage: pattern.extension().len(),
                    depth: r.depth,
                    score: r.score,
                    pattern,
                }
            })
            // already in the model, so accepting again would be a no-op
            .filter(|c| !self.assimilated.contains(&c.id))
            .collect())
    }

    fn mine_spread(&self, opts: &DirectionOptions, sparse: bool) -> Result<Vec<Candidate>, SessionError> {
        let loc = self.last_location.as_ref().ok_or(SessionError::SpreadWithoutLocation)?;
        let run = if sparse { optimize_direction_2sparse } else { optimize_direction };
        let r = run(&self.model, &self.dataset, &loc.extension, &loc.intention, &self.dl, opts)?;
        let pattern = Pattern::Spread(SpreadPattern {
            intention: loc.intention.clone(),
            extension: loc.extension.clone(),
            center: loc.mean.clone(),
            direction: r.w,
            variance: r.variance,
        });
        let score = ScoreBreakdown::new(r.ic, description_length(&loc.intention, PatternKind::Spread, &self.dl));
        Ok(vec![Candidate {
            id: pattern_id(&pattern),
            description: self.dataset.describe(&loc.intention),
            coverage: loc.extension.len(),
            depth: loc.intention.len(),
            score,
            pattern,
        }])
    }

    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// Folds the cached candidate `id` into the model.
    pub fn assimilate_choice(&mut self, id: &str) -> Result<&TimingRecord, SessionError> {
        let candidate = self.candidate(id).ok_or_else(|| SessionError::StaleId(id.to_string()))?.clone();
        if let Pattern::Spread(s) = &candidate.pattern {
            let ok = self.last_location.as_ref().is_some_and(|l| l.extension == s.extension);
            if !ok {
                return Err(SessionError::SpreadWithoutLocation);
            }
        }
        let start = Instant::now();
        let out = self.model.assimilate(std::slice::from_ref(&candidate.pattern), AssimilateOptions::default())?;
        let seconds = start.elapsed().as_secs_f64();
        self.model = out.model;
        match &candidate.pattern {
            Pattern::Location(l) => {
                self.iteration += 1;
                self.last_location = Some(l.clone());
            }
            Pattern::Spread(_) => self.last_location = None,
        }
        self.assimilated.push(candidate.id.clone());
        self.candidates.clear();
        self.timings.push(TimingRecord {
            step: self.assimilated.len(),
            iteration: self.iteration,
            kind: candidate.pattern.kind(),
            seconds,
            rounds: out.rounds,
            converged: out.converged,
            blocks: self.model.block_count(),
        });
        Ok(self.timings.last().expect("just pushed"))
    }

    /// Back to the prior, forgetting every assimilated pattern.
    pub fn reset(&mut self) {
        self.model = self.initial.clone();
        self.iteration = 0;
        self.candidates.clear();
        self.assimilated.clear();
        self.timings.clear();
        self.last_location = None;
    }

    /// Rebuilds the model by assimilating the history one pattern at a time
    /// over the prior.
    pub fn replay(&self) -> Result<BackgroundModel, SessionError> {
        let mut model = self.initial.clone();
        for p in self.model.history() {
            model = model.assimilate(std::slice::from_ref(p), AssimilateOptions::default())?.model;
        }
        Ok(model)
    }

    /// Mines the top location pattern and assimilates it, then optionally
    /// does the same for its best spread direction. Returns the accepted
    /// candidates.
    pub fn auto_step(&mut self, request: &MineRequest, with_spread: bool) -> Result<Vec<Candidate>, SessionError> {
        let mut accepted = Vec::new();
        let loc = MineRequest { kind: MineKind::Location, ..*request };
        let Some(top) = self.mine_next(&loc)?.first().cloned() else {
            return Ok(accepted);
        };
        self.assimilate_choice(&top.id)?;
        accepted.push(top);
        if with_spread {
            let spread = MineRequest { kind: MineKind::Spread, ..*request };
            match self.mine_next(&spread) {
                Ok(c) => {
                    let top = c[0].clone();
                    self.assimilate_choice(&top.id)?;
                    accepted.push(top);
                }
                Err(SessionError::SpreadOpt(SpreadOptError::AllInvalid)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(accepted)
    }

    pub fn to_json(&self) -> Result<String, SessionError> {
        Ok(serde_json::to_string(&SessionRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let version: VersionProbe = serde_json::from_str(text)?;
        if version.schema_version != SCHEMA_VERSION {
            return Err(SessionError::SchemaVersion { found: version.schema_version });
        }
        let record: SessionRecord = serde_json::from_str(text)?;
        Self::try_from(record)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), SessionError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SessionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

#[derive(Serialize, Deserialize)]
struct SessionRecord {
    schema_version: u32,
    dl: DlParams,
    iteration: usize,
    assimilated: Vec<String>,
    last_location: Option<LocationPattern>,
    candidates: Vec<Candidate>,
    timings: Vec<TimingRecord>,
    initial_model: BackgroundModel,
    model: BackgroundModel,
    dataset: Dataset,
}

impl From<&Session> for SessionRecord {
    fn from(s: &Session) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dl: s.dl,
            iteration: s.iteration,
            assimilated: s.assimilated.clone(),
            last_location: s.last_location.clone(),
            candidates: s.candidates.clone(),
            timings: s.timings.clone(),
            initial_model: s.initial.clone(),
            model: s.model.clone(),
            dataset: (*s.dataset).clone(),
        }
    }
}

impl TryFrom<SessionRecord> for Session {
    type Error = SessionError;

    fn try_from(r: SessionRecord) -> Result<Self, SessionError> {
        let invalid = |m: String| Err(SessionError::Invalid(m));
        let mut s = Session::with_prior(r.dataset, r.initial_model, r.dl)?;
        if r.model.n() != s.dataset.n() || r.model.dim() != s.dataset.target_dim() {
            return invalid("model shape does not match the dataset".into());
        }
        let history = r.model.history();
        if history.len() != r.assimilated.len() {
            return invalid(format!("{} assimilated ids for {} history entries", r.assimilated.len(), history.len()));
        }
        for (p, id) in history.iter().zip(&r.assimilated) {
            if &pattern_id(p) != id {
                return invalid(format!("id {id} does not match its pattern"));
            }
            let ext = s.dataset.evaluate_intention(p.intention())?;
            if &ext != p.extension() {
                return invalid(format!("pattern {id}: extension does not match its intention"));
            }
        }
        let locations = history.iter().filter(|p| matches!(p, Pattern::Location(_))).count();
        if r.iteration != locations {
            return invalid(format!("iteration {} but {locations} location patterns", r.iteration));
        }
        if let Some(l) = &r.last_location {
            if !history.iter().any(|p| matches!(p, Pattern::Location(h) if h == l)) {
                return invalid("last_location is not in the history".into());
            }
        }
        for c in &r.candidates {
            if pattern_id(&c.pattern) != c.id {
                return invalid(format!("candidate id {} does not match its pattern", c.id));
            }
        }
        s.model = r.model;
        s.iteration = r.iteration;
        s.assimilated = r.assimilated;
        s.last_location = r.last_location;
        s.candidates = r.candidates;
        s.timings = r.timings;
        Ok(s)
    }
}

#[cfg(test)]
mod tests;
