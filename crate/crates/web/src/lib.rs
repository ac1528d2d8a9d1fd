//! In-browser demo on the synthetic dataset: generate data, mine and accept
//! patterns, and trace spread SI around the circle of directions.
//!
//! Results cross the JS boundary as JSON strings.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;
use sisd::data::{flip_noise, generate_synthetic};
use sisd::search::SearchParams;
use sisd::session::{Candidate, MineKind, MineRequest};
use sisd::spreadopt::{DirectionOptions, SpreadObjective};
use sisd::{DlParams, Pattern, Session};
use wasm_bindgen::prelude::*;

/// Smaller than the batch defaults so a mine stays interactive.
fn request(kind: MineKind) -> MineRequest {
    MineRequest {
        kind,
        search: SearchParams { beam_width: 20, max_depth: 2, time_limit: 10.0, ..SearchParams::default() },
        direction: DirectionOptions { restarts: 6, ..DirectionOptions::default() },
        sparse: false,
    }
}

#[derive(Serialize)]
struct Points {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Index of the first cluster flag set on the row, or -1.
    cluster: Vec<i32>,
}

#[derive(Serialize)]
struct Accepted {
    iteration: usize,
    spread_available: bool,
    seconds: f64,
    /// Rows of the accepted subgroup.
    members: Vec<usize>,
}

#[derive(Serialize)]
struct Curve {
    /// Direction angles in radians over [0, π).
    theta: Vec<f64>,
    si: Vec<Option<f64>>,
    observed: Vec<f64>,
    description: String,
}

/// Native core of the demo, kept free of JS types.
pub struct Demo {
    session: Session,
}

impl Demo {
    pub fn new(seed: u64, noise: f64) -> Result<Self, String> {
        let mut ds = generate_synthetic(seed);
        if noise > 0.0 {
            ds = flip_noise(&ds, noise, seed).map_err(|e| e.to_string())?;
        }
        let session = Session::new(ds, DlParams::default()).map_err(|e| e.to_string())?;
        Ok(Self { session })
    }

    pub fn points(&self) -> String {
        let ds = self.session.dataset();
        let t = ds.targets();
        let flags: Vec<usize> = ["a3", "a4", "a5"].iter().filter_map(|a| ds.attribute_index(a)).collect();
        let cluster = (0..ds.n())
            .map(|i| {
                flags
                    .iter()
                    .position(|&a| match ds.column(a) {
                        sisd::data::Column::Categorical { levels, codes } => {
                            codes[i].is_some_and(|c| levels[c as usize] == "1")
                        }
                        _ => false,
                    })
                    .map_or(-1, |k| k as i32)
            })
            .collect();
        let p = Points { x: t.column(0).iter().copied().collect(), y: t.column(1).iter().copied().collect(), cluster };
        serde_json::to_string(&p).expect("plain data")
    }

    pub fn mine(&mut self, spread: bool) -> Result<Vec<Candidate>, String> {
        let kind = if spread { MineKind::Spread } else { MineKind::Location };
        let c = self.session.mine_next(&request(kind)).map_err(|e| e.to_string())?;
        Ok(c.iter().take(10).cloned().collect())
    }

    pub fn accept(&mut self, id: &str) -> Result<String, String> {
        let members = self
            .session
            .candidate(id)
            .map(|c| c.pattern.extension().indices().to_vec())
            .ok_or_else(|| format!("unknown pattern {id}"))?;
        let seconds = self.session.assimilate_choice(id).map_err(|e| e.to_string())?.seconds;
        let out = Accepted {
            iteration: self.session.iteration(),
            spread_available: self.session.spread_available(),
            seconds,
            members,
        };
        Ok(serde_json::to_string(&out).expect("plain data"))
    }

    /// Spread SI of the latest accepted location subgroup for directions
    /// `(cos θ, sin θ)` on an even grid. Directions outside the score's
    /// support give `None`.
    pub fn direction_curve(&self, samples: usize) -> Result<String, String> {
        let loc = self
            .session
            .model()
            .history()
            .iter()
            .rev()
            .find_map(|p| match p {
                Pattern::Location(l) => Some(l),
                Pattern::Spread(_) => None,
            })
            .ok_or("accept a location pattern first")?;
        let ds = self.session.dataset();
        let obj = SpreadObjective::new(self.session.model(), ds, &loc.extension, &loc.mean, &loc.intention, self.session.dl_params())
            .map_err(|e| e.to_string())?;
        let samples = samples.max(2);
        let theta: Vec<f64> = (0..samples).map(|k| PI * k as f64 / samples as f64).collect();
        let dirs: Vec<DVector<f64>> = theta.iter().map(|t| DVector::from_vec(vec![t.cos(), t.sin()])).collect();
        let curve = Curve {
            si: dirs.iter().map(|w| Some(obj.si(w)).filter(|s| s.is_finite())).collect(),
            observed: dirs.iter().map(|w| obj.observed_variance(w)).collect(),
            theta,
            description: ds.describe(&loc.intention),
        };
        Ok(serde_json::to_string(&curve).expect("plain data"))
    }
}

#[wasm_bindgen]
pub struct DemoSession {
    inner: Demo,
}

#[wasm_bindgen]
impl DemoSession {
    /// Generates the synthetic data with descriptor noise `noise`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, noise: f64) -> Result<DemoSession, JsError> {
        Ok(Self { inner: Demo::new(seed.into(), noise).map_err(|e| JsError::new(&e))? })
    }

    pub fn points(&self) -> String {
        self.inner.points()
    }

    /// Top candidates as a JSON array.
    pub fn mine(&mut self, spread: bool) -> Result<String, JsError> {
        let c = self.inner.mine(spread).map_err(|e| JsError::new(&e))?;
        Ok(serde_json::to_string(&c).expect("plain data"))
    }

    pub fn accept(&mut self, id: &str) -> Result<String, JsError> {
        self.inner.accept(id).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = directionCurve)]
    pub fn direction_curve(&self, samples: usize) -> Result<String, JsError> {
        self.inner.direction_curve(samples).map_err(|e| JsError::new(&e))
    }
}
