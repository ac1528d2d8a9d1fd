//! Where a session's data comes from: a CSV file or the synthetic generator.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use sisd::data::{flip_noise, generate_synthetic, load_csv, SchemaConfig};
use sisd::Dataset;

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Synthetic {
    pub seed: u64,
    /// Probability of flipping each binary descriptor cell.
    #[serde(default)]
    pub noise: f64,
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct DataSource {
    /// CSV path; relative paths that do not exist are looked up in the data
    /// directory.
    pub data: Option<PathBuf>,
    /// Overrides the schema's target list when nonempty.
    pub targets: Vec<String>,
    pub schema: Option<SchemaConfig>,
    pub synthetic: Option<Synthetic>,
}

pub fn resolve(path: &Path, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

impl DataSource {
    pub fn load(&self, data_dir: Option<&Path>) -> anyhow::Result<Dataset> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => bail!("give either a CSV file or synthetic parameters, not both"),
            (None, None) => bail!("no data source: give a CSV file or synthetic parameters"),
            (None, Some(s)) => {
                let ds = generate_synthetic(s.seed);
                if s.noise > 0.0 {
                    Ok(flip_noise(&ds, s.noise, s.noise_seed.unwrap_or(s.seed))?)
                } else {
                    Ok(ds)
                }
            }
            (Some(path), None) => {
                let mut config = self.schema.clone().unwrap_or_default();
                if !self.targets.is_empty() {
                    config.targets = self.targets.clone();
                }
                let path = resolve(path, data_dir);
                load_csv(&path, &config).with_context(|| format!("loading {}", path.display()))
            }
        }
    }
}
