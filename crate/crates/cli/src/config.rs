//! JSON configuration files for `simulate` and `metric --experiment`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chlag::metric::SearchConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    /// Multipeakon profile; `aligned` puts every corner on a half-node.
    Peakons {
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(default = "yes")]
        aligned: bool,
    },
    /// `samples::smooth_state` drawn from the run seed.
    Smooth { amplitude: f64 },
    /// A Lagrangian state JSON file.
    Lagrangian { path: PathBuf },
    /// An Eulerian state JSON file, mapped through `L`.
    Eulerian { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub initial: Initial,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bail!("dt must be positive, got {}", self.dt);
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            bail!("t_end must be nonnegative, got {}", self.t_end);
        }
        if self.snapshot_every == 0 {
            bail!("snapshot_every must be at least 1");
        }
        Ok(())
    }
}

fn default_pairs() -> usize {
    20
}

fn default_perturbation() -> f64 {
    0.01
}

fn default_times() -> Vec<f64> {
    (1..=8).map(|k| 0.25 * k as f64).collect()
}

fn default_dt() -> f64 {
    1e-3
}

/// Lipschitz ensemble over perturbed peakon–antipeakon pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub search: SearchConfig,
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.pairs == 0 {
            bail!("pairs must be at least 1");
        }
        if !(0.0..0.5).contains(&self.perturbation) {
            bail!(
                "perturbation must lie in [0, 0.5), got {}",
                self.perturbation
            );
        }
        if self.times.is_empty() {
            bail!("times must not be empty");
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) || self.times.iter().any(|&t| !(t > 0.0)) {
            bail!("times must be positive and strictly increasing");
        }
        if !(self.dt > 0.0) {
            bail!("dt must be positive, got {}", self.dt);
        }
        Ok(())
    }
}
