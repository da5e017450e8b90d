//! Experiment configuration files.
//!
//! One TOML file describes one experiment. Dataset paths are resolved
//! against the directory of the config file. Weight files (`init_file`,
//! `analysis.weights`, `compare.models`) are outputs of earlier verbs and are
//! resolved against the output directory, which itself is relative to the
//! working directory.

use std::path::{Path, PathBuf};

use rgflow::diagnostics::SolvabilityConfig;
use rgflow::ising::IsingSamplerConfig;
use rgflow::rbm::{InitMode, StackFeed, TrainConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed. Sampling, splitting, training and trials all derive
    /// their seeds from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    pub rgm: Option<RgmSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub solvable: SolvabilityConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Metropolis samples, configured by `[dataset.ising]`.
    Ising,
    /// IDX image file (MNIST layout), with optional labels.
    Idx,
    /// Folder of PNG/JPEG images.
    Images,
    /// An existing RGDS file.
    Rgds,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: Source,
    pub ising: Option<IsingSamplerConfig>,
    pub path: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Separate held-out data of the same source kind.
    pub holdout_path: Option<PathBuf>,
    pub holdout_labels: Option<PathBuf>,
    /// Image side after resizing (`images` source).
    pub side: Option<usize>,
    #[serde(default = "yes")]
    pub grayscale: bool,
    pub tile: Option<usize>,
    /// Keep only the first `limit` samples of each file.
    pub limit: Option<usize>,
    /// Fraction split off as held-out data when no `holdout_path` is given.
    #[serde(default)]
    pub holdout_fraction: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub visible_side: usize,
    /// One entry per layer; more than one trains a greedy stack.
    pub hidden_sides: Vec<usize>,
    #[serde(default)]
    pub feed: StackFeed,
    #[serde(default = "default_block")]
    pub block_size: usize,
    #[serde(default = "one")]
    pub block_gain: f64,
    /// Multiplies the initial weights of the first layer.
    #[serde(default = "one")]
    pub init_scale: f64,
    /// RBMW file used as the first layer's initialisation.
    pub init_file: Option<PathBuf>,
}

fn default_block() -> usize {
    4
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgmSpec {
    pub kappa: Option<usize>,
    #[serde(default = "default_kappa_floor")]
    pub kappa_floor: f64,
    pub alpha: Option<usize>,
    #[serde(default = "default_block")]
    pub block_size: usize,
    #[serde(default = "one")]
    pub gain: f64,
}

fn default_kappa_floor() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    /// Weights to analyse; defaults to the first trained layer.
    pub weights: Option<PathBuf>,
    /// Singular values `>= floor * S_1` are kept.
    pub floor: f64,
    /// Singular indices whose vectors are compared and plotted.
    pub indices: Vec<usize>,
    /// Low-mode cutoff; defaults to `L_h / 4`.
    pub cutoff: Option<usize>,
    /// Largest radial mode for the parameter count; defaults to the
    /// largest mode of the visible lattice.
    pub max_mode: Option<u64>,
    /// Block size of a block-spin reference spectrum to overlay.
    pub reference_block: Option<usize>,
    /// Compare the kept subspace with the data covariance subspace.
    pub alignment: bool,
    /// Random subspaces drawn for the alignment baseline.
    pub baselines: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            weights: None,
            floor: 0.2,
            indices: (0..5).collect(),
            cutoff: None,
            max_mode: None,
            reference_block: None,
            alignment: false,
            baselines: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub models: Vec<PathBuf>,
    pub labels: Vec<String>,
    /// Held-out samples shown in the reconstruction grid.
    pub samples: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            labels: Vec::new(),
            samples: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_inputs(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_inputs(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        let d = &mut self.dataset;
        for p in [
            &mut d.path,
            &mut d.labels,
            &mut d.holdout_path,
            &mut d.holdout_labels,
        ] {
            fix(p);
        }
    }

    /// A weight-file path, relative to the output directory.
    pub fn weights_path(&self, p: &Path) -> PathBuf {
        self.out_dir.join(p)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.dataset;
        match d.source {
            Source::Ising if d.ising.is_none() => {
                return bad("source \"ising\" needs a [dataset.ising] table".into())
            }
            Source::Idx | Source::Images | Source::Rgds if d.path.is_none() => {
                return bad(format!("source {:?} needs dataset.path", d.source))
            }
            Source::Images if d.side.is_none() => {
                return bad("source \"images\" needs dataset.side".into())
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&d.holdout_fraction) {
            return bad(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                d.holdout_fraction
            ));
        }
        if let Some(m) = &self.model {
            if m.hidden_sides.is_empty() {
                return bad("model.hidden_sides is empty".into());
            }
            let mut prev = m.visible_side;
            for &h in &m.hidden_sides {
                if h == 0 || h > prev {
                    return bad(format!("layer sides {} -> {h} do not shrink", prev));
                }
                prev = h;
            }
            if !m.init_scale.is_finite() || !m.block_gain.is_finite() {
                return bad("model.init_scale and model.block_gain must be finite".into());
            }
            if matches!(self.train.init_mode, InitMode::Explicit) && m.init_file.is_none() {
                return bad("init_mode \"explicit\" needs model.init_file".into());
            }
        }
        if !(0.0..=1.0).contains(&self.analysis.floor) {
            return bad("analysis.floor must lie in [0, 1]".into());
        }
        if !self.compare.labels.is_empty() && self.compare.labels.len() != self.compare.models.len() {
            return bad("compare.labels and compare.models differ in length".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<&ModelSpec, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [model] table".into()))
    }
}
