//! Experiment configuration: defaults, presets, JSON file, then flags.

use std::path::{Path, PathBuf};

use fragqnn_core::trainer::{SweepConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub model: String,
    #[serde(rename = "L")]
    pub l: usize,
    /// Ancilla width; the smallest that fits the labels when absent.
    pub n_a: Option<usize>,
    /// Dataset JSON as written by `dataset export`. The built-in dataset for
    /// `L` is used when absent.
    pub dataset: Option<PathBuf>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            model: "temperley-lieb".into(),
            l: 4,
            n_a: None,
            dataset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzConfig {
    pub p_values: Vec<usize>,
    /// Time horizon; `10 (L + n_a)` when absent.
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            p_values: vec![1, 5, 10, 20, 40],
            horizon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub max_epochs: usize,
    pub plateau_window: usize,
    pub plateau_threshold: f64,
    pub target: f64,
    pub trials: usize,
    /// Histogram bin width for `minima`.
    pub bin_width: f64,
    /// Adjusted-loss threshold for the summary fractions.
    pub success_threshold: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 0.1,
            max_epochs: 200,
            plateau_window: 5,
            plateau_threshold: 0.05,
            target: 0.01,
            trials: 10,
            bin_width: 0.05,
            success_threshold: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankAt {
    Random,
    Trained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub samples: usize,
    pub sigmas: f64,
    /// Gradient components per variance sample.
    pub components: usize,
    pub moment_samples: usize,
    pub moment_sizes: Vec<usize>,
    pub moment_horizons: Vec<f64>,
    pub moment_draws: usize,
    pub thetas: usize,
    pub p: usize,
    pub loss_tol: f64,
    pub copy_tol: f64,
    pub rank_p_values: Vec<usize>,
    pub rank_tol: f64,
    pub rank_at: RankAt,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            samples: 100_000,
            sigmas: 4.0,
            components: 2,
            moment_samples: 10_000,
            moment_sizes: vec![3, 5],
            moment_horizons: vec![10.0, 40.0, 160.0],
            moment_draws: 8,
            thetas: 20,
            p: 10,
            loss_tol: 1e-10,
            copy_tol: 1e-9,
            rank_p_values: vec![20, 40, 60, 80],
            rank_tol: 1e-8,
            rank_at: RankAt::Random,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub ansatz: AnsatzConfig,
    pub train: TrainSection,
    pub verify: VerifySection,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            ansatz: AnsatzConfig::default(),
            train: TrainSection::default(),
            verify: VerifySection::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

pub const PRESETS: [&str; 3] = ["fig2-4q", "fig2-8q", "fig3-4q"];

/// Settings of the published training figures.
pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let mut c = ExperimentConfig::default();
    match name {
        "fig2-4q" => {}
        "fig2-8q" => c.system.l = 8,
        "fig3-4q" => {
            c.ansatz.p_values = vec![1, 5, 10, 15, 20, 40];
            c.train.trials = 1000;
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset {other:?}; expected one of {PRESETS:?}"
            )))
        }
    }
    Ok(c)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// `max(1, round(trials * scale))`.
pub fn scaled_trials(trials: usize, scale: f64) -> usize {
    ((trials as f64 * scale).round() as usize).max(1)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !matches!(self.system.model.as_str(), "temperley-lieb" | "tl") {
            return Err(usage(format!("unknown model {:?}", self.system.model)));
        }
        if self.system.l < 2 {
            return Err(usage(format!("L must be >= 2, got {}", self.system.l)));
        }
        if self.system.l > 12 {
            return Err(usage(format!("L = {} is beyond dense simulation", self.system.l)));
        }
        if self.system.n_a == Some(0) {
            return Err(usage("n_a must be >= 1"));
        }
        if self.ansatz.p_values.is_empty() {
            return Err(usage("p list is empty"));
        }
        if self.ansatz.p_values.contains(&0) {
            return Err(usage("p values must be >= 1"));
        }
        if let Some(t) = self.ansatz.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(usage(format!("T must be > 0, got {t}")));
            }
        }
        let t = &self.train;
        if t.trials == 0 {
            return Err(usage("trials must be >= 1"));
        }
        if !(t.bin_width > 0.0 && t.bin_width <= 1.0) {
            return Err(usage(format!("bin width {} not in (0, 1]", t.bin_width)));
        }
        self.train_config()
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        let v = &self.verify;
        if v.samples < 2 || v.moment_samples < 2 {
            return Err(usage("verification needs at least 2 samples"));
        }
        if v.components == 0 || v.p == 0 || v.thetas == 0 || v.moment_draws == 0 {
            return Err(usage("components, p, thetas and moment_draws must be >= 1"));
        }
        if !(v.sigmas > 0.0) || !(v.rank_tol > 0.0) {
            return Err(usage("sigmas and rank_tol must be > 0"));
        }
        if v.moment_sizes.len() < 2 || v.moment_sizes.iter().any(|&n| n < 2 || n > 7) {
            return Err(usage("moment_sizes needs at least two sizes in 2..=7"));
        }
        if v.moment_horizons.is_empty() || v.moment_horizons.iter().any(|&t| !(t > 0.0)) {
            return Err(usage("moment_horizons must be non-empty and positive"));
        }
        if v.rank_p_values.is_empty() || v.rank_p_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(usage("rank_p_values must be non-empty and strictly ascending"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.lr,
            max_epochs: self.train.max_epochs,
            plateau_window: self.train.plateau_window,
            plateau_threshold: self.train.plateau_threshold,
            target_loss: self.train.target,
            seed: self.seed,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            p_values: self.ansatz.p_values.clone(),
            trials: self.train.trials,
            base_seed: self.seed,
            horizon: self.ansatz.horizon,
            train: self.train_config(),
        }
    }
}
