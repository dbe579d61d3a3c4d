//! Plain gradient descent on the ansatz loss and seeded multi-trial sweeps.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_a, build_hamiltonian, Dataset, SystemSpec};
use crate::qnn::{adjusted_loss, loss_and_gradient, sample_ansatz, AnsatzSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub plateau_window: usize,
    /// Relative decay over one window below which training stops.
    pub plateau_threshold: f64,
    /// Adjusted loss below which training stops.
    pub target_loss: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_epochs: 200,
            plateau_window: 5,
            plateau_threshold: 0.05,
            target_loss: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero rate is allowed: it freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be >= 1".into()));
        }
        if self.plateau_window == 0 {
            return Err(Error::InvalidArgument("plateau window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Target,
    Plateau,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Target => "target",
            StopReason::Plateau => "plateau",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub p: usize,
    pub seed: u64,
    /// Adjusted loss at epochs `0..=k`.
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub stop_reason: StopReason,
    pub theta: Vec<f64>,
    pub wall_time: Duration,
}

/// `θ_0` i.i.d. uniform on `[0, 2π)`.
pub fn initial_theta<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

pub fn train(
    spec: &AnsatzSpec,
    theta0: &[f64],
    data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainingRun> {
    config.validate()?;
    let start = Instant::now();
    let mut theta = theta0.to_vec();
    let mut losses = Vec::new();
    let stop_reason = loop {
        let (l, grad) = loss_and_gradient(spec, &theta, data)?;
        let adj = adjusted_loss(l);
        let epoch = losses.len();
        if !adj.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, value: adj });
        }
        losses.push(adj);
        if adj < config.target_loss {
            break StopReason::Target;
        }
        let w = config.plateau_window;
        if epoch >= w {
            let before = losses[epoch - w];
            if (before - adj) / before.max(1e-12) < config.plateau_threshold {
                break StopReason::Plateau;
            }
        }
        if epoch >= config.max_epochs {
            break StopReason::MaxEpochs;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= config.learning_rate * g;
        }
    };
    Ok(TrainingRun {
        p: spec.p(),
        seed: config.seed,
        final_loss: *losses.last().expect("at least epoch 0"),
        losses,
        stop_reason,
        theta,
        wall_time: start.elapsed(),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `k` at parameter count `p`; stable across platforms and
/// releases.
pub fn stable_hash(base_seed: u64, p: u64, k: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ p) ^ k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p_values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    /// Time horizon; `10 * (L + n_a)` when absent.
    pub horizon: Option<f64>,
    pub train: TrainConfig,
}

#[derive(Debug)]
pub struct TrialResult {
    pub run_id: usize,
    pub p: usize,
    pub trial: usize,
    pub seed: u64,
    pub outcome: Result<TrainingRun>,
}

/// Samples `H`, the ansatz times and `θ_0` for one trial and trains.
pub fn run_trial(
    system: &SystemSpec,
    data: &Dataset,
    p: usize,
    seed: u64,
    horizon: f64,
    config: &TrainConfig,
) -> Result<TrainingRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = build_hamiltonian(system, &mut rng)?;
    let a = build_a(system)?;
    let mut spec = sample_ansatz(p, horizon, h, a, &mut rng)?;
    spec.seed = Some(seed);
    let theta0 = initial_theta(p, &mut rng);
    let config = TrainConfig {
        seed,
        ..config.clone()
    };
    train(&spec, &theta0, data, &config)
}

/// Runs every `(p, k)` trial on the current rayon pool. Results come back
/// ordered by `(p, k)` whatever the pool size; a failing trial is reported
/// in place without stopping the others.
pub fn sweep(config: &SweepConfig, system: &SystemSpec, data: &Dataset) -> Result<Vec<TrialResult>> {
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if config.p_values.is_empty() {
        return Err(Error::InvalidArgument("p list is empty".into()));
    }
    config.train.validate()?;
    let horizon = config
        .horizon
        .unwrap_or(10.0 * (system.l + system.n_a) as f64);
    let work: Vec<(usize, usize)> = config
        .p_values
        .iter()
        .flat_map(|&p| (0..config.trials).map(move |k| (p, k)))
        .collect();
    Ok(work
        .par_iter()
        .enumerate()
        .map(|(run_id, &(p, trial))| {
            let seed = stable_hash(config.base_seed, p as u64, trial as u64);
            TrialResult {
                run_id,
                p,
                trial,
                seed,
                outcome: run_trial(system, data, p, seed, horizon, &config.train),
            }
        })
        .collect())
}

/// [`sweep`] on a dedicated pool of `threads` workers.
pub fn sweep_with_threads(
    config: &SweepConfig,
    system: &SystemSpec,
    data: &Dataset,
    threads: usize,
) -> Result<Vec<TrialResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| sweep(config, system, data))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Lower edge of each bin.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Counts final adjusted losses in bins of `bin_width` over `[0, 1]`; values
/// at or past the ends land in the first or last bin.
pub fn minima_histogram(finals: &[f64], bin_width: f64) -> Result<Histogram> {
    if finals.is_empty() {
        return Err(Error::InvalidArgument("no runs to histogram".into()));
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::InvalidArgument(format!("bin width {bin_width} not in (0, 1]")));
    }
    let bins = (1.0 / bin_width - 1e-9).ceil() as usize;
    let mut counts = vec![0; bins];
    for &x in finals {
        let b = ((x / bin_width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram {
        bin_width,
        edges: (0..bins).map(|b| bin_edge(b, bin_width)).collect(),
        counts,
    })
}

/// `b * width` rounded to 12 decimals so edges print as `0.15`, not
/// `0.15000000000000002`.
pub fn bin_edge(b: usize, width: f64) -> f64 {
    ((b as f64 * width) * 1e12).round() / 1e12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSummary {
    pub p: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean_final_loss: f64,
    pub fraction_below: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub threshold: f64,
    pub per_p: Vec<PSummary>,
}

pub fn summarize(results: &[TrialResult], threshold: f64) -> SweepSummary {
    let mut ps: Vec<usize> = Vec::new();
    for r in results {
        if !ps.contains(&r.p) {
            ps.push(r.p);
        }
    }
    let per_p = ps
        .into_iter()
        .map(|p| {
            let finals: Vec<f64> = results
                .iter()
                .filter(|r| r.p == p)
                .filter_map(|r| r.outcome.as_ref().ok().map(|run| run.final_loss))
                .collect();
            let runs = results.iter().filter(|r| r.p == p).count();
            let n = finals.len().max(1) as f64;
            PSummary {
                p,
                runs,
                failed: runs - finals.len(),
                mean_final_loss: finals.iter().sum::<f64>() / n,
                fraction_below: finals.iter().filter(|&&f| f < threshold).count() as f64 / n,
            }
        })
        .collect();
    SweepSummary { threshold, per_p }
}

pub fn curves_csv(results: &[TrialResult]) -> String {
    let mut out = String::from("run_id,p,seed,epoch,adjusted_loss\n");
    for r in results {
        if let Ok(run) = &r.outcome {
            for (epoch, l) in run.losses.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", r.run_id, r.p, r.seed, epoch, l);
            }
        }
    }
    out
}

/// Failed trials appear with an empty loss and stop reason `error`.
pub fn finals_csv(results: &[TrialResult]) -> String {
    let mut out = String::from("run_id,p,seed,final_adjusted_loss,stop_reason\n");
    for r in results {
        let (l, why) = match &r.outcome {
            Ok(run) => (run.final_loss.to_string(), run.stop_reason.as_str()),
            Err(_) => (String::new(), "error"),
        };
        let _ = writeln!(out, "{},{},{},{},{}", r.run_id, r.p, r.seed, l, why);
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_start,bin_end,count\n");
    for (b, (e, c)) in h.edges.iter().zip(&h.counts).enumerate() {
        let _ = writeln!(out, "{},{},{}", e, bin_edge(b + 1, h.bin_width).min(1.0), c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_datasets;

    fn four_qubit() -> (SystemSpec, Dataset) {
        (
            SystemSpec::temperley_lieb(4, 1, 0).unwrap(),
            reference_datasets().unwrap().0,
        )
    }

    #[test]
    fn zero_rate_plateaus() {
        let (sys, data) = four_qubit();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let run = run_trial(&sys, &data, 3, 11, 50.0, &cfg).unwrap();
        assert_eq!(run.stop_reason, StopReason::Plateau);
        assert_eq!(run.losses.len(), 6);
        assert!(run.losses.iter().all(|&l| l == run.losses[0]));
    }

    #[test]
    fn target_stops_at_epoch_zero() {
        let (sys, data) = four_qubit();
        let cfg = TrainConfig {
            target_loss: 1.5,
            ..Default::default()
        };
        let run = run_trial(&sys, &data, 2, 1, 50.0, &cfg).unwrap();
        assert_eq!(run.stop_reason, StopReason::Target);
        assert_eq!(run.losses.len(), 1);
    }

    #[test]
    fn max_epochs_bounds_length() {
        let (sys, data) = four_qubit();
        let cfg = TrainConfig {
            max_epochs: 1,
            ..Default::default()
        };
        let run = run_trial(&sys, &data, 1, 2, 50.0, &cfg).unwrap();
        assert_eq!(run.losses.len(), 2);
        assert_eq!(run.stop_reason, StopReason::MaxEpochs);
    }

    #[test]
    fn negative_rate_rejected() {
        let cfg = TrainConfig {
            learning_rate: -0.1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn runs_are_reproducible() {
        let (sys, data) = four_qubit();
        let cfg = TrainConfig {
            max_epochs: 20,
            ..Default::default()
        };
        let a = run_trial(&sys, &data, 5, 9, 50.0, &cfg).unwrap();
        let b = run_trial(&sys, &data, 5, 9, 50.0, &cfg).unwrap();
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn hash_separates_trials() {
        assert_ne!(stable_hash(0, 1, 0), stable_hash(0, 1, 1));
        assert_ne!(stable_hash(0, 1, 0), stable_hash(0, 0, 1));
        assert_eq!(stable_hash(7, 3, 2), stable_hash(7, 3, 2));
    }

    #[test]
    fn histogram_bins() {
        let h = minima_histogram(&[0.0; 4], 0.1).unwrap();
        assert_eq!(h.counts[0], 4);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        let finals: Vec<f64> = (0..10).map(|k| 0.05 + 0.1 * k as f64).collect();
        let h = minima_histogram(&finals, 0.1).unwrap();
        assert_eq!(h.counts, vec![1; 10]);
        let h = minima_histogram(&[1.0], 0.25).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0, 1]);
        assert!(minima_histogram(&[], 0.1).is_err());
    }

    #[test]
    fn sweep_counts_and_order() {
        let (sys, data) = four_qubit();
        let cfg = SweepConfig {
            p_values: vec![1, 2],
            trials: 2,
            base_seed: 3,
            horizon: None,
            train: TrainConfig {
                max_epochs: 3,
                ..Default::default()
            },
        };
        let res = sweep(&cfg, &sys, &data).unwrap();
        let keys: Vec<_> = res.iter().map(|r| (r.p, r.trial)).collect();
        assert_eq!(keys, vec![(1, 0), (1, 1), (2, 0), (2, 1)]);
        let csv = finals_csv(&res);
        assert_eq!(csv.lines().count(), 5);
    }
}
