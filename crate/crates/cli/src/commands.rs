//! Subcommand bodies. Each `*_report` function computes a serializable
//! report without touching the filesystem; the command wrappers write it.

use std::fmt::Write as _;

use fragqnn_core::algebra::{krylov_decomposition, DecompositionExport, KrylovDecomposition};
use fragqnn_core::model::{
    build_a, build_hamiltonian, reference_datasets, tl_generators, Dataset, DatasetExport, SystemSpec,
};
use fragqnn_core::qnn::{loss, point_losses, sample_ansatz, sector_losses};
use fragqnn_core::theory::{
    extend_dataset_multiplicities, hessian_rank_curve, ising_family, mean_se, moment_compare,
    sample_gradient_stat, semi_isotropic, variance_formula, variance_reports, GaussianModelSpec, GaussianPoint,
    GaussianSector, MomentOrder, MomentReport, RankEntry, RankPoint, StatisticForm, VerificationReport,
};
use fragqnn_core::trainer::{
    bin_edge, curves_csv, finals_csv, minima_histogram, stable_hash, summarize, sweep, SweepSummary, TrialResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, RankAt};
use crate::output::OutDir;
use crate::{CliError, VerifyCheck};

/// Residual bound for block structure and commuting copies.
pub const BLOCK_TOL: f64 = 1e-8;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(seed, stream, 0))
}

const DECOMPOSE_STREAM: u64 = 0xdec0;
const HAMILTONIAN_STREAM: u64 = 0x4a;
const VARIANCE_STREAM: u64 = 0x5a;
const GENERAL_STREAM: u64 = 0x9e;
const RANK_STREAM: u64 = 0x7a;

pub fn decomposition(cfg: &ExperimentConfig) -> Result<KrylovDecomposition, CliError> {
    let gens = tl_generators(cfg.system.l)?;
    Ok(krylov_decomposition(&gens, BLOCK_TOL, &mut rng_for(cfg.seed, DECOMPOSE_STREAM))?)
}

/// Dataset from `system.dataset`, else the built-in set for `L = 4` or `8`,
/// relabelled onto `system.n_a` ancilla qubits when given. Sector tags are
/// filled in when `decomp` is available.
pub fn dataset(cfg: &ExperimentConfig, decomp: Option<&KrylovDecomposition>) -> Result<Dataset, CliError> {
    let l = cfg.system.l;
    let mut data = match &cfg.system.dataset {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let export: DatasetExport = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad dataset {}: {e}", path.display())))?;
            Dataset::import(&export)?
        }
        None => {
            let (four, eight) = reference_datasets()?;
            match l {
                4 => four,
                8 => eight,
                _ => {
                    return Err(CliError::Usage(format!(
                        "no built-in dataset for L = {l}; set system.dataset"
                    )))
                }
            }
        }
    };
    if data.l != l {
        return Err(CliError::Usage(format!("dataset has L = {}, config has L = {l}", data.l)));
    }
    if let Some(n_a) = cfg.system.n_a {
        if n_a < data.n_a {
            return Err(CliError::Usage(format!(
                "labels need {} ancilla qubits, n_a = {n_a}",
                data.n_a
            )));
        }
        let items = (0..data.m()).map(|i| (data.system_state(i), data.points[i].label)).collect();
        data = Dataset::labelled(l, n_a, items)?;
    }
    if let Some(d) = decomp {
        data.tag_sectors(d);
    }
    Ok(data)
}

/// Decomposition when the dense commutant solve is within limits.
fn optional_decomposition(cfg: &ExperimentConfig) -> Result<Option<KrylovDecomposition>, CliError> {
    match decomposition(cfg) {
        Ok(d) => Ok(Some(d)),
        Err(CliError::Usage(_)) if cfg.system.l > 5 => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Serialize)]
pub struct Residuals {
    pub generators: Vec<f64>,
    pub hamiltonian: f64,
    pub a: f64,
    pub copy_disagreement: f64,
}

#[derive(Debug, Serialize)]
pub struct DecomposeReport {
    #[serde(rename = "L")]
    pub l: usize,
    pub n_a: usize,
    pub dimension_sum: usize,
    pub commutant_dim: usize,
    pub residuals: Residuals,
    pub max_residual: f64,
    pub pass: bool,
    pub decomposition: DecompositionExport,
}

pub fn decompose_report(cfg: &ExperimentConfig) -> Result<DecomposeReport, CliError> {
    let d = decomposition(cfg)?;
    let n_a = cfg.system.n_a.unwrap_or(1);
    let spec = SystemSpec::temperley_lieb(cfg.system.l, n_a, cfg.seed)?;
    let h = build_hamiltonian(&spec, &mut rng_for(cfg.seed, HAMILTONIAN_STREAM))?;
    let a = build_a(&spec)?;
    let ext = d.with_ancilla(n_a);
    let generators: Vec<f64> = spec.generators.iter().map(|g| d.verify_block_structure(g)).collect();
    let copy = spec
        .generators
        .iter()
        .map(|g| d.copy_disagreement(g))
        .chain([ext.copy_disagreement(&h), ext.copy_disagreement(&a)])
        .fold(0.0, f64::max);
    let residuals = Residuals {
        hamiltonian: ext.verify_block_structure(&h),
        a: ext.verify_block_structure(&a),
        generators,
        copy_disagreement: copy,
    };
    let max_residual = residuals
        .generators
        .iter()
        .copied()
        .chain([residuals.hamiltonian, residuals.a, residuals.copy_disagreement])
        .fold(0.0, f64::max);
    Ok(DecomposeReport {
        l: cfg.system.l,
        n_a,
        dimension_sum: d.sectors.iter().map(|s| s.irrep_dim * s.multiplicity).sum(),
        commutant_dim: d.sectors.iter().map(|s| s.multiplicity * s.multiplicity).sum(),
        residuals,
        max_residual,
        pass: max_residual < BLOCK_TOL,
        decomposition: d.export(),
    })
}

pub fn decompose(cfg: &ExperimentConfig, out: &OutDir) -> Result<bool, CliError> {
    let r = decompose_report(cfg)?;
    out.write_json("decomposition.json", &r)?;
    println!(
        "L={} sectors={} sum N*N'={} max residual {:.3e}",
        r.l,
        r.decomposition.sectors.len(),
        r.dimension_sum,
        r.max_residual
    );
    Ok(r.pass)
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<(Dataset, Vec<TrialResult>), CliError> {
    let decomp = optional_decomposition(cfg)?;
    let data = dataset(cfg, decomp.as_ref())?;
    let system = SystemSpec::temperley_lieb(cfg.system.l, data.n_a, cfg.seed)?;
    let results = sweep(&cfg.sweep_config(), &system, &data)?;
    Ok((data, results))
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    #[serde(rename = "L")]
    pub l: usize,
    pub n_a: usize,
    pub seed: u64,
    pub trials: usize,
    pub p_values: Vec<usize>,
    pub failed: usize,
    pub summary: SweepSummary,
}

fn sweep_report(cfg: &ExperimentConfig, data: &Dataset, results: &[TrialResult]) -> SweepReport {
    for r in results {
        if let Err(e) = &r.outcome {
            eprintln!("run {} (p={}, seed={}) failed: {e}", r.run_id, r.p, r.seed);
        }
    }
    SweepReport {
        l: cfg.system.l,
        n_a: data.n_a,
        seed: cfg.seed,
        trials: cfg.train.trials,
        p_values: cfg.ansatz.p_values.clone(),
        failed: results.iter().filter(|r| r.outcome.is_err()).count(),
        summary: summarize(results, cfg.train.success_threshold),
    }
}

fn print_summary(r: &SweepReport) {
    for s in &r.summary.per_p {
        println!(
            "p={:<3} runs={:<5} mean final={:.4} below {}: {:.3}",
            s.p, s.runs, s.mean_final_loss, r.summary.threshold, s.fraction_below
        );
    }
}

fn sweep_exit(r: &SweepReport) -> Result<bool, CliError> {
    if r.failed > 0 {
        return Err(CliError::Numerical(fragqnn_core::Error::InvalidArgument(format!(
            "{} training runs failed",
            r.failed
        ))));
    }
    Ok(true)
}

pub fn train(cfg: &ExperimentConfig, out: &OutDir) -> Result<bool, CliError> {
    let (data, results) = run_sweep(cfg)?;
    out.write("curves.csv", &curves_csv(&results))?;
    out.write("finals.csv", &finals_csv(&results))?;
    let r = sweep_report(cfg, &data, &results);
    out.write_json("summary.json", &r)?;
    print_summary(&r);
    sweep_exit(&r)
}

/// One histogram per `p` over `[0, 1]`.
pub fn histograms_csv(results: &[TrialResult], p_values: &[usize], bin_width: f64) -> Result<String, CliError> {
    let mut out = String::from("p,bin_start,bin_end,count\n");
    for &p in p_values {
        let finals: Vec<f64> = results
            .iter()
            .filter(|r| r.p == p)
            .filter_map(|r| r.outcome.as_ref().ok().map(|run| run.final_loss))
            .collect();
        if finals.is_empty() {
            continue;
        }
        let h = minima_histogram(&finals, bin_width)?;
        for (b, (e, c)) in h.edges.iter().zip(&h.counts).enumerate() {
            let _ = writeln!(out, "{p},{e},{},{c}", bin_edge(b + 1, bin_width).min(1.0));
        }
    }
    Ok(out)
}

pub fn minima(cfg: &ExperimentConfig, out: &OutDir) -> Result<bool, CliError> {
    let (data, results) = run_sweep(cfg)?;
    out.write("finals.csv", &finals_csv(&results))?;
    out.write(
        "histogram.csv",
        &histograms_csv(&results, &cfg.ansatz.p_values, cfg.train.bin_width)?,
    )?;
    let r = sweep_report(cfg, &data, &results);
    out.write_json("summary.json", &r)?;
    print_summary(&r);
    sweep_exit(&r)
}

#[derive(Debug, Serialize)]
pub struct SectorModel {
    pub sector: usize,
    pub irrep_dim: usize,
    pub points: Vec<GaussianPoint>,
    pub trace_a2: f64,
    pub semi_isotropic_rank: usize,
    pub semi_isotropic_ratio: f64,
}

#[derive(Debug, Serialize)]
pub struct VarianceReport {
    pub n_a: usize,
    pub components: usize,
    pub samples: usize,
    pub sectors: Vec<SectorModel>,
    pub gradient_norm: VerificationReport,
    pub checks: Vec<VerificationReport>,
    pub pass: bool,
}

/// Gaussian model built from the default `A` of the configured system: one
/// model over every sector where `A` is non-zero, with points at distinct
/// irrep indices `q = 0..min(N_λ, N_a)` labelled by `q`.
pub fn gaussian_model(cfg: &ExperimentConfig) -> Result<(GaussianModelSpec, Vec<SectorModel>), CliError> {
    let d = decomposition(cfg)?;
    let n_a = cfg.system.n_a.unwrap_or(1);
    let spec = SystemSpec::temperley_lieb(cfg.system.l, n_a, cfg.seed)?;
    let a = build_a(&spec)?;
    let ext = d.with_ancilla(n_a);
    let na = 1usize << n_a;
    let mut sectors = Vec::new();
    let mut info = Vec::new();
    for s in &d.sectors {
        let block = ext.project_block(&a, s.id)?;
        if block.frobenius_norm() < 1e-10 {
            continue;
        }
        let iso = semi_isotropic(&block)?;
        let points: Vec<GaussianPoint> = (0..s.irrep_dim.min(na)).map(|q| GaussianPoint { q, label: q }).collect();
        info.push(SectorModel {
            sector: s.id,
            irrep_dim: s.irrep_dim,
            points: points.clone(),
            trace_a2: block.frobenius_norm().powi(2),
            semi_isotropic_rank: iso.rank,
            semi_isotropic_ratio: iso.ratio,
        });
        sectors.push(GaussianSector {
            irrep_dim: s.irrep_dim,
            a_block: block,
            points,
        });
    }
    if sectors.is_empty() {
        return Err(CliError::Usage("A vanishes on every sector".into()));
    }
    Ok((GaussianModelSpec { n_a, sectors }, info))
}

pub fn variance_report(cfg: &ExperimentConfig) -> Result<VarianceReport, CliError> {
    let (model, info) = gaussian_model(cfg)?;
    let v = &cfg.verify;
    let draws = sample_gradient_stat(
        &model,
        v.components,
        v.samples,
        StatisticForm::ConjugatedCommutator,
        &mut rng_for(cfg.seed, VARIANCE_STREAM),
    )?;
    let checks = variance_reports(&model, &draws, v.sigmas);
    // ‖∇ℓ‖² per sample, summing the per-point statistics of each component.
    let stride = draws.points.len() * draws.components;
    let norms: Vec<f64> = draws
        .values
        .chunks(stride)
        .map(|row| {
            (0..draws.components)
                .map(|i| (0..draws.points.len()).map(|k| row[k * draws.components + i]).sum::<f64>().powi(2))
                .sum()
        })
        .collect();
    let gradient_norm = VerificationReport::within(
        "gradient_norm_squared",
        variance_formula(&model, v.components),
        mean_se(&norms),
        v.samples,
        v.sigmas,
    );
    let pass = gradient_norm.pass && checks.iter().all(|c| c.pass);
    Ok(VarianceReport {
        n_a: model.n_a,
        components: v.components,
        samples: v.samples,
        sectors: info,
        gradient_norm,
        checks,
        pass,
    })
}

#[derive(Debug, Serialize)]
pub struct MomentRun {
    pub qubits: usize,
    pub dim: usize,
    pub draw: usize,
    pub report: MomentReport,
    pub haar_matches_closed_form: bool,
}

#[derive(Debug, Serialize)]
pub struct MomentTrend {
    pub horizon: f64,
    /// Mean `|time_avg - haar_avg|` per size, sizes ascending.
    pub mean_diff: Vec<f64>,
    pub decreasing: bool,
}

#[derive(Debug, Serialize)]
pub struct MomentsReport {
    pub sizes: Vec<usize>,
    pub samples: usize,
    pub runs: Vec<MomentRun>,
    pub trends: Vec<MomentTrend>,
    pub pass: bool,
}

/// First-moment comparison on mixed-field Ising chains of each size, one
/// Hamiltonian per `(size, draw)` shared across horizons.
pub fn moments_report(cfg: &ExperimentConfig) -> Result<MomentsReport, CliError> {
    let v = &cfg.verify;
    let mut sizes = v.moment_sizes.clone();
    sizes.sort_unstable();
    let mut runs = Vec::new();
    for &n in &sizes {
        for draw in 0..v.moment_draws {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(cfg.seed, n as u64, draw as u64));
            let (h, a, o, x) = ising_family(n, &mut rng)?;
            for &t in &v.moment_horizons {
                let report = moment_compare(&h, &a, &o, &x, t, MomentOrder::First, v.moment_samples, None, &mut rng)?;
                let cf = report.closed_form.unwrap_or(f64::NAN);
                let haar_ok = (report.haar_avg[0] - cf).abs() <= v.sigmas * report.haar_se
                    && report.haar_avg[1].abs() <= v.sigmas * report.haar_se;
                runs.push(MomentRun {
                    qubits: n,
                    dim: 1 << n,
                    draw,
                    report,
                    haar_matches_closed_form: haar_ok,
                });
            }
        }
    }
    let trends: Vec<MomentTrend> = v
        .moment_horizons
        .iter()
        .map(|&t| {
            let mean_diff: Vec<f64> = sizes
                .iter()
                .map(|&n| {
                    let d: Vec<f64> = runs
                        .iter()
                        .filter(|r| r.qubits == n && r.report.horizon == t)
                        .map(|r| r.report.diff)
                        .collect();
                    d.iter().sum::<f64>() / d.len() as f64
                })
                .collect();
            MomentTrend {
                horizon: t,
                decreasing: mean_diff.windows(2).all(|w| w[1] < w[0]),
                mean_diff,
            }
        })
        .collect();
    let pass = trends.iter().all(|t| t.decreasing) && runs.iter().all(|r| r.haar_matches_closed_form);
    Ok(MomentsReport {
        sizes,
        samples: v.moment_samples,
        runs,
        trends,
        pass,
    })
}

#[derive(Debug, Serialize)]
pub struct GeneralizationReport {
    pub p: usize,
    pub original_points: usize,
    pub extended_points: usize,
    pub thetas: usize,
    /// Largest `ℓ_D'(θ) - max_{λ,x} ℓ_x^λ(θ)` over the sampled angles.
    pub max_bound_margin: f64,
    /// Largest gap between a copy's loss and its original point's loss.
    pub max_copy_deviation: f64,
    pub pass: bool,
}

pub fn generalization_report(cfg: &ExperimentConfig) -> Result<GeneralizationReport, CliError> {
    let d = decomposition(cfg)?;
    let data = dataset(cfg, Some(&d))?;
    let ext = extend_dataset_multiplicities(&data, &d)?;
    // Original index of every extended point, in the order copies are appended.
    let mut origin: Vec<usize> = (0..data.m()).collect();
    for (i, pt) in data.points.iter().enumerate() {
        let s = pt.sector.and_then(|id| d.sector(id)).expect("extension resolved every sector");
        origin.extend(std::iter::repeat(i).take(s.multiplicity - 1));
    }
    let system = SystemSpec::temperley_lieb(cfg.system.l, data.n_a, cfg.seed)?;
    let mut rng = rng_for(cfg.seed, GENERAL_STREAM);
    let h = build_hamiltonian(&system, &mut rng)?;
    let horizon = cfg.ansatz.horizon.unwrap_or(10.0 * (system.l + system.n_a) as f64);
    let p = cfg.verify.p;
    let ansatz = sample_ansatz(p, horizon, h, build_a(&system)?, &mut rng)?;
    let ext_decomp = d.with_ancilla(data.n_a);
    let mut margin = f64::NEG_INFINITY;
    let mut deviation: f64 = 0.0;
    for _ in 0..cfg.verify.thetas {
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let per_sector = sector_losses(&ansatz, &theta, &data, &ext_decomp)?;
        let bound = data
            .points
            .iter()
            .zip(&per_sector)
            .map(|(pt, row)| {
                let id = pt.sector.expect("tagged");
                let k = ext_decomp.sectors.iter().position(|s| s.id == id).expect("sector exists");
                row[k]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        margin = margin.max(loss(&ansatz, &theta, &ext)? - bound);
        let orig = point_losses(&ansatz, &theta, &data)?;
        let all = point_losses(&ansatz, &theta, &ext)?;
        for (k, &o) in origin.iter().enumerate() {
            deviation = deviation.max((all[k] - orig[o]).abs());
        }
    }
    Ok(GeneralizationReport {
        p,
        original_points: data.m(),
        extended_points: ext.m(),
        thetas: cfg.verify.thetas,
        max_bound_margin: margin,
        max_copy_deviation: deviation,
        pass: margin <= cfg.verify.loss_tol && deviation <= cfg.verify.copy_tol,
    })
}

#[derive(Debug, Serialize)]
pub struct RankReport {
    pub at: RankAt,
    pub tol: f64,
    pub entries: Vec<RankEntry>,
    /// Rank at the two largest `p` agree and sit below the largest `p`.
    pub saturated: bool,
    pub pass: bool,
}

pub fn hessian_rank_report(cfg: &ExperimentConfig) -> Result<RankReport, CliError> {
    let decomp = optional_decomposition(cfg)?;
    let data = dataset(cfg, decomp.as_ref())?;
    let system = SystemSpec::temperley_lieb(cfg.system.l, data.n_a, cfg.seed)?;
    let at = match cfg.verify.rank_at {
        RankAt::Random => RankPoint::Random,
        RankAt::Trained => RankPoint::Trained(cfg.train_config()),
    };
    let v = &cfg.verify;
    let entries = hessian_rank_curve(
        &system,
        &data,
        decomp.as_ref(),
        &v.rank_p_values,
        v.rank_tol,
        &at,
        &mut rng_for(cfg.seed, RANK_STREAM),
    )?;
    let saturated = match entries.as_slice() {
        [.., a, b] => a.rank == b.rank && b.rank < b.p,
        _ => false,
    };
    Ok(RankReport {
        at: v.rank_at,
        tol: v.rank_tol,
        entries,
        saturated,
        pass: saturated,
    })
}

pub fn verify(cfg: &ExperimentConfig, check: VerifyCheck, out: &OutDir) -> Result<bool, CliError> {
    let pass = match check {
        VerifyCheck::Variance => {
            let r = variance_report(cfg)?;
            out.write_json("verify_variance.json", &r)?;
            let failed = r.checks.iter().filter(|c| !c.pass).count();
            println!(
                "variance: {} checks, {failed} outside {} sigma; |grad|^2 {:.4e} vs {:.4e}",
                r.checks.len(),
                cfg.verify.sigmas,
                r.gradient_norm.mc_estimate,
                r.gradient_norm.formula_value
            );
            r.pass
        }
        VerifyCheck::Moments => {
            let r = moments_report(cfg)?;
            out.write_json("verify_moments.json", &r)?;
            for t in &r.trends {
                println!("moments: T={} mean diff by size {:?}", t.horizon, t.mean_diff);
            }
            r.pass
        }
        VerifyCheck::Generalization => {
            let r = generalization_report(cfg)?;
            out.write_json("verify_generalization.json", &r)?;
            println!(
                "generalization: {} -> {} points, bound margin {:.3e}, copy deviation {:.3e}",
                r.original_points, r.extended_points, r.max_bound_margin, r.max_copy_deviation
            );
            r.pass
        }
        VerifyCheck::HessianRank => {
            let r = hessian_rank_report(cfg)?;
            out.write_json("verify_hessian_rank.json", &r)?;
            for e in &r.entries {
                println!("hessian rank: p={} rank={}", e.p, e.rank);
            }
            r.pass
        }
    };
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

pub fn dataset_export(cfg: &ExperimentConfig, out: &OutDir) -> Result<bool, CliError> {
    let decomp = optional_decomposition(cfg)?;
    let data = dataset(cfg, decomp.as_ref())?;
    out.write_json("dataset.json", &data.export())?;
    println!("dataset: L={} n_a={} points={}", data.l, data.n_a, data.m());
    Ok(true)
}
