//! Acceptance run: one PASS/FAIL line per criterion at fixed tolerances.
//!
//! Criterion 7 (Hessian rank saturation at random θ) is a known failure of
//! the claim on this system, see the README. Its line is printed as measured
//! and it does not set the exit status; every other criterion does.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fragqnn_cli::commands::{
    decompose_report, generalization_report, hessian_rank_report, moments_report, variance_report,
};
use fragqnn_cli::config::{preset, ExperimentConfig, RankAt};
use fragqnn_core::linalg::{CVector, Operator, C64};
use fragqnn_core::model::{build_a, build_hamiltonian, Dataset, SystemSpec};
use fragqnn_core::qnn::{gradient, hessian, loss, sample_ansatz, AnsatzSpec};
use fragqnn_core::theory::{
    sample_gradient_stat, variance_reports, GaussianModelSpec, GaussianPoint, GaussianSector, StatisticForm,
};
use fragqnn_core::trainer::SweepSummary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILING: [u32; 1] = [7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn random_instance(rng: &mut ChaCha8Rng, max_p: usize) -> (AnsatzSpec, Dataset, Vec<f64>) {
    let l = rng.random_range(2..=4);
    let n_a = rng.random_range(1..=2);
    let p = rng.random_range(1..=max_p);
    let spec = SystemSpec::temperley_lieb(l, n_a, 0).unwrap();
    let h = build_hamiltonian(&spec, rng).unwrap();
    let ans = sample_ansatz(p, 10.0 * (l + n_a) as f64, h, build_a(&spec).unwrap(), rng).unwrap();
    let m = rng.random_range(1..=3);
    let items = (0..m)
        .map(|k| {
            let v = CVector::from_fn(1 << l, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            (v.normalize(), k % (1 << n_a))
        })
        .collect();
    let data = Dataset::labelled(l, n_a, items).unwrap();
    let theta = (0..p).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    (ans, data, theta)
}

fn shifted(theta: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    t[i] += h;
    t
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (s, d, theta) = random_instance(&mut rng, 10);
        let g = gradient(&s, &theta, &d).unwrap();
        for i in 0..theta.len() {
            let fd = (loss(&s, &shifted(&theta, i, step), &d).unwrap()
                - loss(&s, &shifted(&theta, i, -step), &d).unwrap())
                / (2.0 * step);
            worst = worst.max((fd - g[i]).abs());
        }
    }
    Outcome {
        pass: worst < 1e-6,
        detail: format!("50 instances, max |analytic - FD| = {worst:.2e} (< 1e-6)"),
    }
}

fn hessian_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let step = 1e-5;
    let (mut worst, mut asym): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let (s, d, theta) = random_instance(&mut rng, 5);
        let h = hessian(&s, &theta, &d).unwrap();
        let p = theta.len();
        for j in 0..p {
            let up = gradient(&s, &shifted(&theta, j, step), &d).unwrap();
            let dn = gradient(&s, &shifted(&theta, j, -step), &d).unwrap();
            for i in 0..p {
                worst = worst.max(((up[i] - dn[i]) / (2.0 * step) - h[(i, j)]).abs());
                asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
            }
        }
    }
    Outcome {
        pass: worst < 1e-5 && asym < 1e-9,
        detail: format!("20 instances, max FD error {worst:.2e} (< 1e-5), asymmetry {asym:.2e} (< 1e-9)"),
    }
}

fn block_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut sums = true;
    for l in 2..=4 {
        let mut cfg = ExperimentConfig::default();
        cfg.system.l = l;
        let r = decompose_report(&cfg).unwrap();
        let mut max = r.residuals.generators.iter().copied().fold(0.0, f64::max);
        max = max.max(r.residuals.hamiltonian).max(r.residuals.a);
        worst = worst.max(max);
        sums &= r.dimension_sum == 1 << l;
    }
    Outcome {
        pass: worst < 1e-8 && sums,
        detail: format!("L = 2..4, max cross-sector residual {worst:.2e} (< 1e-8), sum N*N' = 2^L: {sums}"),
    }
}

fn synthetic(irrep_dim: usize, n_a: usize, diag: &[f64], points: &[(usize, usize)]) -> GaussianModelSpec {
    GaussianModelSpec {
        n_a,
        sectors: vec![GaussianSector {
            irrep_dim,
            a_block: Operator::from_real_diagonal(diag),
            points: points.iter().map(|&(q, label)| GaussianPoint { q, label }).collect(),
        }],
    }
}

fn variance_check() -> Outcome {
    let samples = 100_000;
    let mut passed = 0;
    let mut total = 0;
    let mut checks = 0;
    let mut bad = Vec::new();
    // System-derived blocks of the default A, through the CLI path.
    for (l, n_a) in [(2, 1), (3, 1), (4, 1), (4, 2)] {
        let mut cfg = ExperimentConfig::default();
        cfg.system.l = l;
        cfg.system.n_a = Some(n_a);
        cfg.seed = 40 + l as u64;
        let r = variance_report(&cfg).unwrap();
        total += 1;
        checks += r.checks.len() + 1;
        if r.pass {
            passed += 1;
        } else {
            bad.push(format!("L={l},n_a={n_a}"));
        }
    }
    let models = [
        synthetic(2, 1, &[2.0, 2.0, 0.0, 0.0], &[(0, 0), (1, 1)]),
        synthetic(3, 1, &[1.0; 6], &[(0, 1), (2, 0)]),
        synthetic(2, 2, &[2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[(0, 3), (1, 2)]),
        synthetic(1, 2, &[2.0, 0.0, 0.0, 0.0], &[(0, 1)]),
    ];
    for (k, m) in models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + k as u64);
        let draws = sample_gradient_stat(m, 2, samples, StatisticForm::ConjugatedCommutator, &mut rng).unwrap();
        let reps = variance_reports(m, &draws, 4.0);
        total += 1;
        checks += reps.len();
        if reps.iter().all(|r| r.pass) {
            passed += 1;
        } else {
            bad.push(format!("synthetic #{k}"));
        }
    }
    Outcome {
        pass: passed == total && total >= 5,
        detail: format!(
            "{passed}/{total} configurations, {checks} moment and covariance checks within 4 SE, 1e5 samples each{}",
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    }
}

fn generalization_check() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.verify.thetas = 20;
    let r = generalization_report(&cfg).unwrap();
    Outcome {
        pass: r.pass,
        detail: format!(
            "{} -> {} points, 20 θ, max(ℓ_ext - max ℓ_x^λ) = {:.2e} (<= 1e-10), copy deviation {:.2e} (< 1e-9)",
            r.original_points, r.extended_points, r.max_bound_margin, r.max_copy_deviation
        ),
    }
}

fn run_cli(args: &[&str], out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_fragqnn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .success()
}

fn minima_check(out: &Path) -> Outcome {
    if !run_cli(&["minima", "--preset", "fig3-4q", "--scale", "0.1", "--threads", "8"], out) {
        return Outcome {
            pass: false,
            detail: "minima run failed".into(),
        };
    }
    let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let summary: SweepSummary = serde_json::from_value(v["summary"].clone()).unwrap();
    let frac: Vec<f64> = summary.per_p.iter().map(|s| s.fraction_below).collect();
    let drops: Vec<f64> = frac.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    let monotone = drops.len() <= 1 && drops.iter().all(|d| *d <= 0.05);
    let gain = frac.last().unwrap() - frac.first().unwrap();
    let runs = summary.per_p.iter().map(|s| s.runs).min().unwrap();
    Outcome {
        pass: monotone && gain >= 0.3 && runs == 100,
        detail: format!(
            "100 trials per p in {:?}, fraction below 0.05 = {frac:?}, gain p=40 over p=1 = {gain:.2} (>= 0.3)",
            summary.per_p.iter().map(|s| s.p).collect::<Vec<_>>()
        ),
    }
}

fn rank_check() -> (Outcome, String) {
    let mut cfg = preset("fig2-4q").unwrap();
    cfg.verify.rank_p_values = vec![60, 80];
    let r = hessian_rank_report(&cfg).unwrap();
    let ranks: Vec<usize> = r.entries.iter().map(|e| e.rank).collect();
    let outcome = Outcome {
        pass: r.pass,
        detail: format!("random θ, tol 1e-8: rank(p=60) = {}, rank(p=80) = {}", ranks[0], ranks[1]),
    };
    cfg.verify.rank_at = RankAt::Trained;
    cfg.verify.rank_tol = 1e-6;
    cfg.verify.rank_p_values = vec![20, 40, 60, 80];
    cfg.train = fragqnn_cli::config::TrainSection {
        max_epochs: 5000,
        target: 1e-12,
        plateau_threshold: -1.0,
        ..cfg.train.clone()
    };
    let trained = hessian_rank_report(&cfg).unwrap();
    let info = format!(
        "gradient-descent minima, tol 1e-6: ranks {:?} at p = {:?}",
        trained.entries.iter().map(|e| e.rank).collect::<Vec<_>>(),
        trained.entries.iter().map(|e| e.p).collect::<Vec<_>>()
    );
    (outcome, info)
}

fn moments_check() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.verify.moment_sizes = vec![3, 5];
    cfg.verify.moment_horizons = vec![40.0];
    cfg.verify.moment_samples = 10_000;
    cfg.verify.moment_draws = 8;
    let r = moments_report(&cfg).unwrap();
    let haar_ok = r.runs.iter().filter(|x| x.haar_matches_closed_form).count();
    Outcome {
        pass: r.pass,
        detail: format!(
            "T = 40, mean |time - haar| dim 8 -> 32: {:.4} -> {:.4}; Haar within 4 SE of closed form in {haar_ok}/{} runs",
            r.trends[0].mean_diff[0],
            r.trends[0].mean_diff[1],
            r.runs.len()
        ),
    }
}

fn determinism_check(root: &Path) -> Outcome {
    let runs: [(&str, &[&str], &[&str]); 3] = [
        ("fig2-4q", &["train", "--preset", "fig2-4q"], &["curves.csv", "finals.csv"]),
        ("fig2-8q", &["train", "--preset", "fig2-8q", "--scale", "0.1"], &["curves.csv", "finals.csv"]),
        (
            "fig3-4q",
            &["minima", "--preset", "fig3-4q", "--scale", "0.1"],
            &["finals.csv", "histogram.csv"],
        ),
    ];
    let mut same = Vec::new();
    for (name, args, files) in runs {
        let a = root.join(format!("{name}-t1"));
        let b = root.join(format!("{name}-t8"));
        let ok_a = run_cli(&[args, &["--seed", "7", "--threads", "1"]].concat(), &a);
        let ok_b = run_cli(&[args, &["--seed", "7", "--threads", "8"]].concat(), &b);
        let identical = ok_a
            && ok_b
            && files
                .iter()
                .all(|f| std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok());
        same.push((name, identical));
    }
    Outcome {
        pass: same.iter().all(|(_, s)| *s),
        detail: format!("seed 7, threads 1 vs 8, byte-identical CSVs: {same:?}"),
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let tag = match (o.pass, KNOWN_FAILING.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id} {name}: {tag} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass && !KNOWN_FAILING.contains(&id) {
            failed.push(id);
        }
    };
    report(1, "gradient correctness", &mut gradient_check);
    report(2, "hessian correctness", &mut hessian_check);
    report(3, "block structure", &mut block_check);
    report(4, "gaussian-model variance", &mut variance_check);
    report(5, "generalization inequality", &mut generalization_check);
    report(6, "minima concentrate with p", &mut || minima_check(&dir.path().join("fig3")));
    let mut info = String::new();
    report(7, "hessian rank saturation", &mut || {
        let (o, i) = rank_check();
        info = i;
        o
    });
    println!("  info: {info}");
    report(8, "moment matching trend", &mut moments_check);
    report(9, "determinism across thread counts", &mut || determinism_check(dir.path()));
    if failed.is_empty() {
        println!("acceptance: all required criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
