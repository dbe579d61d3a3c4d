mod common;

use common::{max_abs, random_state, taylor_exp_i};
use fragqnn_core::algebra::krylov_decomposition;
use fragqnn_core::linalg::{frobenius, Operator};
use fragqnn_core::model::{build_a, build_hamiltonian, tl_generators, Dataset, SystemSpec};
use fragqnn_core::qnn::{
    build_unitary, gradient, hessian, loss, point_losses, sample_ansatz, sector_losses, AnsatzSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, l: usize, n_a: usize, p: usize, m: usize) -> (AnsatzSpec, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SystemSpec::temperley_lieb(l, n_a, seed).unwrap();
    let h = build_hamiltonian(&spec, &mut rng).unwrap();
    let a = build_a(&spec).unwrap();
    let ans = sample_ansatz(p, 10.0 * (l + n_a) as f64, h, a, &mut rng).unwrap();
    let items = (0..m)
        .map(|k| (random_state(1 << l, &mut rng), k % (1 << n_a)))
        .collect();
    (ans, Dataset::labelled(l, n_a, items).unwrap())
}

fn random_theta(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

fn fd_gradient(s: &AnsatzSpec, theta: &[f64], d: &Dataset, step: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[i] += step;
            dn[i] -= step;
            (loss(s, &up, d).unwrap() - loss(s, &dn, d).unwrap()) / (2.0 * step)
        })
        .collect()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for k in 0..50u64 {
        let l = 2 + (k % 3) as usize;
        let n_a = 1 + (k % 2) as usize;
        let p = 1 + (k % 10) as usize;
        let (s, d) = instance(k, l, n_a, p, 2);
        let theta = random_theta(p, &mut rng);
        let g = gradient(&s, &theta, &d).unwrap();
        let fd = fd_gradient(&s, &theta, &d, 1e-5);
        let err = max_abs(&g, &fd);
        assert!(err < 1e-6, "instance {k}: {err:e}");
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for k in 0..20u64 {
        let p = 1 + (k % 5) as usize;
        let (s, d) = instance(k + 50, 2 + (k % 3) as usize, 1, p, 2);
        let theta = random_theta(p, &mut rng);
        let h = hessian(&s, &theta, &d).unwrap();
        assert!((&h - h.transpose()).amax() < 1e-9);
        let step = 1e-5;
        for j in 0..p {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += step;
            dn[j] -= step;
            let gu = gradient(&s, &up, &d).unwrap();
            let gd = gradient(&s, &dn, &d).unwrap();
            for i in 0..p {
                let fd = (gu[i] - gd[i]) / (2.0 * step);
                assert!((h[(i, j)] - fd).abs() < 1e-5, "instance {k} ({i},{j})");
            }
        }
    }
}

#[test]
fn single_parameter_hessian_is_second_difference() {
    let (s, d) = instance(7, 3, 1, 1, 2);
    let theta = [0.8];
    let h = hessian(&s, &theta, &d).unwrap();
    let e = 1e-4;
    let fd = (loss(&s, &[0.8 + e], &d).unwrap() - 2.0 * loss(&s, &theta, &d).unwrap()
        + loss(&s, &[0.8 - e], &d).unwrap())
        / (e * e);
    assert!((h[(0, 0)] - fd).abs() < 1e-5, "{} vs {fd}", h[(0, 0)]);
}

#[test]
fn unitary_matches_taylor_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for k in 0..5u64 {
        let p = 1 + k as usize;
        let (s, _) = instance(k, 3, 1, p, 1);
        let theta = random_theta(p, &mut rng);
        let h = s.hamiltonian().matrix();
        let a = s.generator_a().matrix();
        let mut u = taylor_exp_i(h, s.t_double_prime);
        for (i, &th) in theta.iter().enumerate() {
            u = u * taylor_exp_i(h, -s.times[i]) * taylor_exp_i(a, th) * taylor_exp_i(h, s.times[i]);
        }
        u *= taylor_exp_i(h, -s.t_prime);
        let fast = build_unitary(&s, &theta).unwrap();
        assert!(frobenius(&(fast.matrix() - &u)) < 1e-8);
        assert!(fast.unitarity_residual() < 1e-9);
    }
}

#[test]
fn vanishing_hamiltonian_collapses_product() {
    let spec = SystemSpec::temperley_lieb(2, 1, 0).unwrap();
    let a = build_a(&spec).unwrap();
    let s = AnsatzSpec::new(Operator::zeros(8), a.clone(), vec![1.0, 3.0, 2.0], 0.2, 0.9, 4.0).unwrap();
    let theta = [0.3, -0.7, 1.9];
    let u = build_unitary(&s, &theta).unwrap();
    let expected = taylor_exp_i(a.matrix(), theta.iter().sum());
    assert!(frobenius(&(u.matrix() - expected)) < 1e-10);
}

#[test]
fn loss_splits_over_sectors() {
    let g = tl_generators(4).unwrap();
    let decomp = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let ext = decomp.with_ancilla(1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (s, d) = instance(11, 4, 1, 6, 3);
    let theta = random_theta(6, &mut rng);
    let direct = point_losses(&s, &theta, &d).unwrap();
    let split = sector_losses(&s, &theta, &d, &ext).unwrap();
    for (x, row) in direct.iter().zip(&split) {
        assert!((x - row.iter().sum::<f64>()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_stays_in_unit_interval(seed in 0u64..1000, p in 0usize..8, scale in 0.0f64..20.0) {
        let (s, d) = instance(seed, 2 + (seed % 3) as usize, 1 + (seed % 2) as usize, p, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..p).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let v = loss(&s, &theta, &d).unwrap();
        prop_assert!((-1.0 - 1e-12..=1e-12).contains(&v));
    }

    #[test]
    fn loss_is_pi_periodic_in_each_angle(seed in 0u64..500) {
        // A has spectrum {0, 2}, so shifting every angle by π leaves
        // U unchanged.
        let (s, d) = instance(seed, 2, 1, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_theta(3, &mut rng);
        let shifted: Vec<f64> = theta.iter().map(|t| t + std::f64::consts::PI).collect();
        let a = loss(&s, &theta, &d).unwrap();
        let b = loss(&s, &shifted, &d).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }
}
