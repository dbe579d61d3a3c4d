//! The randomized ansatz
//!
//! ```text
//! U(θ) = e^{iHt''} (∏_{i=1}^p e^{-iHt_i} e^{iAθ_i} e^{iHt_i}) e^{-iHt'}
//! ```
//!
//! with loss `ℓ(θ) = (1/M) Σ_x <x| U O_x U^† |x>`, its gradient and Hessian.
//!
//! Everything is evaluated on state vectors in the eigenbasis of `H`, where
//! `e^{iHt}` is diagonal. `A` is stored through its nonzero eigenpairs, so a
//! rotation costs `O(dim * rank(A))`. Writing `B_i = L_i A_i L_i^†` with
//! `L_i = e^{iHt''} G_1 ... G_{i-1}` and `C = U O U^†`:
//!
//! ```text
//! ∂_i ℓ_x    = i <x|[B_i, C]|x>
//! ∂_j ∂_i ℓ_x = -<x|[B_j, [B_i, C]]|x>     (j <= i)
//! ```

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::KrylovDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, CVector, Eigensystem, Operator, C64};
use crate::model::{observable_diagonal, Dataset};

#[derive(Clone, Debug)]
pub struct AnsatzSpec {
    pub times: Vec<f64>,
    pub t_prime: f64,
    pub t_double_prime: f64,
    pub horizon: f64,
    pub seed: Option<u64>,
    hamiltonian: Operator,
    generator_a: Operator,
    h_eig: Eigensystem,
    a_eig: Eigensystem,
    /// Nonzero eigenvalues of `A`.
    a_values: Vec<f64>,
    /// Matching eigenvectors of `A`, expressed in the eigenbasis of `H`.
    a_vectors: CMatrix,
}

/// JSON form of the sampled architecture.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnsatzExport {
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub times: Vec<f64>,
    pub t_prime: f64,
    pub t_double_prime: f64,
    pub seed: Option<u64>,
}

impl AnsatzSpec {
    pub fn new(
        hamiltonian: Operator,
        generator_a: Operator,
        times: Vec<f64>,
        t_prime: f64,
        t_double_prime: f64,
        horizon: f64,
    ) -> Result<Self> {
        if hamiltonian.dim() != generator_a.dim() {
            return Err(Error::DimensionMismatch {
                expected: hamiltonian.dim(),
                found: generator_a.dim(),
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be > 0")));
        }
        let all = times.iter().chain([&t_prime, &t_double_prime]);
        for &t in all {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::InvalidArgument(format!("time {t} outside [0, {horizon}]")));
            }
        }
        let h_eig = hermitian_eig(&hamiltonian)?;
        let a_eig = hermitian_eig(&generator_a)?;
        let a_max = a_eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if a_eig.values[0] < -1e-10 * a_max.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "A must be positive semidefinite, min eigenvalue {}",
                a_eig.values[0]
            )));
        }
        let cutoff = 1e-12 * a_max.max(1.0);
        let keep: Vec<usize> = (0..a_eig.values.len())
            .filter(|&k| a_eig.values[k].abs() > cutoff)
            .collect();
        let q = CMatrix::from_fn(hamiltonian.dim(), keep.len(), |r, c| a_eig.vectors[(r, keep[c])]);
        let a_vectors = h_eig.vectors.adjoint() * q;
        let a_values = keep.iter().map(|&k| a_eig.values[k]).collect();
        Ok(Self {
            times,
            t_prime,
            t_double_prime,
            horizon,
            seed: None,
            hamiltonian,
            generator_a,
            h_eig,
            a_eig,
            a_values,
            a_vectors,
        })
    }

    pub fn p(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn generator_a(&self) -> &Operator {
        &self.generator_a
    }

    pub fn export(&self) -> AnsatzExport {
        AnsatzExport {
            p: self.p(),
            horizon: self.horizon,
            times: self.times.clone(),
            t_prime: self.t_prime,
            t_double_prime: self.t_double_prime,
            seed: self.seed,
        }
    }

    /// `v <- diag(e^{i w t}) v` in the eigenbasis of `H`.
    fn phase(&self, v: &mut CVector, t: f64) {
        for (z, &w) in v.iter_mut().zip(self.h_eig.values.iter()) {
            *z *= C64::from_polar(1.0, w * t);
        }
    }

    /// Coordinates of `v` along the nonzero eigenvectors of `A`.
    fn a_coords(&self, v: &CVector) -> CVector {
        self.a_vectors.ad_mul(v)
    }

    /// `v <- e^{i s θ A} v` in the eigenbasis of `H`.
    fn rotate(&self, v: &mut CVector, theta: f64, s: f64) {
        let mut c = self.a_coords(v);
        for (z, &a) in c.iter_mut().zip(&self.a_values) {
            *z *= C64::from_polar(1.0, s * theta * a) - C64::new(1.0, 0.0);
        }
        v.gemv(C64::new(1.0, 0.0), &self.a_vectors, &c, C64::new(1.0, 0.0));
    }

    /// `v <- G_i^† v`, `G_i = e^{-iHt_i} e^{iAθ_i} e^{iHt_i}`.
    fn g_dagger(&self, v: &mut CVector, i: usize, theta: f64) {
        self.phase(v, self.times[i]);
        self.rotate(v, theta, -1.0);
        self.phase(v, -self.times[i]);
    }

    fn g(&self, v: &mut CVector, i: usize, theta: f64) {
        self.phase(v, self.times[i]);
        self.rotate(v, theta, 1.0);
        self.phase(v, -self.times[i]);
    }

    /// `<u| e^{-iHt_i} A e^{iHt_i} |v>`.
    fn a_element(&self, u: &CVector, v: &CVector, i: usize) -> C64 {
        let mut u = u.clone();
        let mut v = v.clone();
        self.phase(&mut u, self.times[i]);
        self.phase(&mut v, self.times[i]);
        let cu = self.a_coords(&u);
        let cv = self.a_coords(&v);
        weighted_inner(&cu, &cv, &self.a_values)
    }

    fn to_eigenframe(&self, v: &CVector) -> CVector {
        self.h_eig.vectors.ad_mul(v)
    }

    fn from_eigenframe(&self, v: &CVector) -> CVector {
        &self.h_eig.vectors * v
    }
}

fn weighted_inner(cu: &CVector, cv: &CVector, weights: &[f64]) -> C64 {
    cu.iter()
        .zip(cv.iter())
        .zip(weights)
        .map(|((a, b), &w)| a.conj() * b * w)
        .sum()
}

/// Draws `t_1..t_p`, then `t'`, then `t''`, uniform on `[0, horizon]`.
pub fn sample_ansatz<R: Rng + ?Sized>(
    p: usize,
    horizon: f64,
    hamiltonian: Operator,
    generator_a: Operator,
    rng: &mut R,
) -> Result<AnsatzSpec> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be > 0")));
    }
    let times: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..=horizon)).collect();
    let t_prime = rng.random_range(0.0..=horizon);
    let t_double_prime = rng.random_range(0.0..=horizon);
    AnsatzSpec::new(hamiltonian, generator_a, times, t_prime, t_double_prime, horizon)
}

fn check_theta(spec: &AnsatzSpec, theta: &[f64]) -> Result<()> {
    if theta.len() != spec.p() {
        return Err(Error::DimensionMismatch {
            expected: spec.p(),
            found: theta.len(),
        });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("parameter vector"));
    }
    Ok(())
}

fn check_data(spec: &AnsatzSpec, data: &Dataset) -> Result<()> {
    if data.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: data.dim(),
        });
    }
    if data.m() == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    Ok(())
}

/// Dense `U(θ)`.
pub fn build_unitary(spec: &AnsatzSpec, theta: &[f64]) -> Result<Operator> {
    check_theta(spec, theta)?;
    let n = spec.dim();
    let mut u = spec.h_eig.exp_i(spec.t_double_prime).into_matrix();
    for (i, &th) in theta.iter().enumerate() {
        let t = spec.times[i];
        let factor = spec.h_eig.exp_i(-t).into_matrix()
            * spec.a_eig.exp_i(th).matrix()
            * spec.h_eig.exp_i(t).matrix();
        u *= factor;
    }
    u *= spec.h_eig.exp_i(-spec.t_prime).matrix();
    debug_assert_eq!(u.nrows(), n);
    Operator::new(u)
}

/// Per-point pieces shared by the loss and its derivatives.
struct PointPass {
    loss: f64,
    /// `u_i = L_i^† x`, `i = 0..=p` (eigenframe).
    u: Vec<CVector>,
    /// `v_i = L_i^† C x`.
    v: Vec<CVector>,
}

fn point_pass(spec: &AnsatzSpec, theta: &[f64], x: &CVector, diag: &[f64], keep: bool) -> PointPass {
    let p = theta.len();
    let mut psi = spec.to_eigenframe(x);
    spec.phase(&mut psi, -spec.t_double_prime);
    let mut u = Vec::with_capacity(if keep { p + 1 } else { 0 });
    for (i, &th) in theta.iter().enumerate() {
        if keep {
            u.push(psi.clone());
        }
        spec.g_dagger(&mut psi, i, th);
    }
    if keep {
        u.push(psi.clone());
    }
    spec.phase(&mut psi, spec.t_prime);
    let mut comp = spec.from_eigenframe(&psi);
    let loss = comp
        .iter()
        .zip(diag)
        .map(|(z, &o)| o * z.norm_sqr())
        .sum::<f64>();
    if !keep {
        return PointPass {
            loss,
            u,
            v: Vec::new(),
        };
    }
    for (z, &o) in comp.iter_mut().zip(diag) {
        *z *= o;
    }
    // chi = C x = U O psi
    let mut chi = spec.to_eigenframe(&comp);
    spec.phase(&mut chi, -spec.t_prime);
    for i in (0..p).rev() {
        spec.g(&mut chi, i, theta[i]);
    }
    spec.phase(&mut chi, spec.t_double_prime);
    let mut v = Vec::with_capacity(p + 1);
    let mut w = chi;
    spec.phase(&mut w, -spec.t_double_prime);
    for (i, &th) in theta.iter().enumerate() {
        v.push(w.clone());
        spec.g_dagger(&mut w, i, th);
    }
    v.push(w);
    PointPass { loss, u, v }
}

fn point_gradient(spec: &AnsatzSpec, pass: &PointPass) -> Vec<f64> {
    (0..spec.p())
        .map(|i| {
            let z = spec.a_element(&pass.u[i], &pass.v[i], i);
            -2.0 * z.im
        })
        .collect()
}

fn point_hessian(spec: &AnsatzSpec, theta: &[f64], pass: &PointPass, diag: &[f64]) -> DMatrix<f64> {
    let p = theta.len();
    let mut h = DMatrix::zeros(p, p);
    // y_i = Q^† D(t_i) v_i, reused for every j <= i.
    let y: Vec<CVector> = (0..p)
        .map(|i| {
            let mut v = pass.v[i].clone();
            spec.phase(&mut v, spec.times[i]);
            spec.a_coords(&v)
        })
        .collect();
    // z_j = U^† B_j x in the computational basis.
    let mut z: Vec<CVector> = Vec::with_capacity(p);
    let mut term1 = DMatrix::<C64>::zeros(p, p);
    for j in 0..p {
        // w = e^{-iHt_j} A e^{iHt_j} u_j
        let mut w = pass.u[j].clone();
        spec.phase(&mut w, spec.times[j]);
        let c = spec.a_coords(&w);
        let scaled = CVector::from_iterator(
            c.len(),
            c.iter().zip(&spec.a_values).map(|(z, &a)| z * a),
        );
        let mut w = &spec.a_vectors * scaled;
        spec.phase(&mut w, -spec.times[j]);
        for i in j..p {
            let mut wi = w.clone();
            spec.phase(&mut wi, spec.times[i]);
            term1[(j, i)] = weighted_inner(&spec.a_coords(&wi), &y[i], &spec.a_values);
            spec.g_dagger(&mut w, i, theta[i]);
        }
        spec.phase(&mut w, spec.t_prime);
        z.push(spec.from_eigenframe(&w));
    }
    for j in 0..p {
        for i in j..p {
            let term2: C64 = z[j]
                .iter()
                .zip(z[i].iter())
                .zip(diag)
                .map(|((a, b), &o)| a.conj() * b * o)
                .sum();
            let val = -2.0 * (term1[(j, i)] - term2).re;
            h[(j, i)] = val;
            h[(i, j)] = val;
        }
    }
    h
}

fn diagonals(data: &Dataset) -> Vec<Vec<f64>> {
    data.points
        .iter()
        .map(|pt| observable_diagonal(pt.label, data.l, data.n_a))
        .collect()
}

/// `ℓ_x(θ) = <x|U O_x U^†|x>` for every point, without the `1/M` factor.
pub fn point_losses(spec: &AnsatzSpec, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    check_theta(spec, theta)?;
    check_data(spec, data)?;
    Ok(data
        .points
        .iter()
        .zip(diagonals(data))
        .map(|(pt, d)| point_pass(spec, theta, pt.state.amplitudes(), &d, false).loss)
        .collect())
}

pub fn loss(spec: &AnsatzSpec, theta: &[f64], data: &Dataset) -> Result<f64> {
    let per = point_losses(spec, theta, data)?;
    Ok(per.iter().sum::<f64>() / data.m() as f64)
}

pub fn adjusted_loss(loss: f64) -> f64 {
    loss + 1.0
}

pub fn loss_and_gradient(spec: &AnsatzSpec, theta: &[f64], data: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_theta(spec, theta)?;
    check_data(spec, data)?;
    let m = data.m() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; spec.p()];
    for (pt, d) in data.points.iter().zip(diagonals(data)) {
        let pass = point_pass(spec, theta, pt.state.amplitudes(), &d, true);
        total += pass.loss;
        for (g, x) in grad.iter_mut().zip(point_gradient(spec, &pass)) {
            *g += x;
        }
    }
    grad.iter_mut().for_each(|g| *g /= m);
    Ok((total / m, grad))
}

pub fn gradient(spec: &AnsatzSpec, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(spec, theta, data)?.1)
}

/// Per-point gradients `∂_i ℓ_x` without the `1/M` factor.
pub fn point_gradients(spec: &AnsatzSpec, theta: &[f64], data: &Dataset) -> Result<Vec<Vec<f64>>> {
    check_theta(spec, theta)?;
    check_data(spec, data)?;
    Ok(data
        .points
        .iter()
        .zip(diagonals(data))
        .map(|(pt, d)| point_gradient(spec, &point_pass(spec, theta, pt.state.amplitudes(), &d, true)))
        .collect())
}

pub fn hessian(spec: &AnsatzSpec, theta: &[f64], data: &Dataset) -> Result<DMatrix<f64>> {
    check_theta(spec, theta)?;
    check_data(spec, data)?;
    let p = spec.p();
    let mut h = DMatrix::zeros(p, p);
    for (pt, d) in data.points.iter().zip(diagonals(data)) {
        let pass = point_pass(spec, theta, pt.state.amplitudes(), &d, true);
        h += point_hessian(spec, theta, &pass, &d);
    }
    Ok(h / data.m() as f64)
}

/// `ℓ_x^λ` for every point and sector of `decomp` (a decomposition of the
/// full system (x) ancilla space), computed from the sector blocks of the
/// dense unitary. Summing over sectors gives [`point_losses`].
pub fn sector_losses(
    spec: &AnsatzSpec,
    theta: &[f64],
    data: &Dataset,
    decomp: &KrylovDecomposition,
) -> Result<Vec<Vec<f64>>> {
    check_data(spec, data)?;
    let u = build_unitary(spec, theta)?;
    let mut blocks = Vec::with_capacity(decomp.sectors.len());
    for s in &decomp.sectors {
        blocks.push(decomp.project_block(&u, s.id)?.into_matrix());
    }
    let basis = decomp.basis_change.matrix();
    let mut out = Vec::with_capacity(data.m());
    for (pt, d) in data.points.iter().zip(diagonals(data)) {
        let o = Operator::from_real_diagonal(&d);
        let coords = basis.ad_mul(pt.state.amplitudes());
        let mut row = Vec::with_capacity(decomp.sectors.len());
        for (s, ub) in decomp.sectors.iter().zip(&blocks) {
            let ob = decomp.project_block(&o, s.id)?.into_matrix();
            let c = ub * ob * ub.adjoint();
            let mut acc = 0.0;
            for copy in 0..s.multiplicity {
                let x = coords.rows(s.column(copy, 0), s.irrep_dim).into_owned();
                acc += x.dotc(&(&c * &x)).re;
            }
            row.push(acc);
        }
        out.push(row);
    }
    Ok(out)
}
