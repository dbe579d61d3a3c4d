//! Monte-Carlo and exact checks of the loss-landscape results: the Gaussian
//! gradient statistic and its variance, time-average vs Haar moments, the
//! multiplicity-copy generalization inequality and Hessian rank curves.
//!
//! Gaussian convention: every Ginibre entry has `E|z|^2 = 1` (real and
//! imaginary parts of variance 1/2). The variance formulas below assume it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::KrylovDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{
    embed, ginibre, haar_unitary, hermitian_eig, nullspace, numerical_rank, pauli_x, pauli_z,
    singular_values, CMatrix, CVector, Operator, StateVector, C64,
};
use crate::model::{build_a, build_hamiltonian, Dataset, SystemSpec};
use crate::qnn::{hessian, sample_ansatz};
use crate::trainer::{initial_theta, stable_hash, train, TrainConfig};

const CHUNK: usize = 2048;

/// Runs `f(rng, count)` over chunks with independent substreams and
/// concatenates the outputs in chunk order, so results do not depend on the
/// pool size.
fn chunked<T: Send>(
    samples: usize,
    seed: u64,
    f: impl Fn(&mut ChaCha8Rng, usize) -> Vec<T> + Sync,
) -> Vec<T> {
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, c as u64, 0x5eed));
            let n = CHUNK.min(samples - c * CHUNK);
            f(&mut rng, n)
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Mean and standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::INFINITY);
    }
    let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[derive(Clone, Debug)]
pub struct SemiIsotropic {
    pub op: Operator,
    pub rank: usize,
    /// `Tr(A)^2 / Tr(A^2)` before rounding.
    pub ratio: f64,
    pub eigenvalue: f64,
    pub trace_residual: f64,
    pub second_moment_residual: f64,
}

/// Replaces a PSD `A` by `Tr(A)/r` on its top-`r` eigenvectors, with
/// `r = Tr(A)^2/Tr(A^2)`. A ratio within 1e-9 of an integer is rounded,
/// otherwise it is rounded up and the moment residuals are nonzero.
pub fn semi_isotropic(a: &Operator) -> Result<SemiIsotropic> {
    let eig = hermitian_eig(a)?;
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroOperator);
    }
    if eig.values[0] < -1e-10 * scale {
        return Err(Error::InvalidArgument(format!(
            "A must be positive semidefinite, min eigenvalue {}",
            eig.values[0]
        )));
    }
    let tr: f64 = eig.values.iter().sum();
    let tr2: f64 = eig.values.iter().map(|w| w * w).sum();
    let ratio = tr * tr / tr2;
    let rank = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    } as usize;
    let rank = rank.clamp(1, a.dim());
    let eigenvalue = tr / rank as f64;
    let n = a.dim();
    let mut m = CMatrix::zeros(n, n);
    for k in n - rank..n {
        let v = eig.vectors.column(k);
        m += v * v.adjoint() * C64::new(eigenvalue, 0.0);
    }
    let op = Operator::hermitize(m)?;
    Ok(SemiIsotropic {
        op,
        rank,
        ratio,
        eigenvalue,
        trace_residual: (eigenvalue * rank as f64 - tr).abs(),
        second_moment_residual: (eigenvalue * eigenvalue * rank as f64 - tr2).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianPoint {
    /// Irrep basis index of the system part.
    pub q: usize,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct GaussianSector {
    /// `N_λ`; the block dimension is `N_λ * N_a`.
    pub irrep_dim: usize,
    pub a_block: Operator,
    pub points: Vec<GaussianPoint>,
}

#[derive(Clone, Debug)]
pub struct GaussianModelSpec {
    pub n_a: usize,
    pub sectors: Vec<GaussianSector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticForm {
    /// `(i/(M N*^2)) <x| g''^† g̃' [g̃ Ã g̃^†, O] g̃'^† g'' |x>`: the form whose
    /// second moment is the closed-form variance.
    ConjugatedCommutator,
    /// `(i/(M N*^2)) <x| g''^† [g̃ Ã g̃^†, g̃' O g̃'^†] g'' |x>`: agrees with
    /// the conjugated form only to leading order in the block dimension.
    CommutatorOfConjugates,
}

impl GaussianModelSpec {
    pub fn ancilla_dim(&self) -> usize {
        1 << self.n_a
    }

    pub fn m(&self) -> usize {
        self.sectors.iter().map(|s| s.points.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_a == 0 {
            return Err(Error::InvalidArgument("ancilla width must be >= 1".into()));
        }
        if self.m() == 0 {
            return Err(Error::InvalidArgument("model has no data points".into()));
        }
        let na = self.ancilla_dim();
        for s in &self.sectors {
            let n = s.irrep_dim * na;
            if s.a_block.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.a_block.dim(),
                });
            }
            for pt in &s.points {
                if pt.q >= s.irrep_dim || pt.label >= na {
                    return Err(Error::InvalidArgument(format!(
                        "point {pt:?} outside block {}x{na}",
                        s.irrep_dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// `2 (N_a - 1) Tr((A^λ)^2) / (M^2 N_a^4 N_λ^2)`: second moment of one
    /// component for one point of sector `s`.
    pub fn component_second_moment(&self, s: usize) -> f64 {
        let sec = &self.sectors[s];
        let na = self.ancilla_dim() as f64;
        let m = self.m() as f64;
        let tr2 = (sec.a_block.matrix() * sec.a_block.matrix()).trace().re;
        2.0 * (na - 1.0) * tr2 / (m * m * na.powi(4) * (sec.irrep_dim as f64).powi(2))
    }
}

/// `E‖∇ℓ‖^2 = Σ_λ 2 M_λ (N_a - 1) Tr((A^λ)^2) p / (M^2 N_a^4 N_λ^2)`.
pub fn variance_formula(model: &GaussianModelSpec, p: usize) -> f64 {
    (0..model.sectors.len())
        .map(|s| model.sectors[s].points.len() as f64 * model.component_second_moment(s))
        .sum::<f64>()
        * p as f64
}

/// Samples of `ℓ̂_{x;i}` laid out as `[sample][point][component]`, points in
/// sector order.
#[derive(Clone, Debug)]
pub struct GradientSamples {
    pub samples: usize,
    pub components: usize,
    /// `(sector index, point index within sector)`.
    pub points: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl GradientSamples {
    pub fn series(&self, point: usize, component: usize) -> Vec<f64> {
        let stride = self.points.len() * self.components;
        (0..self.samples)
            .map(|s| self.values[s * stride + point * self.components + component])
            .collect()
    }

    /// Mean and standard error of the product of two series.
    pub fn product_moment(&self, a: (usize, usize), b: (usize, usize)) -> (f64, f64) {
        let x = self.series(a.0, a.1);
        let y = self.series(b.0, b.1);
        let prod: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
        mean_se(&prod)
    }
}

/// Draws `samples` realizations of the Gaussian-model statistic for `p`
/// gradient components. Within one realization every point of a sector sees
/// the same `g''`, `g̃'` and `g̃_i`; sectors are independent.
pub fn sample_gradient_stat<R: Rng + ?Sized>(
    model: &GaussianModelSpec,
    p: usize,
    samples: usize,
    form: StatisticForm,
    rng: &mut R,
) -> Result<GradientSamples> {
    model.validate()?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let reduced: Vec<Operator> = model
        .sectors
        .iter()
        .map(|s| semi_isotropic(&s.a_block).map(|r| r.op))
        .collect::<Result<_>>()?;
    let points: Vec<(usize, usize)> = model
        .sectors
        .iter()
        .enumerate()
        .flat_map(|(s, sec)| (0..sec.points.len()).map(move |k| (s, k)))
        .collect();
    let na = model.ancilla_dim();
    let m = model.m() as f64;
    let seed = rng.next_u64();
    let values = chunked(samples, seed, |rng, count| {
        let mut out = Vec::with_capacity(count * points.len() * p);
        for _ in 0..count {
            let mut row = vec![0.0; points.len() * p];
            let mut slot = 0;
            for (sec, a_red) in model.sectors.iter().zip(&reduced) {
                let n = sec.irrep_dim * na;
                let g2 = haar_unitary(n, rng).expect("n >= 1").into_matrix();
                let g1 = ginibre(n, n, rng);
                let ks: Vec<CMatrix> = (0..p)
                    .map(|_| {
                        let g = ginibre(n, n, rng);
                        &g * a_red.matrix() * g.adjoint()
                    })
                    .collect();
                let norm = m * (n * n) as f64;
                for pt in &sec.points {
                    let x = g2.column(pt.q * na);
                    let mask = |v: &mut CVector| {
                        for (idx, z) in v.iter_mut().enumerate() {
                            if idx % na != pt.label {
                                *z = C64::new(0.0, 0.0);
                            }
                        }
                        // O = -I (x) |label><label|
                        *v *= C64::new(-1.0, 0.0);
                    };
                    for (i, k) in ks.iter().enumerate() {
                        let val = match form {
                            StatisticForm::ConjugatedCommutator => {
                                let y = g1.ad_mul(&x);
                                let mut oy = y.clone();
                                mask(&mut oy);
                                -2.0 * y.dotc(&(k * oy)).im / norm
                            }
                            StatisticForm::CommutatorOfConjugates => {
                                let y = x.into_owned();
                                let mut t = g1.ad_mul(&y);
                                mask(&mut t);
                                let py = &g1 * t;
                                -2.0 * y.dotc(&(k * py)).im / norm
                            }
                        };
                        row[slot * p + i] = val;
                    }
                    slot += 1;
                }
            }
            out.extend(row);
        }
        out
    });
    Ok(GradientSamples {
        samples,
        components: p,
        points,
        values,
    })
}

/// JSON report of one verification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub formula_value: f64,
    pub mc_estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub pass: bool,
}

impl VerificationReport {
    /// Pass when the estimate lies within `sigmas` standard errors.
    pub fn within(name: impl Into<String>, formula: f64, (est, se): (f64, f64), samples: usize, sigmas: f64) -> Self {
        Self {
            name: name.into(),
            formula_value: formula,
            mc_estimate: est,
            stderr: se,
            samples,
            pass: (est - formula).abs() <= sigmas * se,
        }
    }
}

/// Second-moment check for every (point, component) plus zero checks for
/// every distinct pair.
pub fn variance_reports(
    model: &GaussianModelSpec,
    draws: &GradientSamples,
    sigmas: f64,
) -> Vec<VerificationReport> {
    let mut out = Vec::new();
    let p = draws.components;
    for (k, &(s, j)) in draws.points.iter().enumerate() {
        for i in 0..p {
            out.push(VerificationReport::within(
                format!("second_moment[sector {s}, point {j}, component {i}]"),
                model.component_second_moment(s),
                draws.product_moment((k, i), (k, i)),
                draws.samples,
                sigmas,
            ));
        }
    }
    let flat: Vec<(usize, usize)> = (0..draws.points.len())
        .flat_map(|k| (0..p).map(move |i| (k, i)))
        .collect();
    for (u, &a) in flat.iter().enumerate() {
        for &b in &flat[u + 1..] {
            out.push(VerificationReport::within(
                format!("covariance[{a:?}, {b:?}]"),
                0.0,
                draws.product_moment(a, b),
                draws.samples,
                sigmas,
            ));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentOrder {
    /// `E[F]`.
    First,
    /// `E[|F|^2]`.
    Second,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: u8,
    pub horizon: f64,
    pub samples: usize,
    pub time_avg: [f64; 2],
    pub time_se: f64,
    pub haar_avg: [f64; 2],
    pub haar_se: f64,
    /// `Σ_λ w_λ Tr(A^λ) Tr(O^λ) / N_λ^2`, first order only.
    pub closed_form: Option<f64>,
    pub diff: f64,
}

/// Complex mean and the standard error of its modulus (root of the summed
/// component variances).
fn complex_mean_se(z: &[C64]) -> (C64, f64) {
    let re: Vec<f64> = z.iter().map(|c| c.re).collect();
    let im: Vec<f64> = z.iter().map(|c| c.im).collect();
    let (mr, sr) = mean_se(&re);
    let (mi, si) = mean_se(&im);
    (C64::new(mr, mi), (sr * sr + si * si).sqrt())
}

/// `F = Tr(ρ'' A' O')` with `ρ'' = W''|x><x|W''^†`, `A' = W A W^†`, `O' = W' O W'^†`.
fn trace_expression(x: &CVector, a: &CMatrix, o: &CMatrix, w2: &CMatrix, w: &CMatrix, w1: &CMatrix) -> C64 {
    let y = w2 * x;
    let a_t = w * a * w.adjoint();
    let o_t = w1 * o * w1.adjoint();
    y.dotc(&(a_t * o_t * &y))
}

/// Block-Haar unitary: an independent Haar unitary per sector irrep, acting
/// identically on every copy. Full Haar when `blocks` is absent.
fn block_haar<R: Rng + ?Sized>(dim: usize, blocks: Option<&KrylovDecomposition>, rng: &mut R) -> CMatrix {
    match blocks {
        None => haar_unitary(dim, rng).expect("dim >= 1").into_matrix(),
        Some(d) => {
            let mut u = CMatrix::zeros(dim, dim);
            for s in &d.sectors {
                let g = haar_unitary(s.irrep_dim, rng).expect("dim >= 1").into_matrix();
                for c in 0..s.multiplicity {
                    let at = s.column(c, 0);
                    u.view_mut((at, at), (s.irrep_dim, s.irrep_dim)).copy_from(&g);
                }
            }
            let b = d.basis_change.matrix();
            b * u * b.adjoint()
        }
    }
}

/// Time-averaged trace expression with `W = e^{-iHt}` (and likewise for
/// `t'`, `t''`) against the same expression with block-Haar unitaries.
#[allow(clippy::too_many_arguments)]
pub fn moment_compare<R: Rng + ?Sized>(
    h: &Operator,
    a: &Operator,
    o: &Operator,
    x: &StateVector,
    horizon: f64,
    order: MomentOrder,
    samples: usize,
    blocks: Option<&KrylovDecomposition>,
    rng: &mut R,
) -> Result<MomentReport> {
    let n = h.dim();
    for d in [a.dim(), o.dim(), x.dim()] {
        if d != n {
            return Err(Error::DimensionMismatch { expected: n, found: d });
        }
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be > 0")));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let eig = hermitian_eig(h)?;
    let v = &eig.vectors;
    let xv = x.amplitudes();
    let shape = |f: C64| match order {
        MomentOrder::First => f,
        MomentOrder::Second => C64::new(f.norm_sqr(), 0.0),
    };
    let seed = rng.next_u64();
    let time: Vec<C64> = chunked(samples, seed, |rng, count| {
        let mut out = Vec::with_capacity(count);
        // In the eigenbasis e^{-iHt} is diagonal.
        let xe = v.ad_mul(xv);
        let ae = v.adjoint() * a.matrix() * v;
        let oe = v.adjoint() * o.matrix() * v;
        for _ in 0..count {
            let ts: [f64; 3] = [
                rng.random_range(0.0..=horizon),
                rng.random_range(0.0..=horizon),
                rng.random_range(0.0..=horizon),
            ];
            let d = |t: f64| {
                CMatrix::from_diagonal(&CVector::from_iterator(
                    n,
                    eig.values.iter().map(|w| C64::from_polar(1.0, -w * t)),
                ))
            };
            out.push(shape(trace_expression(&xe, &ae, &oe, &d(ts[2]), &d(ts[0]), &d(ts[1]))));
        }
        out
    });
    let seed = rng.next_u64();
    let haar: Vec<C64> = chunked(samples, seed, |rng, count| {
        (0..count)
            .map(|_| {
                let w2 = block_haar(n, blocks, rng);
                let w = block_haar(n, blocks, rng);
                let w1 = block_haar(n, blocks, rng);
                shape(trace_expression(xv, a.matrix(), o.matrix(), &w2, &w, &w1))
            })
            .collect()
    });
    let (tm, tse) = complex_mean_se(&time);
    let (hm, hse) = complex_mean_se(&haar);
    let closed_form = match order {
        MomentOrder::First => Some(first_moment_closed_form(a, o, xv, blocks)?),
        MomentOrder::Second => None,
    };
    Ok(MomentReport {
        order: match order {
            MomentOrder::First => 1,
            MomentOrder::Second => 2,
        },
        horizon,
        samples,
        time_avg: [tm.re, tm.im],
        time_se: tse,
        haar_avg: [hm.re, hm.im],
        haar_se: hse,
        closed_form,
        diff: (tm - hm).norm(),
    })
}

/// `Σ_λ ‖P_λ x‖^2 Tr(A^λ) Tr(O^λ) / N_λ^2`, traces over one irrep copy.
pub fn first_moment_closed_form(
    a: &Operator,
    o: &Operator,
    x: &CVector,
    blocks: Option<&KrylovDecomposition>,
) -> Result<f64> {
    match blocks {
        None => {
            let n = a.dim() as f64;
            Ok((a.trace() * o.trace()).re / (n * n))
        }
        Some(d) => {
            let coords = d.basis_change.matrix().ad_mul(x);
            let mut total = 0.0;
            for s in &d.sectors {
                let w: f64 = s.range().map(|i| coords[i].norm_sqr()).sum();
                if w == 0.0 {
                    continue;
                }
                let ab = d.project_block(a, s.id)?;
                let ob = d.project_block(o, s.id)?;
                let nl = s.irrep_dim as f64;
                total += w * (ab.trace() * ob.trace()).re / (nl * nl);
            }
            Ok(total)
        }
    }
}

/// Exact first-order time average over `t, t', t'' ~ U(0, T)`, summed in the
/// eigenbasis of `H`.
pub fn time_average_exact(h: &Operator, a: &Operator, o: &Operator, x: &CVector, horizon: f64) -> Result<C64> {
    let eig = hermitian_eig(h)?;
    let v = &eig.vectors;
    let xe = v.ad_mul(x);
    let ae = v.adjoint() * a.matrix() * v;
    let oe = v.adjoint() * o.matrix() * v;
    let w = &eig.values;
    // (1/T) ∫_0^T e^{-iωt} dt
    let phi = |omega: f64| {
        let z = omega * horizon;
        if z.abs() < 1e-8 {
            C64::new(1.0, -z / 2.0)
        } else {
            (C64::new(1.0, 0.0) - C64::from_polar(1.0, -z)) / C64::new(0.0, z)
        }
    };
    let n = h.dim();
    let mut total = C64::new(0.0, 0.0);
    // F = Σ ρ_ab e^{-i(w_a-w_b)t''} A_bc e^{-i(w_b-w_c)t} O_ca e^{-i(w_c-w_a)t'}
    for i in 0..n {
        for j in 0..n {
            let rho = xe[i] * xe[j].conj();
            if rho.norm() == 0.0 {
                continue;
            }
            for k in 0..n {
                total += rho
                    * ae[(j, k)]
                    * oe[(k, i)]
                    * phi(w[i] - w[j])
                    * phi(w[j] - w[k])
                    * phi(w[k] - w[i]);
            }
        }
    }
    Ok(total)
}

/// Mixed-field Ising chain `Σ_j (c^x_j X_j + c^z_j Z_j) + Σ_j c_j Z_j Z_{j+1}`
/// with i.i.d. standard normal couplings, plus `A = (I + X_0)/2`,
/// `O = -(I + Z_{n-1})/2` and a Haar-random input state.
///
/// The input state is typical (infinite temperature). A product state such as
/// `|0...0>` sits at finite energy density, where the dephased `A` and `O`
/// differ from their trace averages at every size and the gap to Haar does
/// not close.
pub fn ising_family<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<(Operator, Operator, Operator, StateVector)> {
    if n < 2 {
        return Err(Error::InvalidArgument("Ising chain needs >= 2 sites".into()));
    }
    let dim = 1 << n;
    let mut h = Operator::zeros(dim);
    for j in 0..n {
        let cx: f64 = rng.sample(StandardNormal);
        let cz: f64 = rng.sample(StandardNormal);
        h = &h + &embed(&pauli_x(), j, n)?.scale(cx);
        h = &h + &embed(&pauli_z(), j, n)?.scale(cz);
    }
    let zz = pauli_z().kron(&pauli_z());
    for j in 0..n - 1 {
        let c: f64 = rng.sample(StandardNormal);
        h = &h + &embed(&zz, j, n)?.scale(c);
    }
    let id = Operator::identity(dim);
    let a = (&id + &embed(&pauli_x(), 0, n)?).scale(0.5);
    let o = (&id + &embed(&pauli_z(), n - 1, n)?).scale(-0.5);
    Ok((
        Operator::hermitize(h.into_matrix())?,
        Operator::hermitize(a.into_matrix())?,
        Operator::hermitize(o.into_matrix())?,
        StateVector::new(haar_unitary(dim, rng)?.into_matrix().column(0).into_owned())?,
    ))
}

/// Appends, for every training point in a sector with multiplicity `N' > 1`,
/// the `N' - 1` states obtained by cyclically shifting its multiplicity
/// vector through an orthonormal completion. The shifts are unitaries in the
/// commutant, so each copy keeps the sector, irrep vector and label.
pub fn extend_dataset_multiplicities(data: &Dataset, decomp: &KrylovDecomposition) -> Result<Dataset> {
    if decomp.dim() != 1 << data.l {
        return Err(Error::DimensionMismatch {
            expected: 1 << data.l,
            found: decomp.dim(),
        });
    }
    let b = decomp.basis_change.matrix();
    let mut items: Vec<(CVector, usize)> = (0..data.m())
        .map(|i| (data.system_state(i), data.points[i].label))
        .collect();
    for i in 0..data.m() {
        let psi = data.system_state(i);
        let id = decomp
            .sector_of_state(&psi, 1e-8)
            .ok_or(Error::SectorResolutionFailure { index: i })?;
        let s = decomp.sector(id).expect("tagged sector exists");
        if s.multiplicity == 1 {
            continue;
        }
        for k in 1..s.multiplicity {
            let q = multiplicity_unitary(decomp, id, &psi, k).ok_or(Error::SectorResolutionFailure { index: i })?;
            items.push((b * q * b.adjoint() * &psi, data.points[i].label));
        }
    }
    let mut out = Dataset::labelled(data.l, data.n_a, items)?;
    out.tag_sectors(decomp);
    Ok(out)
}

/// Block-basis unitary `I_{N_λ} (x) Σ_j |w_{j+k}><w_j|` on sector `id`
/// (identity elsewhere), where `w_0` is the multiplicity vector of `psi`.
/// `None` when `psi` is not a product `v (x) w_0` inside the sector.
fn multiplicity_unitary(decomp: &KrylovDecomposition, id: usize, psi: &CVector, k: usize) -> Option<CMatrix> {
    let s = decomp.sector(id)?;
    let coords = decomp.basis_change.matrix().ad_mul(psi);
    let x = CMatrix::from_fn(s.irrep_dim, s.multiplicity, |q, c| coords[s.column(c, q)]);
    let sv = singular_values(&x);
    if sv.len() > 1 && sv[1] > 1e-8 * sv[0] {
        return None;
    }
    // w_0: dominant right singular vector, as a column.
    let svd = x.clone().svd(false, true);
    let vt = svd.v_t?;
    let top = (0..svd.singular_values.len())
        .max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))?;
    let w0 = vt.row(top).transpose();
    let rest = nullspace(&CMatrix::from_row_slice(1, s.multiplicity, w0.conjugate().as_slice()), 1e-8);
    let mut w = CMatrix::zeros(s.multiplicity, s.multiplicity);
    w.set_column(0, &w0);
    for c in 1..s.multiplicity {
        w.set_column(c, &rest.column(c - 1));
    }
    let mult = s.multiplicity;
    let mut shift = CMatrix::zeros(mult, mult);
    for j in 0..mult {
        let dst = w.column((j + k) % mult);
        let src = w.column(j);
        shift += dst * src.adjoint();
    }
    let n = decomp.dim();
    let mut q = CMatrix::identity(n, n);
    for r in s.range() {
        for c in s.range() {
            q[(r, c)] = C64::new(0.0, 0.0);
        }
    }
    for a in 0..mult {
        for bb in 0..mult {
            for qq in 0..s.irrep_dim {
                q[(s.column(a, qq), s.column(bb, qq))] = shift[(a, bb)];
            }
        }
    }
    Some(q)
}

/// Where the Hessian is evaluated in a rank curve.
#[derive(Clone, Debug, PartialEq)]
pub enum RankPoint {
    /// `θ` uniform on `[0, 2π)`.
    Random,
    /// `θ` after gradient descent from a random start.
    Trained(TrainConfig),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankEntry {
    pub p: usize,
    pub rank: usize,
    /// Smallest singular value of the Hessian relative to the largest.
    pub min_relative_singular: f64,
    /// `2 M N_a^3 N^3` with `N = Σ N_λ`.
    pub rank_bound: f64,
}

/// Numerical rank of the analytic Hessian for each `p`. One Hamiltonian is
/// drawn for the whole curve; each `p` gets fresh ansatz times and `θ`.
pub fn hessian_rank_curve<R: Rng + ?Sized>(
    system: &SystemSpec,
    data: &Dataset,
    decomp: Option<&KrylovDecomposition>,
    p_values: &[usize],
    tol: f64,
    at: &RankPoint,
    rng: &mut R,
) -> Result<Vec<RankEntry>> {
    if p_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("p values must be strictly ascending".into()));
    }
    let h = build_hamiltonian(system, rng)?;
    let a = build_a(system)?;
    let horizon = 10.0 * (system.l + system.n_a) as f64;
    let n_sum: usize = decomp
        .map(|d| d.sectors.iter().map(|s| s.irrep_dim).sum())
        .unwrap_or(system.system_dim());
    let bound = 2.0 * data.m() as f64 * (system.ancilla_dim() as f64).powi(3) * (n_sum as f64).powi(3);
    let mut out = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let spec = sample_ansatz(p, horizon, h.clone(), a.clone(), rng)?;
        let mut theta = initial_theta(p, rng);
        if let RankPoint::Trained(cfg) = at {
            theta = train(&spec, &theta, data, cfg)?.theta;
        }
        let hm = hessian(&spec, &theta, data)?;
        let m = CMatrix::from_fn(p, p, |i, j| C64::new(hm[(i, j)], 0.0));
        let sv = singular_values(&m);
        let min_rel = match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
            _ => 0.0,
        };
        out.push(RankEntry {
            p,
            rank: numerical_rank(&m, tol),
            min_relative_singular: min_rel,
            rank_bound: bound,
        });
    }
    Ok(out)
}
