//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex<f64>`.
//! Hamiltonian exponentials are always evaluated through a full Hermitian
//! eigendecomposition, which is cached by callers that evolve the same
//! generator for many times.
//!
//! Random matrices follow the unit-total-variance convention: a standard
//! complex Gaussian entry has independent real and imaginary parts with
//! variance 1/2 each, so `E|z|^2 = 1`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen, QR, SVD};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance on `max|M - M^dagger|` for an operator to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default relative singular-value cutoff for rank and nullspace queries.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense square complex operator.
///
/// The `hermitian` flag is only ever set after the symmetry check passed, so
/// it can be trusted by consumers.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidArgument("operator dimension must be >= 1".into()));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator"));
        }
        Ok(Self {
            matrix,
            hermitian: false,
        })
    }

    /// Builds an operator and checks it is Hermitian within [`HERMITIAN_TOL`].
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        Self::new(matrix)?.checked_hermitian()
    }

    /// Symmetrizes `(M + M^dagger) / 2` and flags the result Hermitian.
    pub fn hermitize(matrix: CMatrix) -> Result<Self> {
        let sym = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut op = Self::new(sym)?;
        op.hermitian = true;
        Ok(op)
    }

    pub fn checked_hermitian(mut self) -> Result<Self> {
        let residual = self.hermitian_residual();
        if residual >= HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut matrix = CMatrix::zeros(n, n);
        for (k, &d) in diag.iter().enumerate() {
            matrix[(k, k)] = C64::new(d, 0.0);
        }
        Self {
            matrix,
            hermitian: true,
        }
    }

    /// Real-valued row-major entries, convenient for small literal operators.
    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(CMatrix::from_row_iterator(
            dim,
            dim,
            entries.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |M_ij - conj(M_ji)|`.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.matrix)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: &self.matrix * C64::new(s, 0.0),
            hermitian: self.hermitian,
        }
    }

    /// Kronecker product `self (x) other`; the left factor is the more
    /// significant index.
    pub fn kron(&self, other: &Operator) -> Self {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Self {
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            hermitian: false,
        }
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }

    /// Frobenius distance of `self^dagger self` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        frobenius(&(self.matrix.adjoint() * &self.matrix - CMatrix::identity(n, n)))
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix * &rhs.matrix,
            hermitian: false,
        }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("state dimension must be >= 1".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() >= Self::NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state norm {norm} differs from 1"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroOperator);
        }
        Self::new(amplitudes.unscale(norm))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn kron(&self, other: &StateVector) -> Self {
        Self {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    /// `V diag(f(w)) V^dagger`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(i t op)`.
    pub fn exp_i(&self, t: f64) -> Operator {
        Operator {
            matrix: self.map_spectrum(|w| C64::from_polar(1.0, w * t)),
            hermitian: false,
        }
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map_spectrum(|w| C64::new(w, 0.0))
    }
}

pub fn hermitian_eig(op: &Operator) -> Result<Eigensystem> {
    let residual = op.hermitian_residual();
    if residual >= HERMITIAN_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let eig = SymmetricEigen::new(op.matrix.clone());
    let n = op.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Eigensystem { values, vectors })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `exp(sign * i * op * t)` for Hermitian `op`.
pub fn evolve(op: &Operator, t: f64, sign: Sign) -> Result<Operator> {
    Ok(hermitian_eig(op)?.exp_i(sign.value() * t))
}

/// Standard complex Gaussian sample with unit total variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` matrix of i.i.d. standard complex Gaussians, `E|X_ij|^2 = 1`.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // Column-major fill keeps the draw order fixed for a given seed.
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Haar-distributed unitary via QR of a Ginibre matrix, with the phases of
/// `diag(R)` folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Operator> {
    if dim == 0 {
        return Err(Error::InvalidArgument("Haar dimension must be >= 1".into()));
    }
    let qr = QR::new(ginibre(dim, dim, rng));
    let r = qr.r();
    let mut q = qr.q();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        col *= phase;
    }
    Operator::new(q)
}

/// Random Hermitian matrix `(G + G^dagger) / 2` with `G` Ginibre.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let g = ginibre(dim, dim, rng);
    Operator::hermitize(g).expect("Ginibre draw is finite and square")
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Count of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|&&x| x > tol * max).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the kernel of `m`, where singular values
/// at or below `tol * sigma_max` count as zero.
pub fn nullspace(m: &CMatrix, tol: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    // A wide matrix is padded with zero rows so the SVD returns a full V.
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let kernel: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| max == 0.0 || svd.singular_values[k] <= tol * max)
        .collect();
    let mut basis = CMatrix::zeros(cols, kernel.len());
    for (dst, &k) in kernel.iter().enumerate() {
        let row = v_t.row(k);
        for j in 0..cols {
            basis[(j, dst)] = row[j].conj();
        }
    }
    basis
}

pub fn pauli_x() -> Operator {
    Operator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
        .and_then(Operator::checked_hermitian)
        .expect("literal")
}

pub fn pauli_y() -> Operator {
    let m = CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
    Operator::hermitian(m).expect("literal")
}

pub fn pauli_z() -> Operator {
    Operator::from_real_diagonal(&[1.0, -1.0])
}

/// Places a `2^k`-dimensional operator on qubits `first..first+k` of an
/// `n`-qubit register (qubit 0 is the most significant bit).
pub fn embed(op: &Operator, first: usize, qubits: usize) -> Result<Operator> {
    let k = op.dim().trailing_zeros() as usize;
    if op.dim() != 1 << k || first + k > qubits {
        return Err(Error::InvalidArgument(format!(
            "cannot embed a {}-dimensional operator at qubit {first} of {qubits}",
            op.dim()
        )));
    }
    let left = Operator::identity(1 << first);
    let right = Operator::identity(1 << (qubits - first - k));
    Ok(left.kron(op).kron(&right))
}

/// `<a|b>`.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}
