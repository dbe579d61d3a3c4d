//! Sector decomposition of a Hilbert space under the *-algebra generated by a
//! set of Hermitian operators.
//!
//! The space splits as a direct sum over sectors `λ` of an irreducible
//! representation (dimension `N_λ`) tensored with a multiplicity space
//! (dimension `N'_λ`). The decomposition is found numerically:
//!
//! 1. the commutant is the nullspace of the stacked maps `X -> [h_i, X]`;
//! 2. a random Hermitian element of the commutant has one eigenspace per
//!    irrep copy;
//! 3. copies are grouped into sectors by comparing the spectrum of a random
//!    algebra element restricted to each copy, and their bases are aligned so
//!    every algebra element has identical blocks on all copies of a sector.
//!
//! Columns of the basis change are ordered sector by sector, copy by copy:
//! copy `c`, irrep index `k` of a sector starting at `start` is column
//! `start + c * N_λ + k`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, complex_normal, frobenius, hermitian_eig, CMatrix, CVector, Operator, C64, I, ONE,
};

/// Largest dimension handed to the dense commutant solver. Its constraint
/// system has `dim^2` unknowns.
pub const MAX_DENSE_DIM: usize = 32;

/// Eigenvalues closer than this (relative to the spectral scale) are treated
/// as one cluster.
pub const EIGEN_GAP: f64 = 1e-6;

pub const MAX_ATTEMPTS: usize = 8;

#[derive(Clone, Debug)]
pub struct CommutantBasis {
    pub elements: Vec<Operator>,
}

impl CommutantBasis {
    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    /// Random Hermitian element `sum_k r_k (X_k + X_k^dag)/2 + s_k (X_k - X_k^dag)/2i`.
    pub fn random_hermitian<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Operator {
        let mut acc = CMatrix::zeros(dim, dim);
        for x in &self.elements {
            let r: f64 = rng.sample(StandardNormal);
            let s: f64 = rng.sample(StandardNormal);
            let m = x.matrix();
            let adj = m.adjoint();
            acc += (m + &adj) * C64::new(0.5 * r, 0.0);
            acc += (m - &adj) * (C64::new(0.5 * s, 0.0) / I);
        }
        Operator::hermitize(acc).expect("finite combination")
    }
}

/// Elements spanning `{X : [X, h] = 0 for all generators h}`, orthonormal
/// under `<X, Y> = Tr(X^dag Y)`.
pub fn commutant_basis(generators: &[Operator], tol: f64) -> Result<CommutantBasis> {
    let dim = shared_dim(generators)?;
    if dim > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge {
            dim,
            limit: MAX_DENSE_DIM,
        });
    }
    let n2 = dim * dim;
    let mut stacked = CMatrix::zeros(generators.len().max(1) * n2, n2);
    for (g, h) in generators.iter().enumerate() {
        let c = commutator_map(h.matrix());
        stacked.view_mut((g * n2, 0), (n2, n2)).copy_from(&c);
    }
    let kernel = linalg::nullspace(&stacked, tol);
    let elements = kernel
        .column_iter()
        .map(|col| {
            Operator::new(CMatrix::from_column_slice(dim, dim, col.as_slice()))
                .expect("kernel vector is finite")
        })
        .collect();
    Ok(CommutantBasis { elements })
}

/// Matrix of `vec(X) -> vec(hX - Xh)` in column-major vectorization.
pub fn commutator_map(h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let id = CMatrix::identity(n, n);
    id.kronecker(h) - h.transpose().kronecker(&id)
}

fn shared_dim(generators: &[Operator]) -> Result<usize> {
    let first = generators
        .first()
        .ok_or_else(|| Error::InvalidArgument("generator list is empty".into()))?;
    let dim = first.dim();
    for g in generators {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: g.dim(),
            });
        }
        let residual = g.hermitian_residual();
        if residual >= linalg::HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
    }
    Ok(dim)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sector {
    pub id: usize,
    pub irrep_dim: usize,
    pub multiplicity: usize,
    /// First column of this sector in the basis change.
    pub start: usize,
}

impl Sector {
    pub fn len(&self) -> usize {
        self.irrep_dim * self.multiplicity
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }

    /// Column of irrep index `k` in copy `c`.
    pub fn column(&self, copy: usize, k: usize) -> usize {
        self.start + copy * self.irrep_dim + k
    }
}

#[derive(Clone, Debug)]
pub struct KrylovDecomposition {
    pub basis_change: Operator,
    pub sectors: Vec<Sector>,
    /// Ids of the retained sectors.
    pub selected: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct DecompositionOptions {
    pub tol: f64,
    pub word_length: usize,
    pub max_attempts: usize,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        Self {
            tol: linalg::DEFAULT_RANK_TOL,
            word_length: 4,
            max_attempts: MAX_ATTEMPTS,
        }
    }
}

pub fn krylov_decomposition<R: Rng + ?Sized>(
    generators: &[Operator],
    tol: f64,
    rng: &mut R,
) -> Result<KrylovDecomposition> {
    krylov_decomposition_with(
        generators,
        DecompositionOptions {
            tol,
            ..Default::default()
        },
        rng,
    )
}

pub fn krylov_decomposition_with<R: Rng + ?Sized>(
    generators: &[Operator],
    opts: DecompositionOptions,
    rng: &mut R,
) -> Result<KrylovDecomposition> {
    let dim = shared_dim(generators)?;
    let commutant = commutant_basis(generators, opts.tol)?;
    for _ in 0..opts.max_attempts.max(1) {
        if let Some(decomp) = attempt(generators, &commutant, dim, opts, rng)? {
            return Ok(decomp);
        }
    }
    Err(Error::DegenerateDraw {
        attempts: opts.max_attempts.max(1),
    })
}

fn attempt<R: Rng + ?Sized>(
    generators: &[Operator],
    commutant: &CommutantBasis,
    dim: usize,
    opts: DecompositionOptions,
    rng: &mut R,
) -> Result<Option<KrylovDecomposition>> {
    let cr = commutant.random_hermitian(dim, rng);
    let ga = random_algebra_element(generators, opts.word_length, rng);
    let gb = random_algebra_element(generators, opts.word_length, rng);

    // Irrep copies: eigenspaces of the commutant element.
    let eig = hermitian_eig(&cr)?;
    let copies: Vec<CMatrix> = clusters(eig.values.as_slice())
        .into_iter()
        .map(|r| eig.vectors.columns(r.start, r.len()).into_owned())
        .collect();

    // Group copies whose restricted spectra of `ga` coincide.
    let scale = ga.frobenius_norm().max(1.0);
    let mut restricted = Vec::with_capacity(copies.len());
    for p in &copies {
        let block = Operator::hermitize(p.adjoint() * ga.matrix() * p)?;
        restricted.push(hermitian_eig(&block)?);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in 0..copies.len() {
        let hit = groups.iter_mut().find(|g| {
            let a = &restricted[g[0]].values;
            let b = &restricted[c].values;
            a.len() == b.len()
                && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < EIGEN_GAP * scale)
        });
        match hit {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }

    // Aligned bases: eigenvectors of the restriction, phases tied to copy 0.
    let mut blocks: Vec<(usize, usize, CMatrix)> = Vec::new();
    for g in &groups {
        let n = copies[g[0]].ncols();
        let mut cols = CMatrix::zeros(dim, n * g.len());
        let reference = &copies[g[0]] * &restricted[g[0]].vectors;
        for (slot, &c) in g.iter().enumerate() {
            let mut f = &copies[c] * &restricted[c].vectors;
            if slot > 0 {
                let f0 = f.column(0).into_owned();
                let r0 = reference.column(0).into_owned();
                for k in 1..n {
                    let z_ref = linalg::inner(&reference.column(k).into_owned(), &(gb.matrix() * &r0));
                    let z = linalg::inner(&f.column(k).into_owned(), &(gb.matrix() * &f0));
                    if z_ref.norm() < EIGEN_GAP || z.norm() < EIGEN_GAP {
                        return Ok(None);
                    }
                    let alpha = ((z_ref / z_ref.norm()) / (z / z.norm())).conj();
                    let mut col = f.column_mut(k);
                    col *= alpha;
                }
            }
            cols.columns_mut(slot * n, n).copy_from(&f);
        }
        blocks.push((n, g.len(), cols));
    }

    // Deterministic order: irrep dim descending, then the smallest
    // computational-basis index the sector touches.
    let mut keyed: Vec<(usize, usize, usize)> = blocks
        .iter()
        .enumerate()
        .map(|(b, (n, _, cols))| (b, *n, first_support(cols)))
        .collect();
    keyed.sort_by(|x, y| y.1.cmp(&x.1).then(x.2.cmp(&y.2)));

    let mut basis = CMatrix::zeros(dim, dim);
    let mut sectors = Vec::with_capacity(blocks.len());
    let mut start = 0;
    for (id, &(b, _, _)) in keyed.iter().enumerate() {
        let (n, mult, cols) = &blocks[b];
        basis.columns_mut(start, cols.ncols()).copy_from(cols);
        sectors.push(Sector {
            id,
            irrep_dim: *n,
            multiplicity: *mult,
            start,
        });
        start += cols.ncols();
    }
    let decomp = KrylovDecomposition {
        basis_change: Operator::new(basis)?,
        selected: (0..sectors.len()).collect(),
        sectors,
    };

    let mult_sq: usize = decomp.sectors.iter().map(|s| s.multiplicity.pow(2)).sum();
    if mult_sq != commutant.dim() || start != dim {
        return Ok(None);
    }
    for h in generators {
        if decomp.verify_block_structure(h) >= 1e-8 || decomp.copy_disagreement(h) >= 1e-8 {
            return Ok(None);
        }
    }
    Ok(Some(decomp))
}

/// Hermitian part of `sum_{l=1..len} c_l W_l`, each word `W_l` a product of
/// `l` random real combinations of the generators.
fn random_algebra_element<R: Rng + ?Sized>(
    generators: &[Operator],
    word_length: usize,
    rng: &mut R,
) -> Operator {
    let dim = generators[0].dim();
    let mut acc = CMatrix::zeros(dim, dim);
    for len in 1..=word_length.max(1) {
        let mut word = CMatrix::identity(dim, dim);
        for _ in 0..len {
            let mut combo = CMatrix::zeros(dim, dim);
            for h in generators {
                let r: f64 = rng.sample(StandardNormal);
                combo += h.matrix() * C64::new(r, 0.0);
            }
            word = word * combo;
        }
        let norm = frobenius(&word);
        if norm > 0.0 {
            acc += word * (complex_normal(rng) / norm);
        }
    }
    Operator::hermitize(acc).expect("finite combination")
}

/// Ranges of consecutive ascending eigenvalues separated by less than the gap.
fn clusters(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > EIGEN_GAP * scale {
            out.push(start..k);
            start = k;
        }
    }
    out
}

fn first_support(cols: &CMatrix) -> usize {
    (0..cols.nrows())
        .find(|&i| cols.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-8)
        .unwrap_or(cols.nrows())
}

impl KrylovDecomposition {
    pub fn dim(&self) -> usize {
        self.basis_change.dim()
    }

    pub fn sector(&self, id: usize) -> Option<&Sector> {
        self.sectors.iter().find(|s| s.id == id)
    }

    /// `B^dag op B`.
    pub fn to_block_basis(&self, op: &CMatrix) -> CMatrix {
        let b = self.basis_change.matrix();
        b.adjoint() * op * b
    }

    /// Frobenius norm of every block between different sectors, in the block
    /// basis.
    pub fn verify_block_structure(&self, op: &Operator) -> f64 {
        if op.dim() != self.dim() {
            return f64::INFINITY;
        }
        let m = self.to_block_basis(op.matrix());
        let mut owner = vec![0usize; self.dim()];
        for (s, sec) in self.sectors.iter().enumerate() {
            for i in sec.range() {
                owner[i] = s;
            }
        }
        let mut mass = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if owner[i] != owner[j] {
                    mass += m[(i, j)].norm_sqr();
                }
            }
        }
        mass.sqrt()
    }

    /// Mass between different copies of one sector plus the deviation of
    /// each copy block from copy 0, summed over sectors.
    pub fn copy_disagreement(&self, op: &Operator) -> f64 {
        let m = self.to_block_basis(op.matrix());
        let mut total = 0.0;
        for s in &self.sectors {
            total += copy_residual(&m, s).powi(2);
        }
        total.sqrt()
    }

    /// One copy of the sector block of `op`.
    pub fn project_block(&self, op: &Operator, id: usize) -> Result<Operator> {
        let sector = self
            .sector(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sector {id}")))?;
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        let tol = 1e-8 * op.frobenius_norm().max(1.0);
        let leak = self.verify_block_structure(op);
        if leak >= tol {
            return Err(Error::BlockLeakage { residual: leak });
        }
        let m = self.to_block_basis(op.matrix());
        let spread = copy_residual(&m, sector);
        if spread >= tol {
            return Err(Error::BlockLeakage { residual: spread });
        }
        let n = sector.irrep_dim;
        let block = m.view((sector.start, sector.start), (n, n)).into_owned();
        let out = Operator::new(block)?;
        Ok(if op.is_hermitian() {
            Operator::hermitize(out.into_matrix())?
        } else {
            out
        })
    }

    /// Orthogonal projector onto the isotypic component of a sector.
    pub fn isotypic_projector(&self, id: usize) -> Option<CMatrix> {
        let s = self.sector(id)?;
        let cols = self.basis_change.matrix().columns(s.start, s.len());
        Some(&cols * cols.adjoint())
    }

    /// Sector holding at least `1 - tol` of the weight of `state`, if any.
    pub fn sector_of_state(&self, state: &CVector, tol: f64) -> Option<usize> {
        let coords = self.basis_change.matrix().adjoint() * state;
        let total = coords.norm_squared();
        self.sectors.iter().find_map(|s| {
            let w: f64 = s.range().map(|i| coords[i].norm_sqr()).sum();
            (w >= (1.0 - tol) * total).then_some(s.id)
        })
    }

    /// Decomposition of `system (x) ancilla` for an `n_a`-qubit ancilla
    /// appended after the system. Each irrep grows to `N_λ * 2^n_a`; within a
    /// copy the ancilla index runs fastest.
    pub fn with_ancilla(&self, n_a: usize) -> KrylovDecomposition {
        let na = 1usize << n_a;
        let dim = self.dim();
        let b = self.basis_change.matrix();
        let mut ext = CMatrix::zeros(dim * na, dim * na);
        let mut sectors = Vec::with_capacity(self.sectors.len());
        for s in &self.sectors {
            let start = s.start * na;
            let grown = Sector {
                id: s.id,
                irrep_dim: s.irrep_dim * na,
                multiplicity: s.multiplicity,
                start,
            };
            for c in 0..s.multiplicity {
                for k in 0..s.irrep_dim {
                    let col = b.column(s.column(c, k));
                    for a in 0..na {
                        let dst = grown.column(c, k * na + a);
                        for i in 0..dim {
                            ext[(i * na + a, dst)] = col[i];
                        }
                    }
                }
            }
            sectors.push(grown);
        }
        KrylovDecomposition {
            basis_change: Operator::new(ext).expect("finite"),
            sectors,
            selected: self.selected.clone(),
        }
    }

    pub fn export(&self) -> DecompositionExport {
        let m = self.basis_change.matrix();
        let n = self.dim();
        let mut basis_change = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                basis_change.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        DecompositionExport {
            dim: n,
            sectors: self
                .sectors
                .iter()
                .map(|s| SectorExport {
                    id: s.id,
                    irrep_dim: s.irrep_dim,
                    multiplicity: s.multiplicity,
                })
                .collect(),
            basis_change,
        }
    }
}

fn copy_residual(m: &CMatrix, s: &Sector) -> f64 {
    let n = s.irrep_dim;
    let reference = m.view((s.start, s.start), (n, n));
    let mut total = 0.0;
    for a in 0..s.multiplicity {
        for b in 0..s.multiplicity {
            let blk = m.view((s.column(a, 0), s.column(b, 0)), (n, n));
            if a == b {
                total += frobenius(&(blk - reference));
            } else {
                total += frobenius(&blk.into_owned());
            }
        }
    }
    total
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectorExport {
    pub id: usize,
    pub irrep_dim: usize,
    pub multiplicity: usize,
}

/// JSON form: `basis_change` is row-major `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionExport {
    pub dim: usize,
    pub sectors: Vec<SectorExport>,
    pub basis_change: Vec<[f64; 2]>,
}

/// Unitary on the system space acting as the cyclic shift `c -> c + shift`
/// of copy indices inside one sector and as the identity elsewhere. It lies
/// in the commutant.
pub fn multiplicity_shift(decomp: &KrylovDecomposition, id: usize, shift: usize) -> Option<CMatrix> {
    let s = decomp.sector(id)?;
    let n = decomp.dim();
    let mut perm = CMatrix::identity(n, n);
    for c in 0..s.multiplicity {
        let dst = (c + shift) % s.multiplicity;
        for k in 0..s.irrep_dim {
            perm[(s.column(c, k), s.column(c, k))] = C64::new(0.0, 0.0);
        }
        for k in 0..s.irrep_dim {
            perm[(s.column(dst, k), s.column(c, k))] = ONE;
        }
    }
    let b = decomp.basis_change.matrix();
    Some(b * perm * b.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli_x, pauli_z};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn shape(d: &KrylovDecomposition) -> Vec<(usize, usize)> {
        d.sectors.iter().map(|s| (s.irrep_dim, s.multiplicity)).collect()
    }

    #[test]
    fn commutant_of_identity_is_everything() {
        let c = commutant_basis(&[Operator::identity(4)], 1e-8).unwrap();
        assert_eq!(c.dim(), 16);
    }

    #[test]
    fn commutant_of_paulis_is_scalars() {
        let c = commutant_basis(&[pauli_x(), pauli_z()], 1e-8).unwrap();
        assert_eq!(c.dim(), 1);
    }

    #[test]
    fn commutant_rejects_mixed_dims() {
        let err = commutant_basis(&[pauli_z(), Operator::identity(4)], 1e-8);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pauli_z_gives_two_sectors() {
        let d = krylov_decomposition(&[pauli_z()], 1e-8, &mut rng()).unwrap();
        assert_eq!(shape(&d), vec![(1, 1), (1, 1)]);
    }

    #[test]
    fn irreducible_qubit() {
        let d = krylov_decomposition(&[pauli_x(), pauli_z()], 1e-8, &mut rng()).unwrap();
        assert_eq!(shape(&d), vec![(2, 1)]);
    }

    #[test]
    fn identity_generator_gives_one_sector_with_full_multiplicity() {
        let d = krylov_decomposition(&[Operator::identity(3)], 1e-8, &mut rng()).unwrap();
        assert_eq!(shape(&d), vec![(1, 3)]);
        let id = d.project_block(&Operator::identity(3), 0).unwrap();
        assert_eq!(id.dim(), 1);
    }

    #[test]
    fn identity_has_no_leakage() {
        let d = krylov_decomposition(&[pauli_z()], 1e-8, &mut rng()).unwrap();
        assert!(d.verify_block_structure(&Operator::identity(2)) < 1e-12);
        assert!(d.verify_block_structure(&pauli_x()) > 1e-2);
    }

    #[test]
    fn clusters_split_on_gap() {
        let r = clusters(&[0.0, 1e-9, 1.0, 2.0, 2.0]);
        assert_eq!(r, vec![0..2, 2..3, 3..5]);
    }

    #[test]
    fn ancilla_extension_keeps_unitarity() {
        let d = krylov_decomposition(&[pauli_z()], 1e-8, &mut rng()).unwrap();
        let e = d.with_ancilla(1);
        assert_eq!(shape(&e), vec![(2, 1), (2, 1)]);
        assert!(e.basis_change.unitarity_residual() < 1e-12);
        let z_sys = pauli_z().kron(&pauli_x());
        assert!(e.verify_block_structure(&z_sys) < 1e-12);
    }
}
