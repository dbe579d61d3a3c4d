#![allow(dead_code)]

use fragqnn_core::linalg::{CMatrix, CVector, C64};
use rand::Rng;
use rand_distr::StandardNormal;

/// Rank of a complex matrix by Gaussian elimination with partial pivoting.
pub fn elimination_rank(mut m: CMatrix, tol: f64) -> usize {
    let (rows, cols) = m.shape();
    let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1.0);
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (piv, best) = (rank..rows)
            .map(|r| (r, m[(r, c)].norm()))
            .fold((rank, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if best <= tol * scale {
            continue;
        }
        m.swap_rows(rank, piv);
        let p = m[(rank, c)];
        for r in rank + 1..rows {
            let f = m[(r, c)] / p;
            if f.norm() == 0.0 {
                continue;
            }
            for k in c..cols {
                let sub = m[(rank, k)] * f;
                m[(r, k)] -= sub;
            }
        }
        rank += 1;
    }
    rank
}

/// Entrywise constraint rows of `[X, h] = 0` for every generator, built
/// directly from index arithmetic.
pub fn commutant_constraints(gens: &[CMatrix]) -> CMatrix {
    let n = gens[0].nrows();
    let mut out = CMatrix::zeros(gens.len() * n * n, n * n);
    for (g, h) in gens.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let row = g * n * n + i * n + j;
                // (XH - HX)_{ij} = sum_k X_ik H_kj - H_ik X_kj, X_ab at a*n+b
                for k in 0..n {
                    out[(row, i * n + k)] += h[(k, j)];
                    out[(row, k * n + j)] -= h[(i, k)];
                }
            }
        }
    }
    out
}

/// Dimension of the unital algebra generated by `gens`, by closing the span
/// under multiplication.
pub fn closure_dim(gens: &[CMatrix]) -> usize {
    let n = gens[0].nrows();
    let mut basis: Vec<CVector> = Vec::new();
    let mut mats: Vec<CMatrix> = Vec::new();
    let push = |m: CMatrix, basis: &mut Vec<CVector>, mats: &mut Vec<CMatrix>| -> bool {
        let mut v = CVector::from_column_slice(m.as_slice());
        for b in basis.iter() {
            let c = b.dotc(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-9 {
            basis.push(v / C64::new(norm, 0.0));
            mats.push(m);
            true
        } else {
            false
        }
    };
    push(CMatrix::identity(n, n), &mut basis, &mut mats);
    for g in gens {
        push(g.clone(), &mut basis, &mut mats);
    }
    let mut frontier = 0;
    while frontier < mats.len() {
        let m = mats[frontier].clone();
        for g in gens {
            push(&m * g, &mut basis, &mut mats);
        }
        frontier += 1;
    }
    basis.len()
}

/// `exp(i t H)` by Taylor series with scaling and squaring.
pub fn taylor_exp_i(h: &CMatrix, t: f64) -> CMatrix {
    let n = h.nrows();
    let x = h * C64::new(0.0, t);
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let y = &x / C64::new(2f64.powi(squarings), 0.0);
    let mut term = CMatrix::identity(n, n);
    let mut sum = CMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &y / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn random_state<R: Rng>(dim: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let n = v.norm();
    v / C64::new(n, 0.0)
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
