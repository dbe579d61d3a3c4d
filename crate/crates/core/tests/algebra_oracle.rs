mod common;

use common::{closure_dim, commutant_constraints, elimination_rank};
use fragqnn_core::algebra::{commutant_basis, krylov_decomposition, multiplicity_shift};
use fragqnn_core::linalg::{embed, frobenius, nullspace, pauli_x, random_hermitian, CMatrix, Operator};
use fragqnn_core::model::{build_a, build_hamiltonian, tl_generators, SystemSpec};
use fragqnn_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mats(g: &[Operator]) -> Vec<CMatrix> {
    g.iter().map(|o| o.matrix().clone()).collect()
}

#[test]
fn tl2_constraint_kernel_matches_elimination() {
    let g = tl_generators(2).unwrap();
    let constraints = commutant_constraints(&mats(&g));
    let oracle = 16 - elimination_rank(constraints.clone(), 1e-10);
    assert_eq!(nullspace(&constraints, 1e-8).ncols(), oracle);
    assert_eq!(commutant_basis(&g, 1e-8).unwrap().dim(), oracle);
    assert_eq!(oracle, 10);
}

#[test]
fn tl4_commutant_dimension_matches_elimination() {
    let g = tl_generators(4).unwrap();
    let oracle = 256 - elimination_rank(commutant_constraints(&mats(&g)), 1e-10);
    let c = commutant_basis(&g, 1e-8).unwrap();
    assert_eq!(c.dim(), oracle);
    assert_eq!(oracle, 35);
    for x in &c.elements {
        for h in &g {
            assert!(x.commutator(h).frobenius_norm() < 1e-8);
        }
    }
    let gram = CMatrix::from_fn(c.dim(), c.dim(), |i, j| {
        (c.elements[i].matrix().adjoint() * c.elements[j].matrix()).trace()
    });
    assert!(frobenius(&(gram - CMatrix::identity(c.dim(), c.dim()))) < 1e-10);
}

#[test]
fn sectors_match_closure_and_commutant_oracles() {
    for l in 2..=4 {
        let g = tl_generators(l).unwrap();
        let n = 1 << l;
        let d = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(l as u64)).unwrap();
        let sum: usize = d.sectors.iter().map(|s| s.irrep_dim * s.multiplicity).sum();
        assert_eq!(sum, n);
        let alg: usize = d.sectors.iter().map(|s| s.irrep_dim.pow(2)).sum();
        assert_eq!(alg, closure_dim(&mats(&g)), "L={l}");
        let com: usize = d.sectors.iter().map(|s| s.multiplicity.pow(2)).sum();
        let oracle = n * n - elimination_rank(commutant_constraints(&mats(&g)), 1e-10);
        assert_eq!(com, oracle, "L={l}");
        assert!(d.basis_change.unitarity_residual() < 1e-10);
        for h in &g {
            assert!(d.verify_block_structure(h) < 1e-8);
        }
    }
}

#[test]
fn tl4_sector_shapes() {
    let g = tl_generators(4).unwrap();
    let d = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let shape: Vec<_> = d.sectors.iter().map(|s| (s.irrep_dim, s.multiplicity)).collect();
    assert_eq!(shape, vec![(3, 3), (2, 1), (1, 5)]);
    // The center of the commutant has one dimension per sector.
    assert_eq!(d.sectors.len(), 3);
}

#[test]
fn bicommutant_has_algebra_dimension() {
    let g = tl_generators(3).unwrap();
    let c = commutant_basis(&g, 1e-8).unwrap();
    let herm: Vec<Operator> = c
        .elements
        .iter()
        .flat_map(|x| {
            let m = x.matrix();
            let a = Operator::hermitize(m.clone()).unwrap();
            let b = Operator::hermitize(m * fragqnn_core::linalg::I).unwrap();
            [a, b]
        })
        .collect();
    let cc = commutant_basis(&herm, 1e-8).unwrap();
    assert_eq!(cc.dim(), closure_dim(&mats(&g)));
}

#[test]
fn copies_agree_for_generators() {
    let g = tl_generators(4).unwrap();
    let d = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for h in &g {
        for s in &d.sectors {
            let blk = d.project_block(h, s.id).unwrap();
            assert_eq!(blk.dim(), s.irrep_dim);
        }
        assert!(d.copy_disagreement(h) < 1e-8);
    }
    let id = d.project_block(&Operator::identity(16), 0).unwrap();
    assert!(frobenius(&(id.matrix() - CMatrix::identity(3, 3))) < 1e-10);
}

#[test]
fn operator_outside_algebra_is_flagged() {
    let g = tl_generators(4).unwrap();
    let d = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    // A multiplicity shift commutes with the algebra but mixes copies.
    let shift = Operator::new(multiplicity_shift(&d, 0, 1).unwrap()).unwrap();
    assert!(d.verify_block_structure(&shift) < 1e-8);
    assert!(matches!(d.project_block(&shift, 0), Err(Error::BlockLeakage { .. })));
    let x = embed(&pauli_x(), 0, 4).unwrap();
    assert!(matches!(d.project_block(&x, 0), Err(Error::BlockLeakage { .. })));
    let r = random_hermitian(16, &mut ChaCha8Rng::seed_from_u64(8));
    assert!(d.verify_block_structure(&r) > 1e-3);
}

#[test]
fn hamiltonian_and_a_respect_extended_blocks() {
    for l in 2..=4 {
        let g = tl_generators(l).unwrap();
        let d = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for n_a in 1..=2 {
            let spec = SystemSpec::temperley_lieb(l, n_a, 3).unwrap();
            let ext = d.with_ancilla(n_a);
            let h = build_hamiltonian(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            let a = build_a(&spec).unwrap();
            assert!(ext.verify_block_structure(&h) < 1e-8);
            assert!(ext.verify_block_structure(&a) < 1e-8);
            assert!(ext.copy_disagreement(&h) < 1e-8);
            let c = commutant_basis(&g, 1e-8).unwrap();
            for x in &c.elements {
                let lifted = x.kron(&Operator::identity(1 << n_a));
                assert!(h.commutator(&lifted).frobenius_norm() < 1e-8);
            }
        }
    }
}

#[test]
fn decomposition_is_deterministic() {
    let g = tl_generators(3).unwrap();
    let a = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = krylov_decomposition(&g, 1e-8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a.basis_change, b.basis_change);
    assert_eq!(a.sectors, b.sectors);
}

#[test]
fn oversized_dimension_is_rejected() {
    let g = vec![Operator::identity(64)];
    assert!(matches!(commutant_basis(&g, 1e-8), Err(Error::DimensionTooLarge { .. })));
}
