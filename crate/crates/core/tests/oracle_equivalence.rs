use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbd_core::apply::{apply_h_full, ExecPolicy, Executor, ExplicitHamiltonian, ProductOperator};
use sbd_core::basis::{ExplicitBasis, ProductBasis, SelectedBasis};
use sbd_core::davidson::{davidson_solve, DavidsonOptions, LinearOperator};
use sbd_core::instance::random_integrals;
use sbd_core::oracle::{assemble_dense, assemble_dense_fock, dense_eigensolve, DEFAULT_CAP};

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn instances() -> Vec<(usize, u64)> {
    (0..20).map(|s| (4, s)).chain((0..10).map(|s| (5, 100 + s))).collect()
}

#[test]
fn davidson_ground_energy_matches_dense() {
    for (norb, seed) in instances() {
        let ints = random_integrals(norb, seed);
        let basis = ProductBasis::complete(norb, 2, 2).unwrap();
        let dense = assemble_dense(&SelectedBasis::Product(basis.clone()), &ints).unwrap();
        let exact = dense_eigensolve(&dense).unwrap().values[0];
        let op = ProductOperator::new(&basis, &ints, Executor::new(ExecPolicy::Parallel, 1).unwrap()).unwrap();
        let opts = DavidsonOptions { tol_residual: 1e-9, ..Default::default() };
        let res = davidson_solve(&op, op.diagonal(), None, &opts).unwrap();
        assert!(res.converged, "norb={norb} seed={seed}");
        assert!((res.energies[0] - exact).abs() <= 1e-8, "norb={norb} seed={seed}");
    }
}

#[test]
fn operator_matches_dense_in_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (norb, seed) in instances() {
        let ints = random_integrals(norb, seed);
        let basis = ProductBasis::complete(norb, 2, 2).unwrap();
        let explicit = ExplicitBasis::from_product(&basis);
        let m_prod = assemble_dense(&SelectedBasis::Product(basis.clone()), &ints).unwrap();
        let m_expl = assemble_dense(&SelectedBasis::Explicit(explicit.clone()), &ints).unwrap();
        for policy in [ExecPolicy::Parallel, ExecPolicy::Deterministic] {
            let prod = ProductOperator::new(&basis, &ints, Executor::new(policy, 1).unwrap()).unwrap();
            let expl = ExplicitHamiltonian::new(&explicit, &ints).unwrap();
            let exec = Executor::new(policy, 1).unwrap();
            for _ in 0..5 {
                let x: Vec<f64> = (0..basis.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut y = vec![0.0; x.len()];
                prod.apply(&x, &mut y);
                let want = m_prod.matvec(&x);
                let err: Vec<f64> = y.iter().zip(&want).map(|(a, b)| a - b).collect();
                assert!(inf_norm(&err) <= 1e-12 * inf_norm(&x));

                let y = apply_h_full(&expl, &exec, &x).unwrap();
                let want = m_expl.matvec(&x);
                let err: Vec<f64> = y.iter().zip(&want).map(|(a, b)| a - b).collect();
                assert!(inf_norm(&err) <= 1e-12 * inf_norm(&x));
            }
        }
    }
}

#[test]
fn slater_condon_matches_second_quantization() {
    for (norb, na, nb, seed) in [(4, 2, 2, 1), (5, 2, 3, 2), (5, 1, 2, 3), (6, 3, 1, 4)] {
        let mut ints = random_integrals(norb, seed);
        ints.set_e_core(0.75);
        let basis = SelectedBasis::Product(ProductBasis::complete(norb, na, nb).unwrap());
        let a = assemble_dense(&basis, &ints).unwrap();
        let b = assemble_dense_fock(&basis, &ints, DEFAULT_CAP).unwrap();
        let err = a.data.iter().zip(&b.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-13, "norb={norb}: {err}");
        assert!(a.is_symmetric());
    }
}

#[test]
fn selected_subset_matches_dense_submatrix() {
    // a product basis built from a strict subset of strings
    let ints = random_integrals(6, 11);
    let all = ProductBasis::complete(6, 2, 2).unwrap();
    let alpha: Vec<_> = all.alpha.strings().iter().copied().step_by(2).collect();
    let beta: Vec<_> = all.beta.strings().iter().copied().skip(3).collect();
    let basis = ProductBasis::new(6, 2, 2, alpha, beta).unwrap();
    let dense = assemble_dense(&SelectedBasis::Product(basis.clone()), &ints).unwrap();
    let op = ProductOperator::new(&basis, &ints, Executor::new(ExecPolicy::Deterministic, 1).unwrap()).unwrap();
    let x: Vec<f64> = (0..basis.dim()).map(|i| (i as f64 * 0.61).cos()).collect();
    let mut y = vec![0.0; x.len()];
    op.apply(&x, &mut y);
    let want = dense.matvec(&x);
    for (a, b) in y.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
}
