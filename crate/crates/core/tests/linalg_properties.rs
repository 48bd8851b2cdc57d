use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wadc_core::linalg::*;
use wadc_core::synth::random_hurwitz;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(seed: u64, rows: usize, cols: usize) -> RealMatrix {
    let mut r = rng(seed);
    RealMatrix::from_fn(rows, cols, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exp_log_round_trip(seed in any::<u64>(), n in 1usize..12, tau_idx in 0usize..3) {
        let tau = [0.02, 0.1, 0.5][tau_idx];
        let a = random_hurwitz(&mut rng(seed), n);
        let back = matrix_log_principal(&matrix_exp(&a, tau).unwrap()).unwrap() / tau;
        prop_assert!(relative_frobenius_error(&back, &a) <= 1e-8);
    }

    #[test]
    fn exp_inverse_property(seed in any::<u64>(), n in 1usize..8) {
        let a = random_matrix(seed, n, n) * 2.0;
        let prod = matrix_exp(&a, 1.0).unwrap() * matrix_exp(&a, -1.0).unwrap();
        prop_assert!((prod - RealMatrix::identity(n, n)).amax() <= 1e-10);
    }

    #[test]
    fn schur_reconstructs_and_is_orthogonal(seed in any::<u64>(), n in 1usize..14, ord in 0usize..4) {
        let ordering = [
            SchurOrdering::Unordered,
            SchurOrdering::AscendingDamping,
            SchurOrdering::DescendingDamping,
            SchurOrdering::AscendingRealPart,
        ][ord];
        let a = random_matrix(seed, n, n);
        let f = real_schur(&a, ordering).unwrap();
        prop_assert!((f.reconstruct() - &a).norm() <= 1e-9 * a.norm().max(1.0));
        prop_assert!(f.orthogonality_defect() <= 1e-10);
        let mut covered = 0;
        for blk in &f.blocks {
            prop_assert_eq!(blk.start, covered);
            covered += blk.size;
            if blk.size == 2 {
                prop_assert!(blk.eigenvalue.im > 0.0);
            }
            if blk.start > 0 {
                prop_assert!(f.t[(blk.start, blk.start - 1)] == 0.0);
            }
        }
        prop_assert_eq!(covered, n);
        if ordering == SchurOrdering::AscendingDamping {
            let z: Vec<f64> = f.blocks.iter().map(|b| damping_ratio(b.eigenvalue)).collect();
            prop_assert!(z.windows(2).all(|w| w[0] <= w[1] + 1e-9));
        }
    }

    #[test]
    fn schur_blocks_carry_the_spectrum(seed in any::<u64>()) {
        let a = random_matrix(seed, 8, 8);
        let f = real_schur(&a, SchurOrdering::AscendingDamping).unwrap();
        let reference = a.clone().complex_eigenvalues();
        for blk in &f.blocks {
            let d = reference.iter().map(|l| (l - blk.eigenvalue).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 1e-9 * a.norm().max(1.0));
        }
    }

    #[test]
    fn lyapunov_is_symmetric_psd_and_solves(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng(seed);
        let a = random_hurwitz(&mut r, n);
        let s = random_matrix(seed ^ 1, n, n);
        let w = &s * s.transpose();
        let x = solve_lyapunov(&a, &w).unwrap();
        prop_assert!(lyapunov_residual(&a, &x, &w) <= 1e-8);
        prop_assert!((&x - x.transpose()).amax() <= 1e-10 * x.amax().max(1.0));
        let min_eig = x.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-10 * x.amax().max(1.0));
    }

    #[test]
    fn care_solution_is_symmetric_and_stabilizing(seed in any::<u64>(), n in 1usize..9, m in 1usize..4) {
        let a = random_matrix(seed, n, n) * 1.5;
        let b = random_matrix(seed ^ 2, n, m);
        let c = random_matrix(seed ^ 3, n, n);
        let q = &c * c.transpose() + RealMatrix::identity(n, n) * 0.1;
        let r = RealMatrix::identity(m, m);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        prop_assert!((&p - p.transpose()).norm() <= 1e-10 * p.norm().max(1.0));
        // Residual relative to the size of the terms it balances.
        let terms = q.norm() + 2.0 * a.norm() * p.norm() + p.norm().powi(2) * (&b * b.transpose()).norm();
        prop_assert!(care_residual(&a, &b, &q, &r, &p) <= 1e-8 * terms);
        let gain = b.transpose() * &p;
        prop_assert!(spectral_abscissa(&(&a - &b * gain)).unwrap() < 0.0);
    }

    #[test]
    fn care_gain_is_locally_optimal(seed in any::<u64>(), n in 2usize..7) {
        // J(Γ) = trace(P_Γ) with (A − BΓ)ᵀ P_Γ + P_Γ (A − BΓ) + Q + ΓᵀRΓ = 0,
        // the expected cost over unit-covariance initial states.
        let a = random_matrix(seed, n, n);
        let b = random_matrix(seed ^ 4, n, 2);
        let q = RealMatrix::identity(n, n);
        let r = RealMatrix::identity(2, 2);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        let gamma = b.transpose() * &p;
        let cost = |g: &RealMatrix| -> Option<f64> {
            let acl = &a - &b * g;
            let w = &q + g.transpose() * &r * g;
            solve_lyapunov(&acl.transpose(), &w).ok().map(|pg| pg.trace())
        };
        let j0 = cost(&gamma).unwrap();
        prop_assert!((j0 - p.trace()).abs() <= 1e-7 * j0.abs().max(1.0));
        for k in 0..6u64 {
            let mut d = random_matrix(seed ^ (100 + k), 2, n);
            d *= 1e-4 / d.norm();
            let j = cost(&(&gamma + d)).unwrap();
            prop_assert!(j >= j0 - 1e-9 * j0.abs().max(1.0));
        }
    }

    #[test]
    fn genperm_pinv_meets_moore_penrose(seed in any::<u64>(), rows in 1usize..5, extra in 0usize..3) {
        let cols = rows + extra;
        let mut r = rng(seed);
        let mut p = RealMatrix::zeros(rows, cols);
        let mut order: Vec<usize> = (0..cols).collect();
        for i in 0..rows {
            let j = rand::Rng::random_range(&mut r, i..cols);
            order.swap(i, j);
            let v: f64 = rand::Rng::random_range(&mut r, 0.1..3.0);
            p[(i, order[i])] = if rand::Rng::random_bool(&mut r, 0.5) { v } else { -v };
        }
        let pi = genperm_pinv(&p).unwrap();
        let tol = 1e-12;
        prop_assert!((&p * &pi * &p - &p).amax() <= tol * 10.0);
        prop_assert!((&pi * &p * &pi - &pi).amax() <= tol * 100.0);
        let pp = &p * &pi;
        let ip = &pi * &p;
        prop_assert!((&pp - pp.transpose()).amax() <= tol);
        prop_assert!((&ip - ip.transpose()).amax() <= tol);
    }
}

#[test]
fn genperm_two_by_four_example() {
    let p = RealMatrix::from_row_slice(2, 4, &[0.0, 0.0, -2.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
    let pi = genperm_pinv(&p).unwrap();
    let expected = RealMatrix::from_row_slice(4, 2, &[0.0, 2.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0]);
    assert!((pi - expected).amax() < 1e-15);
}

#[test]
fn log_of_diagonal_exponentials() {
    let m = RealMatrix::from_diagonal(&DVector::from_vec(vec![1f64.exp(), 2f64.exp()]));
    let l = matrix_log_principal(&m).unwrap();
    assert!((l - RealMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))).amax() < 1e-13);
}
