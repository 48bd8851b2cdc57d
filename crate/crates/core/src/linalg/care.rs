//! Continuous algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
//!
//! The stabilizing solution is read off the stable invariant subspace of the
//! Hamiltonian, found with an ordered real Schur form. A few Kleinman–Newton
//! steps optionally polish the result.

use super::{
    ensure_finite, ensure_square, real_schur, solve_lyapunov, spectral_abscissa, symmetrize, LinalgError, RealMatrix,
    Result, SchurOrdering,
};

const NEWTON_STEPS: usize = 4;

/// Stabilizing solution of the CARE, polished by Newton refinement.
pub fn solve_care(a: &RealMatrix, b: &RealMatrix, q: &RealMatrix, r: &RealMatrix) -> Result<RealMatrix> {
    solve_care_with(a, b, q, r, true)
}

/// As [`solve_care`], with the Newton polish switchable.
pub fn solve_care_with(
    a: &RealMatrix,
    b: &RealMatrix,
    q: &RealMatrix,
    r: &RealMatrix,
    polish: bool,
) -> Result<RealMatrix> {
    let n = ensure_square(a)?;
    let m = b.ncols();
    for x in [a, b, q, r] {
        ensure_finite(x)?;
    }
    if b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_care",
            detail: format!(
                "A {n}x{n}, B {}x{}, Q {}x{}, R {}x{}",
                b.nrows(),
                b.ncols(),
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols()
            ),
        });
    }
    for (what, x) in [("Q", q), ("R", r)] {
        let asym = (x - x.transpose()).norm();
        if asym > 1e-10 * x.norm().max(1.0) {
            return Err(LinalgError::NotSymmetric { what, asym });
        }
    }
    let chol = r.clone().cholesky().ok_or(LinalgError::NotPositiveDefinite { what: "R" })?;
    let g = b * chol.solve(&b.transpose());

    let mut h = RealMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let schur = real_schur(&h, SchurOrdering::AscendingRealPart)?;
    let scale = h.norm().max(1.0);
    let mut count = 0;
    for blk in &schur.blocks {
        if count >= n {
            break;
        }
        if blk.eigenvalue.re >= -1e-10 * scale {
            return Err(LinalgError::NoStabilizingSolution {
                reason: format!(
                    "Hamiltonian eigenvalue {:.4e}{:+.4e}i on or near the imaginary axis (uncontrollable weighted mode)",
                    blk.eigenvalue.re, blk.eigenvalue.im
                ),
            });
        }
        count += blk.size;
    }

    let u1 = schur.q.view((0, 0), (n, n)).into_owned();
    let u2 = schur.q.view((n, 0), (n, n)).into_owned();
    let pt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| LinalgError::NoStabilizingSolution { reason: "stable subspace basis U1 is singular".into() })?;
    let mut p = symmetrize(&pt.transpose());

    if polish {
        let mut best = care_residual(a, b, q, r, &p);
        for _ in 0..NEWTON_STEPS {
            let k = chol.solve(&(b.transpose() * &p));
            let ak = a - b * &k;
            let rhs = q + k.transpose() * r * &k;
            let Ok(next) = solve_lyapunov(&ak.transpose(), &symmetrize(&rhs)) else { break };
            let res = care_residual(a, b, q, r, &next);
            if !(res < best) {
                break;
            }
            best = res;
            p = next;
        }
    }

    let k = chol.solve(&(b.transpose() * &p));
    let abscissa = spectral_abscissa(&(a - b * k))?;
    if abscissa >= 0.0 {
        return Err(LinalgError::NoStabilizingSolution {
            reason: format!("closed loop spectral abscissa {abscissa:.4e}"),
        });
    }
    Ok(p)
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn care_residual(a: &RealMatrix, b: &RealMatrix, q: &RealMatrix, r: &RealMatrix, p: &RealMatrix) -> f64 {
    let rinv_bt = r.clone().lu().solve(&b.transpose()).unwrap_or_else(|| RealMatrix::zeros(b.ncols(), b.nrows()));
    (a.transpose() * p + p * a - p * b * rinv_bt * p + q).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_integrator() {
        let one = RealMatrix::from_element(1, 1, 1.0);
        let p = solve_care(&RealMatrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_on_hurwitz_gives_zero() {
        let a = RealMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let b = RealMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let p = solve_care(&a, &b, &RealMatrix::zeros(2, 2), &RealMatrix::identity(1, 1)).unwrap();
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn double_integrator_residual_and_stability() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = RealMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = RealMatrix::identity(2, 2);
        let r = RealMatrix::identity(1, 1);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        // Closed form: P = [[√3, 1], [1, √3]].
        let s3 = 3f64.sqrt();
        let expected = RealMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]);
        assert!((p.clone() - expected).norm() < 1e-12);
        assert!(care_residual(&a, &b, &q, &r, &p) < 1e-12);
    }

    #[test]
    fn unstabilizable_is_rejected() {
        let a = RealMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = RealMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let res = solve_care(&a, &b, &RealMatrix::identity(2, 2), &RealMatrix::identity(1, 1));
        assert!(matches!(res, Err(LinalgError::NoStabilizingSolution { .. })));
    }

    #[test]
    fn indefinite_r_is_rejected() {
        let one = RealMatrix::from_element(1, 1, 1.0);
        let res = solve_care(&one, &one, &one, &RealMatrix::from_element(1, 1, -1.0));
        assert!(matches!(res, Err(LinalgError::NotPositiveDefinite { .. })));
    }
}
