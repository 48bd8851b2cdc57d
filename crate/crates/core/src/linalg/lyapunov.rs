//! Continuous Lyapunov equation `A·X + X·Aᵀ + W = 0` by Bartels–Stewart on the
//! complex Schur factor of `A`.

use num_complex::Complex64;

use super::{ensure_finite, ensure_square, symmetrize, to_complex, LinalgError, RealMatrix, Result};

/// Solve `A·X + X·Aᵀ + W = 0` for Hurwitz `A` and symmetric `W`.
pub fn solve_lyapunov(a: &RealMatrix, w: &RealMatrix) -> Result<RealMatrix> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    ensure_finite(w)?;
    if w.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_lyapunov",
            detail: format!("A is {n}x{n}, W is {}x{}", w.nrows(), w.ncols()),
        });
    }
    let asym = (w - w.transpose()).norm();
    if asym > 1e-10 * w.norm().max(1.0) {
        return Err(LinalgError::NotSymmetric { what: "W", asym });
    }
    if n == 0 {
        return Ok(w.clone());
    }

    let (u, t) = to_complex(a).schur().unpack();
    let abscissa = (0..n).map(|i| t[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(LinalgError::NotHurwitz { abscissa });
    }

    // T·Y + Y·Tᴴ + U ᴴ W U = 0, solved from the bottom-right corner.
    let wt = u.adjoint() * to_complex(w) * &u;
    let mut y = super::ComplexMatrix::zeros(n, n);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut s = -wt[(i, j)];
            for k in (i + 1)..n {
                s -= t[(i, k)] * y[(k, j)];
            }
            for k in (j + 1)..n {
                s -= y[(i, k)] * t[(j, k)].conj();
            }
            let d: Complex64 = t[(i, i)] + t[(j, j)].conj();
            y[(i, j)] = s / d;
        }
    }
    let x = (&u * y * u.adjoint()).map(|z| z.re);
    Ok(symmetrize(&x))
}

/// `‖A·X + X·Aᵀ + W‖_F`.
pub fn lyapunov_residual(a: &RealMatrix, x: &RealMatrix, w: &RealMatrix) -> f64 {
    (a * x + x * a.transpose() + w).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_exp;

    #[test]
    fn scalar() {
        let x = solve_lyapunov(&RealMatrix::from_element(1, 1, -1.0), &RealMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let a = RealMatrix::from_row_slice(2, 2, &[-1.0, 3.0, -3.0, -1.0]);
        let x = solve_lyapunov(&a, &RealMatrix::zeros(2, 2)).unwrap();
        assert!(x.norm() < 1e-15);
    }

    #[test]
    fn matches_quadrature() {
        let a = RealMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -0.5, 0.3, 0.1, 0.0, -2.0]);
        let w = RealMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let x = solve_lyapunov(&a, &w).unwrap();
        assert!(lyapunov_residual(&a, &x, &w) < 1e-12);

        // Simpson's rule on ∫ e^{At} W e^{Aᵀt} dt over [0, 40].
        let h = 1e-3;
        let steps = 40_000;
        let step = matrix_exp(&a, h).unwrap();
        let mut e = RealMatrix::identity(3, 3);
        let mut acc = RealMatrix::zeros(3, 3);
        for k in 0..=steps {
            let f = &e * &w * e.transpose();
            let c = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += f * c;
            e = &step * e;
        }
        acc *= h / 3.0;
        assert!((acc - x).norm() < 1e-6);
    }

    #[test]
    fn unstable_is_rejected() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -1.0]);
        assert!(matches!(solve_lyapunov(&a, &RealMatrix::identity(2, 2)), Err(LinalgError::NotHurwitz { .. })));
    }
}
