//! Principal matrix logarithm by inverse scaling and squaring on a triangular
//! Schur factor.
//!
//! The input is reduced to complex upper-triangular form, square roots are
//! taken (Björck–Hammarling recurrence) until the factor is close to the
//! identity, and `log(I + X)` is evaluated with the Gauss–Legendre partial
//! fraction form of the diagonal Padé approximant.

use num_complex::Complex64;

use super::{ensure_finite, ensure_square, to_complex, ComplexMatrix, LinalgError, RealMatrix, Result};

const PADE_DEGREE: usize = 10;
const SQRT_THRESHOLD: f64 = 0.25;
const MAX_SQRTS: usize = 60;

/// Principal logarithm `L` with `exp(L) = M`.
pub fn matrix_log_principal(m: &RealMatrix) -> Result<RealMatrix> {
    let n = ensure_square(m)?;
    ensure_finite(m)?;
    if n == 0 {
        return Ok(m.clone());
    }

    let (u, t0) = to_complex(m).schur().unpack();
    let scale = m.amax();
    for i in 0..n {
        let d = t0[(i, i)];
        if d.norm() <= 1e3 * f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            return Err(LinalgError::Singular { context: "matrix logarithm argument" });
        }
        if d.re < 0.0 && d.im.abs() <= 1e3 * f64::EPSILON * d.norm() {
            return Err(LinalgError::NegativeRealEigenvalue { re: d.re, im: d.im });
        }
    }

    let mut t = t0.clone();
    let ident = ComplexMatrix::identity(n, n);
    let mut s = 0;
    while norm1_c(&(&t - &ident)) > SQRT_THRESHOLD {
        if s == MAX_SQRTS {
            return Err(LinalgError::Singular { context: "square-root iteration stalled" });
        }
        t = sqrt_upper_triangular(&t);
        s += 1;
    }

    let x = &t - &ident;
    let (nodes, weights) = gauss_legendre_unit(PADE_DEGREE);
    let mut log_t = ComplexMatrix::zeros(n, n);
    for (&node, &w) in nodes.iter().zip(&weights) {
        // (I + node·X)⁻¹·X by back substitution.
        let lhs = &ident + &x * Complex64::new(node, 0.0);
        let y = solve_upper_triangular(&lhs, &x);
        log_t += y * Complex64::new(w, 0.0);
    }
    log_t *= Complex64::new(2f64.powi(s as i32), 0.0);

    // The diagonal is known exactly.
    for i in 0..n {
        log_t[(i, i)] = t0[(i, i)].ln();
    }

    let l = &u * log_t * u.adjoint();
    Ok(l.map(|z| z.re))
}

fn norm1_c(a: &ComplexMatrix) -> f64 {
    a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Principal square root of an upper-triangular matrix.
pub(crate) fn sqrt_upper_triangular(t: &ComplexMatrix) -> ComplexMatrix {
    let n = t.nrows();
    let mut r = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Solve `U·Y = B` for upper-triangular `U`.
fn solve_upper_triangular(u: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = u.nrows();
    let mut y = b.clone();
    for col in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = y[(i, col)];
            for k in (i + 1)..n {
                s -= u[(i, k)] * y[(k, col)];
            }
            y[(i, col)] = s / u[(i, i)];
        }
    }
    y
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (x + 1.0));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}
