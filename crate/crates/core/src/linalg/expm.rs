//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Degree and scaling follow the backward-error thresholds for Padé orders
//! 3, 5, 7, 9 and 13.

use super::{ensure_finite, ensure_square, norm1, RealMatrix, Result};

const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree {m}"),
    }
}

/// `exp(A·t)`.
pub fn matrix_exp(a: &RealMatrix, t: f64) -> Result<RealMatrix> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if n == 0 {
        return Ok(RealMatrix::zeros(0, 0));
    }
    let at = a * t;
    let norm = norm1(&at);
    if norm == 0.0 {
        return Ok(RealMatrix::identity(n, n));
    }

    for &(m, theta) in &THETA[..4] {
        if norm <= theta {
            return pade(&at, m);
        }
    }

    let (m13, theta13) = THETA[4];
    let s = if norm > theta13 { (norm / theta13).log2().ceil() as i32 } else { 0 };
    let scaled = &at / 2f64.powi(s);
    let mut r = pade(&scaled, m13)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade(a: &RealMatrix, m: usize) -> Result<RealMatrix> {
    let n = a.nrows();
    let b = pade_coefficients(m);
    let ident = RealMatrix::identity(n, n);
    let a2 = a * a;

    let (u, v) = if m == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
        let u = a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
        let v_inner = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
        let v = v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
        (u, v)
    } else {
        // Even powers A^0, A^2, ..., A^{m-1}.
        let mut powers = vec![ident.clone(), a2.clone()];
        while powers.len() < m.div_ceil(2) {
            let next = powers.last().unwrap() * &a2;
            powers.push(next);
        }
        let mut u = RealMatrix::zeros(n, n);
        let mut v = RealMatrix::zeros(n, n);
        for (k, p) in powers.iter().enumerate() {
            u += p * b[2 * k + 1];
            v += p * b[2 * k];
        }
        (a * u, v)
    };

    let num = &v + &u;
    let den = &v - &u;
    den.lu()
        .solve(&num)
        .ok_or(super::LinalgError::Singular { context: "Padé denominator" })
}
