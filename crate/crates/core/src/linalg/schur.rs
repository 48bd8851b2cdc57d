//! Real Schur decomposition with standardized 2×2 blocks and eigenvalue
//! reordering.
//!
//! The Hessenberg QR iteration itself comes from `nalgebra`; this module
//! normalizes its output (every 2×2 diagonal block carries a complex-conjugate
//! pair and has equal diagonal entries) and reorders diagonal blocks by
//! adjacent swaps, each swap computed from a small Sylvester equation and an
//! orthogonal QR factor.

use nalgebra::linalg::Schur;
use num_complex::Complex64;

use super::{ensure_finite, ensure_square, LinalgError, RealMatrix, Result};

/// One diagonal block of the quasi-triangular factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurBlock {
    pub start: usize,
    /// 1 for a real eigenvalue, 2 for a complex-conjugate pair.
    pub size: usize,
    /// The eigenvalue carried by the block; for a pair, the member with
    /// positive imaginary part.
    pub eigenvalue: Complex64,
}

/// `A = Q·T·Qᵀ` with `Q` orthogonal and `T` quasi-upper-triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurForm {
    pub q: RealMatrix,
    pub t: RealMatrix,
    pub blocks: Vec<SchurBlock>,
}

impl SchurForm {
    pub fn reconstruct(&self) -> RealMatrix {
        &self.q * &self.t * self.q.transpose()
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.q.nrows();
        (self.q.transpose() * &self.q - RealMatrix::identity(n, n)).norm()
    }
}

/// Sort key applied to diagonal blocks. Ties are broken by ascending
/// frequency (`|Im λ|`) and then by position in the unordered factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchurOrdering {
    /// Whatever order the QR iteration produced.
    #[default]
    Unordered,
    AscendingDamping,
    /// Least-damped modes occupy the trailing coordinates.
    DescendingDamping,
    /// Most stable eigenvalues first (stable invariant subspace leading).
    AscendingRealPart,
}

/// Damping ratio `−Re λ / |λ|`; a zero eigenvalue is reported as 1.
pub fn damping_ratio(lambda: Complex64) -> f64 {
    let m = lambda.norm();
    if m == 0.0 {
        1.0
    } else {
        -lambda.re / m
    }
}

pub fn real_schur(a: &RealMatrix, ordering: SchurOrdering) -> Result<SchurForm> {
    match ordering {
        SchurOrdering::Unordered => unordered_schur(a),
        SchurOrdering::AscendingDamping => real_schur_by_key(a, &damping_ratio),
        SchurOrdering::DescendingDamping => real_schur_by_key(a, &|l| -damping_ratio(l)),
        SchurOrdering::AscendingRealPart => real_schur_by_key(a, &|l: Complex64| l.re),
    }
}

/// Real Schur form whose diagonal blocks appear in ascending order of
/// `key(eigenvalue)`.
pub fn real_schur_by_key(a: &RealMatrix, key: &dyn Fn(Complex64) -> f64) -> Result<SchurForm> {
    let mut form = unordered_schur(a)?;
    let mut order: Vec<(usize, usize, Complex64)> = form
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.size, b.eigenvalue))
        .collect();

    let precedes = |r: &(usize, usize, Complex64), l: &(usize, usize, Complex64)| -> bool {
        let (kr, kl) = (key(r.2), key(l.2));
        let tol = 1e-9 * kr.abs().max(kl.abs()).max(1.0);
        if kr < kl - tol {
            return true;
        }
        if kr > kl + tol {
            return false;
        }
        let (fr, fl) = (r.2.im.abs(), l.2.im.abs());
        let ftol = 1e-9 * fr.max(fl).max(1.0);
        if fr < fl - ftol {
            return true;
        }
        if fr > fl + ftol {
            return false;
        }
        r.0 < l.0
    };

    loop {
        let mut swapped = false;
        let mut pos = 0;
        for i in 0..order.len().saturating_sub(1) {
            if precedes(&order[i + 1], &order[i]) {
                let (n1, n2) = (order[i].1, order[i + 1].1);
                swap_blocks(&mut form.t, &mut form.q, pos, n1, n2)?;
                order.swap(i, i + 1);
                pos += n2;
                swapped = true;
            } else {
                pos += order[i].1;
            }
        }
        if !swapped {
            break;
        }
    }
    clean_below(&mut form.t);
    form.blocks = detect_blocks(&form.t);
    Ok(form)
}

/// All eigenvalues, conjugate pairs listed as two entries.
pub fn eigenvalues(a: &RealMatrix) -> Result<Vec<Complex64>> {
    let form = unordered_schur(a)?;
    let mut out = Vec::with_capacity(a.nrows());
    for b in &form.blocks {
        out.push(b.eigenvalue);
        if b.size == 2 {
            out.push(b.eigenvalue.conj());
        }
    }
    Ok(out)
}

fn unordered_schur(a: &RealMatrix) -> Result<SchurForm> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if n == 0 {
        return Ok(SchurForm { q: a.clone(), t: a.clone(), blocks: vec![] });
    }
    let (mut q, mut t) = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(LinalgError::SchurNoConvergence)?
        .unpack();

    clean_below(&mut t);
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] != 0.0 {
            standardize_block(&mut t, &mut q, i);
            i += if t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        } else {
            i += 1;
        }
    }
    let blocks = detect_blocks(&t);
    Ok(SchurForm { q, t, blocks })
}

/// Zero everything below the first subdiagonal and negligible subdiagonal
/// entries.
fn clean_below(t: &mut RealMatrix) {
    let n = t.nrows();
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
    for i in 0..n.saturating_sub(1) {
        let s = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        let scale = if s == 0.0 { t.amax() } else { s };
        if t[(i + 1, i)].abs() <= f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
}

fn detect_blocks(t: &RealMatrix) -> Vec<SchurBlock> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let re = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            let im = (-disc).max(0.0).sqrt();
            blocks.push(SchurBlock { start: i, size: 2, eigenvalue: Complex64::new(re, im) });
            i += 2;
        } else {
            blocks.push(SchurBlock { start: i, size: 1, eigenvalue: Complex64::new(t[(i, i)], 0.0) });
            i += 1;
        }
    }
    blocks
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Standardization of a real 2×2 block (LAPACK `dlanv2`). Returns the new
/// block entries and the rotation `(cs, sn)` with
/// `old = [cs −sn; sn cs] · new · [cs sn; −sn cs]`.
fn lanv2(mut a: f64, mut b: f64, mut c: f64, mut d: f64) -> ([f64; 4], f64, f64) {
    let eps = f64::EPSILON;
    let (mut cs, mut sn);
    if c == 0.0 {
        cs = 1.0;
        sn = 0.0;
    } else if b == 0.0 {
        cs = 0.0;
        sn = 1.0;
        std::mem::swap(&mut a, &mut d);
        b = -c;
        c = 0.0;
    } else if (a - d) == 0.0 && sign(1.0, b) != sign(1.0, c) {
        cs = 1.0;
        sn = 0.0;
    } else {
        let temp = a - d;
        let mut p = 0.5 * temp;
        let bcmax = b.abs().max(c.abs());
        let bcmis = b.abs().min(c.abs()) * sign(1.0, b) * sign(1.0, c);
        let scale = p.abs().max(bcmax);
        let mut z = (p / scale) * p + (bcmax / scale) * bcmis;
        if z >= 4.0 * eps {
            // Real eigenvalues: reduce to upper triangular.
            z = p + sign(scale.sqrt() * z.sqrt(), p);
            a = d + z;
            d -= (bcmax / z) * bcmis;
            let tau = c.hypot(z);
            cs = z / tau;
            sn = c / tau;
            b -= c;
            c = 0.0;
        } else {
            // Complex or nearly equal real eigenvalues: equalize the diagonal.
            let sigma = b + c;
            let tau = sigma.hypot(temp);
            cs = (0.5 * (1.0 + sigma.abs() / tau)).sqrt();
            sn = -(p / (tau * cs)) * sign(1.0, sigma);
            let aa = a * cs + b * sn;
            let bb = -a * sn + b * cs;
            let cc = c * cs + d * sn;
            let dd = -c * sn + d * cs;
            a = aa * cs + cc * sn;
            b = bb * cs + dd * sn;
            c = -aa * sn + cc * cs;
            d = -bb * sn + dd * cs;
            let temp = 0.5 * (a + d);
            a = temp;
            d = temp;
            if c != 0.0 {
                if b != 0.0 {
                    if sign(1.0, b) == sign(1.0, c) {
                        let sab = b.abs().sqrt();
                        let sac = c.abs().sqrt();
                        p = sign(sab * sac, c);
                        let tau = 1.0 / (b + c).abs().sqrt();
                        a = temp + p;
                        d = temp - p;
                        b -= c;
                        c = 0.0;
                        let cs1 = sab * tau;
                        let sn1 = sac * tau;
                        let t2 = cs * cs1 - sn * sn1;
                        sn = cs * sn1 + sn * cs1;
                        cs = t2;
                    }
                } else {
                    b = -c;
                    c = 0.0;
                    let t2 = cs;
                    cs = -sn;
                    sn = t2;
                }
            }
        }
    }
    ([a, b, c, d], cs, sn)
}

fn standardize_block(t: &mut RealMatrix, q: &mut RealMatrix, k: usize) {
    let n = t.nrows();
    let ([a, b, c, d], cs, sn) = lanv2(t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    for j in 0..n {
        let (r1, r2) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = cs * r1 + sn * r2;
        t[(k + 1, j)] = -sn * r1 + cs * r2;
    }
    for i in 0..n {
        let (c1, c2) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = c1 * cs + c2 * sn;
        t[(i, k + 1)] = -c1 * sn + c2 * cs;
        let (q1, q2) = (q[(i, k)], q[(i, k + 1)]);
        q[(i, k)] = q1 * cs + q2 * sn;
        q[(i, k + 1)] = -q1 * sn + q2 * cs;
    }
    t[(k, k)] = a;
    t[(k, k + 1)] = b;
    t[(k + 1, k)] = c;
    t[(k + 1, k + 1)] = d;
}

/// Swap the adjacent diagonal blocks of sizes `n1` (at `j1`) and `n2`
/// (at `j1 + n1`).
fn swap_blocks(t: &mut RealMatrix, q: &mut RealMatrix, j1: usize, n1: usize, n2: usize) -> Result<()> {
    let n = n1 + n2;
    let d = t.view((j1, j1), (n, n)).clone_owned();
    let a11 = d.view((0, 0), (n1, n1));
    let a12 = d.view((0, n1), (n1, n2));
    let a22 = d.view((n1, n1), (n2, n2));

    // A11·X − X·A22 = −A12, column-major vec(X).
    let m = n1 * n2;
    let mut k = RealMatrix::zeros(m, m);
    let mut rhs = nalgebra::DVector::zeros(m);
    for col in 0..n2 {
        for row in 0..n1 {
            let r = col * n1 + row;
            rhs[r] = -a12[(row, col)];
            for row2 in 0..n1 {
                k[(r, col * n1 + row2)] += a11[(row, row2)];
            }
            for col2 in 0..n2 {
                k[(r, col2 * n1 + row)] -= a22[(col2, col)];
            }
        }
    }
    let x = k.lu().solve(&rhs).ok_or(LinalgError::SwapRejected { position: j1 })?;

    // Orthogonal basis whose leading n2 columns span [X; I].
    let mut v = RealMatrix::zeros(n, n);
    for col in 0..n2 {
        for row in 0..n1 {
            v[(row, col)] = x[col * n1 + row];
        }
        v[(n1 + col, col)] = 1.0;
    }
    let qs = v.qr().q();

    let d2 = qs.transpose() * &d * &qs;
    let lower = d2.view((n2, 0), (n1, n2)).norm();
    let thresh = (100.0 * f64::EPSILON * d.norm()).max(f64::MIN_POSITIVE);
    if !lower.is_finite() || lower > thresh {
        return Err(LinalgError::SwapRejected { position: j1 });
    }

    let dim = t.nrows();
    let rows = t.view((j1, 0), (n, dim)).clone_owned();
    t.view_mut((j1, 0), (n, dim)).copy_from(&(qs.transpose() * rows));
    let cols = t.view((0, j1), (dim, n)).clone_owned();
    t.view_mut((0, j1), (dim, n)).copy_from(&(cols * &qs));
    let qcols = q.view((0, j1), (dim, n)).clone_owned();
    q.view_mut((0, j1), (dim, n)).copy_from(&(qcols * &qs));

    for c in 0..n2 {
        for r in n2..n {
            t[(j1 + r, j1 + c)] = 0.0;
        }
    }
    if n2 == 2 {
        standardize_block(t, q, j1);
    }
    if n1 == 2 {
        let k = j1 + n2;
        standardize_block(t, q, k);
    }
    Ok(())
}
