use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::linalg::{damping_ratio, real_schur, ComplexMatrix, RealMatrix, SchurOrdering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeClass {
    InterArea,
    Local,
    Real,
}

/// One eigenvalue (a conjugate pair is listed once, with `Im λ > 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub re: f64,
    pub im: f64,
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    pub class: ModeClass,
    pub targeted: bool,
}

impl Mode {
    pub fn eigenvalue(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn from_eigenvalue(lambda: Complex64, band_hz: (f64, f64), real: bool) -> Self {
        let frequency_hz = if real { 0.0 } else { lambda.im.abs() / (2.0 * std::f64::consts::PI) };
        let class = if real {
            ModeClass::Real
        } else if frequency_hz >= band_hz.0 && frequency_hz <= band_hz.1 {
            ModeClass::InterArea
        } else {
            ModeClass::Local
        };
        let (re, im) = if real { (lambda.re, 0.0) } else { (lambda.re, lambda.im.abs()) };
        let zeta = if real && re == 0.0 { 1.0 } else { damping_ratio(Complex64::new(re, im)) };
        Self { re, im, frequency_hz, damping_ratio: zeta, class, targeted: false }
    }
}

/// Modal table, least-damped first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub band_hz: (f64, f64),
    pub modes: Vec<Mode>,
}

impl ModeReport {
    pub fn targeted(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.targeted)
    }

    pub fn min_targeted_damping(&self) -> Option<f64> {
        self.targeted().map(|m| m.damping_ratio).reduce(f64::min)
    }

    /// Eigenvalues with conjugates restored.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for m in &self.modes {
            out.push(m.eigenvalue());
            if m.class != ModeClass::Real {
                out.push(m.eigenvalue().conj());
            }
        }
        out
    }
}

pub fn sort_least_damped_first(modes: &mut [Mode]) {
    modes.sort_by(|a, b| a.damping_ratio.total_cmp(&b.damping_ratio).then(a.frequency_hz.total_cmp(&b.frequency_hz)));
}

/// Frequencies and damping ratios of `A`; complex modes in `band_hz` are
/// flagged as inter-area candidates.
pub fn modes(a: &RealMatrix, band_hz: (f64, f64)) -> Result<ModeReport> {
    let form = real_schur(a, SchurOrdering::Unordered)?;
    // Roundoff leaves the angle-reference zero eigenvalue at ±1e-15 or so.
    let zero = 1e-10 * a.amax().max(1.0);
    let mut list: Vec<Mode> = form
        .blocks
        .iter()
        .map(|b| {
            let l = if b.size == 1 && b.eigenvalue.re.abs() <= zero { Complex64::new(0.0, 0.0) } else { b.eigenvalue };
            Mode::from_eigenvalue(l, band_hz, b.size == 1)
        })
        .collect();
    sort_least_damped_first(&mut list);
    Ok(ModeReport { band_hz, modes: list })
}

/// Right eigenvector for an eigenvalue of `a` by shifted inverse iteration.
pub fn eigenvector(a: &RealMatrix, lambda: Complex64) -> DVector<Complex64> {
    let n = a.nrows();
    let scale = lambda.norm().max(a.amax()).max(1.0);
    let mut shift = Complex64::new(1e-10, 1e-10) * scale;
    let start = DVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    for _ in 0..6 {
        let shifted = ComplexMatrix::from_fn(n, n, |r, c| {
            let base = Complex64::new(a[(r, c)], 0.0);
            if r == c {
                base - lambda - shift
            } else {
                base
            }
        });
        let lu = shifted.lu();
        let mut v = start.clone();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(next) if next.norm().is_finite() && next.norm() > 0.0 => {
                    let norm = next.norm();
                    v = next / Complex64::new(norm, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return v;
        }
        shift *= 10.0;
    }
    start
}

/// Modal assurance criterion `|φᴴψ|² / (‖φ‖²‖ψ‖²)`.
pub fn mac(phi: &DVector<Complex64>, psi: &DVector<Complex64>) -> f64 {
    let num = phi.dotc(psi).norm_sqr();
    let den = phi.norm_squared() * psi.norm_squared();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Greedy assignment of `targets` to eigenvalues of `a` with `Im λ ≥ 0`,
/// by descending MAC. Returns, per target, the matched eigenvalue and its
/// eigenvector.
pub fn track_modes(
    a: &RealMatrix,
    targets: &[DVector<Complex64>],
) -> Result<Vec<(Complex64, DVector<Complex64>)>> {
    let form = real_schur(a, SchurOrdering::Unordered)?;
    let cands: Vec<(Complex64, DVector<Complex64>)> =
        form.blocks.iter().map(|b| (b.eigenvalue, eigenvector(a, b.eigenvalue))).collect();
    let mut scores = Vec::new();
    for (t, phi) in targets.iter().enumerate() {
        for (c, (_, psi)) in cands.iter().enumerate() {
            // A conjugate pair's eigenvector may be matched by its conjugate.
            let s = mac(phi, psi).max(mac(phi, &psi.map(|z| z.conj())));
            scores.push((s, t, c));
        }
    }
    scores.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut out: Vec<Option<(Complex64, DVector<Complex64>)>> = vec![None; targets.len()];
    let mut taken = vec![false; cands.len()];
    for (_, t, c) in scores {
        if out[t].is_none() && !taken[c] {
            taken[c] = true;
            let (l, v) = &cands[c];
            let v = if mac(&targets[t], v) >= mac(&targets[t], &v.map(|z| z.conj())) { v.clone() } else { v.map(|z| z.conj()) };
            out[t] = Some((*l, v));
        }
    }
    Ok(out.into_iter().map(|o| o.expect("at least as many modes as targets")).collect())
}

/// Largest distance from each eigenvalue in `before` to its nearest
/// unclaimed partner in `after` (greedy over increasing distance).
pub fn spectrum_shift(before: &[Complex64], after: &[Complex64]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, b) in before.iter().enumerate() {
        for (j, a) in after.iter().enumerate() {
            pairs.push(((b - a).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_b = vec![false; before.len()];
    let mut used_a = vec![false; after.len()];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if !used_b[i] && !used_a[j] {
            used_b[i] = true;
            used_a[j] = true;
            worst = worst.max(d);
            matched += 1;
            if matched == before.len() {
                break;
            }
        }
    }
    worst
}
