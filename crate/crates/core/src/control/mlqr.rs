use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::modes::{eigenvector, modes, sort_least_damped_first, track_modes, Mode, ModeClass, ModeReport};
use super::{ControlError, Result};
use crate::dynamics::closed_loop;
use crate::linalg::{damping_ratio, real_schur_by_key, solve_care, RealMatrix, SchurForm, SchurOrdering};

/// Orthogonal modal map `z = L x` with `L = Qᵀ` from an ordered real Schur
/// form of `A`. Coordinates `split..` carry the targeted modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTransform {
    pub l: RealMatrix,
    pub schur: SchurForm,
    pub split: usize,
}

/// `L` and the Schur form with blocks in ascending damping order.
pub fn modal_transform(a: &RealMatrix) -> Result<(RealMatrix, SchurForm)> {
    let form = crate::linalg::real_schur(a, SchurOrdering::AscendingDamping)?;
    Ok((form.q.transpose(), form))
}

/// Modal map with untargeted modes leading and targeted modes trailing,
/// each group in ascending damping order. Targeted coordinates then span
/// an invariant subspace of the dynamics seen from `z`, so weighting only
/// them leaves every untargeted eigenvalue of the full-state loop in place.
pub fn modal_transform_targeting(a: &RealMatrix, targeted: &dyn Fn(Complex64) -> bool) -> Result<ModalTransform> {
    let key = |l: Complex64| if targeted(l) { 4.0 + damping_ratio(l) } else { damping_ratio(l) };
    let form = real_schur_by_key(a, &key)?;
    let split = form.blocks.iter().find(|b| targeted(b.eigenvalue)).map_or(a.nrows(), |b| b.start);
    Ok(ModalTransform { l: form.q.transpose(), schur: form, split })
}

fn check_weights(wq: &DVector<f64>, wr: &DVector<f64>) -> Result<()> {
    if wq.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(ControlError::Invalid("W_Q must be a non-negative diagonal".into()));
    }
    if wr.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(ControlError::Invalid("W_R must be a positive diagonal".into()));
    }
    Ok(())
}

/// `Γ = W_R⁻¹ Bᵀ P` where `P` solves the Riccati equation with state
/// weight `Lᵀ W_Q L`. When the weighted modal coordinates form a trailing
/// invariant block of `L A Lᵀ`, the equation is solved on that block alone,
/// which also covers unweighted marginal modes (e.g. a zero eigenvalue).
pub fn mlqr_gain(a: &RealMatrix, b: &RealMatrix, l: &RealMatrix, wq: &DVector<f64>, wr: &DVector<f64>) -> Result<RealMatrix> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || l.shape() != (n, n) || wq.len() != n || wr.len() != m {
        return Err(ControlError::Dimension(format!(
            "A {n}x{}, B {}x{m}, L {}x{}, W_Q {}, W_R {}",
            a.ncols(),
            b.nrows(),
            l.nrows(),
            l.ncols(),
            wq.len(),
            wr.len()
        )));
    }
    check_weights(wq, wr)?;
    let Some(p0) = wq.iter().position(|&w| w > 0.0) else {
        return Ok(RealMatrix::zeros(m, n));
    };
    let r = RealMatrix::from_diagonal(wr);
    let t = l * a * l.transpose();
    let coupling = t.view((p0, 0), (n - p0, p0)).norm();
    let p = if coupling <= 1e-9 * t.norm().max(1.0) {
        let k = n - p0;
        let t22 = t.view((p0, p0), (k, k)).into_owned();
        let b2 = (l * b).rows(p0, k).into_owned();
        let q22 = RealMatrix::from_diagonal(&wq.rows(p0, k).into_owned());
        let p22 = solve_care(&t22, &b2, &q22, &r).map_err(uncontrollable)?;
        let mut pm = RealMatrix::zeros(n, n);
        pm.view_mut((p0, p0), (k, k)).copy_from(&p22);
        l.transpose() * pm * l
    } else {
        let q = l.transpose() * RealMatrix::from_diagonal(wq) * l;
        solve_care(a, b, &crate::linalg::symmetrize(&q), &r).map_err(uncontrollable)?
    };
    Ok(RealMatrix::from_fn(m, n, |i, j| (b.column(i).dot(&p.column(j))) / wr[i]))
}

fn uncontrollable(e: crate::linalg::LinalgError) -> ControlError {
    ControlError::Uncontrollable(e.to_string())
}

/// ω-feedback gain actually installed on the VSCs.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub k1: RealMatrix,
    /// `‖Γ_δ‖_F / ‖Γ‖_F`, the share of the full-state gain that is dropped.
    pub dropped_fraction: f64,
}

/// `K1 = −Γ[:, ω]`.
pub fn deploy_gain(gamma: &RealMatrix, ng: usize) -> Result<Deployment> {
    if gamma.ncols() != 2 * ng {
        return Err(ControlError::Dimension(format!("Γ has {} columns, expected {}", gamma.ncols(), 2 * ng)));
    }
    let k1 = -gamma.columns(ng, ng).into_owned();
    let total = gamma.norm();
    let dropped = gamma.columns(0, ng).norm();
    Ok(Deployment { k1, dropped_fraction: if total > 0.0 { dropped / total } else { 0.0 } })
}

/// Which open-loop modes the design must damp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelection {
    /// Every inter-area candidate below the target damping.
    CriticalInterArea,
    /// Modes nearest to the listed eigenvalues `(re, im)`.
    Eigenvalues(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub target_zeta: f64,
    pub band_hz: (f64, f64),
    pub growth: f64,
    pub max_iterations: usize,
    pub selection: ModeSelection,
    /// Per-VSC modulation limits; when set `W_R(i,i) = 1/limit_i²`.
    pub vsc_limits: Option<Vec<f64>>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            target_zeta: 0.10,
            band_hz: (0.1, 1.0),
            growth: 1.5,
            max_iterations: 100,
            selection: ModeSelection::CriticalInterArea,
            vsc_limits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlqrDesign {
    #[serde(with = "crate::linalg::rows")]
    pub l: RealMatrix,
    pub split: usize,
    pub wq: Vec<f64>,
    pub wr: Vec<f64>,
    #[serde(with = "crate::linalg::rows")]
    pub gamma: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub k1: RealMatrix,
    pub dropped_fraction: f64,
    pub iterations: usize,
    pub target_zeta: f64,
    pub open_loop: ModeReport,
    /// `A − BΓ` with the full-state gain.
    pub full_state: ModeReport,
    /// `A + B[0 K1]` with the deployed ω-only gain.
    pub deployed: ModeReport,
    /// Largest move of an untargeted eigenvalue, full-state loop.
    pub untargeted_shift_full: f64,
    /// Largest move of an untargeted eigenvalue, deployed loop.
    pub untargeted_shift_deployed: f64,
}

/// Largest move of untargeted eigenvalues between two flagged reports.
pub fn untargeted_shift(before: &ModeReport, after: &ModeReport) -> f64 {
    let pick = |r: &ModeReport| r.modes.iter().filter(|m| !m.targeted).map(Mode::eigenvalue).collect::<Vec<_>>();
    super::modes::spectrum_shift(&pick(before), &pick(after))
}

/// Mode report of `a` with the tracked modes flagged as targeted.
fn flagged_report(a: &RealMatrix, band: (f64, f64), tracked: &[Complex64]) -> Result<ModeReport> {
    let mut rep = modes(a, band)?;
    for t in tracked {
        let tt = Complex64::new(t.re, t.im.abs());
        if let Some(m) = rep
            .modes
            .iter_mut()
            .filter(|m| !m.targeted)
            .min_by(|x, y| (x.eigenvalue() - tt).norm().total_cmp(&(y.eigenvalue() - tt).norm()))
        {
            m.targeted = true;
        }
    }
    sort_least_damped_first(&mut rep.modes);
    Ok(rep)
}

fn select(open: &ModeReport, opts: &DesignOptions) -> Vec<Complex64> {
    match &opts.selection {
        ModeSelection::CriticalInterArea => open
            .modes
            .iter()
            .filter(|m| m.class == ModeClass::InterArea && m.damping_ratio < opts.target_zeta)
            .map(Mode::eigenvalue)
            .collect(),
        ModeSelection::Eigenvalues(list) => list
            .iter()
            .filter_map(|&(re, im)| {
                let want = Complex64::new(re, im.abs());
                open.modes
                    .iter()
                    .filter(|m| m.class != ModeClass::Real)
                    .min_by(|x, y| (x.eigenvalue() - want).norm().total_cmp(&(y.eigenvalue() - want).norm()))
                    .map(Mode::eigenvalue)
            })
            .collect(),
    }
}

/// Tune modal weights until every targeted mode of the deployed ω-only
/// loop reaches the target damping. Weights start at one on the targeted
/// coordinates (zero elsewhere) and grow geometrically for modes still
/// short of the target; modes are tracked across iterations by eigenvector
/// correlation.
pub fn design_wadc(a: &RealMatrix, b: &RealMatrix, opts: &DesignOptions) -> Result<MlqrDesign> {
    let n = a.nrows();
    if !n.is_multiple_of(2) || a.ncols() != n || b.nrows() != n {
        return Err(ControlError::Dimension("A must be 2Ng square and B must have 2Ng rows".into()));
    }
    if !(opts.growth > 1.0) || opts.max_iterations == 0 {
        return Err(ControlError::Invalid("growth must exceed 1 and at least one iteration is needed".into()));
    }
    let ng = n / 2;
    let nv = b.ncols();
    let wr = match &opts.vsc_limits {
        None => DVector::from_element(nv, 1.0),
        Some(lim) if lim.len() == nv && lim.iter().all(|&x| x > 0.0) => DVector::from_iterator(nv, lim.iter().map(|x| 1.0 / (x * x))),
        Some(_) => return Err(ControlError::Invalid(format!("need {nv} positive VSC limits"))),
    };

    let mut open = modes(a, opts.band_hz)?;
    let selected = select(&open, opts);
    for m in open.modes.iter_mut() {
        m.targeted = selected.iter().any(|s| (m.eigenvalue() - s).norm() <= 1e-12 * s.norm().max(1.0));
    }
    let tol = |x: Complex64, s: &Complex64| (Complex64::new(x.re, x.im.abs()) - s).norm() <= 1e-7 * s.norm().max(1.0);
    let mt = modal_transform_targeting(a, &|l| selected.iter().any(|s| tol(l, s)))?;
    let blocks: Vec<_> = mt.schur.blocks.iter().filter(|blk| blk.start >= mt.split).copied().collect();
    // Each targeted Schur block is tracked through the mode it carries.
    let mut tracking: Vec<DVector<Complex64>> = blocks.iter().map(|blk| eigenvector(a, blk.eigenvalue)).collect();
    let mut weights = vec![1.0; blocks.len()];

    let mut best: Option<(f64, MlqrDesign)> = None;
    for iter in 1..=opts.max_iterations {
        let mut wq = DVector::zeros(n);
        for (blk, w) in blocks.iter().zip(&weights) {
            for k in blk.start..blk.start + blk.size {
                wq[k] = *w;
            }
        }
        let gamma = mlqr_gain(a, b, &mt.l, &wq, &wr)?;
        let dep = deploy_gain(&gamma, ng)?;
        let acl = closed_loop(a, b, &dep.k1, ng);
        let tracked = if tracking.is_empty() { Vec::new() } else { track_modes(&acl, &tracking)? };
        let zetas: Vec<f64> = tracked.iter().map(|(l, _)| damping_ratio(Complex64::new(l.re, l.im.abs()))).collect();
        tracking = tracked.iter().map(|(_, v)| v.clone()).collect();
        let min_zeta = zetas.iter().copied().fold(f64::INFINITY, f64::min);
        let done = zetas.iter().all(|&z| z >= opts.target_zeta);
        let better = best.as_ref().is_none_or(|(z, _)| min_zeta > *z);
        if done || better || iter == opts.max_iterations {
            let eigs: Vec<Complex64> = tracked.iter().map(|(l, _)| *l).collect();
            let deployed = flagged_report(&acl, opts.band_hz, &eigs)?;
            let full_cl = a - b * &gamma;
            let full_tracked = if blocks.is_empty() {
                Vec::new()
            } else {
                let starts: Vec<DVector<Complex64>> = blocks.iter().map(|blk| eigenvector(a, blk.eigenvalue)).collect();
                track_modes(&full_cl, &starts)?.into_iter().map(|(l, _)| l).collect()
            };
            let full_state = flagged_report(&full_cl, opts.band_hz, &full_tracked)?;
            let design = MlqrDesign {
                l: mt.l.clone(),
                split: mt.split,
                wq: wq.iter().copied().collect(),
                wr: wr.iter().copied().collect(),
                gamma,
                k1: dep.k1,
                dropped_fraction: dep.dropped_fraction,
                iterations: iter,
                target_zeta: opts.target_zeta,
                untargeted_shift_full: untargeted_shift(&open, &full_state),
                untargeted_shift_deployed: untargeted_shift(&open, &deployed),
                open_loop: open.clone(),
                full_state,
                deployed,
            };
            if done {
                return Ok(design);
            }
            if better {
                best = Some((min_zeta, design));
            }
        }
        for (w, z) in weights.iter_mut().zip(&zetas) {
            if *z < opts.target_zeta {
                *w *= opts.growth;
            }
        }
    }
    let (_, design) = best.expect("at least one iteration ran");
    let achieved = design.deployed.targeted().map(|m| (m.frequency_hz, m.damping_ratio)).collect();
    Err(ControlError::TargetNotReached { achieved, design: Box::new(design) })
}

/// A deployed gain judged against a (possibly different) plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEvaluation {
    pub open_loop: ModeReport,
    pub closed_loop: ModeReport,
    pub min_targeted_damping: Option<f64>,
    pub untargeted_shift: f64,
}

/// Close `a, b` with the ω-only gain `k1`, select targets on the open loop
/// of this plant as `opts` prescribes, and follow them into the closed loop.
pub fn evaluate_gain(a: &RealMatrix, b: &RealMatrix, k1: &RealMatrix, opts: &DesignOptions) -> Result<GainEvaluation> {
    let ng = a.nrows() / 2;
    if a.nrows() != 2 * ng || a.ncols() != a.nrows() || b.nrows() != a.nrows() || k1.shape() != (b.ncols(), ng) {
        return Err(ControlError::Dimension("need 2Ng square A, 2Ng-row B and Nv x Ng K1".into()));
    }
    let mut open = modes(a, opts.band_hz)?;
    let selected = select(&open, opts);
    for m in open.modes.iter_mut() {
        m.targeted = selected.iter().any(|s| (m.eigenvalue() - s).norm() <= 1e-12 * s.norm().max(1.0));
    }
    let acl = closed_loop(a, b, k1, ng);
    let starts: Vec<DVector<Complex64>> = selected.iter().map(|l| eigenvector(a, *l)).collect();
    let tracked: Vec<Complex64> =
        if starts.is_empty() { Vec::new() } else { track_modes(&acl, &starts)?.into_iter().map(|(l, _)| l).collect() };
    let closed = flagged_report(&acl, opts.band_hz, &tracked)?;
    Ok(GainEvaluation {
        min_targeted_damping: closed.min_targeted_damping(),
        untargeted_shift: untargeted_shift(&open, &closed),
        open_loop: open,
        closed_loop: closed,
    })
}
