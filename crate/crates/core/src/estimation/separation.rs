use serde::{Deserialize, Serialize};

use super::{AcDiagnostics, EstimationError, Result};
use crate::linalg::{genperm_pinv, RealMatrix};

/// Gain step applied between the two identification windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    #[serde(with = "crate::linalg::rows")]
    pub delta_k1: RealMatrix,
    /// Perturbed column for each VSC row (0-based generator index).
    pub columns: Vec<usize>,
    pub alpha_pct: f64,
    /// Rows whose gains were all zero and received the absolute fallback step.
    pub fallback_rows: Vec<usize>,
}

/// Greedy generalized-permutation perturbation: row by row, pick the unused
/// column with the largest `|K1(i, j)|` and step it by `α%` of its value.
/// A row with nothing to scale gets `fallback` (absolute) at that column.
pub fn make_perturbation(k1: &RealMatrix, alpha_pct: f64, fallback: f64) -> Result<PerturbationPlan> {
    let (nv, ng) = k1.shape();
    if nv > ng {
        return Err(EstimationError::Dimension(format!(
            "{nv} VSC rows cannot each get a distinct column among {ng} generators"
        )));
    }
    if !alpha_pct.is_finite() || !fallback.is_finite() {
        return Err(EstimationError::Invalid("perturbation size must be finite".into()));
    }
    let mut used = vec![false; ng];
    let mut delta = RealMatrix::zeros(nv, ng);
    let mut columns = Vec::with_capacity(nv);
    let mut fallback_rows = Vec::new();
    for i in 0..nv {
        let mut best = None::<(usize, f64)>;
        for j in (0..ng).filter(|&j| !used[j]) {
            let v = k1[(i, j)].abs();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        let (g, mag) = best.expect("nv <= ng leaves a free column");
        used[g] = true;
        columns.push(g);
        if mag == 0.0 {
            if fallback == 0.0 {
                return Err(EstimationError::ZeroGainRow { row: i });
            }
            delta[(i, g)] = fallback;
            fallback_rows.push(i);
        } else {
            delta[(i, g)] = alpha_pct / 100.0 * k1[(i, g)];
        }
    }
    Ok(PerturbationPlan { delta_k1: delta, columns, alpha_pct, fallback_rows })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimationDiagnostics {
    pub window1: Option<AcDiagnostics>,
    pub window2: Option<AcDiagnostics>,
    /// `‖Â_c[δ, ω] − ω0·I‖_F / ‖ω0·I‖_F` for each window.
    pub top_right_deviation: [f64; 2],
    /// `‖Â_c[δ, δ]‖_F / ‖ω0·I‖_F`; the true block is zero.
    pub top_left_magnitude: [f64; 2],
    /// `‖Ā1(window 1) − Ā1(window 2)‖_F / ‖Ā1(window 2)‖_F`.
    pub abar1_window_disagreement: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: Vec<u64>,
    pub window_s: f64,
    pub rate_hz: f64,
    pub tau_s: f64,
    pub alpha_pct: f64,
    pub window_starts_s: Vec<f64>,
}

/// Identified swing model and the raw closed-loop estimates it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedModel {
    pub ng: usize,
    pub nv: usize,
    pub omega0: f64,
    #[serde(with = "crate::linalg::rows")]
    pub k1: RealMatrix,
    pub plan: PerturbationPlan,
    #[serde(with = "crate::linalg::rows")]
    pub ac1_hat: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub ac2_hat: RealMatrix,
    /// Lower-left block of the second estimate.
    #[serde(with = "crate::linalg::rows")]
    pub abar1: RealMatrix,
    /// Average of both windows' lower-left blocks, reported for comparison.
    #[serde(with = "crate::linalg::rows")]
    pub abar1_mean: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub abar2: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub minus_minv_d: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub a: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub b: RealMatrix,
    pub diagnostics: EstimationDiagnostics,
    pub provenance: Provenance,
}

impl EstimatedModel {
    /// `A + B [0 K]` for a candidate ω-feedback gain.
    pub fn closed_loop(&self, k1: &RealMatrix) -> RealMatrix {
        crate::dynamics::closed_loop(&self.a, &self.b, k1, self.ng)
    }
}

fn block(m: &RealMatrix, r: usize, c: usize, ng: usize) -> RealMatrix {
    m.view((r, c), (ng, ng)).into_owned()
}

/// Recover `Ā1`, `Ā2` and `−M⁻¹D` from closed-loop estimates taken before
/// and after `plan` was applied on top of `k1`:
/// `Ā1 = A_c2[ω,δ]`, `Ā2 = (A_c2[ω,ω] − A_c1[ω,ω])·ΔK1⁺`,
/// `−M⁻¹D = A_c1[ω,ω] − Ā2·K1`.
pub fn separate_ab(
    ac1: &RealMatrix,
    ac2: &RealMatrix,
    plan: &PerturbationPlan,
    k1: &RealMatrix,
    omega0: f64,
) -> Result<EstimatedModel> {
    let n = ac1.nrows();
    if !n.is_multiple_of(2) || ac1.shape() != (n, n) || ac2.shape() != (n, n) {
        return Err(EstimationError::Dimension("closed-loop estimates must be equal, square and of even size".into()));
    }
    let ng = n / 2;
    let nv = k1.nrows();
    if k1.ncols() != ng || plan.delta_k1.shape() != (nv, ng) {
        return Err(EstimationError::Dimension(format!("K1 and the perturbation must be {nv}x{ng}")));
    }
    if plan.delta_k1.iter().all(|&x| x == 0.0) {
        return Err(EstimationError::DegeneratePerturbation);
    }
    let pinv = genperm_pinv(&plan.delta_k1)?;
    let lr1 = block(ac1, ng, ng, ng);
    let lr2 = block(ac2, ng, ng, ng);
    let abar2 = (&lr2 - &lr1) * pinv;
    let minus_minv_d = &lr1 - &abar2 * k1;
    let abar1 = block(ac2, ng, 0, ng);
    let abar1_1 = block(ac1, ng, 0, ng);
    let abar1_mean = (&abar1_1 + &abar1) * 0.5;

    let mut a = RealMatrix::zeros(n, n);
    a.view_mut((0, ng), (ng, ng)).fill_diagonal(omega0);
    a.view_mut((ng, 0), (ng, ng)).copy_from(&abar1);
    a.view_mut((ng, ng), (ng, ng)).copy_from(&minus_minv_d);
    let mut b = RealMatrix::zeros(n, nv);
    b.view_mut((ng, 0), (ng, nv)).copy_from(&abar2);

    let w0 = RealMatrix::identity(ng, ng) * omega0;
    let scale = w0.norm().max(f64::MIN_POSITIVE);
    let tr_dev = |m: &RealMatrix| (block(m, 0, ng, ng) - &w0).norm() / scale;
    let tl_mag = |m: &RealMatrix| block(m, 0, 0, ng).norm() / scale;
    let diagnostics = EstimationDiagnostics {
        window1: None,
        window2: None,
        top_right_deviation: [tr_dev(ac1), tr_dev(ac2)],
        top_left_magnitude: [tl_mag(ac1), tl_mag(ac2)],
        abar1_window_disagreement: crate::linalg::relative_frobenius_error(&abar1_1, &abar1),
    };
    Ok(EstimatedModel {
        ng,
        nv,
        omega0,
        k1: k1.clone(),
        plan: plan.clone(),
        ac1_hat: ac1.clone(),
        ac2_hat: ac2.clone(),
        abar1,
        abar1_mean,
        abar2,
        minus_minv_d,
        a,
        b,
        diagnostics,
        provenance: Provenance::default(),
    })
}
