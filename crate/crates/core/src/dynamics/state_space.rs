use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{DynamicsError, Result};
use crate::grid::{eliminate_vsc, jacobian_blocks, solve_equilibrium, NetworkCase, ReducedDynamicsComponents, ReducedModel};
use crate::linalg::RealMatrix;

/// Linear stochastic swing model `dx = (A x + B u) dt + S dW` with
/// `x = [Δδ; Δω]`, together with the closed loop `A_c` for the VSC gain `K1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    pub ng: usize,
    pub nv: usize,
    pub omega0: f64,
    #[serde(with = "crate::linalg::rows")]
    pub a: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub b: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub s: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub ac: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub k1: RealMatrix,
}

impl StateSpaceModel {
    /// `Ā1 = A[ω, δ]`
    pub fn abar1(&self) -> RealMatrix {
        self.a.view((self.ng, 0), (self.ng, self.ng)).into_owned()
    }

    /// `−M⁻¹D = A[ω, ω]`
    pub fn minus_minv_d(&self) -> RealMatrix {
        self.a.view((self.ng, self.ng), (self.ng, self.ng)).into_owned()
    }

    /// `Ā2 = B[ω, :]`
    pub fn abar2(&self) -> RealMatrix {
        self.b.view((self.ng, 0), (self.ng, self.nv)).into_owned()
    }

    /// Same model with a different VSC gain.
    pub fn with_gain(&self, k1: &RealMatrix) -> Result<Self> {
        if k1.shape() != (self.nv, self.ng) {
            return Err(DynamicsError::Dimension(format!(
                "K1 must be {}x{}, got {}x{}",
                self.nv,
                self.ng,
                k1.nrows(),
                k1.ncols()
            )));
        }
        let mut out = self.clone();
        out.ac = closed_loop(&self.a, &self.b, k1, self.ng);
        out.k1 = k1.clone();
        Ok(out)
    }

    pub fn diffusion(&self) -> RealMatrix {
        &self.s * self.s.transpose()
    }
}

/// `A + B [0 K1]`.
pub fn closed_loop(a: &RealMatrix, b: &RealMatrix, k1: &RealMatrix, ng: usize) -> RealMatrix {
    let mut ac = a.clone();
    let bk = b * k1;
    let mut lr = ac.view_mut((0, ng), (2 * ng, ng));
    lr += bk;
    ac
}

/// Per-generator data needed next to the reduced components.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineData {
    pub omega0: f64,
    pub d: DVector<f64>,
    /// `E_i² G_ii`, the load-noise gain at each internal node.
    pub noise_gain: DVector<f64>,
}

/// Compose `A`, `B`, `S` and `A_c` from the eliminated Jacobian. `K2` drives
/// reactive modulation through `Ā3`; pass `None` for active-power damping only.
pub fn assemble_state_space(
    rdc: &ReducedDynamicsComponents,
    machines: &MachineData,
    sigma: &DVector<f64>,
    k1: &RealMatrix,
    k2: Option<&RealMatrix>,
) -> Result<StateSpaceModel> {
    let ng = rdc.a1.nrows();
    let nv = rdc.a2.ncols();
    let dim_err = |what: &str| Err(DynamicsError::Dimension(what.to_string()));
    if machines.d.len() != ng || machines.noise_gain.len() != ng || sigma.len() != ng {
        return dim_err("damping, noise gain and sigma need one entry per generator");
    }
    if k1.shape() != (nv, ng) {
        return dim_err("K1 must be Nv x Ng");
    }
    if let Some(k2) = k2 {
        if k2.shape() != (nv, ng) {
            return dim_err("K2 must be Nv x Ng");
        }
    }
    if sigma.iter().any(|&s| !(s >= 0.0)) {
        return Err(DynamicsError::Invalid("sigma must be non-negative".into()));
    }

    let n = 2 * ng;
    let mut a = RealMatrix::zeros(n, n);
    a.view_mut((0, ng), (ng, ng)).fill_diagonal(machines.omega0);
    a.view_mut((ng, 0), (ng, ng)).copy_from(&rdc.abar1);
    for i in 0..ng {
        a[(ng + i, ng + i)] = -machines.d[i] / rdc.m[i];
    }

    let mut b = RealMatrix::zeros(n, nv);
    b.view_mut((ng, 0), (ng, nv)).copy_from(&rdc.abar2);

    let mut s = RealMatrix::zeros(n, ng);
    for i in 0..ng {
        s[(ng + i, i)] = -machines.noise_gain[i] * sigma[i] / rdc.m[i];
    }

    let mut ac = closed_loop(&a, &b, k1, ng);
    if let Some(k2) = k2 {
        let mut lr = ac.view_mut((ng, ng), (ng, ng));
        lr += &rdc.abar3 * k2;
    }
    Ok(StateSpaceModel { ng, nv, omega0: machines.omega0, a, b, s, ac, k1: k1.clone() })
}

/// Everything derived from a case at its operating point.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub reduced: ReducedModel,
    pub components: ReducedDynamicsComponents,
    pub machines: MachineData,
}

impl Linearization {
    pub fn of_case(case: &NetworkCase) -> Result<Self> {
        let reduced = solve_equilibrium(case)?;
        Self::of_reduced(case, reduced)
    }

    pub fn of_reduced(case: &NetworkCase, reduced: ReducedModel) -> Result<Self> {
        let blocks = jacobian_blocks(&reduced)?;
        let m = DVector::from_iterator(case.ng(), case.generators.iter().map(|g| g.m));
        let components = eliminate_vsc(&blocks, &m)?;
        let net = &reduced.network;
        let machines = MachineData {
            omega0: case.omega0(),
            d: DVector::from_iterator(case.ng(), case.generators.iter().map(|g| g.d)),
            noise_gain: DVector::from_fn(case.ng(), |i, _| net.e[i] * net.e[i] * net.y[(i, i)].re),
        };
        Ok(Self { reduced, components, machines })
    }

    pub fn model(&self, sigma: &DVector<f64>, k1: &RealMatrix) -> Result<StateSpaceModel> {
        assemble_state_space(&self.components, &self.machines, sigma, k1, None)
    }
}
