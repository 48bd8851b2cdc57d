use nalgebra::DVector;

use super::{power_partials, GridError, ReducedModel, ReducedNetwork, Result};
use crate::linalg::RealMatrix;

/// Linearized injections partitioned by output (P_E, P_v, Q_v) and variable
/// (δ, θ, V).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    pub a11: RealMatrix,
    pub a12: RealMatrix,
    pub a13: RealMatrix,
    pub a21: RealMatrix,
    pub a22: RealMatrix,
    pub a23: RealMatrix,
    pub a31: RealMatrix,
    pub a32: RealMatrix,
    pub a33: RealMatrix,
}

impl JacobianBlocks {
    pub fn ng(&self) -> usize {
        self.a11.nrows()
    }

    pub fn nv(&self) -> usize {
        self.a22.nrows()
    }

    /// The nine blocks as one `(Ng+2Nv)` square matrix.
    pub fn assembled(&self) -> RealMatrix {
        let (ng, nv) = (self.ng(), self.nv());
        let mut j = RealMatrix::zeros(ng + 2 * nv, ng + 2 * nv);
        let offs = [0, ng, ng + nv];
        let rows = [
            [&self.a11, &self.a12, &self.a13],
            [&self.a21, &self.a22, &self.a23],
            [&self.a31, &self.a32, &self.a33],
        ];
        for (r, row) in rows.iter().enumerate() {
            for (c, blk) in row.iter().enumerate() {
                j.view_mut((offs[r], offs[c]), blk.shape()).copy_from(*blk);
            }
        }
        j
    }
}

/// Analytic Jacobian of the injection equations at the stored operating point.
pub fn jacobian_blocks(rm: &ReducedModel) -> Result<JacobianBlocks> {
    let eq = &rm.equilibrium;
    jacobian_blocks_at(&rm.network, &eq.delta, &eq.theta, &eq.v)
}

pub fn jacobian_blocks_at(
    net: &ReducedNetwork,
    delta: &DVector<f64>,
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<JacobianBlocks> {
    let (ng, nv) = (net.ng, net.nv);
    let (mag, ang) = net.stack(delta, theta, v)?;
    let pp = power_partials(&net.y, &mag, &ang);
    let cut = |m: &RealMatrix, r0, nr, c0, nc| m.view((r0, c0), (nr, nc)).into_owned();
    Ok(JacobianBlocks {
        a11: cut(&pp.dp_dang, 0, ng, 0, ng),
        a12: cut(&pp.dp_dang, 0, ng, ng, nv),
        a13: cut(&pp.dp_dmag, 0, ng, ng, nv),
        a21: cut(&pp.dp_dang, ng, nv, 0, ng),
        a22: cut(&pp.dp_dang, ng, nv, ng, nv),
        a23: cut(&pp.dp_dmag, ng, nv, ng, nv),
        a31: cut(&pp.dq_dang, ng, nv, 0, ng),
        a32: cut(&pp.dq_dang, ng, nv, ng, nv),
        a33: cut(&pp.dq_dmag, ng, nv, ng, nv),
    })
}

/// Generator-side sensitivities after the VSC voltage variables are
/// eliminated: `ΔP_E = A1 Δδ + A2 ΔP_v + A3 ΔQ_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDynamicsComponents {
    pub a1: RealMatrix,
    pub a2: RealMatrix,
    pub a3: RealMatrix,
    pub abar1: RealMatrix,
    pub abar2: RealMatrix,
    pub abar3: RealMatrix,
    pub m: DVector<f64>,
}

struct Factor {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    name: &'static str,
}

impl Factor {
    fn new(a: &RealMatrix, name: &'static str) -> Result<Self> {
        let n = a.nrows();
        let lu = a.clone().lu();
        let u = lu.u();
        let scale = a.amax();
        let tiny = (0..n).any(|i| u[(i, i)].abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE));
        if scale == 0.0 || tiny {
            return Err(GridError::SingularElimination { which: name });
        }
        Ok(Self { lu, name })
    }

    /// `X⁻¹ B`
    fn solve(&self, b: &RealMatrix) -> Result<RealMatrix> {
        self.lu.solve(b).ok_or(GridError::SingularElimination { which: self.name })
    }

    /// `B X⁻¹`
    fn solve_right(&self, b: &RealMatrix) -> Result<RealMatrix> {
        let n = b.ncols();
        let ident = RealMatrix::identity(n, n);
        Ok(b * self.solve(&ident)?)
    }
}

/// Eliminate Δθ and ΔV through the closed forms
/// `F1 = (A23⁻¹A22 − A33⁻¹A32)⁻¹`, `F2 = (A22⁻¹A23 − A32⁻¹A33)⁻¹`.
pub fn eliminate_vsc(blocks: &JacobianBlocks, m: &DVector<f64>) -> Result<ReducedDynamicsComponents> {
    let (ng, nv) = (blocks.ng(), blocks.nv());
    if m.len() != ng {
        return Err(GridError::Dimension(format!("M has {} entries for {ng} generators", m.len())));
    }
    if m.iter().any(|&x| !(x > 0.0)) {
        return Err(GridError::Invalid("inertia must be positive".into()));
    }

    let (a1, a2, a3) = if nv == 0 {
        (blocks.a11.clone(), RealMatrix::zeros(ng, 0), RealMatrix::zeros(ng, 0))
    } else {
        let b = blocks;
        let i22 = Factor::new(&b.a22, "A22")?;
        let i23 = Factor::new(&b.a23, "A23")?;
        let i32 = Factor::new(&b.a32, "A32")?;
        let i33 = Factor::new(&b.a33, "A33")?;

        let f1 = Factor::new(&(i23.solve(&b.a22)? - i33.solve(&b.a32)?), "F1")?;
        let f2 = Factor::new(&(i22.solve(&b.a23)? - i32.solve(&b.a33)?), "F2")?;

        let theta_delta = f1.solve(&(i33.solve(&b.a31)? - i23.solve(&b.a21)?))?;
        let v_delta = f2.solve(&(i32.solve(&b.a31)? - i22.solve(&b.a21)?))?;
        let a1 = &b.a11 + &b.a12 * theta_delta + &b.a13 * v_delta;

        let ident = RealMatrix::identity(nv, nv);
        let f1_m = f1.solve(&ident)?;
        let f2_m = f2.solve(&ident)?;
        let a2 = i23.solve_right(&(&b.a12 * &f1_m))? + i22.solve_right(&(&b.a13 * &f2_m))?;
        let a3 = -i33.solve_right(&(&b.a12 * &f1_m))? - i32.solve_right(&(&b.a13 * &f2_m))?;
        (a1, a2, a3)
    };

    let minv = |x: &RealMatrix| {
        let mut out = -x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row /= m[i];
        }
        out
    };
    Ok(ReducedDynamicsComponents {
        abar1: minv(&a1),
        abar2: minv(&a2),
        abar3: minv(&a3),
        a1,
        a2,
        a3,
        m: m.clone(),
    })
}
