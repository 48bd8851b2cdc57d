use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{build_admittance, kron_reduce, GridError, NetworkCase, Result};
use crate::linalg::{ComplexMatrix, RealMatrix};

/// Kron-reduced network over generator internal nodes followed by VSC buses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub ng: usize,
    pub nv: usize,
    pub y: ComplexMatrix,
    /// Internal voltage magnitudes of the generators.
    pub e: DVector<f64>,
    /// Terminal bus id of each retained node (generator terminals, then VSC buses).
    pub retained_bus_ids: Vec<usize>,
}

/// Conductance and susceptance blocks of the reduced admittance.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceBlocks {
    pub g_gg: RealMatrix,
    pub b_gg: RealMatrix,
    pub g_gv: RealMatrix,
    pub b_gv: RealMatrix,
    pub g_vg: RealMatrix,
    pub b_vg: RealMatrix,
    pub g_vv: RealMatrix,
    pub b_vv: RealMatrix,
}

impl ReducedNetwork {
    pub fn from_case(case: &NetworkCase) -> Result<Self> {
        let aug = build_admittance(case)?;
        let index = case.bus_index();
        let ng = case.ng();
        let mut keep: Vec<usize> = (0..ng).map(|k| aug.internal_node(k)).collect();
        keep.extend(case.vscs.iter().map(|v| index[&v.bus]));
        let y = kron_reduce(&aug.y, &keep)?;
        let mut retained_bus_ids: Vec<usize> = case.generators.iter().map(|g| g.bus).collect();
        retained_bus_ids.extend(case.vscs.iter().map(|v| v.bus));
        Ok(Self {
            ng,
            nv: case.nv(),
            y,
            e: DVector::from_iterator(ng, case.generators.iter().map(|g| g.e)),
            retained_bus_ids,
        })
    }

    pub fn blocks(&self) -> AdmittanceBlocks {
        let (ng, nv) = (self.ng, self.nv);
        let g = self.y.map(|z| z.re);
        let b = self.y.map(|z| z.im);
        let cut = |m: &RealMatrix, r0, nr, c0, nc| m.view((r0, c0), (nr, nc)).into_owned();
        AdmittanceBlocks {
            g_gg: cut(&g, 0, ng, 0, ng),
            b_gg: cut(&b, 0, ng, 0, ng),
            g_gv: cut(&g, 0, ng, ng, nv),
            b_gv: cut(&b, 0, ng, ng, nv),
            g_vg: cut(&g, ng, nv, 0, ng),
            b_vg: cut(&b, ng, nv, 0, ng),
            g_vv: cut(&g, ng, nv, ng, nv),
            b_vv: cut(&b, ng, nv, ng, nv),
        }
    }

    pub(crate) fn stack(&self, delta: &DVector<f64>, theta: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if delta.len() != self.ng || theta.len() != self.nv || v.len() != self.nv {
            return Err(GridError::Dimension(format!(
                "expected δ[{}], θ[{}], V[{}]; got {}, {}, {}",
                self.ng,
                self.nv,
                self.nv,
                delta.len(),
                theta.len(),
                v.len()
            )));
        }
        let n = self.ng + self.nv;
        let mag = DVector::from_fn(n, |i, _| if i < self.ng { self.e[i] } else { v[i - self.ng] });
        let ang = DVector::from_fn(n, |i, _| if i < self.ng { delta[i] } else { theta[i - self.ng] });
        Ok((mag, ang))
    }
}

/// Active and reactive injections at every retained node.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub pe: DVector<f64>,
    pub pv: DVector<f64>,
    pub qv: DVector<f64>,
}

/// `P_i = Σ_j |v_i||v_j|(G_ij cos φ_ij + B_ij sin φ_ij)`,
/// `Q_i = Σ_j |v_i||v_j|(G_ij sin φ_ij − B_ij cos φ_ij)`.
pub fn bus_powers(y: &ComplexMatrix, mag: &DVector<f64>, ang: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = mag.len();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let (g, b) = (y[(i, j)].re, y[(i, j)].im);
            let (s, c) = (ang[i] - ang[j]).sin_cos();
            let vv = mag[i] * mag[j];
            p[i] += vv * (g * c + b * s);
            q[i] += vv * (g * s - b * c);
        }
    }
    (p, q)
}

pub fn injections(net: &ReducedNetwork, delta: &DVector<f64>, theta: &DVector<f64>, v: &DVector<f64>) -> Result<Injections> {
    let (mag, ang) = net.stack(delta, theta, v)?;
    let (p, q) = bus_powers(&net.y, &mag, &ang);
    Ok(Injections {
        pe: p.rows(0, net.ng).into_owned(),
        pv: p.rows(net.ng, net.nv).into_owned(),
        qv: q.rows(net.ng, net.nv).into_owned(),
    })
}

/// Partial derivatives of [`bus_powers`] with respect to angles and magnitudes.
#[derive(Debug, Clone)]
pub struct PowerPartials {
    pub dp_dang: RealMatrix,
    pub dp_dmag: RealMatrix,
    pub dq_dang: RealMatrix,
    pub dq_dmag: RealMatrix,
}

pub fn power_partials(y: &ComplexMatrix, mag: &DVector<f64>, ang: &DVector<f64>) -> PowerPartials {
    let n = mag.len();
    let (p, q) = bus_powers(y, mag, ang);
    let mut out = PowerPartials {
        dp_dang: RealMatrix::zeros(n, n),
        dp_dmag: RealMatrix::zeros(n, n),
        dq_dang: RealMatrix::zeros(n, n),
        dq_dmag: RealMatrix::zeros(n, n),
    };
    for i in 0..n {
        for j in 0..n {
            let (g, b) = (y[(i, j)].re, y[(i, j)].im);
            if i == j {
                let vi2 = mag[i] * mag[i];
                out.dp_dang[(i, i)] = -q[i] - b * vi2;
                out.dq_dang[(i, i)] = p[i] - g * vi2;
                out.dp_dmag[(i, i)] = p[i] / mag[i] + g * mag[i];
                out.dq_dmag[(i, i)] = q[i] / mag[i] - b * mag[i];
            } else {
                let (s, c) = (ang[i] - ang[j]).sin_cos();
                let vv = mag[i] * mag[j];
                out.dp_dang[(i, j)] = vv * (g * s - b * c);
                out.dq_dang[(i, j)] = -vv * (g * c + b * s);
                out.dp_dmag[(i, j)] = mag[i] * (g * c + b * s);
                out.dq_dmag[(i, j)] = mag[i] * (g * s - b * c);
            }
        }
    }
    out
}

/// Steady operating point of the reduced model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub delta: DVector<f64>,
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
    /// Electrical power of each generator, equal to its balanced mechanical power.
    pub pe: DVector<f64>,
    pub pv: DVector<f64>,
    pub qv: DVector<f64>,
    /// Total slack picked up by the generators in proportion to inertia.
    pub slack: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Reduced network together with its operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub network: ReducedNetwork,
    pub equilibrium: Equilibrium,
}

/// Dispatch targets for the operating-point solve.
#[derive(Debug, Clone)]
pub struct Dispatch {
    pub pm: DVector<f64>,
    /// Slack participation weights (normalized internally).
    pub participation: DVector<f64>,
    pub pvs: DVector<f64>,
    pub qvs: DVector<f64>,
}

impl Dispatch {
    pub fn from_case(case: &NetworkCase) -> Self {
        Self {
            pm: DVector::from_iterator(case.ng(), case.generators.iter().map(|g| g.pm)),
            participation: DVector::from_iterator(case.ng(), case.generators.iter().map(|g| g.m)),
            pvs: DVector::from_iterator(case.nv(), case.vscs.iter().map(|v| v.pvs)),
            qvs: DVector::from_iterator(case.nv(), case.vscs.iter().map(|v| v.qvs)),
        }
    }
}

const MAX_NEWTON: usize = 50;
const NEWTON_TOL: f64 = 1e-11;
const MAX_CONDITION: f64 = 1e12;

pub fn solve_equilibrium(case: &NetworkCase) -> Result<ReducedModel> {
    let network = ReducedNetwork::from_case(case)?;
    let equilibrium = solve_operating_point(&network, &Dispatch::from_case(case))?;
    Ok(ReducedModel { network, equilibrium })
}

/// Newton solve with backtracking line search from a flat start. Unknowns are
/// δ_2..δ_ng, θ, V and the distributed slack; δ_1 is the angle reference.
pub fn solve_operating_point(net: &ReducedNetwork, dispatch: &Dispatch) -> Result<Equilibrium> {
    let (ng, nv) = (net.ng, net.nv);
    if dispatch.pm.len() != ng || dispatch.pvs.len() != nv || dispatch.qvs.len() != nv {
        return Err(GridError::Dimension("dispatch does not match network".into()));
    }
    let total: f64 = dispatch.participation.sum();
    if !(total > 0.0) {
        return Err(GridError::Invalid("slack participation weights must sum to a positive value".into()));
    }
    let share = &dispatch.participation / total;
    let dim = ng + 2 * nv;

    let unpack = |z: &DVector<f64>| {
        let mut delta = DVector::zeros(ng);
        for k in 1..ng {
            delta[k] = z[k - 1];
        }
        let theta = z.rows(ng - 1, nv).into_owned();
        let v = z.rows(ng - 1 + nv, nv).into_owned();
        (delta, theta, v, z[dim - 1])
    };
    let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (delta, theta, v, lam) = unpack(z);
        let inj = injections(net, &delta, &theta, &v)?;
        let mut f = DVector::zeros(dim);
        for k in 0..ng {
            f[k] = inj.pe[k] - dispatch.pm[k] - lam * share[k];
        }
        for j in 0..nv {
            f[ng + j] = inj.pv[j] - dispatch.pvs[j];
            f[ng + nv + j] = inj.qv[j] - dispatch.qvs[j];
        }
        Ok(f)
    };
    let jacobian = |z: &DVector<f64>| -> Result<RealMatrix> {
        let (delta, theta, v, _) = unpack(z);
        let (mag, ang) = net.stack(&delta, &theta, &v)?;
        let pp = power_partials(&net.y, &mag, &ang);
        let mut j = RealMatrix::zeros(dim, dim);
        // Rows below ng + nv are P at node r; the rest are Q at node r − nv.
        for r in 0..dim {
            let (d_ang, d_mag, node) =
                if r < ng + nv { (&pp.dp_dang, &pp.dp_dmag, r) } else { (&pp.dq_dang, &pp.dq_dmag, r - nv) };
            for k in 1..ng {
                j[(r, k - 1)] = d_ang[(node, k)];
            }
            for c in 0..nv {
                j[(r, ng - 1 + c)] = d_ang[(node, ng + c)];
                j[(r, ng - 1 + nv + c)] = d_mag[(node, ng + c)];
            }
            if r < ng {
                j[(r, dim - 1)] = -share[r];
            }
        }
        Ok(j)
    };

    let mut z = DVector::zeros(dim);
    for c in 0..nv {
        z[ng - 1 + nv + c] = 1.0;
    }
    let mut f = residual(&z)?;
    let mut norm = f.amax();
    let mut iterations = 0;
    while norm > NEWTON_TOL {
        if iterations == MAX_NEWTON {
            return Err(GridError::EquilibriumDiverged { iterations, residual: norm });
        }
        iterations += 1;
        let j = jacobian(&z)?;
        let step = j
            .lu()
            .solve(&(-&f))
            .ok_or(GridError::EquilibriumDiverged { iterations, residual: norm })?;
        let mut alpha = 1.0;
        loop {
            let trial = &z + &step * alpha;
            let ft = residual(&trial)?;
            let nt = ft.amax();
            let (_, _, v, _) = unpack(&trial);
            if nt.is_finite() && v.iter().all(|&x| x > 0.0) && nt < (1.0 - 1e-4 * alpha) * norm {
                z = trial;
                f = ft;
                norm = nt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(GridError::EquilibriumDiverged { iterations, residual: norm });
            }
        }
    }

    let j = jacobian(&z)?;
    let sv = j.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < MAX_CONDITION) {
        return Err(GridError::IllConditioned { condition: cond });
    }

    let (delta, theta, v, slack) = unpack(&z);
    let inj = injections(net, &delta, &theta, &v)?;
    let residual = (&inj.pe - &dispatch.pm - &share * slack).amax();
    Ok(Equilibrium { delta, theta, v, pe: inj.pe, pv: inj.pv, qv: inj.qv, slack, iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn net(y: ComplexMatrix, ng: usize, e: Vec<f64>) -> ReducedNetwork {
        let n = y.nrows();
        ReducedNetwork { ng, nv: n - ng, y, e: DVector::from_vec(e), retained_bus_ids: (1..=n).collect() }
    }

    #[test]
    fn single_generator_self_conductance() {
        let y = ComplexMatrix::from_element(1, 1, Complex64::new(0.8, -3.0));
        let n = net(y, 1, vec![1.2]);
        let inj = injections(&n, &DVector::from_element(1, 0.3), &DVector::zeros(0), &DVector::zeros(0)).unwrap();
        assert!((inj.pe[0] - 1.2 * 1.2 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn equal_angles_cancel_sine_terms() {
        let b = Complex64::new(0.0, 5.0);
        let y = ComplexMatrix::from_row_slice(2, 2, &[-b, b, b, -b]);
        let n = net(y, 2, vec![1.0, 1.0]);
        let d = DVector::from_element(2, 0.4);
        let inj = injections(&n, &d, &DVector::zeros(0), &DVector::zeros(0)).unwrap();
        assert!(inj.pe.amax() < 1e-15);
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        let y = ComplexMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        let n = net(y, 1, vec![1.0]);
        assert!(injections(&n, &DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(1)).is_err());
    }

    #[test]
    fn two_machine_transfer_balances() {
        let y12 = Complex64::new(0.2, -4.0);
        let y = ComplexMatrix::from_row_slice(2, 2, &[-y12 + Complex64::new(0.3, 0.0), y12, y12, -y12 + Complex64::new(0.5, 0.0)]);
        let n = net(y, 2, vec![1.05, 1.0]);
        let d = Dispatch {
            pm: DVector::from_vec(vec![0.9, 0.2]),
            participation: DVector::from_vec(vec![1.0, 1.0]),
            pvs: DVector::zeros(0),
            qvs: DVector::zeros(0),
        };
        let eq = solve_operating_point(&n, &d).unwrap();
        let inj = injections(&n, &eq.delta, &eq.theta, &eq.v).unwrap();
        let balanced = &d.pm + DVector::from_element(2, eq.slack / 2.0);
        assert!((inj.pe - balanced).amax() < 1e-8);
        assert_eq!(eq.delta[0], 0.0);
    }
}
