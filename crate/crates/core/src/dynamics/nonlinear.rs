use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DynamicsError, Result, StateTrajectory};
use crate::grid::{jacobian_blocks_at, injections, NetworkCase, ReducedModel, ReducedNetwork};
use crate::linalg::RealMatrix;

/// Shunt conductance representing a bolted three-phase fault.
pub const FAULT_CONDUCTANCE: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    LineOutage { branch: usize },
    /// Scale the load admittance at `bus` by `1 + fraction`.
    LoadStep { bus: usize, fraction: f64 },
    /// Scale the mechanical power of generator `generator` (0-based) by `1 + fraction`.
    GenerationStep { generator: usize, fraction: f64 },
    ThreePhaseFault { bus: usize, clearing_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub time_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearOptions {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Per-generator load-noise intensity.
    pub sigma: DVector<f64>,
    /// Any VSC voltage below this magnitude aborts the run.
    pub min_voltage: f64,
    pub delta_offset: Option<DVector<f64>>,
    pub omega_offset: Option<DVector<f64>>,
}

impl NonlinearOptions {
    pub fn new(ng: usize, duration: f64) -> Self {
        Self {
            dt: 0.01,
            duration,
            seed: 0,
            sigma: DVector::zeros(ng),
            min_voltage: 0.05,
            delta_offset: None,
            omega_offset: None,
        }
    }
}

/// Rotor angles (rad) and speed deviations (p.u.) with the VSC terminal
/// quantities at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTrajectory {
    pub states: StateTrajectory,
    pub theta: RealMatrix,
    pub v: RealMatrix,
    pub pv: RealMatrix,
    pub qv: RealMatrix,
    /// Steps at which at least one VSC sat on its modulation limit.
    pub saturated_steps: usize,
}

struct Plant<'a> {
    net: ReducedNetwork,
    pm: DVector<f64>,
    m: &'a DVector<f64>,
    d: &'a DVector<f64>,
    k1: &'a RealMatrix,
    pvs: DVector<f64>,
    qvs: DVector<f64>,
    limit: DVector<f64>,
    noise_gain: DVector<f64>,
}

impl Plant<'_> {
    fn modulation(&self, omega: &DVector<f64>) -> (DVector<f64>, Vec<bool>) {
        let raw = self.k1 * omega;
        let mut free = vec![true; raw.len()];
        let sat = DVector::from_fn(raw.len(), |j, _| {
            if raw[j].abs() > self.limit[j] {
                free[j] = false;
                raw[j].signum() * self.limit[j]
            } else {
                raw[j]
            }
        });
        (sat, free)
    }

    fn swing(&self, delta: &DVector<f64>, omega: &DVector<f64>, theta: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let inj = injections(&self.net, delta, theta, v)?;
        Ok(&self.pm - inj.pe - self.d.component_mul(omega))
    }
}

struct Split {
    ng: usize,
    nv: usize,
}

impl Split {
    fn parts(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let (ng, nv) = (self.ng, self.nv);
        (
            z.rows(0, ng).into_owned(),
            z.rows(ng, ng).into_owned(),
            z.rows(2 * ng, nv).into_owned(),
            z.rows(2 * ng + nv, nv).into_owned(),
        )
    }
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX: usize = 20;

/// Implicit trapezoidal integration of the swing equations with the VSC
/// algebraic network equations solved simultaneously at every step.
pub fn simulate_nonlinear(
    case: &NetworkCase,
    rm: &ReducedModel,
    k1: &RealMatrix,
    opts: &NonlinearOptions,
    events: &[ScenarioEvent],
) -> Result<NonlinearTrajectory> {
    let (ng, nv) = (case.ng(), case.nv());
    if k1.shape() != (nv, ng) {
        return Err(DynamicsError::Dimension(format!("K1 must be {nv}x{ng}")));
    }
    if opts.sigma.len() != ng {
        return Err(DynamicsError::Dimension("sigma needs one entry per generator".into()));
    }
    if !(opts.dt > 0.0) || !(opts.duration > 0.0) {
        return Err(DynamicsError::Invalid("dt and duration must be positive".into()));
    }
    let schedule = build_schedule(case, events, opts.duration)?;

    let m = DVector::from_iterator(ng, case.generators.iter().map(|g| g.m));
    let d = DVector::from_iterator(ng, case.generators.iter().map(|g| g.d));
    let omega0 = case.omega0();
    let eq = &rm.equilibrium;
    let mut plant = Plant {
        net: rm.network.clone(),
        pm: eq.pe.clone(),
        m: &m,
        d: &d,
        k1,
        pvs: DVector::from_iterator(nv, case.vscs.iter().map(|v| v.pvs)),
        qvs: DVector::from_iterator(nv, case.vscs.iter().map(|v| v.qvs)),
        limit: DVector::from_iterator(nv, case.vscs.iter().map(|v| v.limit)),
        noise_gain: noise_gain(&rm.network),
    };
    let split = Split { ng, nv };

    let mut z = DVector::zeros(2 * ng + 2 * nv);
    z.rows_mut(0, ng).copy_from(&eq.delta);
    z.rows_mut(2 * ng, nv).copy_from(&eq.theta);
    z.rows_mut(2 * ng + nv, nv).copy_from(&eq.v);
    if let Some(off) = &opts.delta_offset {
        if off.len() != ng {
            return Err(DynamicsError::Dimension("delta offset length".into()));
        }
        let mut rows = z.rows_mut(0, ng);
        rows += off;
    }
    if let Some(off) = &opts.omega_offset {
        if off.len() != ng {
            return Err(DynamicsError::Dimension("omega offset length".into()));
        }
        z.rows_mut(ng, ng).copy_from(off);
    }
    let perturbed = opts.delta_offset.is_some() || opts.omega_offset.is_some();
    if perturbed {
        z = solve_algebraic(&plant, &split, &z, 0.0)?;
    }

    let steps = (opts.duration / opts.dt).round() as usize;
    let h = opts.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = NonlinearTrajectory {
        states: StateTrajectory { dt: h, t0: 0.0, ng, x: RealMatrix::zeros(steps, 2 * ng) },
        theta: RealMatrix::zeros(steps, nv),
        v: RealMatrix::zeros(steps, nv),
        pv: RealMatrix::zeros(steps, nv),
        qv: RealMatrix::zeros(steps, nv),
        saturated_steps: 0,
    };
    let mut work_case = case.clone();
    let mut fault: Option<usize> = None;
    let mut next_event = 0;

    for k in 0..steps {
        let t = k as f64 * h;
        let mut changed = false;
        while next_event < schedule.len() && schedule[next_event].0 <= t + 0.5 * h {
            apply(&schedule[next_event], &mut work_case, &mut fault, &mut plant.pm)?;
            next_event += 1;
            changed = true;
        }
        if changed {
            let effective = match fault {
                Some(bus) => work_case.with_shunt(bus, FAULT_CONDUCTANCE)?,
                None => work_case.clone(),
            };
            plant.net = ReducedNetwork::from_case(&effective)?;
            plant.noise_gain = noise_gain(&plant.net);
            z = resolve_after_change(&plant, &split, &z, &eq.v, t)?;
        }

        let (delta, omega, theta, v) = split.parts(&z);
        check_voltage(&v, opts.min_voltage, t, case)?;
        out.states.x.view_mut((k, 0), (1, ng)).copy_from(&delta.transpose());
        out.states.x.view_mut((k, ng), (1, ng)).copy_from(&omega.transpose());
        let inj = injections(&plant.net, &delta, &theta, &v)?;
        out.theta.row_mut(k).copy_from(&theta.transpose());
        out.v.row_mut(k).copy_from(&v.transpose());
        out.pv.row_mut(k).copy_from(&inj.pv.transpose());
        out.qv.row_mut(k).copy_from(&inj.qv.transpose());
        let (_, free) = plant.modulation(&omega);
        if free.iter().any(|f| !f) {
            out.saturated_steps += 1;
        }

        if k + 1 == steps {
            break;
        }
        let xi: DVector<f64> = DVector::from_fn(ng, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let eta = DVector::from_fn(ng, |i, _| plant.noise_gain[i] * opts.sigma[i] * h.sqrt() * xi[i]);
        z = trapezoid_step(&plant, &split, &z, h, omega0, &eta, t + h)?;
    }
    Ok(out)
}

fn noise_gain(net: &ReducedNetwork) -> DVector<f64> {
    DVector::from_fn(net.ng, |i, _| net.e[i] * net.e[i] * net.y[(i, i)].re)
}

fn check_voltage(v: &DVector<f64>, min_voltage: f64, t: f64, case: &NetworkCase) -> Result<()> {
    for (j, &vj) in v.iter().enumerate() {
        if !(vj > min_voltage) {
            return Err(DynamicsError::VoltageCollapse { time: t, bus: case.vscs[j].bus, voltage: vj });
        }
    }
    Ok(())
}

enum Action {
    Event(EventKind),
    ClearFault,
}

fn build_schedule(case: &NetworkCase, events: &[ScenarioEvent], duration: f64) -> Result<Vec<(f64, Action)>> {
    let mut out = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        if !(ev.time_s >= 0.0 && ev.time_s <= duration) {
            return Err(DynamicsError::Event { index: i, reason: format!("time {} outside [0, {duration}]", ev.time_s) });
        }
        let bad = |reason: String| Err(DynamicsError::Event { index: i, reason });
        match &ev.kind {
            EventKind::LineOutage { branch } => {
                if !case.branches.iter().any(|b| b.id == *branch) {
                    return bad(format!("unknown branch {branch}"));
                }
            }
            EventKind::LoadStep { bus, fraction } => {
                if !case.loads.iter().any(|l| l.bus == *bus) || !fraction.is_finite() {
                    return bad(format!("no load at bus {bus}"));
                }
            }
            EventKind::GenerationStep { generator, fraction } => {
                if *generator >= case.ng() || !fraction.is_finite() {
                    return bad(format!("unknown generator {generator}"));
                }
            }
            EventKind::ThreePhaseFault { bus, clearing_s } => {
                if !case.bus_index().contains_key(bus) {
                    return bad(format!("unknown bus {bus}"));
                }
                if !(*clearing_s > 0.0) {
                    return bad("fault clearing time must be positive".into());
                }
                out.push((ev.time_s + clearing_s, Action::ClearFault));
            }
        }
        out.push((ev.time_s, Action::Event(ev.kind.clone())));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

fn apply(action: &(f64, Action), case: &mut NetworkCase, fault: &mut Option<usize>, pm: &mut DVector<f64>) -> Result<()> {
    match &action.1 {
        Action::ClearFault => *fault = None,
        Action::Event(EventKind::LineOutage { branch }) => *case = case.without_branch(*branch)?,
        Action::Event(EventKind::LoadStep { bus, fraction }) => *case = case.with_load_scaled(*bus, *fraction)?,
        Action::Event(EventKind::GenerationStep { generator, fraction }) => pm[*generator] *= 1.0 + fraction,
        Action::Event(EventKind::ThreePhaseFault { bus, .. }) => *fault = Some(*bus),
    }
    Ok(())
}

/// Re-solve θ and V for fixed δ, ω.
/// PQ terminals admit a high- and a low-voltage solution. After a topology
/// change, solve from the current state and from the initial voltages and
/// keep the higher-voltage result.
fn resolve_after_change(plant: &Plant, split: &Split, z: &DVector<f64>, v_init: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let (ng, nv) = (split.ng, split.nv);
    let mut restart = z.clone();
    restart.rows_mut(2 * ng + nv, nv).copy_from(v_init);
    let min_v = |x: &DVector<f64>| x.rows(2 * ng + nv, nv).min();
    match (solve_algebraic(plant, split, z, t), solve_algebraic(plant, split, &restart, t)) {
        (Ok(a), Ok(b)) => Ok(if min_v(&b) > min_v(&a) { b } else { a }),
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(e), Err(_)) => Err(e),
    }
}

fn solve_algebraic(plant: &Plant, split: &Split, z: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let (ng, nv) = (split.ng, split.nv);
    if nv == 0 {
        return Ok(z.clone());
    }
    let mut z = z.clone();
    // Damped steps are slower near collapse (e.g. just after a fault clears).
    for _ in 0..4 * NEWTON_MAX {
        let (delta, omega, theta, v) = split.parts(&z);
        let inj = injections(&plant.net, &delta, &theta, &v)?;
        let (dp, _) = plant.modulation(&omega);
        let mut r = DVector::zeros(2 * nv);
        r.rows_mut(0, nv).copy_from(&(&inj.pv - &plant.pvs - dp));
        r.rows_mut(nv, nv).copy_from(&(&inj.qv - &plant.qvs));
        if r.amax() < NEWTON_TOL {
            return Ok(z);
        }
        let jb = jacobian_blocks_at(&plant.net, &delta, &theta, &v)?;
        let mut j = RealMatrix::zeros(2 * nv, 2 * nv);
        j.view_mut((0, 0), (nv, nv)).copy_from(&jb.a22);
        j.view_mut((0, nv), (nv, nv)).copy_from(&jb.a23);
        j.view_mut((nv, 0), (nv, nv)).copy_from(&jb.a32);
        j.view_mut((nv, nv), (nv, nv)).copy_from(&jb.a33);
        let step = j.lu().solve(&(-r)).ok_or(DynamicsError::AlgebraicDivergence { time: t })?;
        // Never let a voltage magnitude lose more than half its value in one
        // step, which keeps Newton off the mirrored (V < 0) solution.
        let mut scale: f64 = 1.0;
        for k in 0..nv {
            let dv = step[nv + k];
            if dv < -0.5 * v[k] {
                scale = scale.min(-0.5 * v[k] / dv);
            }
        }
        let mut tail = z.rows_mut(2 * ng, 2 * nv);
        tail += step * scale;
        if !z.iter().all(|x| x.is_finite()) {
            break;
        }
    }
    Err(DynamicsError::AlgebraicDivergence { time: t })
}

fn trapezoid_step(
    plant: &Plant,
    split: &Split,
    z0: &DVector<f64>,
    h: f64,
    omega0: f64,
    eta: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let (ng, nv) = (split.ng, split.nv);
    let n = 2 * ng + 2 * nv;
    let (d0, w0, th0, v0) = split.parts(z0);
    let f0 = plant.swing(&d0, &w0, &th0, &v0)?;

    // Explicit predictor, then Newton on the coupled residual.
    let mut z = z0.clone();
    {
        let mut dd = z.rows_mut(0, ng);
        dd += &w0 * (h * omega0);
    }
    {
        let acc = f0.component_div(plant.m) * h;
        let mut ww = z.rows_mut(ng, ng);
        ww += acc;
    }

    for _ in 0..NEWTON_MAX {
        let (delta, omega, theta, v) = split.parts(&z);
        let inj = injections(&plant.net, &delta, &theta, &v)?;
        let f1 = &plant.pm - &inj.pe - plant.d.component_mul(&omega);
        let (dp, free) = plant.modulation(&omega);

        let mut r = DVector::zeros(n);
        r.rows_mut(0, ng).copy_from(&(&delta - &d0 - (&omega + &w0) * (0.5 * h * omega0)));
        r.rows_mut(ng, ng)
            .copy_from(&(plant.m.component_mul(&(&omega - &w0)) - (&f0 + &f1) * (0.5 * h) + eta));
        r.rows_mut(2 * ng, nv).copy_from(&(&inj.pv - &plant.pvs - dp));
        r.rows_mut(2 * ng + nv, nv).copy_from(&(&inj.qv - &plant.qvs));
        if r.amax() < NEWTON_TOL {
            return Ok(z);
        }

        let jb = jacobian_blocks_at(&plant.net, &delta, &theta, &v)?;
        let mut j = RealMatrix::zeros(n, n);
        let hh = 0.5 * h;
        for i in 0..ng {
            j[(i, i)] = 1.0;
            j[(i, ng + i)] = -hh * omega0;
            j[(ng + i, ng + i)] = plant.m[i] + hh * plant.d[i];
        }
        j.view_mut((ng, 0), (ng, ng)).copy_from(&(&jb.a11 * hh));
        j.view_mut((ng, 2 * ng), (ng, nv)).copy_from(&(&jb.a12 * hh));
        j.view_mut((ng, 2 * ng + nv), (ng, nv)).copy_from(&(&jb.a13 * hh));
        j.view_mut((2 * ng, 0), (nv, ng)).copy_from(&jb.a21);
        j.view_mut((2 * ng, 2 * ng), (nv, nv)).copy_from(&jb.a22);
        j.view_mut((2 * ng, 2 * ng + nv), (nv, nv)).copy_from(&jb.a23);
        j.view_mut((2 * ng + nv, 0), (nv, ng)).copy_from(&jb.a31);
        j.view_mut((2 * ng + nv, 2 * ng), (nv, nv)).copy_from(&jb.a32);
        j.view_mut((2 * ng + nv, 2 * ng + nv), (nv, nv)).copy_from(&jb.a33);
        for r_ in 0..nv {
            if free[r_] {
                for c in 0..ng {
                    j[(2 * ng + r_, ng + c)] = -plant.k1[(r_, c)];
                }
            }
        }
        let step = j.lu().solve(&(-r)).ok_or(DynamicsError::AlgebraicDivergence { time: t })?;
        z += step;
        if !z.iter().all(|x| x.is_finite()) {
            break;
        }
    }
    Err(DynamicsError::AlgebraicDivergence { time: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::solve_equilibrium;

    #[test]
    fn quiet_run_stays_at_equilibrium() {
        let case = cases::two_area();
        let rm = solve_equilibrium(&case).unwrap();
        let k1 = RealMatrix::zeros(1, 4);
        let tr = simulate_nonlinear(&case, &rm, &k1, &NonlinearOptions::new(4, 50.0), &[]).unwrap();
        let last = tr.states.x.row(tr.states.len() - 1);
        for i in 0..4 {
            assert!((last[i] - rm.equilibrium.delta[i]).abs() < 1e-8);
            assert!(last[4 + i].abs() < 1e-8);
        }
        assert!((tr.pv[(tr.pv.nrows() - 1, 0)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn unknown_branch_event_is_rejected() {
        let case = cases::two_area();
        let rm = solve_equilibrium(&case).unwrap();
        let ev = ScenarioEvent { time_s: 1.0, kind: EventKind::LineOutage { branch: 999 } };
        let res = simulate_nonlinear(&case, &rm, &RealMatrix::zeros(1, 4), &NonlinearOptions::new(4, 2.0), &[ev]);
        assert!(matches!(res, Err(DynamicsError::Event { index: 0, .. })));
    }

    #[test]
    fn modulation_saturates() {
        let case = cases::two_area();
        let rm = solve_equilibrium(&case).unwrap();
        let k1 = RealMatrix::from_row_slice(1, 4, &[-1e5, 0.0, 0.0, 0.0]);
        let mut opts = NonlinearOptions::new(4, 1.0);
        opts.omega_offset = Some(DVector::from_vec(vec![1e-3, 0.0, 0.0, 0.0]));
        let tr = simulate_nonlinear(&case, &rm, &k1, &opts, &[]).unwrap();
        assert!(tr.saturated_steps > 0);
        let limit = case.vscs[0].limit;
        assert!(tr.pv.iter().all(|p| (p - 0.5).abs() <= limit + 1e-8));
    }

    #[test]
    fn event_serde_shape() {
        let ev = ScenarioEvent { time_s: 1.0, kind: EventKind::ThreePhaseFault { bus: 8, clearing_s: 0.0833 } };
        let json = serde_json::to_string(&ev).unwrap();
        assert_eq!(json, r#"{"time_s":1.0,"kind":"three_phase_fault","bus":8,"clearing_s":0.0833}"#);
        let back: ScenarioEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ev);
    }
}
