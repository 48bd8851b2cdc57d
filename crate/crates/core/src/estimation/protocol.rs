use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{estimate_ac, make_perturbation, sample_stats, separate_ab, EstimatedModel, EstimationError, Result};
use crate::dynamics::{
    emulate_pmu, simulate_linear_ou, simulate_nonlinear, NonlinearOptions, OuStart, PmuWindow, StateSpaceModel,
};
use crate::grid::{NetworkCase, ReducedModel};
use crate::linalg::RealMatrix;

/// Provider of ambient PMU windows recorded under a given VSC gain.
pub trait WindowSource {
    /// Record `duration_s` of ambient data with the VSCs running `k1`.
    fn record(&mut self, k1: &RealMatrix, duration_s: f64) -> Result<PmuWindow>;

    /// Seeds consumed so far, for provenance.
    fn seeds(&self) -> Vec<u64> {
        Vec::new()
    }
}

/// Derive the seed of the `index`-th window of a campaign.
pub fn window_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Exact-discretized linear OU plant. Each window is preceded by `settle_s`
/// of unrecorded evolution under the new gain; the state carries over.
#[derive(Debug, Clone)]
pub struct LinearOuSource {
    pub model: StateSpaceModel,
    pub rate_hz: f64,
    pub seed: u64,
    pub settle_s: f64,
    pub measurement_noise: f64,
    state: Option<DVector<f64>>,
    used: Vec<u64>,
}

impl LinearOuSource {
    pub fn new(model: StateSpaceModel, rate_hz: f64, seed: u64) -> Self {
        Self { model, rate_hz, seed, settle_s: 60.0, measurement_noise: 0.0, state: None, used: Vec::new() }
    }
}

impl WindowSource for LinearOuSource {
    fn record(&mut self, k1: &RealMatrix, duration_s: f64) -> Result<PmuWindow> {
        let model = self.model.with_gain(k1)?;
        let dt = 1.0 / self.rate_hz;
        let seed = window_seed(self.seed, self.used.len());
        self.used.push(seed);
        let x0 = self.state.take().unwrap_or_else(|| DVector::zeros(model.ac.nrows()));
        let total = self.settle_s + duration_s;
        let traj = simulate_linear_ou(&model, seed, dt, total + dt, &OuStart::FromState(x0))?;
        let skip = (self.settle_s * self.rate_hz).round() as usize;
        let keep = (duration_s * self.rate_hz).round() as usize;
        if skip + keep > traj.len() {
            return Err(EstimationError::Invalid("window longer than simulated span".into()));
        }
        self.state = Some(traj.x.row(traj.len() - 1).transpose());
        let mut win = crate::dynamics::StateTrajectory { dt, t0: 0.0, ng: traj.ng, x: traj.x.rows(skip, keep).into_owned() };
        win.t0 = skip as f64 * dt;
        Ok(emulate_pmu(&win, self.rate_hz, self.measurement_noise, seed ^ 0x5555)?)
    }

    fn seeds(&self) -> Vec<u64> {
        self.used.clone()
    }
}

/// Nonlinear network simulation started at the operating point.
#[derive(Debug, Clone)]
pub struct NonlinearSource {
    pub case: NetworkCase,
    pub reduced: ReducedModel,
    pub sigma: DVector<f64>,
    pub rate_hz: f64,
    pub seed: u64,
    pub settle_s: f64,
    used: Vec<u64>,
}

impl NonlinearSource {
    pub fn new(case: NetworkCase, reduced: ReducedModel, sigma: DVector<f64>, rate_hz: f64, seed: u64) -> Self {
        Self { case, reduced, sigma, rate_hz, seed, settle_s: 60.0, used: Vec::new() }
    }
}

impl WindowSource for NonlinearSource {
    fn record(&mut self, k1: &RealMatrix, duration_s: f64) -> Result<PmuWindow> {
        let seed = window_seed(self.seed, self.used.len());
        self.used.push(seed);
        let mut opts = NonlinearOptions::new(self.case.ng(), self.settle_s + duration_s);
        opts.seed = seed;
        opts.sigma = self.sigma.clone();
        let traj = simulate_nonlinear(&self.case, &self.reduced, k1, &opts, &[])?;
        let skip = (self.settle_s / opts.dt).round() as usize;
        let keep = (duration_s / opts.dt).round() as usize;
        let x = traj.states.x.rows(skip, keep.min(traj.states.len() - skip)).into_owned();
        let win = crate::dynamics::StateTrajectory { dt: opts.dt, t0: skip as f64 * opts.dt, ng: traj.states.ng, x };
        Ok(emulate_pmu(&win, self.rate_hz, 0.0, seed)?)
    }

    fn seeds(&self) -> Vec<u64> {
        self.used.clone()
    }
}

/// Windows recorded elsewhere, consumed in order.
#[derive(Debug, Clone, Default)]
pub struct RecordedSource {
    windows: std::collections::VecDeque<PmuWindow>,
}

impl RecordedSource {
    pub fn new(windows: Vec<PmuWindow>) -> Self {
        Self { windows: windows.into() }
    }
}

impl WindowSource for RecordedSource {
    fn record(&mut self, _k1: &RealMatrix, _duration_s: f64) -> Result<PmuWindow> {
        self.windows.pop_front().ok_or_else(|| {
            EstimationError::Protocol("the protocol needs a second window recorded after the gain perturbation".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationConfig {
    pub tau_s: f64,
    pub window_s: f64,
    pub alpha_pct: f64,
    /// Absolute gain step for VSC rows whose gains are all zero.
    pub fallback_perturbation: f64,
    /// Reject a window if its half-means differ by more than this many
    /// standard errors on any ω channel; `None` disables the check.
    pub stationarity_sigmas: Option<f64>,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            tau_s: 0.1,
            window_s: 300.0,
            alpha_pct: 5.0,
            fallback_perturbation: -300.0,
            stationarity_sigmas: Some(3.0),
        }
    }
}

const BATCHES: usize = 20;

/// Compare first- and second-half means of every ω channel against the
/// standard error of their difference, estimated from batch means so that
/// serial correlation is accounted for.
pub fn check_stationarity(w: &PmuWindow, sigmas: f64, window: usize) -> Result<()> {
    let n = w.len();
    if n < BATCHES {
        return Ok(());
    }
    let per = n / BATCHES;
    let half = BATCHES / 2;
    for ch in 0..w.ng {
        let col = w.samples.column(w.ng + ch);
        let means: Vec<f64> = (0..BATCHES).map(|b| col.rows(b * per, per).mean()).collect();
        let grand = means.iter().sum::<f64>() / BATCHES as f64;
        let var_b = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
        let first = means[..half].iter().sum::<f64>() / half as f64;
        let second = means[half..].iter().sum::<f64>() / half as f64;
        let se = (2.0 * var_b / half as f64).sqrt();
        let shift = (first - second).abs();
        if shift > sigmas * se {
            return Err(EstimationError::NotStationary { window, channel: ch, shift, threshold: sigmas * se });
        }
    }
    Ok(())
}

/// Outcome of one identification campaign.
#[derive(Debug, Clone)]
pub struct Identification {
    pub model: EstimatedModel,
    pub windows: [PmuWindow; 2],
    /// Gain left in place after the campaign (the original `K1`).
    pub restored_k1: RealMatrix,
}

/// Record a window under `K1`, apply the perturbation to every VSC at
/// once, record a second window, then separate `A` and `B`.
pub fn run_identification(
    source: &mut dyn WindowSource,
    k1: &RealMatrix,
    omega0: f64,
    cfg: &IdentificationConfig,
) -> Result<Identification> {
    let plan = make_perturbation(k1, cfg.alpha_pct, cfg.fallback_perturbation)?;
    let w1 = source.record(k1, cfg.window_s)?;
    let w2 = source.record(&(k1 + &plan.delta_k1), cfg.window_s)?;
    if let Some(sig) = cfg.stationarity_sigmas {
        check_stationarity(&w1, sig, 1)?;
        check_stationarity(&w2, sig, 2)?;
    }
    if w1.rate_hz != w2.rate_hz || w1.ng != w2.ng {
        return Err(EstimationError::Protocol("both windows must share rate and channel layout".into()));
    }
    let e1 = estimate_ac(&sample_stats(&w1, cfg.tau_s)?)?;
    let e2 = estimate_ac(&sample_stats(&w2, cfg.tau_s)?)?;
    let mut model = separate_ab(&e1.ac, &e2.ac, &plan, k1, omega0)?;
    model.diagnostics.window1 = Some(e1.diagnostics);
    model.diagnostics.window2 = Some(e2.diagnostics);
    model.provenance = super::Provenance {
        seeds: source.seeds(),
        window_s: cfg.window_s,
        rate_hz: w1.rate_hz,
        tau_s: cfg.tau_s,
        alpha_pct: cfg.alpha_pct,
        window_starts_s: vec![w1.start_s, w2.start_s],
    };
    Ok(Identification { model, windows: [w1, w2], restored_k1: k1.clone() })
}

/// Relative error of one matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryError {
    pub row: usize,
    pub col: usize,
    pub truth: f64,
    pub estimate: f64,
    pub relative: f64,
}

/// Relative errors of an identified model against the true one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub a_frobenius: f64,
    pub minus_minv_d_frobenius: f64,
    pub abar1_frobenius: f64,
    pub abar2_frobenius: f64,
    /// Top-quartile entries by true magnitude, with their errors.
    pub minus_minv_d_dominant: Vec<EntryError>,
    pub abar1_dominant: Vec<EntryError>,
    pub abar2_dominant: Vec<EntryError>,
}

/// The `ceil(n/4)` largest-magnitude nonzero entries of `truth` (entries
/// tied with the smallest selected magnitude included), compared with
/// `estimate`.
pub fn dominant_entries(estimate: &RealMatrix, truth: &RealMatrix) -> Vec<EntryError> {
    let mut mags: Vec<f64> = truth.iter().map(|x| x.abs()).collect();
    if mags.is_empty() {
        return Vec::new();
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    let threshold = mags[mags.len().div_ceil(4) - 1];
    let mut out = Vec::new();
    for c in 0..truth.ncols() {
        for r in 0..truth.nrows() {
            let t = truth[(r, c)];
            if t != 0.0 && t.abs() >= threshold {
                let e = estimate[(r, c)];
                out.push(EntryError { row: r, col: c, truth: t, estimate: e, relative: ((e - t) / t).abs() });
            }
        }
    }
    out
}

pub fn accuracy(est: &EstimatedModel, truth: &StateSpaceModel) -> AccuracyReport {
    use crate::linalg::relative_frobenius_error as rel;
    let md = truth.minus_minv_d();
    let a1 = truth.abar1();
    let a2 = truth.abar2();
    AccuracyReport {
        a_frobenius: rel(&est.a, &truth.a),
        minus_minv_d_frobenius: rel(&est.minus_minv_d, &md),
        abar1_frobenius: rel(&est.abar1, &a1),
        abar2_frobenius: rel(&est.abar2, &a2),
        minus_minv_d_dominant: dominant_entries(&est.minus_minv_d, &md),
        abar1_dominant: dominant_entries(&est.abar1, &a1),
        abar2_dominant: dominant_entries(&est.abar2, &a2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recorded_source_reports_missing_window() {
        let w = PmuWindow { rate_hz: 50.0, start_s: 0.0, ng: 1, samples: RealMatrix::zeros(10, 2) };
        let mut src = RecordedSource::new(vec![w]);
        let k1 = RealMatrix::from_element(1, 1, 1.0);
        let err = run_identification(&mut src, &k1, 1.0, &IdentificationConfig::default()).unwrap_err();
        assert!(matches!(err, EstimationError::Protocol(_)));
    }

    #[test]
    fn dominant_entries_pick_top_quartile() {
        let truth = RealMatrix::from_row_slice(2, 2, &[10.0, 1.0, -1.0, 0.5]);
        let est = RealMatrix::from_row_slice(2, 2, &[11.0, 5.0, 5.0, 5.0]);
        let d = dominant_entries(&est, &truth);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].row, d[0].col), (0, 0));
        assert!((d[0].relative - 0.1).abs() < 1e-15);
        // Ties at the threshold are all kept; zeros never are.
        let truth = RealMatrix::from_row_slice(2, 4, &[2.0, -2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(dominant_entries(&truth, &truth).len(), 2);
    }

    #[test]
    fn drifting_window_is_rejected() {
        let n = 2000;
        let samples = RealMatrix::from_fn(n, 2, |r, c| if c == 1 { r as f64 * 1e-3 + ((r * 7919) % 13) as f64 * 1e-4 } else { 0.0 });
        let w = PmuWindow { rate_hz: 50.0, start_s: 0.0, ng: 1, samples };
        assert!(matches!(check_stationarity(&w, 3.0, 1), Err(EstimationError::NotStationary { channel: 0, .. })));
    }

    #[test]
    fn seeds_are_distinct_per_window() {
        assert_ne!(window_seed(1, 0), window_seed(1, 1));
        assert_eq!(window_seed(1, 0), 1);
    }
}
