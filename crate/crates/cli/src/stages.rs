//! The pipeline stages: simulate, identify, design, scenario, adapt.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use wadc_core::control::{design_wadc, evaluate_gain, ControlError, GainEvaluation, MlqrDesign};
use wadc_core::dynamics::{simulate_nonlinear, Linearization, NonlinearOptions, PmuWindow, StateSpaceModel};
use wadc_core::estimation::{
    accuracy, make_perturbation, run_identification, window_seed, AccuracyReport, LinearOuSource, NonlinearSource,
    RecordedSource, WindowSource,
};
use wadc_core::grid::NetworkCase;
use wadc_core::linalg::RealMatrix;

use crate::artifacts::{self as art, DesignRecord, IdentificationRecord, SimulationRecord, Stamp};
use crate::config::{Plant, RunConfig};
use crate::error::{CliError, Result, Staged};

/// Seed offset separating the re-identification campaign from the first.
const ADAPT_STREAM: usize = 1000;

/// A loaded case with its linearization, shared by the stages.
pub struct Session {
    pub cfg: RunConfig,
    pub stamp: Stamp,
    pub case: NetworkCase,
    pub lin: Linearization,
    /// Linearized model with `K1 = 0`, the reference for error tables.
    pub truth: StateSpaceModel,
}

impl Session {
    pub fn open(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let case = cfg.load_case()?;
        let (lin, truth) = linearize(&case, cfg.sigma).map_err(|e| relabel(e, "linearize"))?;
        let stamp = Stamp { config_hash: cfg.hash(), seed: cfg.seed };
        art::ensure_dir(&cfg.out)?;
        art::write_text(&art::path(&cfg.out, art::CONFIG), &cfg.to_toml_string())?;
        Ok(Self { cfg, stamp, case, lin, truth })
    }

    fn out(&self, name: &str) -> std::path::PathBuf {
        art::path(&self.cfg.out, name)
    }

    pub fn zero_gain(&self) -> RealMatrix {
        RealMatrix::zeros(self.case.nv(), self.case.ng())
    }

    fn source(&self, case: &NetworkCase, truth: &StateSpaceModel, seed: u64) -> Result<Box<dyn WindowSource>> {
        Ok(match self.cfg.plant {
            Plant::Linear => Box::new(LinearOuSource::new(truth.clone(), self.cfg.rate_hz, seed)),
            Plant::Nonlinear => {
                let lin = Linearization::of_case(case).stage("simulate")?;
                let sigma = DVector::from_element(case.ng(), self.cfg.sigma);
                Box::new(NonlinearSource::new(case.clone(), lin.reduced, sigma, self.cfg.rate_hz, seed))
            }
        })
    }
}

fn linearize(case: &NetworkCase, sigma: f64) -> Result<(Linearization, StateSpaceModel)> {
    let lin = Linearization::of_case(case).stage("linearize")?;
    let model = lin
        .model(&DVector::from_element(case.ng(), sigma), &RealMatrix::zeros(case.nv(), case.ng()))
        .stage("linearize")?;
    Ok((lin, model))
}

fn relabel(e: CliError, stage: &'static str) -> CliError {
    match e {
        CliError::Numerical { message, .. } => CliError::Numerical { stage, message },
        other => other,
    }
}

pub struct Simulation {
    pub windows: Vec<PmuWindow>,
    pub record: SimulationRecord,
}

/// Record the two ambient windows of the identification protocol under
/// `k1` and `k1 + ΔK1` and write them as CSV.
pub fn simulate(s: &Session, k1: &RealMatrix) -> Result<Simulation> {
    let cfg = &s.cfg;
    let id = cfg.identification();
    let plan = make_perturbation(k1, id.alpha_pct, id.fallback_perturbation).stage("simulate")?;
    let mut src = s.source(&s.case, &s.truth, cfg.seed)?;
    let w1 = src.record(k1, cfg.window_s).stage("simulate")?;
    let w2 = src.record(&(k1 + &plan.delta_k1), cfg.window_s).stage("simulate")?;
    for (w, name) in [&w1, &w2].into_iter().zip(art::WINDOWS) {
        art::write_window(&s.out(name), &s.stamp, w)?;
    }
    let record = SimulationRecord {
        plant: cfg.plant,
        k1: k1.clone(),
        delta_k1: plan.delta_k1,
        seeds: src.seeds(),
        samples_per_window: w1.len(),
        windows: art::WINDOWS.iter().map(|n| n.to_string()).collect(),
    };
    art::write_json(&s.out(art::SIMULATION), &s.stamp, &record)?;
    Ok(Simulation { windows: vec![w1, w2], record })
}

/// Read recorded windows from `dir`. A missing second window is left for
/// the protocol to reject.
pub fn read_windows(dir: &Path) -> Result<(Vec<PmuWindow>, Option<RealMatrix>)> {
    let first = art::path(dir, art::WINDOWS[0]);
    if !first.exists() {
        return Err(CliError::Config(format!("no ambient window at {}", first.display())));
    }
    let mut windows = vec![art::read_window(&first)?];
    let second = art::path(dir, art::WINDOWS[1]);
    if second.exists() {
        windows.push(art::read_window(&second)?);
    }
    let sim = art::path(dir, art::SIMULATION);
    let k1 = if sim.exists() { Some(art::read_json::<SimulationRecord>(&sim)?.content.k1) } else { None };
    Ok((windows, k1))
}

/// Estimate `A` and `B` from recorded windows and compare with the case
/// linearization.
pub fn estimate(s: &Session, windows: Vec<PmuWindow>, k1: &RealMatrix) -> Result<IdentificationRecord> {
    let mut src = RecordedSource::new(windows);
    let id = run_identification(&mut src, k1, s.truth.omega0, &s.cfg.identification()).stage("identify")?;
    let acc = accuracy(&id.model, &s.truth);
    Ok(IdentificationRecord { model: id.model, accuracy: acc })
}

pub fn write_identification(s: &Session, rec: &IdentificationRecord) -> Result<()> {
    art::write_json(&s.out(art::MODEL), &s.stamp, rec)?;
    art::write_error_table(&s.out(art::ERROR_TABLE), &s.stamp, &rec.accuracy)
}

/// [`estimate`] and write the model document and error table.
pub fn identify(s: &Session, windows: Vec<PmuWindow>, k1: &RealMatrix) -> Result<IdentificationRecord> {
    let rec = estimate(s, windows, k1)?;
    write_identification(s, &rec)?;
    Ok(rec)
}

/// Outcome of a design: the best design is kept even when the target was
/// missed.
fn design_or_best(a: &RealMatrix, b: &RealMatrix, s: &Session) -> Result<(MlqrDesign, bool)> {
    match design_wadc(a, b, &s.cfg.design()) {
        Ok(d) => Ok((d, true)),
        Err(ControlError::TargetNotReached { design, .. }) => Ok((*design, false)),
        Err(e) => Err(CliError::numerical("design", e)),
    }
}

/// Design the damping gain on an estimated model and judge it on the case
/// linearization.
pub fn plan_design(s: &Session, a: &RealMatrix, b: &RealMatrix) -> Result<DesignRecord> {
    let (design, target_reached) = design_or_best(a, b, s)?;
    let true_system = evaluate_gain(&s.truth.a, &s.truth.b, &design.k1, &s.cfg.design()).stage("design")?;
    Ok(DesignRecord { target_reached, design, true_system })
}

/// [`plan_design`] and write the design document and mode table. A missed
/// target is not an error here; see [`check_target`].
pub fn design(s: &Session, a: &RealMatrix, b: &RealMatrix) -> Result<DesignRecord> {
    let rec = plan_design(s, a, b)?;
    write_design(s, &rec)?;
    Ok(rec)
}

pub fn write_design(s: &Session, rec: &DesignRecord) -> Result<()> {
    art::write_json(&s.out(art::DESIGN), &s.stamp, &rec)?;
    art::write_mode_table(
        &s.out(art::MODE_TABLE),
        &s.stamp,
        &[
            ("open-loop (model)", &rec.design.open_loop),
            ("mlqr (model)", &rec.design.deployed),
            ("open-loop (true)", &rec.true_system.open_loop),
            ("mlqr (true)", &rec.true_system.closed_loop),
        ],
    )
}

pub fn check_target(rec: &DesignRecord) -> Result<()> {
    if rec.target_reached {
        return Ok(());
    }
    let best = rec.design.deployed.min_targeted_damping().unwrap_or(f64::NAN);
    Err(CliError::Numerical {
        stage: "design",
        message: format!(
            "target damping {:.1}% not reached in {} iterations; best design ({:.2}%) written",
            100.0 * rec.design.target_zeta,
            rec.design.iterations,
            100.0 * best
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub trajectory: String,
    /// Peak deviation of any speed from the mean speed (p.u.).
    pub max_relative_speed: f64,
    /// Time after the last event until the relative-speed spread stays below
    /// 5% of its peak.
    pub settling_s: Option<f64>,
    /// Largest `|P_v − P_vs|` over the run, per VSC.
    pub max_vsc_modulation: Vec<f64>,
    pub saturated_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub duration_s: f64,
    pub events: Vec<wadc_core::dynamics::ScenarioEvent>,
    pub runs: Vec<RunSummary>,
}

/// Nonlinear response to the configured events without and with `k1`.
pub fn scenario(s: &Session, k1: &RealMatrix) -> Result<ScenarioSummary> {
    let cfg = &s.cfg;
    let ng = s.case.ng();
    let mut opts = NonlinearOptions::new(ng, cfg.scenario.duration_s);
    opts.sigma = DVector::from_element(ng, cfg.scenario.sigma);
    opts.seed = window_seed(cfg.seed, ADAPT_STREAM - 1);
    let last_event = cfg.scenario.events.iter().map(|e| e.time_s).fold(0.0, f64::max);
    let mut runs = Vec::new();
    for (label, gain, file) in [("open-loop", s.zero_gain(), "scenario_open_loop.csv"), ("wadc", k1.clone(), "scenario_wadc.csv")] {
        let tr = simulate_nonlinear(&s.case, &s.lin.reduced, &gain, &opts, &cfg.scenario.events).stage("scenario")?;
        art::write_trajectory(&s.out(file), &s.stamp, &tr.states, &tr.pv, &tr.qv)?;
        let n = tr.states.len();
        let spread: Vec<f64> = (0..n)
            .map(|k| {
                let w = tr.states.x.row(k).columns(ng, ng).into_owned();
                let mean = w.mean();
                w.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
            })
            .collect();
        let peak = spread.iter().copied().fold(0.0, f64::max);
        let settling_s = (peak > 0.0).then(|| {
            let last = (0..n).rev().find(|&k| spread[k] > 0.05 * peak).unwrap_or(0);
            (tr.states.time(last) - last_event).max(0.0)
        });
        let pvs: Vec<f64> = s.case.vscs.iter().map(|v| v.pvs).collect();
        let max_vsc_modulation =
            (0..tr.pv.ncols()).map(|j| tr.pv.column(j).iter().map(|p| (p - pvs[j]).abs()).fold(0.0, f64::max)).collect();
        runs.push(RunSummary {
            label: label.into(),
            trajectory: file.into(),
            max_relative_speed: peak,
            settling_s,
            max_vsc_modulation,
            saturated_steps: tr.saturated_steps,
        });
    }
    let summary = ScenarioSummary { duration_s: cfg.scenario.duration_s, events: cfg.scenario.events.clone(), runs };
    art::write_json(&s.out(art::SCENARIO), &s.stamp, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRecord {
    pub removed_branch: usize,
    /// The gain in service when the topology changed, on the changed system.
    pub stale: GainEvaluation,
    pub seeds: Vec<u64>,
    pub accuracy: AccuracyReport,
    pub target_reached: bool,
    pub redesign: MlqrDesign,
    /// The redesigned gain on the changed system.
    pub restored: GainEvaluation,
}

/// Remove a branch without telling the controller, then re-identify with
/// the damping loop disengaged and redesign.
pub fn adapt(s: &Session, stale_k1: &RealMatrix, branch: usize) -> Result<AdaptationRecord> {
    let changed = s.case.without_branch(branch).stage("adapt")?;
    let (_, truth) = linearize(&changed, s.cfg.sigma).map_err(|e| relabel(e, "adapt"))?;
    let opts = s.cfg.design();
    let stale = evaluate_gain(&truth.a, &truth.b, stale_k1, &opts).stage("adapt")?;
    let mut src = s.source(&changed, &truth, window_seed(s.cfg.seed, ADAPT_STREAM))?;
    let k0 = s.zero_gain();
    let id = run_identification(src.as_mut(), &k0, truth.omega0, &s.cfg.identification()).stage("adapt")?;
    let (redesign, target_reached) = design_or_best(&id.model.a, &id.model.b, s)?;
    let restored = evaluate_gain(&truth.a, &truth.b, &redesign.k1, &opts).stage("adapt")?;
    let rec = AdaptationRecord {
        removed_branch: branch,
        stale,
        seeds: src.seeds(),
        accuracy: accuracy(&id.model, &truth),
        target_reached,
        redesign,
        restored,
    };
    art::write_json(&s.out(art::ADAPTATION), &s.stamp, &rec)?;
    Ok(rec)
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate_s: f64,
    pub identify_s: f64,
    pub design_s: f64,
    /// Identification from recorded windows plus design.
    pub identify_design_s: f64,
    pub scenario_s: f64,
    pub adapt_s: f64,
}

/// Everything a pipeline run produced. Timings are kept out of the report
/// file so that reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub identification: IdentificationRecord,
    pub design: DesignRecord,
    pub scenario: ScenarioSummary,
    pub adaptation: Option<AdaptationRecord>,
    #[serde(skip)]
    pub timings: Timings,
}

/// Run every stage in order, writing all artifacts to `cfg.out`.
pub fn pipeline(cfg: RunConfig) -> Result<PipelineReport> {
    let s = Session::open(cfg)?;
    let k0 = s.zero_gain();
    let mut t = Timings::default();

    let clock = Instant::now();
    let sim = simulate(&s, &k0)?;
    t.simulate_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let ident = estimate(&s, sim.windows, &k0)?;
    t.identify_s = clock.elapsed().as_secs_f64();
    write_identification(&s, &ident)?;

    let clock = Instant::now();
    let design = plan_design(&s, &ident.model.a, &ident.model.b)?;
    t.design_s = clock.elapsed().as_secs_f64();
    t.identify_design_s = t.identify_s + t.design_s;
    write_design(&s, &design)?;

    let clock = Instant::now();
    let scenario = scenario(&s, &design.design.k1)?;
    t.scenario_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let adaptation = s.cfg.outage_branch.map(|b| adapt(&s, &design.design.k1, b)).transpose()?;
    t.adapt_s = clock.elapsed().as_secs_f64();

    let mut seeds = sim.record.seeds.clone();
    if let Some(a) = &adaptation {
        seeds.extend(&a.seeds);
    }
    let report = PipelineReport {
        config_hash: s.stamp.config_hash.clone(),
        config: s.cfg.clone(),
        seeds,
        identification: ident,
        design,
        scenario,
        adaptation,
        timings: t,
    };
    art::write_json(&s.out(art::REPORT), &s.stamp, &report)?;
    art::write_json(&s.out(art::TIMINGS), &s.stamp, &report.timings)?;
    check_target(&report.design)?;
    Ok(report)
}
