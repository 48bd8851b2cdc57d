use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wadc_cli::artifacts::{self as art, DesignRecord, IdentificationRecord};
use wadc_cli::stages::{self, Session};
use wadc_cli::{CliError, Plant, Result, RunConfig};
use wadc_core::control::ModeReport;
use wadc_core::dynamics::ScenarioEvent;
use wadc_core::linalg::RealMatrix;

#[derive(Parser)]
#[command(name = "wadc", version, about = "Ambient-data identification and modal-LQR wide-area damping design")]
struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Bundled case name (two-area) or path to a case TOML file.
    #[arg(long, global = true)]
    case: Option<String>,
    #[arg(long, global = true, value_enum)]
    plant: Option<Plant>,
    /// Load-noise intensity per generator.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    window_s: Option<f64>,
    #[arg(long, global = true)]
    rate_hz: Option<f64>,
    #[arg(long, global = true)]
    tau_ms: Option<f64>,
    #[arg(long, global = true)]
    alpha_pct: Option<f64>,
    #[arg(long, global = true)]
    target_zeta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Branch removed before re-identification (pipeline only).
    #[arg(long, global = true)]
    outage_branch: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Record the two ambient PMU windows of the identification protocol.
    Simulate {
        /// Design document whose gain runs on the VSCs (default: zero gain).
        #[arg(long)]
        gain: Option<PathBuf>,
    },
    /// Estimate A and B from ambient windows and tabulate errors against the case.
    Identify {
        /// Directory holding window1.csv and window2.csv; simulated when absent.
        #[arg(long)]
        windows: Option<PathBuf>,
        #[arg(long)]
        gain: Option<PathBuf>,
    },
    /// Design the VSC damping gain on an estimated model.
    Design {
        /// Estimated-model document (default: <out>/estimated_model.json).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Nonlinear event response with and without the designed gain.
    Scenario {
        /// Design document (default: <out>/design.json).
        #[arg(long)]
        design: Option<PathBuf>,
        /// TOML file with [[events]] tables replacing the configured events.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Simulate, identify, design, run the scenario and, when an outage
    /// branch is set, re-identify and redesign after the outage.
    Pipeline,
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        set!(case, plant, sigma, window_s, rate_hz, tau_ms, alpha_pct, target_zeta, seed, out);
        if self.outage_branch.is_some() {
            cfg.outage_branch = self.outage_branch;
        }
    }
}

fn gain_from(path: &Path, s: &Session) -> Result<RealMatrix> {
    let k1 = art::read_json::<DesignRecord>(path)?.content.design.k1;
    if k1.shape() != (s.case.nv(), s.case.ng()) {
        return Err(CliError::Config(format!("{}: gain is {}x{}, case needs {}x{}", path.display(), k1.nrows(), k1.ncols(), s.case.nv(), s.case.ng())));
    }
    Ok(k1)
}

fn print_modes(label: &str, rep: &ModeReport) {
    for m in rep.modes.iter().filter(|m| m.targeted) {
        println!("  {label:<18} {:>7.4} Hz  {:>6.2} %", m.frequency_hz, 100.0 * m.damping_ratio);
    }
}

fn print_identification(rec: &IdentificationRecord) {
    let a = &rec.accuracy;
    println!("identify: relative Frobenius error vs linearization");
    println!("  A {:.4}  -M^-1 D {:.4}  Abar1 {:.4}  Abar2 {:.4}", a.a_frobenius, a.minus_minv_d_frobenius, a.abar1_frobenius, a.abar2_frobenius);
}

fn print_design(rec: &DesignRecord) {
    let d = &rec.design;
    println!("design: {} iterations, target {:.1}% {}", d.iterations, 100.0 * d.target_zeta, if rec.target_reached { "reached" } else { "missed" });
    print_modes("open-loop (model)", &d.open_loop);
    print_modes("mlqr (model)", &d.deployed);
    print_modes("open-loop (true)", &rec.true_system.open_loop);
    print_modes("mlqr (true)", &rec.true_system.closed_loop);
    println!("  K1 = {:?}", d.k1.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>());
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    if let Command::Scenario { events: Some(p), .. } = &cli.command {
        #[derive(serde::Deserialize)]
        struct EventFile {
            events: Vec<ScenarioEvent>,
        }
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        let file: EventFile = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        cfg.scenario.events = file.events;
    }
    if let Command::Pipeline = cli.command {
        let r = stages::pipeline(cfg)?;
        print_identification(&r.identification);
        print_design(&r.design);
        if let Some(a) = &r.adaptation {
            println!("adapt: branch {} removed", a.removed_branch);
            print_modes("stale gain", &a.stale.closed_loop);
            print_modes("redesigned", &a.restored.closed_loop);
        }
        let t = &r.timings;
        println!("timings: identify {:.3} s, design {:.3} s, identify+design {:.3} s", t.identify_s, t.design_s, t.identify_design_s);
        println!("config hash {}", r.config_hash);
        return Ok(());
    }

    let s = Session::open(cfg)?;
    match cli.command {
        Command::Simulate { gain } => {
            let k1 = gain.map(|p| gain_from(&p, &s)).transpose()?.unwrap_or_else(|| s.zero_gain());
            let sim = stages::simulate(&s, &k1)?;
            println!("simulate: 2 windows of {} samples in {}", sim.record.samples_per_window, s.cfg.out.display());
        }
        Command::Identify { windows, gain } => {
            let given = gain.map(|p| gain_from(&p, &s)).transpose()?;
            let (wins, k1) = match windows {
                Some(dir) => {
                    let (w, recorded) = stages::read_windows(&dir)?;
                    (w, given.or(recorded).unwrap_or_else(|| s.zero_gain()))
                }
                None => {
                    let k1 = given.unwrap_or_else(|| s.zero_gain());
                    (stages::simulate(&s, &k1)?.windows, k1)
                }
            };
            print_identification(&stages::identify(&s, wins, &k1)?);
        }
        Command::Design { model } => {
            let path = model.unwrap_or_else(|| art::path(&s.cfg.out, art::MODEL));
            let est = art::read_json::<IdentificationRecord>(&path)?.content.model;
            let rec = stages::design(&s, &est.a, &est.b)?;
            print_design(&rec);
            stages::check_target(&rec)?;
        }
        Command::Scenario { design, .. } => {
            let path = design.unwrap_or_else(|| art::path(&s.cfg.out, art::DESIGN));
            let k1 = gain_from(&path, &s)?;
            let sum = stages::scenario(&s, &k1)?;
            for r in &sum.runs {
                println!(
                    "scenario {:<10} peak relative speed {:.3e}  settling {}  max VSC modulation {:?}",
                    r.label,
                    r.max_relative_speed,
                    r.settling_s.map_or("-".into(), |t| format!("{t:.2} s")),
                    r.max_vsc_modulation
                );
            }
        }
        Command::Pipeline => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
