//! On-disk documents. JSON files wrap their content with a [`Stamp`]; CSV
//! files carry the same stamp on a leading `#` line that the readers skip.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wadc_core::control::{GainEvaluation, MlqrDesign, ModeClass, ModeReport};
use wadc_core::dynamics::{read_pmu_csv, write_pmu_csv, write_trajectory_csv, PmuWindow, StateTrajectory};
use wadc_core::estimation::{AccuracyReport, EstimatedModel};
use wadc_core::linalg::RealMatrix;

use crate::config::Plant;
use crate::error::{CliError, Result, Staged};

pub const CONFIG: &str = "config.toml";
pub const WINDOWS: [&str; 2] = ["window1.csv", "window2.csv"];
pub const SIMULATION: &str = "simulation.json";
pub const MODEL: &str = "estimated_model.json";
pub const ERROR_TABLE: &str = "error_table.csv";
pub const DESIGN: &str = "design.json";
pub const MODE_TABLE: &str = "mode_table.csv";
pub const SCENARIO: &str = "scenario.json";
pub const ADAPTATION: &str = "adaptation.json";
pub const REPORT: &str = "report.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub stamp: Stamp,
    pub content: T,
}

/// Gains and seeds under which the two ambient windows were recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub plant: Plant,
    #[serde(with = "wadc_core::linalg::rows")]
    pub k1: RealMatrix,
    #[serde(with = "wadc_core::linalg::rows")]
    pub delta_k1: RealMatrix,
    pub seeds: Vec<u64>,
    pub samples_per_window: usize,
    pub windows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationRecord {
    pub model: EstimatedModel,
    /// Comparison against the linearization of the case.
    pub accuracy: AccuracyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub target_reached: bool,
    pub design: MlqrDesign,
    /// The deployed gain closed around the linearization of the case.
    pub true_system: GainEvaluation,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).stage("output directory")
}

pub fn write_json<T: Serialize>(path: &Path, stamp: &Stamp, content: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        stamp: &'a Stamp,
        content: &'a T,
    }
    let mut text = serde_json::to_string_pretty(&Out { stamp, content }).expect("documents serialize");
    text.push('\n');
    fs::write(path, text).stage("write")
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Document<T>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_window(path: &Path, stamp: &Stamp, w: &PmuWindow) -> Result<()> {
    let mut buf = stamp.comment().into_bytes();
    write_pmu_csv(w, &mut buf).stage("write")?;
    fs::write(path, buf).stage("write")
}

pub fn read_window(path: &Path) -> Result<PmuWindow> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    read_pmu_csv(std::io::BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_trajectory(path: &Path, stamp: &Stamp, states: &StateTrajectory, pv: &RealMatrix, qv: &RealMatrix) -> Result<()> {
    let mut buf = stamp.comment().into_bytes();
    let pq = (pv.ncols() > 0).then_some((pv, qv));
    write_trajectory_csv(states, pq, &mut buf).stage("write")?;
    fs::write(path, buf).stage("write")
}

fn csv_bytes(stamp: &Stamp, header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut buf = stamp.comment().into_bytes();
    {
        let mut wr = csv::Writer::from_writer(&mut buf);
        wr.write_record(header).expect("in-memory write");
        for r in rows {
            wr.write_record(r).expect("in-memory write");
        }
        wr.flush().expect("in-memory write");
    }
    buf
}

/// Frobenius and dominant-entry errors per identified component.
pub fn write_error_table(path: &Path, stamp: &Stamp, acc: &AccuracyReport) -> Result<()> {
    let header = ["component", "frobenius_rel_error", "dominant_entries", "dominant_max_rel_error", "dominant_median_rel_error"];
    let row = |name: &str, frob: f64, dom: Option<&[wadc_core::estimation::EntryError]>| {
        let mut r = vec![name.to_string(), format!("{frob}")];
        match dom {
            Some(d) => {
                let mut rel: Vec<f64> = d.iter().map(|e| e.relative).collect();
                rel.sort_by(f64::total_cmp);
                let n = rel.len();
                r.push(n.to_string());
                r.push(format!("{}", rel.last().copied().unwrap_or(0.0)));
                r.push(format!("{}", if n == 0 { 0.0 } else { 0.5 * (rel[(n - 1) / 2] + rel[n / 2]) }));
            }
            None => r.extend(["".into(), "".into(), "".into()]),
        }
        r
    };
    let rows = vec![
        row("A", acc.a_frobenius, None),
        row("-Minv_D", acc.minus_minv_d_frobenius, Some(&acc.minus_minv_d_dominant)),
        row("Abar1", acc.abar1_frobenius, Some(&acc.abar1_dominant)),
        row("Abar2", acc.abar2_frobenius, Some(&acc.abar2_dominant)),
    ];
    fs::write(path, csv_bytes(stamp, &header, &rows)).stage("write")
}

/// Oscillatory modes per control strategy: frequency (Hz) and damping (%).
pub fn write_mode_table(path: &Path, stamp: &Stamp, reports: &[(&str, &ModeReport)]) -> Result<()> {
    let header = ["strategy", "mode", "class", "frequency_hz", "damping_pct", "targeted"];
    let mut rows = Vec::new();
    for (label, rep) in reports {
        for (k, m) in rep.modes.iter().filter(|m| m.class != ModeClass::Real).enumerate() {
            rows.push(vec![
                label.to_string(),
                (k + 1).to_string(),
                format!("{:?}", m.class).to_lowercase(),
                format!("{:.4}", m.frequency_hz),
                format!("{:.3}", 100.0 * m.damping_ratio),
                m.targeted.to_string(),
            ]);
        }
    }
    fs::write(path, csv_bytes(stamp, &header, &rows)).stage("write")
}

/// Rows of a mode table as written by [`write_mode_table`].
pub fn read_mode_table(path: &Path) -> Result<Vec<(String, f64, f64, bool)>> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(&e));
        out.push((rec[0].to_string(), num(3)?, num(4)?, &rec[5] == "true"));
    }
    Ok(out)
}

pub fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).stage("write")?;
    f.write_all(text.as_bytes()).stage("write")
}
