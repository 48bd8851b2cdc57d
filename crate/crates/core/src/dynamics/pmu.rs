use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DynamicsError, Result};
use crate::linalg::RealMatrix;

/// Uniformly sampled `[δ; ω]` states, one row per sample starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub dt: f64,
    pub t0: f64,
    pub ng: usize,
    pub x: RealMatrix,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

/// Mean-removed PMU record. Columns are `[Δδ_1..Δδ_ng, Δω_1..Δω_ng]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmuWindow {
    pub rate_hz: f64,
    pub start_s: f64,
    pub ng: usize,
    pub samples: RealMatrix,
}

impl PmuWindow {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    /// Build from raw (not yet centred) samples: angles are unwrapped and every
    /// channel has its window mean removed.
    pub fn from_raw(rate_hz: f64, start_s: f64, ng: usize, mut samples: RealMatrix) -> Result<Self> {
        if samples.ncols() != 2 * ng {
            return Err(DynamicsError::Dimension(format!("expected {} channels, got {}", 2 * ng, samples.ncols())));
        }
        if !(rate_hz > 0.0) {
            return Err(DynamicsError::Invalid("sample rate must be positive".into()));
        }
        for j in 0..ng {
            unwrap_angles(samples.column_mut(j).as_mut_slice());
        }
        remove_mean(&mut samples);
        Ok(Self { rate_hz, start_s, ng, samples })
    }
}

fn unwrap_angles(col: &mut [f64]) {
    let tau = 2.0 * std::f64::consts::PI;
    let mut offset = 0.0;
    for k in 1..col.len() {
        let prev = col[k - 1];
        let raw = col[k] + offset;
        let jump = raw - prev;
        if jump.abs() > std::f64::consts::PI {
            offset -= tau * (jump / tau).round();
        }
        col[k] += offset;
    }
}

pub(crate) fn remove_mean(x: &mut RealMatrix) {
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// Decimate a trajectory to `rate_hz`, add optional Gaussian measurement
/// noise and remove the window mean.
pub fn emulate_pmu(traj: &StateTrajectory, rate_hz: f64, noise_std: f64, seed: u64) -> Result<PmuWindow> {
    if !(rate_hz > 0.0) || !(noise_std >= 0.0) {
        return Err(DynamicsError::Invalid("rate must be positive and noise std non-negative".into()));
    }
    let ratio = 1.0 / (traj.dt * rate_hz);
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(DynamicsError::RateMismatch { dt: traj.dt, rate_hz });
    }
    let factor = factor as usize;
    let rows: Vec<usize> = (0..traj.len()).step_by(factor).collect();
    let mut samples = traj.x.select_rows(&rows);
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("valid std");
        for v in samples.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    PmuWindow::from_raw(rate_hz, traj.t0, traj.ng, samples)
}

fn csv_err(e: impl std::fmt::Display) -> DynamicsError {
    DynamicsError::Io(e.to_string())
}

/// `time,gen<i>.ddelta,gen<i>.domega,...` with shortest round-trip floats.
pub fn write_pmu_csv<W: Write>(w: &PmuWindow, out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    for i in 1..=w.ng {
        header.push(format!("gen{i}.ddelta"));
        header.push(format!("gen{i}.domega"));
    }
    wr.write_record(&header).map_err(csv_err)?;
    for k in 0..w.len() {
        let mut rec = vec![format!("{}", w.start_s + k as f64 / w.rate_hz)];
        for i in 0..w.ng {
            rec.push(format!("{}", w.samples[(k, i)]));
            rec.push(format!("{}", w.samples[(k, w.ng + i)]));
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush().map_err(csv_err)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input)
}

/// Parse a PMU CSV. Sampling must be uniform; the rate is inferred from the
/// time column. Lines starting with `#` are skipped.
pub fn read_pmu_csv<R: Read>(input: R) -> Result<PmuWindow> {
    let mut rd = reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    let ncol = header.len();
    if ncol < 3 || (ncol - 1) % 2 != 0 || &header[0] != "time" {
        return Err(DynamicsError::Io("PMU header must be time followed by ddelta/domega pairs".into()));
    }
    let ng = (ncol - 1) / 2;
    for i in 0..ng {
        let (d, o) = (&header[1 + 2 * i], &header[2 + 2 * i]);
        if d != format!("gen{}.ddelta", i + 1) || o != format!("gen{}.domega", i + 1) {
            return Err(DynamicsError::Io(format!("unexpected columns {d}, {o}")));
        }
    }
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| DynamicsError::Io(format!("row {}: {e}", line + 2)))
        };
        times.push(parse(&rec[0])?);
        let mut row = vec![0.0; 2 * ng];
        for i in 0..ng {
            row[i] = parse(&rec[1 + 2 * i])?;
            row[ng + i] = parse(&rec[2 + 2 * i])?;
        }
        data.push(row);
    }
    if times.len() < 2 {
        return Err(DynamicsError::Io("PMU file needs at least two samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for k in 1..times.len() {
        if ((times[k] - times[k - 1]) - dt).abs() > 1e-6 * dt {
            return Err(DynamicsError::NonUniformSampling { row: k + 1 });
        }
    }
    let samples = RealMatrix::from_fn(data.len(), 2 * ng, |r, c| data[r][c]);
    Ok(PmuWindow { rate_hz: 1.0 / dt, start_s: times[0], ng, samples })
}

/// `time,gen<i>.delta,gen<i>.omega,...,vsc<j>.p,vsc<j>.q`.
pub fn write_trajectory_csv<W: Write>(traj: &StateTrajectory, vsc_pq: Option<(&RealMatrix, &RealMatrix)>, out: W) -> Result<()> {
    let ng = traj.ng;
    let nv = vsc_pq.map_or(0, |(p, _)| p.ncols());
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    for i in 1..=ng {
        header.push(format!("gen{i}.delta"));
        header.push(format!("gen{i}.omega"));
    }
    for j in 1..=nv {
        header.push(format!("vsc{j}.p"));
        header.push(format!("vsc{j}.q"));
    }
    wr.write_record(&header).map_err(csv_err)?;
    for k in 0..traj.len() {
        let mut rec = vec![format!("{}", traj.time(k))];
        for i in 0..ng {
            rec.push(format!("{}", traj.x[(k, i)]));
            rec.push(format!("{}", traj.x[(k, ng + i)]));
        }
        if let Some((p, q)) = vsc_pq {
            for j in 0..nv {
                rec.push(format!("{}", p[(k, j)]));
                rec.push(format!("{}", q[(k, j)]));
            }
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush().map_err(csv_err)
}

/// Parse a trajectory CSV written by [`write_trajectory_csv`].
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<(StateTrajectory, Option<(RealMatrix, RealMatrix)>)> {
    let mut rd = reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    let ng = header.iter().filter(|h| h.ends_with(".delta")).count();
    let nv = header.iter().filter(|h| h.ends_with(".p")).count();
    if header.len() != 1 + 2 * ng + 2 * nv {
        return Err(DynamicsError::Io("unrecognized trajectory header".into()));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(csv_err)?;
        times.push(vals[0]);
        rows.push(vals);
    }
    let n = rows.len();
    let dt = if n > 1 { (times[n - 1] - times[0]) / (n - 1) as f64 } else { 0.0 };
    let x = RealMatrix::from_fn(n, 2 * ng, |r, c| if c < ng { rows[r][1 + 2 * c] } else { rows[r][2 + 2 * (c - ng)] });
    let pq = (nv > 0).then(|| {
        let base = 1 + 2 * ng;
        (
            RealMatrix::from_fn(n, nv, |r, j| rows[r][base + 2 * j]),
            RealMatrix::from_fn(n, nv, |r, j| rows[r][base + 2 * j + 1]),
        )
    });
    Ok((StateTrajectory { dt, t0: times.first().copied().unwrap_or(0.0), ng, x }, pq))
}
