//! On-disk formats. Column schemas are listed in the README.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use slipguide_core::bound::{BoundKind, SpaceTimeBound};
use slipguide_core::env::{EpisodeTrace, EnvConfig};
use slipguide_core::gait::{PeriodicGait, ReferenceTrajectory};
use slipguide_core::learn::{ApexToyConfig, Checkpoint, CurveRow, EpisodeStats, EvalRow, TrainConfig};
use slipguide_core::slip::Phase;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> FormatError + '_ {
    move |source| FormatError::Csv { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<File, FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    File::create(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, FormatError> {
    Ok(csv::Writer::from_writer(BufWriter::new(create(path)?)))
}

/// Writes rows that serialize to flat records.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// `t, x, z, vx, vz, phase_tag, phi`.
pub fn write_trajectory_csv(path: &Path, reference: &ReferenceTrajectory) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "z", "vx", "vz", "phase_tag", "phi"]).map_err(csv_err(path))?;
    for s in &reference.samples {
        let tag = match s.state.phase {
            Phase::Flight => "flight",
            Phase::Stance { .. } => "stance",
        };
        let st = &s.state;
        w.write_record([num(s.t), num(st.x), num(st.z), num(st.vx), num(st.vz), tag.to_string(), num(s.phi)])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub const COM_NAMES: [&str; 6] = ["x", "y", "z", "vx", "vy", "vz"];

/// `t`, then per CoM coordinate the bound center and its lower and upper
/// edges (`x, x_lo, x_hi, y, ...`). Unbounded edges are `inf`.
pub fn write_envelope_csv(path: &Path, reference: &ReferenceTrajectory, bound: &SpaceTimeBound) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    for n in COM_NAMES {
        header.extend([n.to_string(), format!("{n}_lo"), format!("{n}_hi")]);
    }
    w.write_record(&header).map_err(csv_err(path))?;
    let rho = bound.rho();
    for s in &reference.samples {
        let Ok(c) = bound.center(s.t) else { continue };
        let c = c.to_array();
        let mut rec = vec![num(s.t)];
        for i in 0..6 {
            rec.extend([num(c[i]), num(c[i] - rho[i]), num(c[i] + rho[i])]);
        }
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Per-tick episode trace: `t`, CoM state, rewards, torques, joint
/// coordinates and velocities, contact flags and mechanical work.
pub fn write_trace_csv(path: &Path, trace: &EpisodeTrace) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(COM_NAMES.iter().map(|n| format!("com_{n}")));
    header.extend(["reward", "r_s", "r_p"].map(String::from));
    header.extend((0..4).map(|j| format!("tau_{j}")));
    header.extend(slipguide_core::sim::COORDINATE_NAMES.iter().map(|n| format!("q_{n}")));
    header.extend(slipguide_core::sim::COORDINATE_NAMES.iter().map(|n| format!("qd_{n}")));
    header.extend(["contact_l", "contact_r", "work"].map(String::from));
    w.write_record(&header).map_err(csv_err(path))?;
    for r in &trace.rows {
        let mut rec = vec![num(r.t)];
        rec.extend(r.com.to_array().map(num));
        rec.extend([num(r.reward), num(r.r_s), num(r.r_p)]);
        rec.extend(r.tau.map(num));
        rec.extend(r.q.map(num));
        rec.extend(r.qd.map(num));
        rec.extend(r.contacts.map(|c| u8::from(c).to_string()));
        rec.push(num(r.work));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_curve_csv(path: &Path, curve: &[CurveRow]) -> Result<(), FormatError> {
    write_rows(path, curve)
}

pub fn write_evals_csv(path: &Path, evals: &[EvalRow]) -> Result<(), FormatError> {
    write_rows(path, evals)
}

/// Bound half-width per coordinate; `None` where unbounded.
pub fn half_widths(bound: &SpaceTimeBound) -> [Option<f64>; 6] {
    bound.rho().map(|r| r.is_finite().then_some(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub kind: BoundKind,
    pub epsilon: f64,
    /// Order `x, y, z, vx, vy, vz`.
    pub half_widths: [Option<f64>; 6],
    /// Time covered by the reference [s].
    pub horizon: f64,
}

impl BoundSummary {
    pub fn new(bound: &SpaceTimeBound) -> Self {
        Self { kind: bound.kind(), epsilon: bound.epsilon(), half_widths: half_widths(bound), horizon: bound.horizon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitReport {
    pub robot: String,
    pub vx_des: f64,
    pub gait: PeriodicGait,
    pub cycles: usize,
    pub sample_dt: f64,
    pub vx_span: f64,
    pub vz_span: f64,
    pub bound: BoundSummary,
}

/// What a policy was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Robot(EnvConfig),
    Toy(ApexToyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub train: TrainConfig,
}

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// A checkpoint together with the task it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedPolicy {
    pub format_version: u32,
    pub task: Task,
    pub checkpoint: Checkpoint,
}

impl SavedPolicy {
    pub fn new(task: Task, checkpoint: Checkpoint) -> Self {
        Self { format_version: POLICY_FORMAT_VERSION, task, checkpoint }
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let p: Self = read_json(path)?;
        if p.format_version != POLICY_FORMAT_VERSION {
            return Err(FormatError::Version { path: path.to_path_buf(), found: p.format_version, expected: POLICY_FORMAT_VERSION });
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub horizon: usize,
    pub mean_survival: f64,
    pub survival_fraction: f64,
    pub mean_return: f64,
    /// Mean over episodes with a finite cost of transport.
    pub mean_cot: Option<f64>,
    /// Mean distance between the policy's action and its mirrored action
    /// at mirrored states; absent for tasks without a mirror.
    pub symmetry_deviation: Option<f64>,
    pub per_episode: Vec<EpisodeStats>,
}

impl EvalMetrics {
    pub fn new(horizon: usize, stats: &[EpisodeStats], symmetry_deviation: Option<f64>) -> Self {
        let row = EvalRow::summarize(0, horizon, stats);
        let per_episode = stats.iter().map(|s| EpisodeStats { cot: s.cot.filter(|c| c.is_finite()), ..*s }).collect();
        Self {
            episodes: stats.len(),
            horizon,
            mean_survival: row.mean_survival,
            survival_fraction: row.survival_fraction,
            mean_return: row.mean_return,
            mean_cot: row.mean_cot,
            symmetry_deviation,
            per_episode,
        }
    }
}
