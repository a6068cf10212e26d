use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use slipguide_core::bound::{BoundKind, ComState, DEFAULT_CONST_EPSILON, DEFAULT_SLIP_EPSILON};
use slipguide_core::env::{BoundConfig, EnvConfig, EnvError, Environment, RobotPreset, SlipEnv};
use slipguide_core::learn::train::stream;
use slipguide_core::learn::{run_episode, train, Agent, ApexToyConfig, LearnError, Policy, TrainConfig};
use slipguide_core::symmetry::MirrorSpec;

use crate::formats::{
    self, BoundSummary, EvalMetrics, FormatError, GaitReport, RunConfig, SavedPolicy, Task,
};
use crate::task::TaskEnv;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slipguide", version, about = "SLIP-guided reinforcement learning for planar legged robots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the reference gait and write it with its bound envelope.
    Gait(GaitArgs),
    /// Check a CoM state against the bound at a given time.
    Bound(BoundArgs),
    /// Train a policy.
    Train(TrainArgs),
    /// Evaluate a saved policy or the zero-torque baseline.
    Eval(EvalArgs),
    /// Run one deterministic episode and write its per-tick trace.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Bolt,
    Solo,
}

impl Preset {
    pub fn robot(self) -> RobotPreset {
        match self {
            Self::Bolt => RobotPreset::Bolt,
            Self::Solo => RobotPreset::Solo,
        }
    }

    /// Default running speed [m/s].
    pub fn default_vx(self) -> f64 {
        match self {
            Self::Bolt => 1.05,
            Self::Solo => 0.60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bound {
    Slip,
    Const,
}

#[derive(Debug, Clone, Args)]
pub struct RobotArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Desired forward speed [m/s]; defaults per preset.
    #[arg(long)]
    pub vx: Option<f64>,
    /// Bound scale; defaults to 0.75 for the SLIP bound and 2.0 for the constant bound.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value = "slip")]
    pub bound: Bound,
    /// Reference length in gait cycles.
    #[arg(long, default_value_t = 20)]
    pub cycles: usize,
}

impl RobotArgs {
    pub fn env_config(&self, seed: u64) -> EnvConfig {
        let kind = match self.bound {
            Bound::Slip => BoundKind::Slip,
            Bound::Const => BoundKind::Const,
        };
        let epsilon = self.eps.unwrap_or(match kind {
            BoundKind::Slip => DEFAULT_SLIP_EPSILON,
            BoundKind::Const => DEFAULT_CONST_EPSILON,
        });
        EnvConfig {
            robot: self.preset.robot(),
            vx_des: self.vx.unwrap_or(self.preset.default_vx()),
            bound: BoundConfig { kind, epsilon },
            max_cycles: self.cycles,
            seed,
            ..EnvConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "SLIPGUIDE_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GaitArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    /// Time along the reference [s].
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// CoM state `x,y,z,vx,vy,vz`; defaults to the bound center.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub com: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskKind {
    Robot,
    Toy,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "robot")]
    pub task: TaskKind,
    /// Robot preset for the robot task.
    #[arg(long, value_enum, default_value = "bolt")]
    pub preset: Preset,
    #[arg(long)]
    pub vx: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value = "slip")]
    pub bound: Bound,
    /// Run configuration JSON; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Environment steps.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub lambda_sym: Option<f64>,
    /// Hidden layer widths, e.g. `256,256`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PolicySource {
    /// Saved policy written by `train`.
    #[arg(long, conflicts_with = "zero_torque")]
    pub checkpoint: Option<PathBuf>,
    /// Apply no torque, on the robot given by `--preset`.
    #[arg(long, requires = "preset")]
    pub zero_torque: bool,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub vx: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value = "slip")]
    pub bound: Bound,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: PolicySource,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: PolicySource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gait(a) => cmd_gait(&a),
        Command::Bound(a) => cmd_bound(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Export(a) => cmd_export(&a),
    }
}

fn fmt_width(w: Option<f64>) -> String {
    w.map_or_else(|| "inf".to_string(), |v| format!("{v:.6}"))
}

pub fn cmd_gait(a: &GaitArgs) -> Result<(), CliError> {
    let config = a.robot.env_config(0);
    let env = SlipEnv::new(config.clone())?;
    let reference = env.reference();
    let out = &a.out.out;
    let report = GaitReport {
        robot: format!("{:?}", config.robot).to_lowercase(),
        vx_des: config.vx_des,
        gait: reference.gait,
        cycles: reference.n_cycles,
        sample_dt: reference.dt,
        vx_span: reference.vx_span,
        vz_span: reference.vz_span,
        bound: BoundSummary::new(env.bound()),
    };
    formats::write_json(&out.join("gait.json"), &report)?;
    formats::write_json(&out.join("trajectory.json"), reference.as_ref())?;
    formats::write_trajectory_csv(&out.join("trajectory.csv"), reference)?;
    formats::write_envelope_csv(&out.join("envelope.csv"), reference, env.bound())?;
    let g = &reference.gait;
    println!("robot        {}", report.robot);
    println!("k            {:.3} N/m", g.params.k);
    println!("alpha*       {:.6} rad", g.alpha_star);
    println!("apex z       {:.6} m", g.apex.z);
    println!("period       {:.6} s", g.period);
    println!("mean vx      {:.6} m/s", g.mean_vx);
    let names = formats::COM_NAMES;
    let widths: Vec<String> = names.iter().zip(report.bound.half_widths).map(|(n, w)| format!("{n}={}", fmt_width(w))).collect();
    println!("half-widths  {}", widths.join(" "));
    println!("wrote        {}", out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct BoundCheck {
    t: f64,
    center: [f64; 6],
    com: [f64; 6],
    half_widths: [Option<f64>; 6],
    deviation: [f64; 6],
    contains: bool,
    survival_reward: f64,
}

pub fn cmd_bound(a: &BoundArgs) -> Result<(), CliError> {
    let env = SlipEnv::new(a.robot.env_config(0))?;
    let bound = env.bound();
    let err = |e: slipguide_core::bound::BoundError| CliError::Runtime(e.to_string());
    let center = bound.center(a.t).map_err(err)?;
    let com = match &a.com {
        Some(v) => ComState::from_array(
            v.as_slice().try_into().map_err(|_| CliError::Usage(format!("--com needs 6 values, got {}", v.len())))?,
        ),
        None => center,
    };
    let check = BoundCheck {
        t: a.t,
        center: center.to_array(),
        com: com.to_array(),
        half_widths: formats::half_widths(bound),
        deviation: bound.deviation(&com, a.t).map_err(err)?,
        contains: bound.contains(&com, a.t).map_err(err)?,
        survival_reward: bound.survival_reward(&com, a.t).map_err(err)?,
    };
    let text = serde_json::to_string_pretty(&check).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn robot_args(preset: Preset, vx: Option<f64>, eps: Option<f64>, bound: Bound) -> RobotArgs {
    RobotArgs { preset, vx, eps, bound, cycles: EnvConfig::default().max_cycles }
}

fn run_config(a: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut rc = match &a.config {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Usage(format!("config file {} does not exist", p.display())));
            }
            formats::read_json::<RunConfig>(p)?
        }
        None => {
            let task = match a.task {
                TaskKind::Robot => Task::Robot(robot_args(a.preset, a.vx, a.eps, a.bound).env_config(0)),
                TaskKind::Toy => Task::Toy(ApexToyConfig::default()),
            };
            RunConfig { task, train: TrainConfig::default() }
        }
    };
    let t = &mut rc.train;
    if let Some(s) = a.seed {
        t.sac.seed = s;
    }
    if let Some(b) = a.budget {
        t.total_steps = b;
        if a.config.is_none() {
            t.eval_interval = (b / 10).max(1);
            t.checkpoint_interval = (b / 4).max(1);
        }
    }
    if let Some(l) = a.lambda_sym {
        t.sac.lambda_sym = l;
    }
    if let Some(h) = &a.hidden {
        t.sac.hidden = h.clone();
    }
    if let Some(b) = a.batch {
        t.sac.batch_size = b;
    }
    if let Some(w) = a.warmup {
        t.sac.warmup_steps = w;
    }
    if let Some(e) = a.eval_every {
        t.eval_interval = e;
    }
    if let Some(e) = a.eval_episodes {
        t.eval_episodes = e;
    }
    if let Some(c) = a.checkpoint_every {
        t.checkpoint_interval = c;
    }
    if let Task::Robot(env) = &mut rc.task {
        env.seed = t.sac.seed;
    }
    Ok(rc)
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let rc = run_config(a)?;
    let out = &a.out.out;
    formats::write_json(&out.join("run.json"), &rc)?;
    let mut checkpoint_err = None;
    let outcome = train(
        || TaskEnv::new(&rc.task),
        &rc.train,
        |c| {
            let path = out.join("checkpoints").join(format!("step_{}.json", c.steps));
            if let Err(e) = SavedPolicy::new(rc.task.clone(), c.clone()).save(&path) {
                checkpoint_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = checkpoint_err {
        return Err(e.into());
    }
    formats::write_curve_csv(&out.join("curve.csv"), &outcome.curve)?;
    formats::write_evals_csv(&out.join("evals.csv"), &outcome.evals)?;
    SavedPolicy::new(rc.task.clone(), outcome.agent.checkpoint(outcome.steps as u64)).save(&out.join("policy.json"))?;
    println!("steps     {}", outcome.steps);
    println!("episodes  {}", outcome.curve.len());
    if let Some(e) = outcome.evals.last() {
        println!("eval      survival {:.1} ({:.0}%), return {:.3}", e.mean_survival, 100.0 * e.survival_fraction, e.mean_return);
    }
    println!("wrote     {}", out.display());
    match outcome.fault {
        Some(f) => Err(CliError::Runtime(format!("training stopped early: {f}"))),
        None => Ok(()),
    }
}

enum Actor {
    Policy(Policy),
    Zero(usize),
}

impl Actor {
    fn act(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        match self {
            Self::Policy(p) => p.deterministic(obs),
            Self::Zero(n) => Ok(vec![0.0; *n]),
        }
    }
}

fn load_source(s: &PolicySource) -> Result<(Task, Actor), CliError> {
    if let Some(path) = &s.checkpoint {
        if !path.is_file() {
            return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
        }
        let saved = SavedPolicy::load(path)?;
        let agent = Agent::from_checkpoint(saved.checkpoint)?;
        return Ok((saved.task, Actor::Policy(agent.policy)));
    }
    match (s.zero_torque, s.preset) {
        (true, Some(p)) => {
            let config = robot_args(p, s.vx, s.eps, s.bound).env_config(0);
            Ok((Task::Robot(config), Actor::Zero(slipguide_core::env::ACT_DIM)))
        }
        _ => Err(CliError::Usage("either --checkpoint or --zero-torque with --preset is required".into())),
    }
}

fn mirror_deviation(actor: &Actor, states: &[Vec<f64>], mirror: &MirrorSpec) -> Result<f64, CliError> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let sym = |e: slipguide_core::symmetry::SymmetryError| CliError::Runtime(e.to_string());
    let mut total = 0.0;
    for s in states {
        let a = actor.act(s)?;
        let b = mirror.mirror_action(&actor.act(&mirror.mirror_state(s).map_err(sym)?)?).map_err(sym)?;
        total += a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    }
    Ok(total / states.len() as f64)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let (task, actor) = load_source(&a.source)?;
    let mut env = TaskEnv::new(&task)?;
    let mut rng = stream(a.seed, 4);
    let mut stats = Vec::with_capacity(a.episodes);
    let mut states = Vec::new();
    for _ in 0..a.episodes {
        stats.push(run_episode(&mut env, &mut rng, |o| {
            states.push(o.to_vec());
            actor.act(o)
        })?);
    }
    let deviation = match env.mirror() {
        Some(m) => Some(mirror_deviation(&actor, &states, &m)?),
        None => None,
    };
    let metrics = EvalMetrics::new(env.horizon(), &stats, deviation);
    println!("{:>8} {:>10} {:>10} {:>10}", "episode", "survival", "return", "cot");
    for (i, s) in metrics.per_episode.iter().enumerate() {
        let cot = s.cot.map_or_else(|| "-".to_string(), |c| format!("{c:.4}"));
        println!("{i:>8} {:>10} {:>10.3} {cot:>10}", s.survival, s.ret);
    }
    println!("mean survival       {:.2} / {} ({:.1}%)", metrics.mean_survival, metrics.horizon, 100.0 * metrics.survival_fraction);
    println!("mean return         {:.4}", metrics.mean_return);
    println!("mean cot            {}", metrics.mean_cot.map_or_else(|| "-".to_string(), |c| format!("{c:.4}")));
    println!("symmetry deviation  {}", metrics.symmetry_deviation.map_or_else(|| "-".to_string(), |d| format!("{d:.4}")));
    formats::write_json(&a.out.out.join("metrics.json"), &metrics)?;
    Ok(())
}

pub fn cmd_export(a: &ExportArgs) -> Result<(), CliError> {
    let (task, actor) = load_source(&a.source)?;
    let Task::Robot(config) = task else {
        return Err(CliError::Runtime("trace export needs a robot task".into()));
    };
    let mut env = SlipEnv::new(config)?;
    let mut rng = stream(a.seed, 4);
    let stats = run_episode(&mut env, &mut rng, |o| actor.act(o))?;
    let trace = env.trace().ok_or_else(|| CliError::Runtime("episode recorded no trace".into()))?;
    let path: &Path = &a.out.out.join("trace.csv");
    formats::write_trace_csv(path, trace)?;
    println!("survival {} of {}, wrote {}", stats.survival, env.horizon(), path.display());
    Ok(())
}
