//! The locomotion learning environment.
//!
//! Actions are joint torques normalised by the torque limits. The reward is
//! `r_S * r_P`: survival inside the space-time bound times an energy and torque
//! penalty. Episodes end on a bound violation, a fall, or when the reference
//! runs out (a truncation, not a failure).

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::bound::{make_const_bound, make_slip_bound, BoundError, BoundKind, ComState, SpaceTimeBound};
use crate::gait::{find_periodic_gait, reference_trajectory, GaitError, GaitSearch, ReferenceTrajectory};
use crate::sim::{ContactParams, RobotModel, SimError, SimState, Simulator, NJ};
use crate::symmetry::MirrorSpec;
use crate::Prng;

/// Observation layout: base-frame momentum `[px, pz, L]`, base height,
/// `(cos, sin)` of pitch, four joint angles, `(cos, sin)` of the gait phase,
/// forward velocity error, two contact flags.
pub const OBS_DIM: usize = 15;
pub const ACT_DIM: usize = NJ;

/// Fall when the base drops below this fraction of the hip height.
pub const FALL_HEIGHT_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("expected {expected} action entries, got {got}")]
    ActionDimension { expected: usize, got: usize },
    #[error("action entry {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("invalid environment config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One `(s, a, r, s', done)` sample. `done` marks terminal states that must
/// not be bootstrapped; truncated episodes keep `done = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// What a learner sees of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode ended in a terminal state.
    pub terminated: bool,
    /// Episode ended by the time limit.
    pub truncated: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Interface the learner trains against.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Steps until the episode is truncated.
    fn horizon(&self) -> usize;
    fn reset(&mut self, rng: &mut Prng) -> Result<Vec<f64>, EnvError>;
    /// `action` entries are clamped to `[-1, 1]`.
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError>;
    fn mirror(&self) -> Option<MirrorSpec> {
        None
    }
    /// Cost of transport of the episode so far, when the task defines one.
    fn cost_of_transport(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotPreset {
    Bolt,
    Solo,
}

impl RobotPreset {
    pub fn model(self) -> RobotModel {
        match self {
            Self::Bolt => RobotModel::planar_bolt(),
            Self::Solo => RobotModel::planar_solo(),
        }
    }

    pub fn contact(self) -> ContactParams {
        match self {
            Self::Bolt => ContactParams::default(),
            Self::Solo => ContactParams::default().doubled(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub kind: BoundKind,
    pub epsilon: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { kind: BoundKind::Slip, epsilon: crate::bound::DEFAULT_SLIP_EPSILON }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub robot: RobotPreset,
    /// Overrides the preset's robot model.
    pub model: Option<RobotModel>,
    /// Overrides the preset's contact parameters.
    pub contact: Option<ContactParams>,
    pub vx_des: f64,
    pub bound: BoundConfig,
    pub control_hz: f64,
    pub substeps: usize,
    /// Reference length in gait cycles.
    pub max_cycles: usize,
    pub k_rel: f64,
    /// Joint-angle noise of the initial pose [rad].
    pub init_noise: f64,
    pub gait: GaitSearch,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            robot: RobotPreset::Bolt,
            model: None,
            contact: None,
            vx_des: 1.05,
            bound: BoundConfig::default(),
            control_hz: 200.0,
            substeps: crate::sim::DEFAULT_SUBSTEPS,
            max_cycles: 20,
            k_rel: crate::slip::K_REL,
            init_noise: 0.02,
            gait: GaitSearch::default(),
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn physics_dt(&self) -> f64 {
        self.control_dt() / self.substeps as f64
    }

    fn validate(&self) -> Result<(), EnvError> {
        if !(self.control_hz.is_finite() && self.control_hz > 0.0) {
            return Err(EnvError::Config("control_hz must be positive"));
        }
        if self.substeps == 0 || self.max_cycles == 0 {
            return Err(EnvError::Config("substeps and max_cycles must be positive"));
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return Err(EnvError::Config("init_noise must be non-negative"));
        }
        Ok(())
    }
}

/// `(1 - |tau * qd| / |tau_max * qd_max|) * (1 - |tau| / |tau_max|)` with
/// Euclidean norms and `qd` clamped to its limits.
pub fn energy_reward(tau: &[f64], qd: &[f64], tau_max: &[f64], qd_max: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let power = norm(&mut tau.iter().zip(qd.iter().zip(qd_max)).map(|(t, (q, m))| t * q.clamp(-m, *m)));
    let power_max = norm(&mut tau_max.iter().zip(qd_max).map(|(t, q)| t * q));
    let torque = norm(&mut tau.iter().copied());
    let torque_max = norm(&mut tau_max.iter().copied());
    let r = (1.0 - power / power_max) * (1.0 - torque / torque_max);
    r.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Linear momentum `[px, pz]` and angular momentum, in the base frame.
    pub h_g: [f64; 3],
    pub z_g: f64,
    pub orientation: [f64; 2],
    pub joints: [f64; NJ],
    pub phase: [f64; 2],
    pub vx_err: f64,
    pub contacts: [f64; 2],
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend_from_slice(&self.h_g);
        v.push(self.z_g);
        v.extend_from_slice(&self.orientation);
        v.extend_from_slice(&self.joints);
        v.extend_from_slice(&self.phase);
        v.push(self.vx_err);
        v.extend_from_slice(&self.contacts);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    pub t: f64,
    pub r_s: f64,
    pub r_p: f64,
    /// First bound coordinate at or past its half-width.
    pub violation: Option<usize>,
    pub deviation: [f64; 6],
    pub fell: bool,
    pub error: Option<String>,
    pub tau: [f64; NJ],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// Done because the reference ran out.
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub com: ComState,
    pub reward: f64,
    pub r_s: f64,
    pub r_p: f64,
    pub tau: [f64; NJ],
    pub q: [f64; 7],
    pub qd: [f64; 7],
    pub contacts: [bool; 2],
    /// `sum |tau_j qd_j| dt` over the physics steps of the tick [J].
    pub work: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub mass: f64,
    pub gravity: f64,
    pub initial_com: ComState,
    pub rows: Vec<TraceRow>,
}

/// Positive mechanical work over `m g` times distance travelled; infinite
/// when the CoM did not move forward.
pub fn cost_of_transport(trace: &EpisodeTrace) -> f64 {
    let work: f64 = trace.rows.iter().map(|r| r.work).sum();
    let dx = trace.rows.last().map_or(0.0, |r| r.com.x) - trace.initial_com.x;
    if dx > 0.0 {
        work / (trace.mass * trace.gravity * dx)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone)]
pub struct SlipEnv {
    config: EnvConfig,
    sim: Simulator,
    reference: Arc<ReferenceTrajectory>,
    bound: SpaceTimeBound,
    tau_max: [f64; NJ],
    qd_max: [f64; NJ],
    horizon: usize,
    state: Option<SimState>,
    tick: usize,
    trace: Option<EpisodeTrace>,
}

impl SlipEnv {
    /// Synthesizes the reference gait and builds the bound.
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let model = config.model.clone().unwrap_or_else(|| config.robot.model());
        let contact = config.contact.unwrap_or_else(|| config.robot.contact());
        let sim = Simulator::new(model, contact)?;
        let params = sim.model.slip_params(config.k_rel, sim.gravity)?;
        let gait = find_periodic_gait(&params, config.vx_des, &config.gait)?;
        let reference = Arc::new(reference_trajectory(&gait, config.max_cycles, config.control_dt())?);
        Self::with_reference(config, sim, reference)
    }

    /// Builds the environment around an existing reference.
    pub fn with_reference(config: EnvConfig, sim: Simulator, reference: Arc<ReferenceTrajectory>) -> Result<Self, EnvError> {
        config.validate()?;
        let r0 = sim.model.hip_height;
        let bound = match config.bound.kind {
            BoundKind::Slip => make_slip_bound(reference.clone(), config.bound.epsilon, r0)?,
            BoundKind::Const => make_const_bound(config.vx_des, config.bound.epsilon, r0, reference.vx_span)?,
        };
        let tau_max = core::array::from_fn(|j| sim.model.joints[j].torque_limits[1]);
        let qd_max = core::array::from_fn(|j| sim.model.joints[j].velocity_limits[1]);
        let horizon = (reference.duration() / config.control_dt() + 1e-9).floor() as usize;
        Ok(Self { config, sim, reference, bound, tau_max, qd_max, horizon, state: None, tick: 0, trace: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn reference(&self) -> &Arc<ReferenceTrajectory> {
        &self.reference
    }

    pub fn bound(&self) -> &SpaceTimeBound {
        &self.bound
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.control_dt()
    }

    pub fn trace(&self) -> Option<&EpisodeTrace> {
        self.trace.as_ref()
    }

    pub fn torque_limits(&self) -> [f64; NJ] {
        self.tau_max
    }

    pub fn velocity_limits(&self) -> [f64; NJ] {
        self.qd_max
    }

    /// Poses the robot at the reference apex with joint noise.
    pub fn reset_with(&mut self, rng: &mut Prng) -> Result<Observation, EnvError> {
        let apex = self.reference.gait.apex;
        let s = self.sim.initial_pose(&apex, rng, self.config.init_noise)?;
        self.start(s)
    }

    /// Starts an episode from a given simulator state at time zero.
    pub fn start(&mut self, s: SimState) -> Result<Observation, EnvError> {
        self.tick = 0;
        self.trace = Some(EpisodeTrace {
            mass: self.sim.model.total_mass(),
            gravity: self.sim.gravity,
            initial_com: self.sim.com_state(&s),
            rows: Vec::new(),
        });
        self.state = Some(s);
        self.observe(&s, 0.0)
    }

    /// Observation of a simulator state at time `t`.
    pub fn observe(&self, s: &SimState, t: f64) -> Result<Observation, EnvError> {
        let (lin, ang) = self.sim.centroidal_momentum(s);
        let (sin, cos) = s.q[2].sin_cos();
        let phase = self.reference.phase_at(t)?;
        let com = self.sim.com_state(s);
        Ok(Observation {
            h_g: [cos * lin[0] + sin * lin[1], -sin * lin[0] + cos * lin[1], ang],
            z_g: s.q[1],
            orientation: [cos, sin],
            joints: s.joints(),
            phase: [phase.0, phase.1],
            vx_err: self.config.vx_des - com.vx,
            contacts: s.foot_contacts.map(|c| if c { 1.0 } else { 0.0 }),
        })
    }

    fn fell(&self, s: &SimState) -> bool {
        s.q[1] < FALL_HEIGHT_FRACTION * self.sim.model.hip_height || s.q[2].abs() > FRAC_PI_2
    }

    /// Applies normalised torques for one control period.
    pub fn step_full(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let s0 = self.state.ok_or(EnvError::NotReset)?;
        if action.len() != ACT_DIM {
            return Err(EnvError::ActionDimension { expected: ACT_DIM, got: action.len() });
        }
        if let Some(index) = action.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction { index });
        }
        let tau: [f64; NJ] = core::array::from_fn(|j| action[j].clamp(-1.0, 1.0) * self.tau_max[j]);
        let dt = self.config.physics_dt();
        let mut s = s0;
        let mut work = 0.0;
        let t = (self.tick + 1) as f64 * self.config.control_dt();
        for _ in 0..self.config.substeps {
            match self.sim.step(&s, &tau, dt) {
                Ok(next) => {
                    s = next;
                    work += dt * tau.iter().zip(s.joint_velocities()).map(|(t, q)| (t * q).abs()).sum::<f64>();
                }
                Err(e) => {
                    self.state = None;
                    let info = StepInfo { t, error: Some(e.to_string()), tau, ..StepInfo::default() };
                    return Ok(StepResult {
                        obs: self.observe(&s0, self.time())?,
                        reward: 0.0,
                        done: true,
                        truncated: false,
                        info,
                    });
                }
            }
        }
        self.tick += 1;
        let com = self.sim.com_state(&s);
        let violations = self.bound.violations(&com, t)?;
        let violation = violations.iter().position(|&v| v);
        let r_s = if violation.is_some() { 0.0 } else { 1.0 };
        let r_p = energy_reward(&tau, &s.joint_velocities(), &self.tau_max, &self.qd_max);
        let reward = r_s * r_p;
        let fell = self.fell(&s);
        let terminated = violation.is_some() || fell;
        let truncated = !terminated && self.tick >= self.horizon;
        let info = StepInfo {
            t,
            r_s,
            r_p,
            violation,
            deviation: self.bound.deviation(&com, t)?,
            fell,
            error: None,
            tau,
        };
        if let Some(trace) = &mut self.trace {
            trace.rows.push(TraceRow {
                t,
                com,
                reward,
                r_s,
                r_p,
                tau,
                q: s.q,
                qd: s.qd,
                contacts: s.foot_contacts,
                work,
            });
        }
        self.state = if terminated || truncated { None } else { Some(s) };
        Ok(StepResult { obs: self.observe(&s, t)?, reward, done: terminated || truncated, truncated, info })
    }
}

impl Environment for SlipEnv {
    fn observation_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACT_DIM
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, rng: &mut Prng) -> Result<Vec<f64>, EnvError> {
        Ok(self.reset_with(rng)?.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        let r = self.step_full(action)?;
        Ok(EnvStep { obs: r.obs.to_vec(), reward: r.reward, terminated: r.done && !r.truncated, truncated: r.truncated })
    }

    fn mirror(&self) -> Option<MirrorSpec> {
        Some(MirrorSpec::planar_biped())
    }

    fn cost_of_transport(&self) -> Option<f64> {
        self.trace.as_ref().map(cost_of_transport)
    }
}
