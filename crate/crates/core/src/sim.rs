//! Planar floating-base biped with two hip-knee legs and penalty ground contact.
//!
//! Generalized coordinates are `q = [x, z, theta, l_hip, l_knee, r_hip, r_knee]`.
//! `(x, z)` is the hip point, `theta` the torso pitch. Every body angle is
//! measured counter-clockwise from straight down, so a leg segment at angle
//! `phi` points along `(sin phi, -cos phi)`, and the torso points up from the
//! hip. A positive hip angle swings the leg forward.
//!
//! Equations of motion are assembled per body from point Jacobians:
//! `M = sum(m Jv'Jv + I Jw'Jw)` and `Q = tau + sum(m Jv'(g - dJv qd)) + Jc'f`.
//! Steps that start with both feet above ground are integrated with RK4; steps
//! that start with a foot in the ground use a linearly implicit Euler step so
//! the stiff penalty and friction terms stay stable at the physics rate.

use alloc::string::String;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bound::ComState;
use crate::slip::{SlipError, SlipParams, SlipState};
use crate::GRAVITY;

pub const NQ: usize = 7;
pub const NJ: usize = 4;
/// Physics step [s].
pub const DEFAULT_PHYSICS_DT: f64 = 1.0 / 2000.0;
/// Physics steps per control tick.
pub const DEFAULT_SUBSTEPS: usize = 10;

pub const COORDINATE_NAMES: [&str; NQ] = ["x", "z", "theta", "l_hip", "l_knee", "r_hip", "r_knee"];

const TORSO: usize = 0;
const THIGH: [usize; 2] = [1, 3];
const SHANK: [usize; 2] = [2, 4];

/// Generalized coordinates that drive each body's angle.
const BODY_DOFS: [&[usize]; 5] = [&[2], &[2, 3], &[2, 3, 4], &[2, 5], &[2, 5, 6]];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid robot model: {0}")]
    Model(&'static str),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("simulation blew up at t = {t:.6} s: {coordinate} became {value} (step {dt} s, torques {tau:?})")]
    BlowUp { t: f64, coordinate: &'static str, value: f64, dt: f64, tau: [f64; NJ] },
    #[error("singular mass matrix at t = {t:.6} s")]
    Singular { t: f64 },
    #[error("no leg pose puts the foot {depth:.4} m below the hip (reach {min:.4} to {max:.4} m)")]
    Pose { depth: f64, min: f64, max: f64 },
    #[error(transparent)]
    Slip(#[from] SlipError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    /// Rotational inertia about the link CoM [kg m^2].
    pub inertia: f64,
    pub length: f64,
    /// Distance of the CoM from the proximal end along the link. For the
    /// torso this is measured upward from the hip.
    pub com_offset: f64,
}

impl Link {
    /// Uniform rod.
    pub fn rod(mass: f64, length: f64) -> Self {
        Self { mass, inertia: mass * length * length / 12.0, length, com_offset: 0.5 * length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    /// Index of the parent link.
    pub parent: usize,
    pub position_limits: [f64; 2],
    pub velocity_limits: [f64; 2],
    pub torque_limits: [f64; 2],
}

impl Joint {
    fn symmetric(parent: usize, position: f64, velocity: f64, torque: f64) -> Self {
        Self {
            parent,
            position_limits: [-position, position],
            velocity_limits: [-velocity, velocity],
            torque_limits: [-torque, torque],
        }
    }
}

/// Links are ordered torso, left thigh, left shank, right thigh, right shank;
/// joints are ordered left hip, left knee, right hip, right knee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub name: String,
    pub links: [Link; 5],
    pub joints: [Joint; NJ],
    /// Hip height r0 used by the SLIP template [m].
    pub hip_height: f64,
    /// Legs expected on the ground during a SLIP stance.
    pub n_stance_legs: u8,
}

impl RobotModel {
    fn biped(name: &str, mass: f64, hip_height: f64, thigh: f64, shank: f64, torso: f64, n_stance_legs: u8) -> Self {
        let torso_mass = 0.70 * mass;
        let mut body = Link::rod(torso_mass, 2.0 * torso);
        // Puts the whole-body CoM near the hip in the nominal stance pose.
        body.com_offset = torso;
        let thigh = Link::rod(0.11 * mass, thigh);
        let shank = Link::rod(0.04 * mass, shank);
        let joint = |parent| Joint::symmetric(parent, PI, 4.0 * PI, 2.7);
        Self {
            name: name.into(),
            links: [body, thigh, shank, thigh, shank],
            joints: [joint(0), joint(1), joint(0), joint(3)],
            hip_height,
            n_stance_legs,
        }
    }

    /// Sagittal-plane twin of the Bolt biped.
    pub fn planar_bolt() -> Self {
        Self::biped("planar_bolt", 1.3, 0.35, 0.2, 0.2, 0.06, 1)
    }

    /// Two-leg sagittal stand-in for the Solo quadruped: each planar leg
    /// stands for a pair of legs.
    pub fn planar_solo() -> Self {
        Self::biped("planar_solo", 2.2, 0.24, 0.14, 0.14, 0.042, 2)
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn leg_reach(&self) -> (f64, f64) {
        let (a, b) = (self.links[1].length, self.links[2].length);
        ((a - b).abs(), a + b)
    }

    pub fn torque_limit(&self, j: usize) -> [f64; 2] {
        self.joints[j].torque_limits
    }

    /// SLIP template matching this robot's mass and hip height.
    pub fn slip_params(&self, k_rel: f64, g: f64) -> Result<SlipParams, SimError> {
        Ok(SlipParams::from_robot(self.total_mass(), self.hip_height, k_rel, self.n_stance_legs, g)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for l in &self.links {
            if !(l.mass >= 0.0 && l.inertia >= 0.0 && l.length > 0.0 && l.com_offset.is_finite()) {
                return Err(SimError::Model("link mass and inertia must be non-negative, length positive"));
            }
            if !(l.mass.is_finite() && l.inertia.is_finite() && l.length.is_finite()) {
                return Err(SimError::Model("link properties must be finite"));
            }
        }
        if self.links[1] != self.links[3] || self.links[2] != self.links[4] {
            return Err(SimError::Model("left and right legs must be identical"));
        }
        if self.total_mass() <= 0.0 {
            return Err(SimError::Model("total mass must be positive"));
        }
        let parents = [0, 1, 0, 3];
        for (j, joint) in self.joints.iter().enumerate() {
            if joint.parent != parents[j] {
                return Err(SimError::Model("joint parents must be torso, thigh, torso, thigh"));
            }
            for [lo, hi] in [joint.position_limits, joint.velocity_limits, joint.torque_limits] {
                if !(lo < hi) || lo.is_nan() || hi.is_nan() {
                    return Err(SimError::Model("joint limit ranges must be non-empty"));
                }
            }
        }
        if !(self.hip_height.is_finite() && self.hip_height > 0.0) {
            return Err(SimError::NonPositive { name: "hip_height", value: self.hip_height });
        }
        if self.n_stance_legs == 0 {
            return Err(SimError::Model("n_stance_legs must be at least 1"));
        }
        Ok(())
    }
}

/// Penalty ground contact. Normal force `max(0, -k_n p - d_n pdot)`,
/// tangential force `-mu N tanh(v_t / v_slip)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub k_n: f64,
    pub d_n: f64,
    pub mu: f64,
    pub v_slip: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { k_n: 5000.0, d_n: 50.0, mu: 0.8, v_slip: 0.01 }
    }
}

impl ContactParams {
    /// Each planar foot of the quadruped twin stands for two feet.
    pub fn doubled(self) -> Self {
        Self { k_n: 2.0 * self.k_n, d_n: 2.0 * self.d_n, ..self }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, value) in [("k_n", self.k_n), ("d_n", self.d_n), ("v_slip", self.v_slip)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::NonPositive { name, value });
            }
        }
        if !(self.mu > 0.0 && self.mu <= 2.0) {
            return Err(SimError::NonPositive { name: "mu (at most 2)", value: self.mu });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
    pub t: f64,
    /// Left, right.
    pub foot_contacts: [bool; 2],
    /// Ground force on each foot, `[fx, fz]` [N].
    pub foot_forces: [[f64; 2]; 2],
}

impl SimState {
    pub fn joints(&self) -> [f64; NJ] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_velocities(&self) -> [f64; NJ] {
        [self.qd[3], self.qd[4], self.qd[5], self.qd[6]]
    }
}

/// Position, velocity, Jacobian and velocity-product acceleration of a point.
struct PointKin {
    p: [f64; 2],
    v: [f64; 2],
    jac: [[f64; NQ]; 2],
    bias: [f64; 2],
}

struct Kinematics {
    q: [f64; NQ],
    phi: [f64; 5],
    phid: [f64; 5],
}

impl Kinematics {
    fn new(q: &[f64; NQ], qd: &[f64; NQ]) -> Self {
        let phi = core::array::from_fn(|b| BODY_DOFS[b].iter().map(|&i| q[i]).sum());
        let phid = core::array::from_fn(|b| BODY_DOFS[b].iter().map(|&i| qd[i]).sum());
        Self { q: *q, phi, phid }
    }

    /// Point at `base + sum(d * down(phi_b))` over the `(body, d)` terms.
    fn point(&self, terms: &[(usize, f64)]) -> PointKin {
        let mut k = PointKin { p: [self.q[0], self.q[1]], v: [0.0; 2], jac: [[0.0; NQ]; 2], bias: [0.0; 2] };
        k.jac[0][0] = 1.0;
        k.jac[1][1] = 1.0;
        for &(b, d) in terms {
            let (s, c) = self.phi[b].sin_cos();
            k.p[0] += d * s;
            k.p[1] -= d * c;
            for &i in BODY_DOFS[b] {
                k.jac[0][i] += d * c;
                k.jac[1][i] += d * s;
            }
            let w2 = self.phid[b] * self.phid[b];
            k.bias[0] -= d * w2 * s;
            k.bias[1] += d * w2 * c;
        }
        k
    }
}

fn finish_velocity(mut k: PointKin, qd: &[f64; NQ]) -> PointKin {
    for r in 0..2 {
        k.v[r] = (0..NQ).map(|i| k.jac[r][i] * qd[i]).sum();
    }
    k
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: [[f64; NQ]; NQ], mut b: [f64; NQ]) -> Option<[f64; NQ]> {
    for col in 0..NQ {
        let pivot = (col..NQ).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 1e-300) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..NQ {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..NQ {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = [0.0; NQ];
    for row in (0..NQ).rev() {
        let s: f64 = (row + 1..NQ).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, Default)]
struct FootContact {
    force: [f64; 2],
    /// `d f / d v` and `d f / d p` of the active contact, row-major `[f][coord]`.
    dv: [[f64; 2]; 2],
    dp: [[f64; 2]; 2],
}

struct Dynamics {
    mass: [[f64; NQ]; NQ],
    force: [f64; NQ],
    damping: [[f64; NQ]; NQ],
    stiffness: [[f64; NQ]; NQ],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub model: RobotModel,
    pub contact: ContactParams,
    pub gravity: f64,
    /// Pins x, z and theta (for swing tests of a hanging robot).
    pub fixed_base: bool,
}

impl Simulator {
    pub fn new(model: RobotModel, contact: ContactParams) -> Result<Self, SimError> {
        model.validate()?;
        contact.validate()?;
        Ok(Self { model, contact, gravity: GRAVITY, fixed_base: false })
    }

    fn body_terms(&self, b: usize) -> ([(usize, f64); 2], usize) {
        let l = &self.model.links;
        match b {
            TORSO => ([(TORSO, -l[TORSO].com_offset), (0, 0.0)], 1),
            1 | 3 => ([(b, l[b].com_offset), (0, 0.0)], 1),
            _ => ([(b - 1, l[b - 1].length), (b, l[b].com_offset)], 2),
        }
    }

    fn foot_terms(&self, leg: usize) -> [(usize, f64); 2] {
        let (t, s) = (THIGH[leg], SHANK[leg]);
        [(t, self.model.links[t].length), (s, self.model.links[s].length)]
    }

    fn body(&self, kin: &Kinematics, b: usize, qd: &[f64; NQ]) -> PointKin {
        let (terms, n) = self.body_terms(b);
        finish_velocity(kin.point(&terms[..n]), qd)
    }

    fn foot(&self, kin: &Kinematics, leg: usize, qd: &[f64; NQ]) -> PointKin {
        finish_velocity(kin.point(&self.foot_terms(leg)), qd)
    }

    /// World positions of the left and right feet.
    pub fn foot_positions(&self, s: &SimState) -> [[f64; 2]; 2] {
        let kin = Kinematics::new(&s.q, &s.qd);
        core::array::from_fn(|leg| self.foot(&kin, leg, &s.qd).p)
    }

    fn contact_force(&self, p: [f64; 2], v: [f64; 2]) -> FootContact {
        let c = &self.contact;
        if p[1] > 0.0 {
            return FootContact::default();
        }
        let normal = -c.k_n * p[1] - c.d_n * v[1];
        if normal <= 0.0 {
            return FootContact::default();
        }
        let slip = (v[0] / c.v_slip).tanh();
        let tangential = -c.mu * normal * slip;
        let dslip = (1.0 - slip * slip) / c.v_slip;
        FootContact {
            force: [tangential, normal],
            dv: [[-c.mu * normal * dslip, c.mu * c.d_n * slip], [0.0, -c.d_n]],
            dp: [[0.0, c.mu * c.k_n * slip], [0.0, -c.k_n]],
        }
    }

    /// Ground contact state recomputed from positions and velocities.
    pub fn contacts(&self, q: &[f64; NQ], qd: &[f64; NQ]) -> ([bool; 2], [[f64; 2]; 2]) {
        let kin = Kinematics::new(q, qd);
        let mut flags = [false; 2];
        let mut forces = [[0.0; 2]; 2];
        for leg in 0..2 {
            let f = self.foot(&kin, leg, qd);
            let c = self.contact_force(f.p, f.v);
            flags[leg] = f.p[1] <= 0.0 && c.force[1] > 0.0;
            forces[leg] = c.force;
        }
        (flags, forces)
    }

    /// Builds a state with contact information filled in.
    pub fn state(&self, q: [f64; NQ], qd: [f64; NQ], t: f64) -> SimState {
        let (foot_contacts, foot_forces) = self.contacts(&q, &qd);
        SimState { q, qd, t, foot_contacts, foot_forces }
    }

    pub fn contact_flags(&self, s: &SimState) -> [bool; 2] {
        self.contacts(&s.q, &s.qd).0
    }

    fn dynamics(&self, q: &[f64; NQ], qd: &[f64; NQ], tau: &[f64; NJ], with_contact: bool) -> Dynamics {
        let kin = Kinematics::new(q, qd);
        let mut mass = [[0.0; NQ]; NQ];
        let mut force = [0.0; NQ];
        for (j, t) in tau.iter().enumerate() {
            force[3 + j] = *t;
        }
        for b in 0..5 {
            let link = &self.model.links[b];
            let k = self.body(&kin, b, qd);
            let acc = [-k.bias[0], -self.gravity - k.bias[1]];
            for i in 0..NQ {
                for j in 0..NQ {
                    mass[i][j] += link.mass * (k.jac[0][i] * k.jac[0][j] + k.jac[1][i] * k.jac[1][j]);
                }
                force[i] += link.mass * (k.jac[0][i] * acc[0] + k.jac[1][i] * acc[1]);
            }
            for &i in BODY_DOFS[b] {
                for &j in BODY_DOFS[b] {
                    mass[i][j] += link.inertia;
                }
            }
        }
        let mut damping = [[0.0; NQ]; NQ];
        let mut stiffness = [[0.0; NQ]; NQ];
        if with_contact {
            for leg in 0..2 {
                let f = self.foot(&kin, leg, qd);
                let c = self.contact_force(f.p, f.v);
                for i in 0..NQ {
                    force[i] += f.jac[0][i] * c.force[0] + f.jac[1][i] * c.force[1];
                    for j in 0..NQ {
                        for a in 0..2 {
                            for b in 0..2 {
                                let jj = f.jac[a][i] * f.jac[b][j];
                                damping[i][j] += jj * c.dv[a][b];
                                stiffness[i][j] += jj * c.dp[a][b];
                            }
                        }
                    }
                }
            }
        }
        Dynamics { mass, force, damping, stiffness }
    }

    fn pin_base(&self, a: &mut [[f64; NQ]; NQ], b: &mut [f64; NQ]) {
        if self.fixed_base {
            for i in 0..3 {
                a[i] = [0.0; NQ];
                a[i][i] = 1.0;
                b[i] = 0.0;
                for row in a.iter_mut().skip(3) {
                    row[i] = 0.0;
                }
            }
        }
    }

    fn acceleration(&self, q: &[f64; NQ], qd: &[f64; NQ], tau: &[f64; NJ], t: f64) -> Result<[f64; NQ], SimError> {
        let Dynamics { mut mass, mut force, .. } = self.dynamics(q, qd, tau, false);
        self.pin_base(&mut mass, &mut force);
        solve(mass, force).ok_or(SimError::Singular { t })
    }

    fn rk4(&self, s: &SimState, tau: &[f64; NJ], h: f64) -> Result<([f64; NQ], [f64; NQ]), SimError> {
        let axpy = |x: &[f64; NQ], a: f64, y: &[f64; NQ]| -> [f64; NQ] { core::array::from_fn(|i| x[i] + a * y[i]) };
        let (q0, v0) = (s.q, s.qd);
        let a1 = self.acceleration(&q0, &v0, tau, s.t)?;
        let (q2, v2) = (axpy(&q0, 0.5 * h, &v0), axpy(&v0, 0.5 * h, &a1));
        let a2 = self.acceleration(&q2, &v2, tau, s.t)?;
        let (q3, v3) = (axpy(&q0, 0.5 * h, &v2), axpy(&v0, 0.5 * h, &a2));
        let a3 = self.acceleration(&q3, &v3, tau, s.t)?;
        let (q4, v4) = (axpy(&q0, h, &v3), axpy(&v0, h, &a3));
        let a4 = self.acceleration(&q4, &v4, tau, s.t)?;
        let q = core::array::from_fn(|i| q0[i] + h / 6.0 * (v0[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]));
        let v = core::array::from_fn(|i| v0[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]));
        Ok((q, v))
    }

    /// `(M - hD - h^2 K) v' = (M - hD) v + h F`, then `q' = q + h v'`.
    fn implicit_euler(&self, s: &SimState, tau: &[f64; NJ], h: f64) -> Result<([f64; NQ], [f64; NQ]), SimError> {
        let d = self.dynamics(&s.q, &s.qd, tau, true);
        let mut a = [[0.0; NQ]; NQ];
        let mut b = [0.0; NQ];
        for i in 0..NQ {
            for j in 0..NQ {
                let md = d.mass[i][j] - h * d.damping[i][j];
                a[i][j] = md - h * h * d.stiffness[i][j];
                b[i] += md * s.qd[j];
            }
            b[i] += h * d.force[i];
        }
        self.pin_base(&mut a, &mut b);
        let v = solve(a, b).ok_or(SimError::Singular { t: s.t })?;
        let q = core::array::from_fn(|i| s.q[i] + h * v[i]);
        Ok((q, v))
    }

    /// Saturates torques at the joint limits.
    pub fn clamp_torque(&self, tau: &[f64; NJ]) -> [f64; NJ] {
        core::array::from_fn(|j| {
            let [lo, hi] = self.model.joints[j].torque_limits;
            tau[j].clamp(lo, hi)
        })
    }

    /// Advances the state by `dt`. Torques beyond the limits are saturated.
    pub fn step(&self, s: &SimState, tau: &[f64; NJ], dt: f64) -> Result<SimState, SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::NonPositive { name: "dt", value: dt });
        }
        let tau = self.clamp_torque(tau);
        let kin = Kinematics::new(&s.q, &s.qd);
        let grounded = (0..2).any(|leg| self.foot(&kin, leg, &s.qd).p[1] <= 0.0);
        let (mut q, mut qd) = if grounded { self.implicit_euler(s, &tau, dt)? } else { self.rk4(s, &tau, dt)? };
        let t = s.t + dt;
        for i in 0..NQ {
            for value in [q[i], qd[i]] {
                if !value.is_finite() {
                    return Err(SimError::BlowUp { t, coordinate: COORDINATE_NAMES[i], value, dt, tau });
                }
            }
        }
        for (j, joint) in self.model.joints.iter().enumerate() {
            let i = 3 + j;
            let [lo, hi] = joint.position_limits;
            if q[i] < lo || q[i] > hi {
                q[i] = q[i].clamp(lo, hi);
                qd[i] = 0.0;
            }
            let [vlo, vhi] = joint.velocity_limits;
            qd[i] = qd[i].clamp(vlo, vhi);
        }
        Ok(self.state(q, qd, t))
    }

    /// Runs `n` steps with a constant torque.
    pub fn advance(&self, s: &SimState, tau: &[f64; NJ], dt: f64, n: usize) -> Result<SimState, SimError> {
        let mut s = *s;
        for _ in 0..n {
            s = self.step(&s, tau, dt)?;
        }
        Ok(s)
    }

    /// Mass-weighted CoM position and velocity (`y = vy = 0`).
    pub fn com_state(&self, s: &SimState) -> ComState {
        let c = self.com_relative(s);
        ComState::planar(s.q[0] + c.x, s.q[1] + c.z, c.vx, c.vz)
    }

    /// CoM relative to the base origin, so results do not depend on where the base is.
    fn com_relative(&self, s: &SimState) -> ComState {
        let mut q = s.q;
        q[0] = 0.0;
        q[1] = 0.0;
        let kin = Kinematics::new(&q, &s.qd);
        let m = self.model.total_mass();
        let mut c = [0.0; 4];
        for b in 0..5 {
            let k = self.body(&kin, b, &s.qd);
            let mb = self.model.links[b].mass;
            c[0] += mb * k.p[0];
            c[1] += mb * k.p[1];
            c[2] += mb * k.v[0];
            c[3] += mb * k.v[1];
        }
        ComState::planar(c[0] / m, c[1] / m, c[2] / m, c[3] / m)
    }

    /// Linear momentum `[px, pz]` and angular momentum about the CoM.
    pub fn centroidal_momentum(&self, s: &SimState) -> ([f64; 2], f64) {
        let mut q = s.q;
        q[0] = 0.0;
        q[1] = 0.0;
        let kin = Kinematics::new(&q, &s.qd);
        let com = self.com_relative(s);
        let mut linear = [0.0; 2];
        let mut angular = 0.0;
        for b in 0..5 {
            let k = self.body(&kin, b, &s.qd);
            let link = &self.model.links[b];
            linear[0] += link.mass * k.v[0];
            linear[1] += link.mass * k.v[1];
            let r = [k.p[0] - com.x, k.p[1] - com.z];
            angular += link.inertia * kin.phid[b] + link.mass * (r[0] * k.v[1] - r[1] * k.v[0]);
        }
        (linear, angular)
    }

    pub fn kinetic_energy(&self, s: &SimState) -> f64 {
        let d = self.dynamics(&s.q, &s.qd, &[0.0; NJ], false);
        let mut e = 0.0;
        for i in 0..NQ {
            for j in 0..NQ {
                e += 0.5 * s.qd[i] * d.mass[i][j] * s.qd[j];
            }
        }
        e
    }

    pub fn potential_energy(&self, s: &SimState) -> f64 {
        let kin = Kinematics::new(&s.q, &s.qd);
        (0..5).map(|b| self.model.links[b].mass * self.gravity * self.body(&kin, b, &s.qd).p[1]).sum()
    }

    pub fn mechanical_energy(&self, s: &SimState) -> f64 {
        self.kinetic_energy(s) + self.potential_energy(s)
    }

    /// Hip and knee angles that put the foot `depth` straight below the hip,
    /// knee bent forward.
    pub fn leg_ik(&self, depth: f64) -> Result<[f64; 2], SimError> {
        self.leg_ik_to(0.0, depth)
    }

    /// Hip and knee angles (zero pitch) that put the foot `dx` ahead of and
    /// `depth` below the hip, knee bent forward.
    pub fn leg_ik_to(&self, dx: f64, depth: f64) -> Result<[f64; 2], SimError> {
        let (l1, l2) = (self.model.links[1].length, self.model.links[2].length);
        let (min, max) = self.model.leg_reach();
        let reach = dx.hypot(depth);
        if !(depth > 0.0 && reach > min && reach < max) {
            return Err(SimError::Pose { depth, min, max });
        }
        let c = (reach * reach - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        let knee = -c.clamp(-1.0, 1.0).acos();
        let hip = dx.atan2(depth) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
        Ok([hip, knee])
    }

    /// Places the hip at the apex position with zero pitch, both feet
    /// straight below with clearance, and rigid forward velocity `apex.vx`.
    /// Joint angles get uniform noise in `[-noise, noise]`.
    pub fn initial_pose<R: Rng + ?Sized>(&self, apex: &SlipState, rng: &mut R, noise: f64) -> Result<SimState, SimError> {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(SimError::NonPositive { name: "noise", value: noise });
        }
        let (l1, l2) = (self.model.links[1].length, self.model.links[2].length);
        // Bounds how far joint noise can lower a foot.
        let clearance = 0.005 + (l1 + 2.0 * l2) * noise;
        let [hip, knee] = self.leg_ik(apex.z - clearance)?;
        let mut q = [apex.x, apex.z, 0.0, hip, knee, hip, knee];
        if noise > 0.0 {
            for qi in q.iter_mut().skip(3) {
                *qi += rng.random_range(-noise..=noise);
            }
        }
        let mut qd = [0.0; NQ];
        qd[0] = apex.vx;
        Ok(self.state(q, qd, 0.0))
    }
}
