//! Spring-loaded inverted pendulum (SLIP) template model.
//!
//! A point mass rides on a massless spring leg. The gait alternates between a
//! ballistic flight phase, integrated in closed form, and a stance phase in
//! which the foot is pinned to the ground and the leg spring pushes the mass.
//! Stance is integrated with classical RK4 and liftoff is localized by
//! bisection on the leg-length event function.
//!
//! Angle convention: the touchdown angle `alpha` is measured from the vertical
//! and the foot lands ahead of the mass, `foot_x = x + r0 * sin(alpha)`.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

/// Default integration step for stance [s].
pub const DEFAULT_DT: f64 = 1e-4;

/// Bisection stops once the liftoff bracket is narrower than this [s].
const EVENT_BRACKET: f64 = 1e-12;
/// Stance fails once the leg is compressed to this fraction of its rest length.
const MIN_LEG_FRACTION: f64 = 0.2;
/// A stance longer than this is treated as stuck [s].
const MAX_STANCE_TIME: f64 = 10.0;
/// Default relative leg stiffness `k r0 / (m g)`.
pub const K_REL: f64 = 10.7;
/// Touchdown angles must stay this far below pi/2 [rad].
pub const ANGLE_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlipError {
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("stance leg count must be 1 or 2, got {0}")]
    StanceLegs(u8),
    #[error("touchdown angle {0} rad is outside [0, pi/2 - 1e-3]")]
    Angle(f64),
    #[error("invalid apex state: {0}")]
    InvalidApex(&'static str),
    #[error("leg length {length} m exceeds rest length {rest} m")]
    LegOverExtended { length: f64, rest: f64 },
    #[error("state is not in stance")]
    NotInStance,
    #[error("fall at t = {:.6} s (z = {:.4} m, vx = {:.4} m/s)", .0.time, .0.state.z, .0.state.vx)]
    Fall(SlipEvent),
    #[error("leg compressed below {min_length} m at t = {time:.6} s")]
    Overcompressed { time: f64, min_length: f64 },
    #[error("no liftoff within {0} s of stance")]
    NoLiftoff(f64),
    #[error("liftoff at t = {time:.6} s with vertical velocity {vz} m/s, no apex follows")]
    NoApex { time: f64, vz: f64 },
}

/// Template-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipParams {
    /// Mass [kg].
    pub m: f64,
    /// Rest leg length, taken as the hip height [m].
    pub r0: f64,
    /// Single-leg spring stiffness [N/m].
    pub k: f64,
    /// Dimensionless relative stiffness, `k * r0 / (m * g)`.
    pub k_rel: f64,
    /// Legs assumed to be in contact at the same time during stance.
    pub n_stance_legs: u8,
    /// Gravity [m/s²].
    pub g: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, SlipError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(SlipError::NonPositive { name, value })
    }
}

impl SlipParams {
    /// Builds the parameters from robot mass, hip height and relative stiffness,
    /// with `k = k_rel * m * g / r0`.
    pub fn from_robot(m: f64, r0: f64, k_rel: f64, n_stance_legs: u8, g: f64) -> Result<Self, SlipError> {
        positive("m", m)?;
        positive("r0", r0)?;
        positive("k_rel", k_rel)?;
        positive("g", g)?;
        if !(1..=2).contains(&n_stance_legs) {
            return Err(SlipError::StanceLegs(n_stance_legs));
        }
        Ok(Self {
            m,
            r0,
            k: spring_constant(k_rel, m, r0, g),
            k_rel,
            n_stance_legs,
            g,
        })
    }

    /// Biped preset: 1.3 kg, 0.35 m hip height, one leg in stance.
    pub fn bolt() -> Self {
        Self::from_robot(1.3, 0.35, K_REL, 1, crate::GRAVITY).expect("valid preset")
    }

    /// Quadruped preset: 2.2 kg, 0.24 m hip height, two legs in stance.
    pub fn solo() -> Self {
        Self::from_robot(2.2, 0.24, K_REL, 2, crate::GRAVITY).expect("valid preset")
    }

    /// Stiffness of the single equivalent stance leg: parallel identical springs add.
    pub fn stance_stiffness(&self) -> f64 {
        f64::from(self.n_stance_legs) * self.k
    }

    pub fn validate(&self) -> Result<(), SlipError> {
        Self::from_robot(self.m, self.r0, self.k_rel, self.n_stance_legs, self.g)?;
        positive("k", self.k)?;
        Ok(())
    }
}

/// `k = k_rel * m * g / r0`.
pub fn spring_constant(k_rel: f64, m: f64, r0: f64, g: f64) -> f64 {
    k_rel * m * g / r0
}

/// Inverse of [`spring_constant`].
pub fn relative_stiffness(k: f64, m: f64, r0: f64, g: f64) -> f64 {
    k * r0 / (m * g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    Flight,
    Stance { foot_x: f64 },
}

/// Center-of-mass state of the template model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipState {
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
    pub phase: Phase,
}

impl SlipState {
    /// Flight state at the top of the ballistic arc.
    pub fn apex(x: f64, z: f64, vx: f64) -> Self {
        Self { x, z, vx, vz: 0.0, phase: Phase::Flight }
    }

    pub fn foot_x(&self) -> Option<f64> {
        match self.phase {
            Phase::Stance { foot_x } => Some(foot_x),
            Phase::Flight => None,
        }
    }

    pub fn is_stance(&self) -> bool {
        matches!(self.phase, Phase::Stance { .. })
    }

    /// Distance from foot to mass; `None` in flight.
    pub fn leg_length(&self) -> Option<f64> {
        self.foot_x().map(|fx| (self.x - fx).hypot(self.z))
    }

    /// Kinetic + gravitational + spring potential energy [J].
    pub fn energy(&self, p: &SlipParams) -> f64 {
        let kinetic = 0.5 * p.m * (self.vx * self.vx + self.vz * self.vz);
        let spring = match self.leg_length() {
            Some(r) => 0.5 * p.stance_stiffness() * (p.r0 - r) * (p.r0 - r),
            None => 0.0,
        };
        kinetic + p.m * p.g * self.z + spring
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Touchdown,
    Liftoff,
    Apex,
    Fall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipEvent {
    pub kind: EventKind,
    pub time: f64,
    pub state: SlipState,
}

/// Closed-form ballistic flight over `dt`.
pub fn flight_step(s: &SlipState, dt: f64, p: &SlipParams) -> SlipState {
    SlipState {
        x: s.x + s.vx * dt,
        z: s.z + s.vz * dt - 0.5 * p.g * dt * dt,
        vx: s.vx,
        vz: s.vz - p.g * dt,
        phase: Phase::Flight,
    }
}

/// Time derivative of `(x, z, vx, vz)` during stance.
pub fn stance_derivative(s: &SlipState, p: &SlipParams) -> Result<[f64; 4], SlipError> {
    let foot_x = s.foot_x().ok_or(SlipError::NotInStance)?;
    let r = (s.x - foot_x).hypot(s.z);
    if r > p.r0 {
        return Err(SlipError::LegOverExtended { length: r, rest: p.r0 });
    }
    Ok(stance_rhs(&[s.x, s.z, s.vx, s.vz], foot_x, p))
}

/// Ground reaction force on the mass; zero in flight.
pub fn grf(s: &SlipState, p: &SlipParams) -> [f64; 2] {
    match s.phase {
        Phase::Flight => [0.0, 0.0],
        Phase::Stance { foot_x } => spring_force(s.x - foot_x, s.z, p),
    }
}

fn spring_force(dx: f64, dz: f64, p: &SlipParams) -> [f64; 2] {
    let r = dx.hypot(dz);
    let magnitude = p.stance_stiffness() * (p.r0 - r);
    [magnitude * dx / r, magnitude * dz / r]
}

// Unchecked: liftoff localization evaluates slightly past r0.
fn stance_rhs(y: &[f64; 4], foot_x: f64, p: &SlipParams) -> [f64; 4] {
    let f = spring_force(y[0] - foot_x, y[1], p);
    [y[2], y[3], f[0] / p.m, f[1] / p.m - p.g]
}

fn rk4(y: &[f64; 4], foot_x: f64, h: f64, p: &SlipParams) -> [f64; 4] {
    let k1 = stance_rhs(y, foot_x, p);
    let k2 = stance_rhs(&axpy(y, 0.5 * h, &k1), foot_x, p);
    let k3 = stance_rhs(&axpy(y, 0.5 * h, &k2), foot_x, p);
    let k4 = stance_rhs(&axpy(y, h, &k3), foot_x, p);
    let mut out = *y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy(y: &[f64; 4], a: f64, k: &[f64; 4]) -> [f64; 4] {
    [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]]
}

/// Propagates a stance state by `duration` with RK4 steps no longer than `max_step`.
///
/// No event or fall checks are applied, so this also serves time-reversed
/// integration of a stance arc.
pub fn stance_flow(s: &SlipState, duration: f64, max_step: f64, p: &SlipParams) -> Result<SlipState, SlipError> {
    let foot_x = s.foot_x().ok_or(SlipError::NotInStance)?;
    let mut y = [s.x, s.z, s.vx, s.vz];
    let steps = (duration / max_step).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    for _ in 0..steps {
        y = rk4(&y, foot_x, h, p);
    }
    Ok(SlipState { x: y[0], z: y[1], vx: y[2], vz: y[3], phase: s.phase })
}

pub(crate) fn stance_partial_step(s: &SlipState, h: f64, p: &SlipParams) -> SlipState {
    match s.phase {
        Phase::Stance { foot_x } => {
            let y = rk4(&[s.x, s.z, s.vx, s.vz], foot_x, h, p);
            SlipState { x: y[0], z: y[1], vx: y[2], vz: y[3], phase: s.phase }
        }
        Phase::Flight => flight_step(s, h, p),
    }
}

fn check_angle(alpha: f64) -> Result<(), SlipError> {
    if alpha.is_finite() && (0.0..=FRAC_PI_2 - ANGLE_MARGIN).contains(&alpha) {
        Ok(())
    } else {
        Err(SlipError::Angle(alpha))
    }
}

/// The three events of a successful apex-to-apex cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleEvents {
    pub touchdown: SlipEvent,
    pub liftoff: SlipEvent,
    pub apex: SlipEvent,
}

impl CycleEvents {
    pub fn period(&self) -> f64 {
        self.apex.time
    }

    pub fn stance_time(&self) -> f64 {
        self.liftoff.time - self.touchdown.time
    }
}

/// Drives one apex-to-apex cycle, handing every sample (events included) to `sink`.
pub(crate) fn run_cycle(
    apex: &SlipState,
    alpha: f64,
    p: &SlipParams,
    dt: f64,
    mut sink: impl FnMut(f64, &SlipState),
) -> Result<CycleEvents, SlipError> {
    check_angle(alpha)?;
    positive("dt", dt)?;
    if apex.is_stance() {
        return Err(SlipError::InvalidApex("apex must be in flight"));
    }
    if apex.vz != 0.0 {
        return Err(SlipError::InvalidApex("apex vertical velocity must be zero"));
    }
    if !(apex.z.is_finite() && apex.z > 0.0 && apex.vx.is_finite()) {
        return Err(SlipError::InvalidApex("apex height must be positive"));
    }
    let touchdown_z = p.r0 * alpha.cos();
    if apex.z < touchdown_z {
        return Err(SlipError::InvalidApex("apex below touchdown height"));
    }
    let moving_forward = apex.vx > 0.0;

    // Descending flight, closed form.
    let t_td = (2.0 * (apex.z - touchdown_z) / p.g).sqrt();
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt;
        if t >= t_td {
            break;
        }
        sink(t, &flight_step(apex, t, p));
        k += 1;
    }
    let foot_x = apex.x + apex.vx * t_td + p.r0 * alpha.sin();
    let td_state = SlipState {
        x: apex.x + apex.vx * t_td,
        z: touchdown_z,
        vx: apex.vx,
        vz: -p.g * t_td,
        phase: Phase::Stance { foot_x },
    };
    let touchdown = SlipEvent { kind: EventKind::Touchdown, time: t_td, state: td_state };
    sink(t_td, &td_state);

    // Stance, RK4 with liftoff bisection.
    let min_length = MIN_LEG_FRACTION * p.r0;
    let leg = |y: &[f64; 4]| (y[0] - foot_x).hypot(y[1]);
    let mut y = [td_state.x, td_state.z, td_state.vx, td_state.vz];
    let mut t = t_td;
    let to_state = |y: &[f64; 4]| SlipState { x: y[0], z: y[1], vx: y[2], vz: y[3], phase: Phase::Stance { foot_x } };
    let liftoff = loop {
        let next = rk4(&y, foot_x, dt, p);
        if leg(&next) >= p.r0 {
            let (mut lo, mut hi) = (0.0, dt);
            let mut at_hi = next;
            while hi - lo > EVENT_BRACKET {
                let mid = 0.5 * (lo + hi);
                let trial = rk4(&y, foot_x, mid, p);
                if leg(&trial) >= p.r0 {
                    hi = mid;
                    at_hi = trial;
                } else {
                    lo = mid;
                }
            }
            let state = to_state(&at_hi);
            sink(t + hi, &state);
            break SlipEvent { kind: EventKind::Liftoff, time: t + hi, state };
        }
        t += dt;
        y = next;
        let state = to_state(&y);
        if y[1] <= 0.0 || (moving_forward && y[2] <= 0.0) {
            return Err(SlipError::Fall(SlipEvent { kind: EventKind::Fall, time: t, state }));
        }
        if leg(&y) <= min_length {
            return Err(SlipError::Overcompressed { time: t, min_length });
        }
        if t - t_td > MAX_STANCE_TIME {
            return Err(SlipError::NoLiftoff(MAX_STANCE_TIME));
        }
        sink(t, &state);
    };

    // Ascending flight to the next apex.
    let lo_state = liftoff.state;
    if lo_state.vz <= 0.0 {
        return Err(SlipError::NoApex { time: liftoff.time, vz: lo_state.vz });
    }
    let flight_start = SlipState { phase: Phase::Flight, ..lo_state };
    let t_rise = lo_state.vz / p.g;
    let mut k = 1usize;
    loop {
        let tau = k as f64 * dt;
        if tau >= t_rise {
            break;
        }
        sink(liftoff.time + tau, &flight_step(&flight_start, tau, p));
        k += 1;
    }
    let apex_state = SlipState {
        x: lo_state.x + lo_state.vx * t_rise,
        z: lo_state.z + lo_state.vz * lo_state.vz / (2.0 * p.g),
        vx: lo_state.vx,
        vz: 0.0,
        phase: Phase::Flight,
    };
    let next_apex = SlipEvent { kind: EventKind::Apex, time: liftoff.time + t_rise, state: apex_state };
    sink(next_apex.time, &apex_state);
    Ok(CycleEvents { touchdown, liftoff, apex: next_apex })
}

/// A sampled apex-to-apex cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipCycle {
    /// Samples every `dt` within each phase, with the exact event states inserted.
    pub trajectory: Vec<(f64, SlipState)>,
    /// Touchdown, liftoff and apex, in order.
    pub events: Vec<SlipEvent>,
}

impl SlipCycle {
    pub fn touchdown(&self) -> &SlipEvent {
        &self.events[0]
    }

    pub fn liftoff(&self) -> &SlipEvent {
        &self.events[1]
    }

    pub fn next_apex(&self) -> &SlipEvent {
        &self.events[2]
    }
}

/// Integrates flight → touchdown → stance → liftoff → flight → next apex.
pub fn integrate_cycle(apex: &SlipState, alpha: f64, p: &SlipParams, dt: f64) -> Result<SlipCycle, SlipError> {
    let mut trajectory = Vec::new();
    let events = run_cycle(apex, alpha, p, dt, |t, s| trajectory.push((t, *s)))?;
    Ok(SlipCycle {
        trajectory,
        events: alloc::vec![events.touchdown, events.liftoff, events.apex],
    })
}

/// Maps an apex `(z, vx)` to the next apex after one full cycle with touchdown angle `alpha`.
pub fn apex_return_map(apex_z: f64, apex_vx: f64, alpha: f64, p: &SlipParams, dt: f64) -> Result<(f64, f64), SlipError> {
    let events = run_cycle(&SlipState::apex(0.0, apex_z, apex_vx), alpha, p, dt, |_, _| {})?;
    Ok((events.apex.state.z, events.apex.state.vx))
}

/// Event times and states of one cycle without storing samples.
pub fn cycle_events(apex: &SlipState, alpha: f64, p: &SlipParams, dt: f64) -> Result<CycleEvents, SlipError> {
    run_cycle(apex, alpha, p, dt, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn stiffness_from_presets() {
        // Hand arithmetic: 10.7 * 1.3 * 9.81 / 0.35 and 10.7 * 2.2 * 9.81 / 0.24.
        let bolt = SlipParams::from_robot(1.3, 0.35, 10.7, 1, 9.81).unwrap();
        assert!((bolt.k - 389.877_428_571_428_6).abs() < 1e-9);
        assert!((bolt.k - 389.87).abs() < 0.01);
        let solo = SlipParams::from_robot(2.2, 0.24, 10.7, 2, 9.81).unwrap();
        assert!((solo.k - 962.197_5).abs() < 1e-9);
        assert_eq!(solo.stance_stiffness(), 2.0 * solo.k);
    }

    #[test]
    fn relative_stiffness_round_trip() {
        for &(m, r0, k_rel) in &[(1.3, 0.35, 10.7), (2.2, 0.24, 10.7), (70.0, 1.0, 3.3)] {
            let k = spring_constant(k_rel, m, r0, 9.81);
            assert!(rel(relative_stiffness(k, m, r0, 9.81), k_rel) < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            SlipParams::from_robot(0.0, 0.35, 10.7, 1, 9.81),
            Err(SlipError::NonPositive { name: "m", .. })
        ));
        assert!(SlipParams::from_robot(1.0, -0.1, 10.7, 1, 9.81).is_err());
        assert!(SlipParams::from_robot(1.0, 0.3, 10.7, 3, 9.81).is_err());
        assert!(SlipParams::from_robot(1.0, 0.3, f64::NAN, 1, 9.81).is_err());
    }

    #[test]
    fn flight_step_closed_form() {
        let p = SlipParams::bolt();
        let s = SlipState::apex(0.0, 0.4, 1.0);
        let n = flight_step(&s, 0.1, &p);
        assert!((n.z - 0.35095).abs() < 1e-12);
        assert!((n.vz + 0.981).abs() < 1e-12);
        assert_eq!(n.vx, 1.0);
        assert!((n.x - 0.1).abs() < 1e-15);
        assert_eq!(flight_step(&s, 0.0, &p), s);
        let e0 = s.energy(&p);
        for i in 1..20 {
            let e = flight_step(&s, i as f64 * 0.01, &p).energy(&p);
            assert!(rel(e, e0) < 1e-12);
        }
    }

    #[test]
    fn stance_derivative_cases() {
        let p = SlipParams::bolt();
        let at_rest = SlipState { x: 0.0, z: p.r0, vx: 0.0, vz: -1.0, phase: Phase::Stance { foot_x: 0.0 } };
        let d = stance_derivative(&at_rest, &p).unwrap();
        assert_eq!(d[2], 0.0);
        assert_eq!(d[3], -p.g);
        assert_eq!(grf(&at_rest, &p), [0.0, 0.0]);

        let compression = 0.03;
        let vertical = SlipState { z: p.r0 - compression, ..at_rest };
        let d = stance_derivative(&vertical, &p).unwrap();
        assert!((d[3] - (p.k * compression / p.m - p.g)).abs() < 1e-12);

        let stretched = SlipState { z: p.r0 + 0.01, ..at_rest };
        assert!(matches!(stance_derivative(&stretched, &p), Err(SlipError::LegOverExtended { .. })));
        assert_eq!(stance_derivative(&SlipState::apex(0.0, 0.3, 1.0), &p), Err(SlipError::NotInStance));
        assert_eq!(grf(&SlipState::apex(0.0, 0.1, 1.0), &p), [0.0, 0.0]);
    }

    #[test]
    fn vertical_hop_matches_spring_mass_closed_form() {
        let p = SlipParams::bolt();
        let z0 = 0.4;
        let cycle = integrate_cycle(&SlipState::apex(0.0, z0, 0.0), 0.0, &p, DEFAULT_DT).unwrap();
        let apex = cycle.next_apex().state;
        assert!((apex.z - z0).abs() < 1e-6);
        assert!(apex.vx.abs() < 1e-12);

        // Oracle: y = z - z_eq obeys y'' = -w^2 y during stance.
        let w = (p.k / p.m).sqrt();
        let y0 = p.m * p.g / p.k;
        let v0 = -(2.0 * p.g * (z0 - p.r0)).sqrt();
        let amplitude = (y0 * y0 + (v0 / w) * (v0 / w)).sqrt();
        let psi0 = (y0 / amplitude).acos();
        let stance_time = (2.0 * PI - 2.0 * psi0) / w;
        let measured = cycle.liftoff().time - cycle.touchdown().time;
        assert!((measured - stance_time).abs() < 1e-8, "{measured} vs {stance_time}");
        let compression = p.r0 - cycle.trajectory.iter().map(|(_, s)| s.z).fold(f64::INFINITY, f64::min);
        assert!((compression - (amplitude + y0)).abs() < 1e-6);
    }

    #[test]
    fn bolt_cycle_event_order_matches_dense_integration() {
        let p = SlipParams::bolt();
        let apex = SlipState::apex(0.0, 0.37, 2.1);
        let coarse = integrate_cycle(&apex, 0.35, &p, DEFAULT_DT).unwrap();
        let dense = integrate_cycle(&apex, 0.35, &p, 1e-6).unwrap();
        let kinds: Vec<_> = coarse.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [EventKind::Touchdown, EventKind::Liftoff, EventKind::Apex]);
        for (c, d) in coarse.events.iter().zip(&dense.events) {
            assert_eq!(c.kind, d.kind);
            assert!((c.time - d.time).abs() < 1e-9);
        }
        // Touchdown/liftoff appear exactly once among the samples.
        let transitions = coarse
            .trajectory
            .windows(2)
            .filter(|w| w[0].1.is_stance() != w[1].1.is_stance())
            .count();
        assert_eq!(transitions, 2);
        assert!(coarse.trajectory.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn cycle_conserves_energy_and_hits_event_surfaces() {
        let p = SlipParams::bolt();
        let alpha = 0.35;
        let apex = SlipState::apex(0.0, 0.37, 2.1);
        let cycle = integrate_cycle(&apex, alpha, &p, DEFAULT_DT).unwrap();
        let e0 = apex.energy(&p);
        for (_, s) in &cycle.trajectory {
            assert!(rel(s.energy(&p), e0) <= 1e-8);
        }
        let td = cycle.touchdown().state;
        assert!((td.z - p.r0 * alpha.cos()).abs() <= 1e-9 && td.vz < 0.0);
        let lo = cycle.liftoff().state;
        assert!((lo.leg_length().unwrap() - p.r0).abs() <= 1e-9);
        let f_td = grf(&td, &p);
        let f_lo = grf(&lo, &p);
        assert!(f_td[0].hypot(f_td[1]) < 1e-6);
        assert!(f_lo[0].hypot(f_lo[1]) < 1e-6);
    }

    #[test]
    fn peak_grf_consistent_with_relative_stiffness() {
        // Dense stance integration; k_rel = (F/mg)/(dr/r0) rearranged as F = m g k_rel dr / r0.
        let p = SlipParams::bolt();
        let cycle = integrate_cycle(&SlipState::apex(0.0, 0.37, 1.5), 0.3, &p, 1e-6).unwrap();
        let (mut peak, mut min_r) = (0.0f64, f64::INFINITY);
        for (_, s) in cycle.trajectory.iter().filter(|(_, s)| s.is_stance()) {
            let f = grf(s, &p);
            peak = peak.max(f[0].hypot(f[1]));
            min_r = min_r.min(s.leg_length().unwrap());
        }
        let predicted = p.m * p.g * p.k_rel * (p.r0 - min_r) / p.r0;
        assert!(rel(peak, predicted) < 1e-9);
    }

    #[test]
    fn failures_are_reported() {
        let p = SlipParams::bolt();
        // Steep forward lean stops the mass and it falls back.
        let err = integrate_cycle(&SlipState::apex(0.0, 0.36, 0.3), 1.2, &p, DEFAULT_DT).unwrap_err();
        assert!(matches!(err, SlipError::Fall(_) | SlipError::NoApex { .. }), "{err:?}");
        assert!(matches!(
            apex_return_map(0.37, 2.1, FRAC_PI_2, &p, DEFAULT_DT),
            Err(SlipError::Angle(_))
        ));
        assert!(matches!(
            apex_return_map(0.37, 2.1, FRAC_PI_2 - 1e-4, &p, DEFAULT_DT),
            Err(SlipError::Angle(_))
        ));
        assert!(matches!(
            apex_return_map(0.2, 2.1, 0.3, &p, DEFAULT_DT),
            Err(SlipError::InvalidApex(_))
        ));
        // A very soft leg collapses before liftoff.
        let soft = SlipParams::from_robot(1.3, 0.35, 0.5, 1, 9.81).unwrap();
        assert!(matches!(
            integrate_cycle(&SlipState::apex(0.0, 0.6, 0.5), 0.1, &soft, DEFAULT_DT),
            Err(SlipError::Overcompressed { .. })
        ));
    }

    #[test]
    fn return_map_step_size_robust() {
        let p = SlipParams::bolt();
        let a = apex_return_map(0.37, 2.1, 0.35, &p, 1e-4).unwrap();
        let b = apex_return_map(0.37, 2.1, 0.35, &p, 1e-5).unwrap();
        assert!((a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6);
    }

    #[test]
    fn stance_arc_is_time_reversible() {
        let p = SlipParams::bolt();
        let cycle = integrate_cycle(&SlipState::apex(0.0, 0.37, 2.1), 0.35, &p, DEFAULT_DT).unwrap();
        let td = cycle.touchdown().state;
        let lo = cycle.liftoff().state;
        let duration = cycle.liftoff().time - cycle.touchdown().time;
        let back = stance_flow(&SlipState { vx: -lo.vx, vz: -lo.vz, ..lo }, duration, 1e-5, &p).unwrap();
        assert!((back.x - td.x).abs() < 1e-9 && (back.z - td.z).abs() < 1e-9);
        assert!((back.vx + td.vx).abs() < 1e-8 && (back.vz + td.vz).abs() < 1e-8);
    }
}
