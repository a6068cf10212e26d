//! Periodic SLIP gaits and the time-sampled reference trajectories built from them.
//!
//! A periodic gait is a fixed point of the apex return map. The search runs two
//! nested bisections: for a fixed total energy (and fixed apex height) the
//! touchdown angle is bisected until the next apex height equals the current
//! one, and the energy is bisected until the gait's mean forward velocity
//! (stride length over period) matches the target.
//!
//! The gait phase signal runs linearly from 0 to pi over a flight phase and
//! from pi to 2*pi over a stance phase, so it is 0 at liftoff and pi at
//! touchdown. Reference trajectories start at an apex, which sits mid-flight.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::slip::{self, CycleEvents, Phase, SlipError, SlipParams, SlipState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaitError {
    #[error("target velocity must be positive and finite, got {0}")]
    InvalidTarget(f64),
    #[error("invalid search configuration: {0}")]
    InvalidSearch(&'static str),
    #[error(
        "no periodic gait at specific energy {energy:.5} J/kg: scanned alpha in [{alpha_lo:.4}, {alpha_hi:.4}] rad \
         without a bracketed fixed point"
    )]
    NoFixedPoint { energy: f64, alpha_lo: f64, alpha_hi: f64 },
    #[error(
        "mean velocity {vx_des} m/s not reachable: energies [{energy_lo:.5}, {energy_hi:.5}] J/kg give \
         [{mean_lo:.5}, {mean_hi:.5}] m/s"
    )]
    VelocityUnreachable { vx_des: f64, energy_lo: f64, energy_hi: f64, mean_lo: f64, mean_hi: f64 },
    #[error("velocity search stalled at {achieved} m/s for target {vx_des} m/s")]
    NotConverged { vx_des: f64, achieved: f64 },
    #[error("time {t} s outside trajectory [0, {end}] s")]
    OutOfRange { t: f64, end: f64 },
    #[error("reference needs at least one cycle and a positive step")]
    InvalidSampling,
    #[error(transparent)]
    Slip(#[from] SlipError),
}

/// Knobs of the periodic-gait search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitSearch {
    /// Apex height as a multiple of the rest leg length.
    pub apex_height_ratio: f64,
    /// Touchdown-angle scan range [rad].
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Scan points used to bracket the fixed point.
    pub alpha_grid: usize,
    /// Stance integration step [s].
    pub dt: f64,
    /// Target accuracy of the mean velocity [m/s].
    pub velocity_tol: f64,
    pub max_iterations: usize,
}

impl Default for GaitSearch {
    fn default() -> Self {
        Self {
            apex_height_ratio: 1.05,
            alpha_min: 0.01,
            alpha_max: 1.2,
            alpha_grid: 48,
            dt: slip::DEFAULT_DT,
            velocity_tol: 1e-6,
            max_iterations: 100,
        }
    }
}

/// One apex-to-apex cycle of a periodic SLIP gait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGait {
    pub params: SlipParams,
    /// Touchdown angle of the fixed point [rad].
    pub alpha_star: f64,
    /// Apex state at the start of the cycle (x = 0).
    pub apex: SlipState,
    /// Apex-to-apex period [s].
    pub period: f64,
    pub stride_length: f64,
    /// `stride_length / period` [m/s].
    pub mean_vx: f64,
    pub t_flight: f64,
    pub t_stance: f64,
    /// Time from the starting apex to touchdown [s].
    pub t_touchdown: f64,
    /// Integration step the gait was solved with [s].
    pub dt: f64,
}

impl PeriodicGait {
    pub fn t_liftoff(&self) -> f64 {
        self.t_touchdown + self.t_stance
    }

    /// Gait phase in `[0, 2*pi)` at time `tau` after the starting apex.
    pub fn phase(&self, tau: f64) -> f64 {
        let tau = num_traits::Euclid::rem_euclid(&tau, &self.period);
        let t_lo = self.t_liftoff();
        let rise = self.period - t_lo;
        let phi = if tau < self.t_touchdown {
            PI * (tau + rise) / self.t_flight
        } else if tau < t_lo {
            PI + PI * (tau - self.t_touchdown) / self.t_stance
        } else {
            PI * (tau - t_lo) / self.t_flight
        };
        if phi >= TAU { phi - TAU } else { phi }
    }

    /// Apex-to-apex residual `(|dz|, |dvx|)` of the fixed point.
    pub fn fixed_point_residual(&self) -> Result<(f64, f64), SlipError> {
        let (z, vx) = slip::apex_return_map(self.apex.z, self.apex.vx, self.alpha_star, &self.params, self.dt)?;
        Ok(((z - self.apex.z).abs(), (vx - self.apex.vx).abs()))
    }

    fn from_events(params: SlipParams, alpha_star: f64, apex: SlipState, ev: &CycleEvents, dt: f64) -> Self {
        let period = ev.period();
        let stride_length = ev.apex.state.x - apex.x;
        let t_stance = ev.stance_time();
        Self {
            params,
            alpha_star,
            apex,
            period,
            stride_length,
            mean_vx: stride_length / period,
            t_flight: period - t_stance,
            t_stance,
            t_touchdown: ev.touchdown.time,
            dt,
        }
    }
}

struct FixedPoint {
    alpha: f64,
    apex: SlipState,
    events: CycleEvents,
}

impl FixedPoint {
    fn mean_vx(&self) -> f64 {
        (self.events.apex.state.x - self.apex.x) / self.events.period()
    }
}

fn fixed_point_at_energy(p: &SlipParams, apex_z: f64, energy: f64, cfg: &GaitSearch) -> Result<FixedPoint, GaitError> {
    let vx = (2.0 * (energy - p.g * apex_z)).sqrt();
    let apex = SlipState::apex(0.0, apex_z, vx);
    let residual = |alpha: f64| -> Option<(f64, CycleEvents)> {
        let ev = slip::cycle_events(&apex, alpha, p, cfg.dt).ok()?;
        Some((ev.apex.state.z - apex_z, ev))
    };

    // The foot must reach the ground: r0 cos(alpha) <= apex height.
    let reachable = if apex_z < p.r0 { (apex_z / p.r0).acos() } else { 0.0 };
    let alpha_lo = cfg.alpha_min.max(reachable);
    let alpha_hi = cfg.alpha_max.min(core::f64::consts::FRAC_PI_2 - slip::ANGLE_MARGIN);
    let no_fixed_point = GaitError::NoFixedPoint { energy, alpha_lo, alpha_hi };
    if alpha_hi <= alpha_lo {
        return Err(no_fixed_point);
    }

    // Steep legs vault the mass forward (apex drops), flat legs brake it (apex rises).
    let step = (alpha_hi - alpha_lo) / (cfg.alpha_grid - 1) as f64;
    let mut prev: Option<(f64, f64, CycleEvents)> = None;
    let mut bracket = None;
    for i in 0..cfg.alpha_grid {
        let alpha = alpha_lo + i as f64 * step;
        let current = residual(alpha).map(|(r, ev)| (alpha, r, ev));
        if let (Some(lo), Some(hi)) = (prev, current) {
            if lo.1 < 0.0 && hi.1 >= 0.0 {
                bracket = Some((lo, hi));
                break;
            }
        }
        prev = current;
    }
    let (mut lo, mut hi) = bracket.ok_or(no_fixed_point.clone())?;

    for _ in 0..cfg.max_iterations {
        if hi.0 - lo.0 <= 1e-14 || hi.1 == 0.0 {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        let Some((r, ev)) = residual(mid) else {
            return Err(no_fixed_point);
        };
        if r < 0.0 {
            lo = (mid, r, ev);
        } else {
            hi = (mid, r, ev);
        }
    }
    let best = if lo.1.abs() < hi.1.abs() { lo } else { hi };
    Ok(FixedPoint { alpha: best.0, apex, events: best.2 })
}

/// Finds a periodic gait whose mean forward velocity is `vx_des`.
pub fn find_periodic_gait(p: &SlipParams, vx_des: f64, cfg: &GaitSearch) -> Result<PeriodicGait, GaitError> {
    if !(vx_des.is_finite() && vx_des > 0.0) {
        return Err(GaitError::InvalidTarget(vx_des));
    }
    p.validate()?;
    if !(cfg.apex_height_ratio > 0.0 && cfg.alpha_grid >= 2 && cfg.dt > 0.0 && cfg.velocity_tol > 0.0) {
        return Err(GaitError::InvalidSearch("ratio, grid, step and tolerance must be positive"));
    }
    let apex_z = cfg.apex_height_ratio * p.r0;
    let potential = p.g * apex_z;
    let energy_for = |apex_vx: f64| potential + 0.5 * apex_vx * apex_vx;

    // The mass slows down in stance, so the mean velocity is below the apex velocity.
    let mut lo_energy = energy_for(vx_des);
    let mut lo = fixed_point_at_energy(p, apex_z, lo_energy, cfg)?;
    if lo.mean_vx() >= vx_des {
        return Err(GaitError::VelocityUnreachable {
            vx_des,
            energy_lo: lo_energy,
            energy_hi: lo_energy,
            mean_lo: lo.mean_vx(),
            mean_hi: lo.mean_vx(),
        });
    }
    let mut hi = None;
    let mut last = (lo_energy, lo.mean_vx());
    for scale in [1.1, 1.25, 1.5, 2.0, 3.0] {
        let energy = energy_for(scale * vx_des);
        if let Ok(fp) = fixed_point_at_energy(p, apex_z, energy, cfg) {
            last = (energy, fp.mean_vx());
            if fp.mean_vx() >= vx_des {
                hi = Some((energy, fp));
                break;
            }
        }
    }
    let (mut hi_energy, mut hi) = hi.ok_or(GaitError::VelocityUnreachable {
        vx_des,
        energy_lo: lo_energy,
        energy_hi: last.0,
        mean_lo: lo.mean_vx(),
        mean_hi: last.1,
    })?;

    for _ in 0..cfg.max_iterations {
        if (hi.mean_vx() - vx_des).abs() <= cfg.velocity_tol || (lo.mean_vx() - vx_des).abs() <= cfg.velocity_tol {
            break;
        }
        let mid = 0.5 * (lo_energy + hi_energy);
        if mid <= lo_energy || mid >= hi_energy {
            break;
        }
        let fp = fixed_point_at_energy(p, apex_z, mid, cfg)?;
        if fp.mean_vx() < vx_des {
            lo = fp;
            lo_energy = mid;
        } else {
            hi = fp;
            hi_energy = mid;
        }
    }
    let best = if (lo.mean_vx() - vx_des).abs() < (hi.mean_vx() - vx_des).abs() { lo } else { hi };
    if (best.mean_vx() - vx_des).abs() > 1e-4 {
        return Err(GaitError::NotConverged { vx_des, achieved: best.mean_vx() });
    }
    Ok(PeriodicGait::from_events(*p, best.alpha, best.apex, &best.events, cfg.dt))
}

/// A reference sample: time, template state, gait phase and cycle index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub t: f64,
    pub state: SlipState,
    /// Gait phase in `[0, 2*pi)`.
    pub phi: f64,
    pub cycle: usize,
}

/// Time-sampled CoM reference made of identical gait cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    /// Sample step; samples sit on `k * dt` plus the exact event times.
    pub dt: f64,
    pub n_cycles: usize,
    pub gait: PeriodicGait,
    pub samples: Vec<ReferenceSample>,
    /// Max minus min forward velocity over the samples [m/s]. Every cycle
    /// repeats the same motion, so this is the per-cycle span.
    pub vx_span: f64,
    /// Max minus min vertical velocity over the samples [m/s].
    pub vz_span: f64,
}

/// Exact evaluation of the cycle at any time after its starting apex.
struct CycleEvaluator<'a> {
    gait: &'a PeriodicGait,
    stance: Vec<(f64, SlipState)>,
    liftoff: SlipState,
}

impl<'a> CycleEvaluator<'a> {
    fn new(gait: &'a PeriodicGait) -> Result<Self, GaitError> {
        let cycle = slip::integrate_cycle(&gait.apex, gait.alpha_star, &gait.params, gait.dt)?;
        let stance = cycle.trajectory.iter().filter(|(_, s)| s.is_stance()).copied().collect();
        let liftoff = cycle.liftoff().state;
        Ok(Self { gait, stance, liftoff })
    }

    fn state(&self, tau: f64) -> SlipState {
        let g = self.gait;
        let p = &g.params;
        if tau < g.t_touchdown {
            return slip::flight_step(&g.apex, tau, p);
        }
        let t_lo = g.t_liftoff();
        if tau == t_lo {
            return self.liftoff;
        }
        if tau > t_lo {
            let start = SlipState { phase: Phase::Flight, ..self.liftoff };
            return slip::flight_step(&start, tau - t_lo, p);
        }
        let i = self.stance.partition_point(|(t, _)| *t <= tau).max(1) - 1;
        let (t_i, s_i) = self.stance[i];
        if tau == t_i {
            s_i
        } else {
            slip::stance_partial_step(&s_i, tau - t_i, p)
        }
    }
}

fn shifted(mut s: SlipState, dx: f64) -> SlipState {
    s.x += dx;
    if let Phase::Stance { foot_x } = &mut s.phase {
        *foot_x += dx;
    }
    s
}

/// Samples `n_cycles` repetitions of the gait on the grid `k * dt`, with the
/// exact apex, touchdown and liftoff states inserted.
pub fn reference_trajectory(gait: &PeriodicGait, n_cycles: usize, dt: f64) -> Result<ReferenceTrajectory, GaitError> {
    if n_cycles == 0 || !(dt.is_finite() && dt > 0.0) {
        return Err(GaitError::InvalidSampling);
    }
    let eval = CycleEvaluator::new(gait)?;
    let period = gait.period;
    let duration = n_cycles as f64 * period;
    let at = |t: f64, cycle: usize, phi: f64| {
        let tau = t - cycle as f64 * period;
        let state = shifted(eval.state(tau), cycle as f64 * gait.stride_length);
        ReferenceSample { t, state, phi, cycle }
    };

    let mut samples = Vec::new();
    for c in 0..n_cycles {
        let base = c as f64 * period;
        samples.push(ReferenceSample { t: base, ..at(base, c, gait.phase(0.0)) });
        samples.push(at(base + gait.t_touchdown, c, PI));
        samples.push(at(base + gait.t_liftoff(), c, 0.0));
    }
    samples.push(at(duration, n_cycles - 1, gait.phase(0.0)));
    // Fix the final apex to the exact shifted starting apex.
    if let Some(last) = samples.last_mut() {
        last.state = shifted(gait.apex, n_cycles as f64 * gait.stride_length);
    }
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt;
        if t > duration {
            break;
        }
        let cycle = ((t / period) as usize).min(n_cycles - 1);
        samples.push(at(t, cycle, gait.phase(t - cycle as f64 * period)));
        k += 1;
    }
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    // Events take precedence over grid points that coincide with them.
    let mut merged: Vec<ReferenceSample> = Vec::with_capacity(samples.len());
    for s in samples {
        match merged.last() {
            Some(prev) if (s.t - prev.t).abs() <= 1e-12 => {}
            _ => merged.push(s),
        }
    }

    let (mut vx_min, mut vx_max, mut vz_min, mut vz_max) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in &merged {
        vx_min = vx_min.min(s.state.vx);
        vx_max = vx_max.max(s.state.vx);
        vz_min = vz_min.min(s.state.vz);
        vz_max = vz_max.max(s.state.vz);
    }
    Ok(ReferenceTrajectory {
        dt,
        n_cycles,
        gait: *gait,
        samples: merged,
        vx_span: vx_max - vx_min,
        vz_span: vz_max - vz_min,
    })
}

impl ReferenceTrajectory {
    pub fn duration(&self) -> f64 {
        self.n_cycles as f64 * self.gait.period
    }

    fn check(&self, t: f64) -> Result<(), GaitError> {
        let end = self.duration();
        if t.is_nan() || t < 0.0 || t > end + 1e-9 {
            Err(GaitError::OutOfRange { t, end })
        } else {
            Ok(())
        }
    }

    /// Gait phase angle at time `t`.
    pub fn phase_angle(&self, t: f64) -> Result<f64, GaitError> {
        self.check(t)?;
        Ok(self.gait.phase(t))
    }

    /// `(cos phi, sin phi)` embedding of the gait phase at time `t`.
    pub fn phase_at(&self, t: f64) -> Result<(f64, f64), GaitError> {
        let phi = self.phase_angle(t)?;
        Ok((phi.cos(), phi.sin()))
    }

    /// Reference state at `t`, snapped to the nearest sample when one lies
    /// within `dt / 2` and interpolated otherwise.
    pub fn lookup(&self, t: f64) -> Result<SlipState, GaitError> {
        self.check(t)?;
        let i = self.samples.partition_point(|s| s.t < t);
        let nearest = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.samples.get(j))
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()));
        match nearest {
            Some(s) if (s.t - t).abs() <= 0.5 * self.dt => Ok(s.state),
            _ => self.state_at(t),
        }
    }

    /// Reference state at `t`: the matching sample when `t` is on the sample
    /// grid, otherwise linear interpolation between the neighbouring samples.
    pub fn state_at(&self, t: f64) -> Result<SlipState, GaitError> {
        self.check(t)?;
        let i = self.samples.partition_point(|s| s.t < t);
        let tol = 1e-9;
        if let Some(s) = self.samples.get(i).filter(|s| s.t - t <= tol) {
            return Ok(s.state);
        }
        if i > 0 && t - self.samples[i - 1].t <= tol {
            return Ok(self.samples[i - 1].state);
        }
        let Some(right) = self.samples.get(i) else {
            return Ok(self.samples[self.samples.len() - 1].state);
        };
        let left = &self.samples[i - 1];
        let w = (t - left.t) / (right.t - left.t);
        let lerp = |a: f64, b: f64| a + w * (b - a);
        Ok(SlipState {
            x: lerp(left.state.x, right.state.x),
            z: lerp(left.state.z, right.state.z),
            vx: lerp(left.state.vx, right.state.vx),
            vz: lerp(left.state.vz, right.state.vz),
            phase: left.state.phase,
        })
    }
}
