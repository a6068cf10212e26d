//! Space-time bounds around a reference CoM trajectory.
//!
//! A bound is a box of half-widths `rho` centred on the reference CoM state at
//! time `t`. A state is inside when every coordinate deviates by strictly less
//! than its half-width; an infinite half-width never triggers.

use alloc::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gait::{GaitError, ReferenceTrajectory};
use crate::slip::SlipState;

/// Default bound scale for the SLIP bound.
pub const DEFAULT_SLIP_EPSILON: f64 = 0.75;
/// Default bound scale for the constant-velocity baseline.
pub const DEFAULT_CONST_EPSILON: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("bound scale epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("target velocity must be positive and finite, got {0}")]
    Velocity(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("time {t} s is past the end of the reference ({end} s)")]
    EpisodeExhausted { t: f64, end: f64 },
    #[error(transparent)]
    Reference(#[from] GaitError),
}

/// CoM position and velocity, ordered `[x, y, z, vx, vy, vz]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl ComState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.vx, self.vy, self.vz]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { x: a[0], y: a[1], z: a[2], vx: a[3], vy: a[4], vz: a[5] }
    }

    /// Sagittal-plane embedding (`y = vy = 0`).
    pub fn planar(x: f64, z: f64, vx: f64, vz: f64) -> Self {
        Self { x, z, vx, vz, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl From<&SlipState> for ComState {
    fn from(s: &SlipState) -> Self {
        Self::planar(s.x, s.z, s.vx, s.vz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Tracks the full SLIP reference.
    Slip,
    /// Bounds only forward velocity around the target and the lateral position.
    Const,
}

#[derive(Debug, Clone, PartialEq)]
enum Center {
    Reference(Arc<ReferenceTrajectory>),
    Velocity(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeBound {
    kind: BoundKind,
    epsilon: f64,
    rho: [f64; 6],
    center: Center,
}

fn check_epsilon(epsilon: f64) -> Result<(), BoundError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(BoundError::Epsilon(epsilon))
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), BoundError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(BoundError::NonPositive { name, value })
    }
}

/// Bound around the SLIP reference:
/// `rho = epsilon * [inf, r0/2, r0/4, vx_span, vz_span/2, vz_span/2]`.
pub fn make_slip_bound(
    reference: Arc<ReferenceTrajectory>,
    epsilon: f64,
    r0: f64,
) -> Result<SpaceTimeBound, BoundError> {
    check_epsilon(epsilon)?;
    check_positive("r0", r0)?;
    check_positive("vx_span", reference.vx_span)?;
    check_positive("vz_span", reference.vz_span)?;
    let rho = [
        f64::INFINITY,
        epsilon * r0 / 2.0,
        epsilon * r0 / 4.0,
        epsilon * reference.vx_span,
        epsilon * reference.vz_span / 2.0,
        epsilon * reference.vz_span / 2.0,
    ];
    Ok(SpaceTimeBound { kind: BoundKind::Slip, epsilon, rho, center: Center::Reference(reference) })
}

/// Baseline bound that only limits the lateral position and the forward
/// velocity, with the SLIP bound's widths for those two coordinates.
pub fn make_const_bound(vx_des: f64, epsilon: f64, r0: f64, vx_span: f64) -> Result<SpaceTimeBound, BoundError> {
    if !(vx_des.is_finite() && vx_des > 0.0) {
        return Err(BoundError::Velocity(vx_des));
    }
    check_epsilon(epsilon)?;
    check_positive("r0", r0)?;
    check_positive("vx_span", vx_span)?;
    let inf = f64::INFINITY;
    let rho = [inf, epsilon * r0 / 2.0, inf, epsilon * vx_span, inf, inf];
    Ok(SpaceTimeBound { kind: BoundKind::Const, epsilon, rho, center: Center::Velocity(vx_des) })
}

impl SpaceTimeBound {
    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Half-widths `[x, y, z, vx, vy, vz]`.
    pub fn rho(&self) -> [f64; 6] {
        self.rho
    }

    pub fn reference(&self) -> Option<&Arc<ReferenceTrajectory>> {
        match &self.center {
            Center::Reference(r) => Some(r),
            Center::Velocity(_) => None,
        }
    }

    /// End of the reference, or infinity for the constant-velocity bound.
    pub fn horizon(&self) -> f64 {
        match &self.center {
            Center::Reference(r) => r.duration(),
            Center::Velocity(_) => f64::INFINITY,
        }
    }

    /// Centre of the box at time `t`.
    pub fn center(&self, t: f64) -> Result<ComState, BoundError> {
        match &self.center {
            Center::Reference(r) => {
                let end = r.duration();
                if t > end + 1e-9 {
                    return Err(BoundError::EpisodeExhausted { t, end });
                }
                Ok(ComState::from(&r.lookup(t)?))
            }
            Center::Velocity(vx) => Ok(ComState { vx: *vx, ..ComState::default() }),
        }
    }

    /// Element-wise `|s - center(t)|`.
    pub fn deviation(&self, s: &ComState, t: f64) -> Result<[f64; 6], BoundError> {
        let c = self.center(t)?.to_array();
        let s = s.to_array();
        Ok(core::array::from_fn(|i| (s[i] - c[i]).abs()))
    }

    /// Per-coordinate verdict: `true` where the deviation reaches the half-width.
    /// Non-finite coordinates count as violations.
    pub fn violations(&self, s: &ComState, t: f64) -> Result<[bool; 6], BoundError> {
        let d = self.deviation(s, t)?;
        Ok(core::array::from_fn(|i| !(d[i] < self.rho[i])))
    }

    pub fn contains(&self, s: &ComState, t: f64) -> Result<bool, BoundError> {
        Ok(!self.violations(s, t)?.contains(&true))
    }

    /// 1 inside the bound, 0 outside.
    pub fn survival_reward(&self, s: &ComState, t: f64) -> Result<f64, BoundError> {
        Ok(if self.contains(s, t)? { 1.0 } else { 0.0 })
    }
}
