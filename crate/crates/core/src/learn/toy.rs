//! A one-action sanity task: pick the SLIP touchdown angle once per cycle to
//! keep running at a target speed.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, EnvStep, Environment};
use crate::gait::{find_periodic_gait, GaitSearch, PeriodicGait};
use crate::slip::{cycle_events, SlipParams, SlipState};
use crate::Prng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApexToyConfig {
    pub params: SlipParams,
    pub vx_des: f64,
    /// Apex height of the reference gait over rest leg length.
    pub apex_height_ratio: f64,
    /// Touchdown angles reachable by actions `-1` and `1` [rad].
    pub alpha_range: [f64; 2],
    /// Velocity error at which the reward drops to `1/e` [m/s].
    pub reward_width: f64,
    /// Cycles per episode.
    pub horizon: usize,
    /// Relative uniform noise on the initial apex height; the speed follows
    /// from the reference energy.
    pub init_noise: f64,
    pub dt: f64,
}

impl Default for ApexToyConfig {
    fn default() -> Self {
        Self {
            params: SlipParams::bolt(),
            vx_des: 3.0,
            apex_height_ratio: 0.9,
            alpha_range: [0.1, 1.3],
            reward_width: 0.3,
            horizon: 100,
            init_noise: 0.03,
            dt: 5e-4,
        }
    }
}

/// Observation `(apex z, apex vx, vx_des - vx)`, action one touchdown angle.
/// Reward is `exp(-((v - vx_des) / width)^2)` per completed cycle, with `v`
/// the cycle's mean forward speed; a failed cycle ends the episode with zero
/// reward.
#[derive(Debug, Clone)]
pub struct SlipApexEnv {
    config: ApexToyConfig,
    gait: PeriodicGait,
    apex: Option<(f64, f64)>,
    cycles: usize,
}

impl SlipApexEnv {
    pub fn new(config: ApexToyConfig) -> Result<Self, EnvError> {
        let [lo, hi] = config.alpha_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(EnvError::Config("alpha range must be increasing"));
        }
        if config.horizon == 0 || !(config.reward_width > 0.0) || !(config.init_noise >= 0.0) {
            return Err(EnvError::Config("horizon and reward width must be positive"));
        }
        let search = GaitSearch { apex_height_ratio: config.apex_height_ratio, dt: config.dt, ..GaitSearch::default() };
        let gait = find_periodic_gait(&config.params, config.vx_des, &search)?;
        Ok(Self { config, gait, apex: None, cycles: 0 })
    }

    pub fn config(&self) -> &ApexToyConfig {
        &self.config
    }

    /// The reference gait whose touchdown angle keeps the target speed.
    pub fn gait(&self) -> &PeriodicGait {
        &self.gait
    }

    pub fn alpha(&self, action: f64) -> f64 {
        let [lo, hi] = self.config.alpha_range;
        lo + 0.5 * (hi - lo) * (action.clamp(-1.0, 1.0) + 1.0)
    }

    pub fn action_for(&self, alpha: f64) -> f64 {
        let [lo, hi] = self.config.alpha_range;
        2.0 * (alpha - lo) / (hi - lo) - 1.0
    }

    pub fn apex(&self) -> Option<(f64, f64)> {
        self.apex
    }

    fn observe(&self, (z, vx): (f64, f64)) -> Vec<f64> {
        vec![z, vx, self.config.vx_des - vx]
    }

    /// Starts from a given apex.
    pub fn reset_to(&mut self, z: f64, vx: f64) -> Vec<f64> {
        self.apex = Some((z, vx));
        self.cycles = 0;
        self.observe((z, vx))
    }
}

/// The default toy task.
pub fn slip_apex_toy_env() -> Result<SlipApexEnv, EnvError> {
    SlipApexEnv::new(ApexToyConfig::default())
}

impl Environment for SlipApexEnv {
    fn observation_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, rng: &mut Prng) -> Result<Vec<f64>, EnvError> {
        let n = self.config.init_noise;
        let apex = self.gait.apex;
        let z = if n > 0.0 { apex.z * (1.0 + rng.random_range(-n..=n)) } else { apex.z };
        let vx = (apex.vx * apex.vx + 2.0 * self.config.params.g * (apex.z - z)).sqrt();
        Ok(self.reset_to(z, vx))
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        let (z, vx) = self.apex.ok_or(EnvError::NotReset)?;
        if action.len() != 1 {
            return Err(EnvError::ActionDimension { expected: 1, got: action.len() });
        }
        if !action[0].is_finite() {
            return Err(EnvError::NonFiniteAction { index: 0 });
        }
        let alpha = self.alpha(action[0]);
        match cycle_events(&SlipState::apex(0.0, z, vx), alpha, &self.config.params, self.config.dt) {
            Ok(ev) => {
                self.cycles += 1;
                let next = (ev.apex.state.z, ev.apex.state.vx);
                let e = (ev.apex.state.x / ev.apex.time - self.config.vx_des) / self.config.reward_width;
                let truncated = self.cycles >= self.config.horizon;
                self.apex = if truncated { None } else { Some(next) };
                Ok(EnvStep { obs: self.observe(next), reward: (-e * e).exp(), terminated: false, truncated })
            }
            Err(_) => {
                self.apex = None;
                Ok(EnvStep { obs: self.observe((z, vx)), reward: 0.0, terminated: true, truncated: false })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::train::{run_episode, stream};

    #[test]
    fn fixed_point_angle_survives_the_horizon() {
        let mut env = slip_apex_toy_env().unwrap();
        let a = env.action_for(env.gait().alpha_star);
        assert!((env.alpha(a) - env.gait().alpha_star).abs() < 1e-12);
        let mut rng = stream(0, 0);
        for _ in 0..5 {
            let stats = run_episode(&mut env, &mut rng, |_| Ok(vec![a])).unwrap();
            assert!(stats.truncated);
            assert_eq!(stats.survival, env.horizon());
            assert!(stats.ret > 0.95 * env.horizon() as f64);
        }
    }

    #[test]
    fn infeasible_angle_fails_in_one_cycle() {
        let mut env = slip_apex_toy_env().unwrap();
        let mut rng = stream(1, 0);
        // Touchdown height above the apex: the foot is already below ground.
        let stats = run_episode(&mut env, &mut rng, |_| Ok(vec![-1.0])).unwrap();
        assert_eq!(stats.survival, 0);
        assert_eq!(stats.ret, 0.0);
    }

    #[test]
    fn transitions_are_deterministic() {
        let mut a = slip_apex_toy_env().unwrap();
        let mut b = a.clone();
        let oa = a.reset_to(0.32, 3.08);
        let ob = b.reset_to(0.32, 3.08);
        assert_eq!(oa, ob);
        for k in 0..10 {
            let act = [a.action_for(a.gait().alpha_star) + 0.01 * (k as f64).sin()];
            assert_eq!(a.step(&act).unwrap(), b.step(&act).unwrap());
        }
    }
}
