use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::policy::Policy;
use super::replay::ReplayBuffer;
use super::sac::{Agent, Checkpoint, SacConfig};
use super::LearnError;
use crate::env::{EnvError, Environment, Transition};
use crate::Prng;

// Independent random streams derived from one seed.
const STREAM_ACT: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_UPDATE: u64 = 3;
const STREAM_EVAL: u64 = 4;

pub fn stream(seed: u64, stream: u64) -> Prng {
    let mut rng = Prng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub sac: SacConfig,
    /// Environment steps.
    pub total_steps: usize,
    /// Steps between evaluations; zero disables them.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Steps between checkpoints; zero disables them.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { sac: SacConfig::default(), total_steps: 100_000, eval_interval: 10_000, eval_episodes: 5, checkpoint_interval: 0 }
    }
}

/// One finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    /// Environment steps taken when the episode ended.
    pub steps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    /// Ticks survived.
    pub survival: usize,
    pub cot: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    #[serde(rename = "return")]
    pub ret: f64,
    pub survival: usize,
    pub truncated: bool,
    pub cot: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub steps: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_survival: f64,
    /// Mean survival over the horizon.
    pub survival_fraction: f64,
    /// Mean over episodes with a finite cost of transport.
    pub mean_cot: Option<f64>,
}

impl EvalRow {
    pub fn summarize(steps: usize, horizon: usize, stats: &[EpisodeStats]) -> Self {
        let n = stats.len().max(1) as f64;
        let mean_survival = stats.iter().map(|s| s.survival as f64).sum::<f64>() / n;
        let cots: Vec<f64> = stats.iter().filter_map(|s| s.cot).filter(|c| c.is_finite()).collect();
        Self {
            steps,
            episodes: stats.len(),
            mean_return: stats.iter().map(|s| s.ret).sum::<f64>() / n,
            mean_survival,
            survival_fraction: mean_survival / horizon.max(1) as f64,
            mean_cot: (!cots.is_empty()).then(|| cots.iter().sum::<f64>() / cots.len() as f64),
        }
    }
}

/// Runs one episode to termination or the horizon.
pub fn run_episode<E, P>(env: &mut E, rng: &mut Prng, mut policy: P) -> Result<EpisodeStats, LearnError>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64]) -> Result<Vec<f64>, LearnError>,
{
    let mut obs = env.reset(rng)?;
    let mut stats = EpisodeStats { ret: 0.0, survival: 0, truncated: false, cot: None };
    for _ in 0..env.horizon() {
        let a = policy(&obs)?;
        let step = env.step(&a)?;
        stats.ret += step.reward;
        obs = step.obs;
        if step.terminated {
            break;
        }
        stats.survival += 1;
        if step.truncated {
            stats.truncated = true;
            break;
        }
    }
    stats.cot = env.cost_of_transport();
    Ok(stats)
}

/// Deterministic-policy episodes from a fixed set of start states.
pub fn evaluate<E: Environment + ?Sized>(env: &mut E, policy: &Policy, episodes: usize, seed: u64) -> Result<Vec<EpisodeStats>, LearnError> {
    let mut rng = stream(seed, STREAM_EVAL);
    (0..episodes).map(|_| run_episode(env, &mut rng, |o| policy.deterministic(o))).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurveRow>,
    pub evals: Vec<EvalRow>,
    pub steps: usize,
    /// Why training stopped early, if it did.
    pub fault: Option<String>,
}

fn uniform_action(rng: &mut Prng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Soft actor-critic training. Environment faults and divergence end training
/// early and are reported in the outcome with everything gathered so far.
pub fn train<E, F, C>(mut make_env: F, config: &TrainConfig, mut on_checkpoint: C) -> Result<TrainOutcome, LearnError>
where
    E: Environment,
    F: FnMut() -> Result<E, EnvError>,
    C: FnMut(&Checkpoint),
{
    let sac = &config.sac;
    sac.validate()?;
    let mut env = make_env()?;
    let mut eval_env = make_env()?;
    let (obs_dim, act_dim) = (env.observation_dim(), env.action_dim());
    let mut init_rng = Prng::seed_from_u64(sac.seed);
    let mut agent = Agent::new(obs_dim, act_dim, sac.clone(), env.mirror(), &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(sac.replay_capacity)?;
    let mut act_rng = stream(sac.seed, STREAM_ACT);
    let mut env_rng = stream(sac.seed, STREAM_ENV);
    let mut update_rng = stream(sac.seed, STREAM_UPDATE);

    let mut outcome = TrainOutcome { agent: agent.clone(), curve: Vec::new(), evals: Vec::new(), steps: 0, fault: None };
    let mut eval = |agent: &Agent, steps: usize, evals: &mut Vec<EvalRow>| -> Result<(), LearnError> {
        let stats = evaluate(&mut eval_env, &agent.policy, config.eval_episodes, sac.seed)?;
        evals.push(EvalRow::summarize(steps, eval_env.horizon(), &stats));
        Ok(())
    };

    let mut obs = env.reset(&mut env_rng)?;
    let (mut ret, mut len) = (0.0, 0usize);
    let mut fault = None;
    let mut steps = 0;
    while steps < config.total_steps {
        let action = if steps < sac.warmup_steps { uniform_action(&mut act_rng, act_dim) } else { agent.act(&obs, &mut act_rng)? };
        let step = match env.step(&action) {
            Ok(s) => s,
            Err(e) => {
                fault = Some(format!("environment fault at step {steps}: {e}"));
                break;
            }
        };
        steps += 1;
        ret += step.reward;
        buffer.push(Transition { obs: obs.clone(), action, reward: step.reward, next_obs: step.obs.clone(), done: step.terminated });
        len += usize::from(!step.terminated);
        if steps >= sac.warmup_steps && buffer.len() >= sac.batch_size {
            if let Err(e) = agent.update(&buffer, &mut update_rng) {
                fault = Some(format!("update failed at step {steps}: {e}"));
                break;
            }
        }
        if step.done() {
            outcome.curve.push(CurveRow { episode: outcome.curve.len(), steps, ret, survival: len, cot: env.cost_of_transport() });
            ret = 0.0;
            len = 0;
            obs = match env.reset(&mut env_rng) {
                Ok(o) => o,
                Err(e) => {
                    fault = Some(format!("environment fault at reset: {e}"));
                    break;
                }
            };
        } else {
            obs = step.obs;
        }
        if config.eval_interval > 0 && steps % config.eval_interval == 0 {
            if let Err(e) = eval(&agent, steps, &mut outcome.evals) {
                fault = Some(format!("evaluation failed at step {steps}: {e}"));
                break;
            }
        }
        if config.checkpoint_interval > 0 && steps % config.checkpoint_interval == 0 {
            on_checkpoint(&agent.checkpoint(steps as u64));
        }
    }
    if fault.is_none() && config.eval_interval > 0 && outcome.evals.last().is_none_or(|e| e.steps != steps) {
        if let Err(e) = eval(&agent, steps, &mut outcome.evals) {
            fault = Some(format!("evaluation failed at step {steps}: {e}"));
        }
    }
    outcome.agent = agent;
    outcome.steps = steps;
    outcome.fault = fault;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvStep;
    use alloc::vec;

    /// One state, one step per episode. The reward
    /// `alpha (-(atanh a - c)^2 / (2 s^2) - log(1 - a^2))` makes the
    /// tanh-squashed `N(c, s^2)` the optimal max-entropy policy at temperature `alpha`.
    #[derive(Debug, Clone)]
    pub(crate) struct Bandit {
        pub alpha: f64,
        pub c: f64,
        pub s: f64,
    }

    impl Environment for Bandit {
        fn observation_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn horizon(&self) -> usize {
            1
        }
        fn reset(&mut self, _: &mut Prng) -> Result<Vec<f64>, EnvError> {
            Ok(vec![1.0])
        }
        fn step(&mut self, a: &[f64]) -> Result<EnvStep, EnvError> {
            let a = a[0].clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            let u = a.atanh();
            let r = self.alpha * (-(u - self.c).powi(2) / (2.0 * self.s * self.s) - (1.0 - a * a).ln());
            Ok(EnvStep { obs: vec![1.0], reward: r, terminated: true, truncated: false })
        }
    }

    fn bandit_config(learn_alpha: bool) -> TrainConfig {
        TrainConfig {
            sac: SacConfig {
                hidden: vec![32, 32],
                batch_size: 256,
                replay_capacity: 2000,
                warmup_steps: 200,
                learning_rate: 1e-3,
                initial_alpha: 0.5,
                learn_alpha,
                ..SacConfig::default()
            },
            total_steps: 8000,
            eval_interval: 0,
            ..TrainConfig::default()
        }
    }

    const BANDIT: Bandit = Bandit { alpha: 0.5, c: 0.5, s: 0.3 };

    #[test]
    fn recovers_the_max_entropy_bandit_policy() {
        let out = train(|| Ok(BANDIT), &bandit_config(false), |_| {}).unwrap();
        assert!(out.fault.is_none());
        let (m, ls) = out.agent.policy.gaussian(&[1.0]).unwrap();
        let s = ls[0].exp();
        assert!((m[0] - BANDIT.c).abs() <= 0.02 * BANDIT.c, "mean {}", m[0]);
        assert!((s - BANDIT.s).abs() <= 0.02 * BANDIT.s, "std {s}");
    }

    #[test]
    fn temperature_drives_entropy_to_target() {
        let out = train(|| Ok(BANDIT), &bandit_config(true), |_| {}).unwrap();
        let target = out.agent.target_entropy();
        let mut rng = stream(9, 0);
        let n = 100_000;
        let h = (0..n).map(|_| -out.agent.policy.sample(&[1.0], &mut rng).unwrap().1).sum::<f64>() / n as f64;
        assert!((h - target).abs() <= 0.05 * target.abs(), "entropy {h} vs {target}");
    }

    fn toy_config() -> TrainConfig {
        TrainConfig {
            sac: SacConfig { hidden: vec![16, 16], batch_size: 32, replay_capacity: 4000, warmup_steps: 300, ..SacConfig::default() },
            total_steps: 900,
            eval_interval: 300,
            eval_episodes: 2,
            checkpoint_interval: 450,
        }
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let run = || {
            let mut checkpoints = Vec::new();
            let out = train(crate::learn::toy::slip_apex_toy_env, &toy_config(), |c| checkpoints.push(c.clone())).unwrap();
            (out, checkpoints)
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert!(a.fault.is_none());
        assert_eq!(a.steps, 900);
        assert!(!a.curve.is_empty());
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.evals, b.evals);
        assert_eq!(ca, cb);
        assert_eq!(ca.iter().map(|c| c.steps).collect::<Vec<_>>(), [450, 900]);
        assert_eq!(a.evals.iter().map(|e| e.steps).collect::<Vec<_>>(), [300, 600, 900]);
        for row in &a.curve {
            assert!(row.ret <= row.survival as f64 + 1.0 + 1e-12);
        }
        let mut c = toy_config();
        c.sac.seed = 1;
        let other = train(crate::learn::toy::slip_apex_toy_env, &c, |_| {}).unwrap();
        assert_ne!(other.curve, a.curve);
    }

    struct Faulty(usize);

    impl Environment for Faulty {
        fn observation_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn horizon(&self) -> usize {
            10
        }
        fn reset(&mut self, _: &mut Prng) -> Result<Vec<f64>, EnvError> {
            Ok(vec![0.0])
        }
        fn step(&mut self, _: &[f64]) -> Result<EnvStep, EnvError> {
            self.0 += 1;
            if self.0 > 25 {
                return Err(EnvError::Config("broken"));
            }
            Ok(EnvStep { obs: vec![0.0], reward: 1.0, terminated: false, truncated: self.0 % 10 == 0 })
        }
    }

    #[test]
    fn environment_faults_stop_training_with_partial_results() {
        let mut config = toy_config();
        config.eval_interval = 0;
        config.checkpoint_interval = 0;
        let out = train(|| Ok(Faulty(0)), &config, |_| {}).unwrap();
        assert_eq!(out.steps, 25);
        assert_eq!(out.curve.len(), 2);
        assert!(out.fault.unwrap().contains("broken"));
    }
}
