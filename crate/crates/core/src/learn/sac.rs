//! Soft actor-critic losses, their gradients, and the agent that applies them.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Matrix, Mlp};
use super::policy::{log1m_tanh2, Policy, MAX_ACTION};
use super::replay::ReplayBuffer;
use super::LearnError;
use crate::env::Transition;
use crate::symmetry::{augment_batch, symmetry_loss_heads, MirrorSpec};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Target-network smoothing coefficient.
    pub tau: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub lambda_sym: f64,
    pub hidden: Vec<usize>,
    /// Uniform random steps before learning starts.
    pub warmup_steps: usize,
    pub initial_alpha: f64,
    pub learn_alpha: bool,
    /// Add mirrored transitions to every critic batch.
    pub augment_critic: bool,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            learning_rate: 3e-4,
            batch_size: 256,
            replay_capacity: 1_000_000,
            tau: 0.005,
            target_entropy: None,
            lambda_sym: 0.1,
            hidden: vec![256, 256],
            warmup_steps: 1000,
            initial_alpha: 1.0,
            learn_alpha: true,
            augment_critic: true,
            seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LearnError::Config("gamma must be in (0, 1)"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LearnError::Config("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(LearnError::Config("batch size must be positive and fit in the replay buffer"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(LearnError::Config("tau must be in (0, 1]"));
        }
        if !(self.lambda_sym.is_finite() && self.lambda_sym >= 0.0) {
            return Err(LearnError::Config("lambda_sym must be non-negative"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(LearnError::Config("hidden layers must be non-empty"));
        }
        if !(self.initial_alpha.is_finite() && self.initial_alpha > 0.0) {
            return Err(LearnError::Config("initial alpha must be positive"));
        }
        if self.target_entropy.is_some_and(|h| !h.is_finite()) {
            return Err(LearnError::Config("target entropy must be finite"));
        }
        Ok(())
    }
}

/// A batch of transitions as matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub action: Matrix,
    pub reward: Vec<f64>,
    pub next_obs: Matrix,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn new<T: core::borrow::Borrow<Transition>>(ts: &[T]) -> Self {
        let ts: Vec<&Transition> = ts.iter().map(|t| t.borrow()).collect();
        Self {
            obs: Matrix::from_rows(&ts.iter().map(|t| t.obs.as_slice()).collect::<Vec<_>>()),
            action: Matrix::from_rows(&ts.iter().map(|t| t.action.as_slice()).collect::<Vec<_>>()),
            reward: ts.iter().map(|t| t.reward).collect(),
            next_obs: Matrix::from_rows(&ts.iter().map(|t| t.next_obs.as_slice()).collect::<Vec<_>>()),
            done: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

/// Squashed actions and log-probabilities for each row, with fixed noise.
struct Squashed {
    action: Matrix,
    /// `exp(log_std) * xi`.
    spread: Matrix,
    log_prob: Vec<f64>,
}

fn squash_rows(mean: &Matrix, log_std: &Matrix, noise: &Matrix) -> Squashed {
    let (n, d) = (mean.rows, mean.cols);
    let mut action = Matrix::zeros(n, d);
    let mut spread = Matrix::zeros(n, d);
    let mut log_prob = vec![0.0; n];
    let c = 0.5 * (2.0 * core::f64::consts::PI).ln();
    for r in 0..n {
        for j in 0..d {
            let (m, ls, xi) = (mean.row(r)[j], log_std.row(r)[j], noise.row(r)[j]);
            let s = ls.exp() * xi;
            let u = m + s;
            action.row_mut(r)[j] = u.tanh().clamp(-MAX_ACTION, MAX_ACTION);
            spread.row_mut(r)[j] = s;
            log_prob[r] += -0.5 * xi * xi - ls - c - log1m_tanh2(u);
        }
    }
    Squashed { action, spread, log_prob }
}

/// `y = r + gamma (1 - done) (min_k Qbar_k(s', a') - alpha log pi(a'|s'))`
/// with `a'` drawn from the policy using `noise`.
pub fn q_targets(policy: &Policy, q_target: [&Mlp; 2], alpha: f64, gamma: f64, batch: &Batch, noise: &Matrix) -> Vec<f64> {
    let pf = policy.forward(&batch.next_obs);
    let sq = squash_rows(&pf.mean, &pf.log_std, noise);
    let input = batch.next_obs.hcat(&sq.action);
    let q1 = q_target[0].predict(&input);
    let q2 = q_target[1].predict(&input);
    (0..batch.len())
        .map(|b| {
            let soft = q1.data[b].min(q2.data[b]) - alpha * sq.log_prob[b];
            let cont = if batch.done[b] { 0.0 } else { 1.0 };
            batch.reward[b] + gamma * cont * soft
        })
        .collect()
}

/// `mean (Q(s, a) - y)^2 / 2` and its parameter gradient.
pub fn q_loss(q: &Mlp, obs: &Matrix, action: &Matrix, target: &[f64]) -> (f64, Vec<f64>) {
    let fwd = q.forward(&obs.hcat(action));
    let n = target.len() as f64;
    let out = fwd.output();
    let mut d = Matrix::zeros(out.rows, 1);
    let mut loss = 0.0;
    for (b, y) in target.iter().enumerate() {
        let e = out.data[b] - y;
        loss += 0.5 * e * e / n;
        d.data[b] = e / n;
    }
    let mut grad = vec![0.0; q.n_params()];
    q.backward(&fwd, &d, &mut grad);
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    /// Total objective including the weighted symmetry term.
    pub loss: f64,
    /// Unweighted symmetry loss.
    pub symmetry: f64,
    pub mean_log_prob: f64,
    pub grad: Vec<f64>,
}

/// `mean(alpha log pi(a|s) - min_k Q_k(s, a)) + lambda L_sym` with
/// reparameterized actions `a = tanh(mean + std * noise)`.
///
/// With `sym`, `obs` holds a batch followed by its mirror image and the
/// symmetry loss pairs row `b` with row `b + n/2`.
pub fn policy_loss(
    policy: &Policy,
    q: [&Mlp; 2],
    alpha: f64,
    obs: &Matrix,
    noise: &Matrix,
    sym: Option<(&MirrorSpec, f64)>,
) -> Result<PolicyLoss, LearnError> {
    let pf = policy.forward(obs);
    if !pf.is_finite() {
        return Err(LearnError::NonFinite("policy output"));
    }
    let (n, d) = (pf.mean.rows, pf.mean.cols);
    let sq = squash_rows(&pf.mean, &pf.log_std, noise);
    let input = obs.hcat(&sq.action);
    let f1 = q[0].forward(&input);
    let f2 = q[1].forward(&input);
    let inv = 1.0 / n as f64;
    let mut d1 = Matrix::zeros(n, 1);
    let mut d2 = Matrix::zeros(n, 1);
    let mut loss = 0.0;
    let mut mean_log_prob = 0.0;
    for b in 0..n {
        let (a, c) = (f1.output().data[b], f2.output().data[b]);
        if a <= c {
            d1.data[b] = -inv;
        } else {
            d2.data[b] = -inv;
        }
        loss += inv * (alpha * sq.log_prob[b] - a.min(c));
        mean_log_prob += inv * sq.log_prob[b];
    }
    let obs_dim = obs.cols;
    let mut scratch = vec![0.0; q[0].n_params()];
    let g1 = q[0].backward(&f1, &d1, &mut scratch);
    let mut scratch = vec![0.0; q[1].n_params()];
    let g2 = q[1].backward(&f2, &d2, &mut scratch);

    // Head gradients: d mean and d log_std.
    let mut d_mean = Matrix::zeros(n, d);
    let mut d_ls = Matrix::zeros(n, d);
    for b in 0..n {
        for j in 0..d {
            let a = sq.action.row(b)[j];
            let s = sq.spread.row(b)[j];
            let dq = g1.row(b)[obs_dim + j] + g2.row(b)[obs_dim + j];
            let du = dq * (1.0 - a * a) + alpha * inv * 2.0 * a;
            d_mean.row_mut(b)[j] = du;
            d_ls.row_mut(b)[j] = du * s - alpha * inv;
        }
    }

    let mut symmetry = 0.0;
    if let Some((mirror, lambda)) = sym {
        if n % 2 != 0 {
            return Err(LearnError::Config("symmetry batch must hold states and their mirrors"));
        }
        let h = n / 2;
        let var: Vec<f64> = pf.log_std.data.iter().map(|ls| (2.0 * ls).exp()).collect();
        let split = h * d;
        let l = symmetry_loss_heads(&mirror.action, &pf.mean.data[..split], &var[..split], &pf.mean.data[split..], &var[split..])?;
        symmetry = l.loss;
        loss += lambda * l.loss;
        for i in 0..split {
            d_mean.data[i] += lambda * l.d_mean[i];
            d_mean.data[split + i] += lambda * l.d_mean_mirrored[i];
            d_ls.data[i] += lambda * l.d_var[i] * 2.0 * var[i];
            d_ls.data[split + i] += lambda * l.d_var_mirrored[i] * 2.0 * var[split + i];
        }
    }

    let mut d_out = Matrix::zeros(n, 2 * d);
    for b in 0..n {
        for j in 0..d {
            d_out.row_mut(b)[j] = d_mean.row(b)[j];
            d_out.row_mut(b)[d + j] = d_ls.row(b)[j] * pf.d_log_std.row(b)[j];
        }
    }
    let mut grad = vec![0.0; policy.net().n_params()];
    policy.net().backward(&pf.fwd, &d_out, &mut grad);
    Ok(PolicyLoss { loss, symmetry, mean_log_prob, grad })
}

/// `-alpha (mean log pi + target entropy)` and its derivative in `log alpha`.
pub fn temperature_loss(log_alpha: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let l = -log_alpha.exp() * (mean_log_prob + target_entropy);
    (l, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub q: [f64; 2],
    pub policy: f64,
    pub symmetry: f64,
    pub temperature: f64,
    pub alpha: f64,
    /// `-mean log pi` over the policy batch.
    pub entropy: f64,
    /// Rows in the critic batch.
    pub critic_rows: usize,
}

/// Network parameters at a point in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub steps: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub config: SacConfig,
    pub policy: Mlp,
    pub q: [Mlp; 2],
    pub q_target: [Mlp; 2],
    pub log_alpha: f64,
    pub mirror: Option<MirrorSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    config: SacConfig,
    obs_dim: usize,
    act_dim: usize,
    pub policy: Policy,
    pub q: [Mlp; 2],
    pub q_target: [Mlp; 2],
    pub log_alpha: f64,
    mirror: Option<MirrorSpec>,
    opt_policy: Adam,
    opt_q: [Adam; 2],
    opt_alpha: Adam,
    updates: u64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        config: SacConfig,
        mirror: Option<MirrorSpec>,
        rng: &mut R,
    ) -> Result<Self, LearnError> {
        config.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(LearnError::Config("observation and action dimensions must be positive"));
        }
        if let Some(m) = &mirror {
            if m.state.len() != obs_dim || m.action.len() != act_dim {
                return Err(LearnError::Config("mirror maps do not match the environment"));
            }
        }
        let policy = Policy::new(obs_dim, act_dim, &config.hidden, rng);
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let q = [Mlp::new(&sizes, rng), Mlp::new(&sizes, rng)];
        let lr = config.learning_rate;
        Ok(Self {
            obs_dim,
            act_dim,
            opt_policy: Adam::new(policy.net().n_params(), lr),
            opt_q: [Adam::new(q[0].n_params(), lr), Adam::new(q[1].n_params(), lr)],
            opt_alpha: Adam::new(1, lr),
            q_target: q.clone(),
            q,
            policy,
            log_alpha: config.initial_alpha.ln(),
            mirror,
            config,
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn mirror(&self) -> Option<&MirrorSpec> {
        self.mirror.as_ref()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(-(self.act_dim as f64))
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>, LearnError> {
        Ok(self.policy.sample(obs, rng)?.0)
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.policy.deterministic(obs)
    }

    /// One update on a uniformly sampled batch.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<LossReport, LearnError> {
        let batch: Vec<Transition> = buffer.sample(self.config.batch_size, rng)?.into_iter().cloned().collect();
        self.update_on(&batch, rng)
    }

    /// One gradient step on each critic, the policy and the temperature,
    /// then target smoothing. Nothing changes if any loss is non-finite.
    pub fn update_on<R: Rng + ?Sized>(&mut self, transitions: &[Transition], rng: &mut R) -> Result<LossReport, LearnError> {
        if transitions.is_empty() {
            return Err(LearnError::BufferTooSmall { len: 0, batch: 1 });
        }
        let mirror = self.mirror.clone();
        let critic = match &mirror {
            Some(m) if self.config.augment_critic => Batch::new(&augment_batch(transitions, m)?),
            _ => Batch::new(transitions),
        };
        let alpha = self.alpha();
        let next_noise = standard_normal(critic.len(), self.act_dim, rng);
        let y = q_targets(&self.policy, [&self.q_target[0], &self.q_target[1]], alpha, self.config.gamma, &critic, &next_noise);

        let mut q = self.q.clone();
        let mut opt_q = self.opt_q.clone();
        let mut q_losses = [0.0; 2];
        for k in 0..2 {
            let (l, g) = q_loss(&q[k], &critic.obs, &critic.action, &y);
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::Diverged { update: self.updates, what: "critic loss" });
            }
            q_losses[k] = l;
            opt_q[k].step(q[k].params_mut(), &g);
        }

        // Policy rows: the batch, followed by its mirror when a mirror is known.
        let obs = Batch::new(transitions).obs;
        let (policy_obs, sym) = match &mirror {
            Some(m) => {
                let mirrored = Matrix::from_vec(obs.rows, obs.cols, m.state.apply_rows(&obs.data)?);
                (obs.vcat(&mirrored), Some((m, self.config.lambda_sym)))
            }
            None => (obs, None),
        };
        let noise = standard_normal(policy_obs.rows, self.act_dim, rng);
        let pl = policy_loss(&self.policy, [&q[0], &q[1]], alpha, &policy_obs, &noise, sym)?;
        if !pl.loss.is_finite() || pl.grad.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::Diverged { update: self.updates, what: "policy loss" });
        }
        let (tl, tg) = temperature_loss(self.log_alpha, pl.mean_log_prob, self.target_entropy());
        if !tl.is_finite() {
            return Err(LearnError::Diverged { update: self.updates, what: "temperature loss" });
        }

        self.q = q;
        self.opt_q = opt_q;
        self.opt_policy.step(self.policy.net_mut().params_mut(), &pl.grad);
        if self.config.learn_alpha {
            let mut la = [self.log_alpha];
            self.opt_alpha.step(&mut la, &[tg]);
            self.log_alpha = la[0];
        }
        for k in 0..2 {
            self.q_target[k].soft_update(&self.q[k], self.config.tau);
        }
        self.updates += 1;
        Ok(LossReport {
            q: q_losses,
            policy: pl.loss,
            symmetry: pl.symmetry,
            temperature: tl,
            alpha: self.alpha(),
            entropy: -pl.mean_log_prob,
            critic_rows: critic.len(),
        })
    }

    pub fn checkpoint(&self, steps: u64) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            steps,
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            config: self.config.clone(),
            policy: self.policy.net().clone(),
            q: self.q.clone(),
            q_target: self.q_target.clone(),
            log_alpha: self.log_alpha,
            mirror: self.mirror.clone(),
        }
    }

    /// Restores networks and temperature; optimizer moments start fresh.
    pub fn from_checkpoint(c: Checkpoint) -> Result<Self, LearnError> {
        if c.version != CHECKPOINT_VERSION {
            return Err(LearnError::CheckpointVersion { found: c.version, expected: CHECKPOINT_VERSION });
        }
        c.config.validate()?;
        let policy = Policy::from_net(c.policy)?;
        let want_q = c.obs_dim + c.act_dim;
        if policy.obs_dim() != c.obs_dim
            || policy.act_dim() != c.act_dim
            || c.q.iter().chain(&c.q_target).any(|q| q.input_dim() != want_q || q.output_dim() != 1)
        {
            return Err(LearnError::Config("checkpoint networks do not match its dimensions"));
        }
        let lr = c.config.learning_rate;
        Ok(Self {
            obs_dim: c.obs_dim,
            act_dim: c.act_dim,
            opt_policy: Adam::new(policy.net().n_params(), lr),
            opt_q: [Adam::new(c.q[0].n_params(), lr), Adam::new(c.q[1].n_params(), lr)],
            opt_alpha: Adam::new(1, lr),
            policy,
            q: c.q,
            q_target: c.q_target,
            log_alpha: c.log_alpha,
            mirror: c.mirror,
            config: c.config,
            updates: 0,
        })
    }
}

/// Mean `|tanh mean(s) - A tanh mean(S s)|` over the states.
pub fn mirror_deviation(policy: &Policy, states: &[Vec<f64>], mirror: &MirrorSpec) -> Result<f64, LearnError> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in states {
        let a = policy.deterministic(s)?;
        let b = mirror.mirror_action(&policy.deterministic(&mirror.mirror_state(s)?)?)?;
        total += a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    }
    Ok(total / states.len() as f64)
}
