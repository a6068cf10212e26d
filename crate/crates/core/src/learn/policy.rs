//! Tanh-squashed Gaussian policy.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{Forward, Matrix, Mlp};
use super::LearnError;
use crate::symmetry::GaussianHeads;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Scale of the initial output layer, so early actions stay near zero.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;
/// Largest action magnitude; keeps saturated samples strictly inside the box.
pub const MAX_ACTION: f64 = 1.0 - f64::EPSILON;

/// Smoothly maps a raw head into `[LOG_STD_MIN, LOG_STD_MAX]`; returns the
/// value and its derivative.
pub fn soft_clamp_log_std(raw: f64) -> (f64, f64) {
    let t = raw.tanh();
    let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
    (LOG_STD_MIN + half * (t + 1.0), half * (1.0 - t * t))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Action `tanh(mean + exp(log_std) xi)` and its log-density.
pub fn squash(mean: &[f64], log_std: &[f64], xi: &[f64]) -> (Vec<f64>, f64) {
    let mut logp = 0.0;
    let a = mean
        .iter()
        .zip(log_std)
        .zip(xi)
        .map(|((m, ls), x)| {
            let u = m + ls.exp() * x;
            logp += -0.5 * x * x - ls - 0.5 * (2.0 * PI).ln() - log1m_tanh2(u);
            u.tanh().clamp(-MAX_ACTION, MAX_ACTION)
        })
        .collect();
    (a, logp)
}

/// Policy head outputs for a batch of observations.
#[derive(Debug, Clone)]
pub struct PolicyForward {
    pub fwd: Forward,
    /// Pre-squash means, `[batch, act]`.
    pub mean: Matrix,
    pub log_std: Matrix,
    /// `d log_std / d raw head`.
    pub d_log_std: Matrix,
}

impl PolicyForward {
    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.log_std.is_finite()
    }
}

/// The network outputs `[mean, raw log std]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    net: Mlp,
    act_dim: usize,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        let mut net = Mlp::new(&sizes, rng);
        net.scale_output_layer(OUTPUT_INIT_SCALE);
        Self { net, act_dim }
    }

    pub fn from_net(net: Mlp) -> Result<Self, LearnError> {
        let out = net.output_dim();
        if out % 2 != 0 {
            return Err(LearnError::Config("policy output width must be even"));
        }
        Ok(Self { net, act_dim: out / 2 })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn forward(&self, obs: &Matrix) -> PolicyForward {
        let fwd = self.net.forward(obs);
        let out = fwd.output();
        let d = self.act_dim;
        let mean = out.columns(0, d);
        let mut log_std = Matrix::zeros(out.rows, d);
        let mut d_log_std = Matrix::zeros(out.rows, d);
        for r in 0..out.rows {
            for j in 0..d {
                let (ls, dls) = soft_clamp_log_std(out.row(r)[d + j]);
                log_std.row_mut(r)[j] = ls;
                d_log_std.row_mut(r)[j] = dls;
            }
        }
        PolicyForward { fwd, mean, log_std, d_log_std }
    }

    fn single(&self, obs: &[f64]) -> Result<PolicyForward, LearnError> {
        if obs.len() != self.obs_dim() {
            return Err(LearnError::Dimension { expected: self.obs_dim(), got: obs.len() });
        }
        let pf = self.forward(&Matrix::from_vec(1, obs.len(), obs.to_vec()));
        if !pf.is_finite() {
            return Err(LearnError::NonFinite("policy output"));
        }
        Ok(pf)
    }

    /// Samples an action in `(-1, 1)` and returns it with its log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), LearnError> {
        let pf = self.single(obs)?;
        let xi: Vec<f64> = (0..self.act_dim).map(|_| rng.sample(StandardNormal)).collect();
        Ok(squash(pf.mean.row(0), pf.log_std.row(0), &xi))
    }

    /// `tanh(mean)`.
    pub fn deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        let pf = self.single(obs)?;
        Ok(pf.mean.row(0).iter().map(|m| m.tanh()).collect())
    }

    /// Pre-squash mean and log standard deviation.
    pub fn gaussian(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
        let pf = self.single(obs)?;
        Ok((pf.mean.row(0).to_vec(), pf.log_std.row(0).to_vec()))
    }
}

impl GaussianHeads for Policy {
    fn heads(&self, obs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pf = self.forward(&Matrix::from_vec(1, obs.len(), obs.to_vec()));
        let var = pf.log_std.row(0).iter().map(|ls| (2.0 * ls).exp()).collect();
        (pf.mean.row(0).to_vec(), var)
    }
}

/// Entropy of `N(mean, exp(log_std)^2)` before squashing.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 * (2.0 * PI * core::f64::consts::E).ln() + ls).sum()
}
