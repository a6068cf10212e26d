//! Left/right mirror maps, the policy symmetry loss and mirrored replay batches.
//!
//! The planar robot moves in its own sagittal plane, so mirroring swaps the
//! left and right legs and flips no signs. Maps are signed permutations so
//! that a model with lateral coordinates can flip signs as well.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::env::{Transition, ACT_DIM, OBS_DIM};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymmetryError {
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("index map is not a permutation")]
    NotPermutation,
    #[error("signs must be +1 or -1")]
    Sign,
    #[error("map is not an involution at index {0}")]
    NotInvolution(usize),
}

/// `out[i] = sign[i] * x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPermutation", into = "RawPermutation")]
pub struct SignedPermutation {
    perm: Vec<usize>,
    sign: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPermutation {
    perm: Vec<usize>,
    sign: Vec<f64>,
}

impl TryFrom<RawPermutation> for SignedPermutation {
    type Error = SymmetryError;

    fn try_from(raw: RawPermutation) -> Result<Self, Self::Error> {
        SignedPermutation::new(raw.perm, raw.sign)
    }
}

impl From<SignedPermutation> for RawPermutation {
    fn from(p: SignedPermutation) -> Self {
        RawPermutation { perm: p.perm, sign: p.sign }
    }
}

impl SignedPermutation {
    /// Validates that the map is a signed permutation and its own inverse.
    pub fn new(perm: Vec<usize>, sign: Vec<f64>) -> Result<Self, SymmetryError> {
        let n = perm.len();
        if sign.len() != n {
            return Err(SymmetryError::Dimension { expected: n, got: sign.len() });
        }
        let mut seen = alloc::vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(SymmetryError::NotPermutation);
            }
            seen[p] = true;
        }
        if sign.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(SymmetryError::Sign);
        }
        for i in 0..n {
            if perm[perm[i]] != i || sign[i] * sign[perm[i]] != 1.0 {
                return Err(SymmetryError::NotInvolution(i));
            }
        }
        Ok(Self { perm, sign })
    }

    /// Swaps the given index pairs, no sign flips.
    pub fn swaps(n: usize, pairs: &[(usize, usize)]) -> Result<Self, SymmetryError> {
        let mut perm: Vec<usize> = (0..n).collect();
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(SymmetryError::NotPermutation);
            }
            perm.swap(a, b);
        }
        Self::new(perm, alloc::vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SymmetryError> {
        self.check(x.len())?;
        Ok(self.perm.iter().zip(&self.sign).map(|(&p, &s)| s * x[p]).collect())
    }

    /// Applies the map to every row of a row-major matrix.
    pub fn apply_rows(&self, data: &[f64]) -> Result<Vec<f64>, SymmetryError> {
        let n = self.len();
        if n == 0 || data.len() % n != 0 {
            return Err(SymmetryError::Dimension { expected: n, got: data.len() });
        }
        let mut out = Vec::with_capacity(data.len());
        for row in data.chunks_exact(n) {
            out.extend(self.perm.iter().zip(&self.sign).map(|(&p, &s)| s * row[p]));
        }
        Ok(out)
    }

    /// Pulls a gradient taken at the mirrored vector back: the adjoint of a
    /// signed permutation that is its own inverse is itself.
    pub fn pull_back(&self, grad: &[f64]) -> Result<Vec<f64>, SymmetryError> {
        self.apply(grad)
    }

    fn check(&self, got: usize) -> Result<(), SymmetryError> {
        if got == self.len() {
            Ok(())
        } else {
            Err(SymmetryError::Dimension { expected: self.len(), got })
        }
    }
}

/// Observation and action mirror maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorSpec {
    pub state: SignedPermutation,
    pub action: SignedPermutation,
}

impl MirrorSpec {
    /// Mirror of the planar biped: swaps left/right joint angles (6,7 with 8,9),
    /// contact flags (13 with 14) and joint torques (0,1 with 2,3).
    pub fn planar_biped() -> Self {
        Self {
            state: SignedPermutation::swaps(OBS_DIM, &[(6, 8), (7, 9), (13, 14)]).expect("valid swaps"),
            action: SignedPermutation::swaps(ACT_DIM, &[(0, 2), (1, 3)]).expect("valid swaps"),
        }
    }

    pub fn mirror_state(&self, obs: &[f64]) -> Result<Vec<f64>, SymmetryError> {
        self.state.apply(obs)
    }

    pub fn mirror_action(&self, a: &[f64]) -> Result<Vec<f64>, SymmetryError> {
        self.action.apply(a)
    }
}

/// Symmetry loss over a batch of policy head outputs together with its
/// gradient with respect to each head.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryLoss {
    pub loss: f64,
    /// d loss / d mean(s), row-major `[batch, act]`.
    pub d_mean: Vec<f64>,
    pub d_var: Vec<f64>,
    /// d loss / d mean(mirror(s)).
    pub d_mean_mirrored: Vec<f64>,
    pub d_var_mirrored: Vec<f64>,
}

fn norm_grad(diff: &[f64]) -> (f64, Vec<f64>) {
    let n = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    // Zero is a valid subgradient at the kink.
    let g = if n > 0.0 { diff.iter().map(|d| d / n).collect() } else { alloc::vec![0.0; diff.len()] };
    (n, g)
}

/// `mean over batch of |mu(s) - A mu(S s)| + |var(s) - abs(A var(S s))|`
/// where `A` is the action mirror and the heads are pre-squash Gaussian mean
/// and variance, given row-major `[batch, act]` head outputs at the states and
/// at their mirrors.
pub fn symmetry_loss_heads(
    action_mirror: &SignedPermutation,
    mean: &[f64],
    var: &[f64],
    mean_mirrored: &[f64],
    var_mirrored: &[f64],
) -> Result<SymmetryLoss, SymmetryError> {
    let n = action_mirror.len();
    let len = mean.len();
    for got in [var.len(), mean_mirrored.len(), var_mirrored.len()] {
        if got != len {
            return Err(SymmetryError::Dimension { expected: len, got });
        }
    }
    if n == 0 || len % n != 0 {
        return Err(SymmetryError::Dimension { expected: n, got: len });
    }
    let batch = len / n;
    let scale = 1.0 / batch as f64;
    let mut out = SymmetryLoss {
        loss: 0.0,
        d_mean: alloc::vec![0.0; len],
        d_var: alloc::vec![0.0; len],
        d_mean_mirrored: alloc::vec![0.0; len],
        d_var_mirrored: alloc::vec![0.0; len],
    };
    for b in 0..batch {
        let r = b * n..(b + 1) * n;
        let mm = action_mirror.apply(&mean_mirrored[r.clone()])?;
        let vm = action_mirror.apply(&var_mirrored[r.clone()])?;
        let dm: Vec<f64> = (0..n).map(|i| mean[r.start + i] - mm[i]).collect();
        let dv: Vec<f64> = (0..n).map(|i| var[r.start + i] - vm[i].abs()).collect();
        let (nm, gm) = norm_grad(&dm);
        let (nv, gv) = norm_grad(&dv);
        out.loss += scale * (nm + nv);
        // d/d(mirrored head): chain through A (its own adjoint) and abs.
        let gvm: Vec<f64> = (0..n).map(|i| -gv[i] * vm[i].signum()).collect();
        let back_m = action_mirror.pull_back(&gm)?;
        let back_v = action_mirror.pull_back(&gvm)?;
        for i in 0..n {
            out.d_mean[r.start + i] = scale * gm[i];
            out.d_var[r.start + i] = scale * gv[i];
            out.d_mean_mirrored[r.start + i] = -scale * back_m[i];
            out.d_var_mirrored[r.start + i] = scale * back_v[i];
        }
    }
    Ok(out)
}

/// Policies that expose pre-squash Gaussian heads.
pub trait GaussianHeads {
    /// Mean and variance heads for one observation.
    fn heads(&self, obs: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// Batch-mean symmetry loss of a policy over the given observations.
pub fn symmetry_loss<P: GaussianHeads + ?Sized>(
    policy: &P,
    states: &[Vec<f64>],
    mirror: &MirrorSpec,
) -> Result<f64, SymmetryError> {
    let (mut m, mut v, mut mm, mut vm) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in states {
        let (a, b) = policy.heads(s);
        let (c, d) = policy.heads(&mirror.mirror_state(s)?);
        m.extend(a);
        v.extend(b);
        mm.extend(c);
        vm.extend(d);
    }
    if states.is_empty() {
        return Ok(0.0);
    }
    Ok(symmetry_loss_heads(&mirror.action, &m, &v, &mm, &vm)?.loss)
}

fn mirror_transition(t: &Transition, mirror: &MirrorSpec) -> Result<Transition, SymmetryError> {
    Ok(Transition {
        obs: mirror.mirror_state(&t.obs)?,
        action: mirror.mirror_action(&t.action)?,
        reward: t.reward,
        next_obs: mirror.mirror_state(&t.next_obs)?,
        done: t.done,
    })
}

/// The batch followed by its mirror image.
pub fn augment_batch(batch: &[Transition], mirror: &MirrorSpec) -> Result<Vec<Transition>, SymmetryError> {
    let mut out = batch.to_vec();
    for t in batch {
        out.push(mirror_transition(t, mirror)?);
    }
    Ok(out)
}
