//! Policy representations: softmax (the actor's class), explicit tabular
//! and deterministic comparators, and episode-level mixtures.

use nalgebra::DVector;

use super::{FeatureSet, TabularLinearMdp};
use crate::error::{Error, Result};

/// A stochastic Markov policy over a tabular MDP. `probs` returns the
/// distribution over the actions available at (h, s), aligned with the
/// positional action index used by [`TabularLinearMdp::actions`].
pub trait Policy {
    fn probs(&self, mdp: &TabularLinearMdp, h: usize, s: usize) -> Vec<f64>;
}

/// Linear action-value function: per-stage weight vectors inducing
/// `Q_h(s,a) = ⟨φ_h(s,a), w_h⟩`.
#[derive(Debug, Clone)]
pub struct QFunction {
    pub weights: Vec<DVector<f64>>,
}

impl QFunction {
    pub fn new(weights: Vec<DVector<f64>>) -> Self {
        Self { weights }
    }

    /// Checks `‖w_h‖₂ ≤ D_h` per stage.
    pub fn check_radii(&self, radii: &[f64]) -> Result<()> {
        for (h, (w, &d)) in self.weights.iter().zip(radii).enumerate() {
            if w.norm() > d + 1e-9 {
                return Err(Error::Validation(format!(
                    "‖w‖₂ = {} exceeds radius {d} at stage {}",
                    w.norm(),
                    h + 1
                )));
            }
        }
        Ok(())
    }

    pub fn value<F: FeatureSet + ?Sized>(&self, fs: &F, h: usize, s: usize, j: usize) -> f64 {
        let (_, phi) = fs.action_feature(h, s, j);
        phi.dot(&self.weights[h])
    }
}

/// Softmax policy with per-stage parameters: `π_h(a|s) ∝ exp⟨φ_h(s,a), θ_h⟩`
/// over the actions available at (h, s).
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    pub theta: Vec<DVector<f64>>,
}

impl SoftmaxPolicy {
    pub fn new(theta: Vec<DVector<f64>>) -> Self {
        Self { theta }
    }

    /// All-zero parameters (the uniform policy over available actions).
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            theta: dims.iter().map(|&d| DVector::zeros(d)).collect(),
        }
    }

    /// Action distribution at (h, s) computed from features alone.
    /// Logits are shifted by their maximum before exponentiation; the
    /// softmax is shift-invariant so the distribution is unchanged.
    pub fn probs_from_features<F: FeatureSet + ?Sized>(
        &self,
        fs: &F,
        h: usize,
        s: usize,
    ) -> Vec<f64> {
        let n = fs.n_actions(h, s);
        let mut logits = Vec::with_capacity(n);
        for j in 0..n {
            let (_, phi) = fs.action_feature(h, s, j);
            logits.push(phi.dot(&self.theta[h]));
        }
        softmax_in_place(&mut logits);
        logits
    }

    /// Largest per-stage parameter norm (the policy-class radius actually
    /// used, relevant to the pessimism formula's covering term).
    pub fn radius(&self) -> f64 {
        self.theta.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

impl Policy for SoftmaxPolicy {
    fn probs(&self, mdp: &TabularLinearMdp, h: usize, s: usize) -> Vec<f64> {
        self.probs_from_features(mdp, h, s)
    }
}

/// Explicit per-(stage, state) action distributions.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    /// `table[h][s][j]` — probability of the j-th available action.
    pub table: Vec<Vec<Vec<f64>>>,
}

impl Policy for TabularPolicy {
    fn probs(&self, _mdp: &TabularLinearMdp, h: usize, s: usize) -> Vec<f64> {
        self.table[h][s].clone()
    }
}

/// Deterministic comparator: one positional action index per (stage, state).
/// Admitted wherever an arbitrary comparator is allowed; it need not be of
/// the softmax form.
#[derive(Debug, Clone)]
pub struct DeterministicPolicy {
    /// `choice[h][s]` — positional index of the action taken.
    pub choice: Vec<Vec<usize>>,
}

impl Policy for DeterministicPolicy {
    fn probs(&self, mdp: &TabularLinearMdp, h: usize, s: usize) -> Vec<f64> {
        let n = mdp.actions(h, s).len();
        let mut p = vec![0.0; n];
        p[self.choice[h][s]] = 1.0;
        p
    }
}

/// Uniform distribution over the available actions everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn probs(&self, mdp: &TabularLinearMdp, h: usize, s: usize) -> Vec<f64> {
        let n = mdp.actions(h, s).len();
        vec![1.0 / n as f64; n]
    }
}

/// Uniform mixture over softmax policies: one member is drawn uniformly at
/// episode start. Its value is the arithmetic mean of the member values.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    pub members: Vec<SoftmaxPolicy>,
}

impl MixturePolicy {
    pub fn new(members: Vec<SoftmaxPolicy>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Validation("mixture needs at least one member".into()));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
