//! Finite-horizon MDPs with per-stage linear features and exact oracles.
//!
//! States and actions are integer ids with per-stage cardinalities; feature
//! dimensions may vary by stage. Action availability may depend on the
//! state (encoded per state as the list of available actions). All types
//! are immutable after construction and safe to share across threads.

mod dp;
mod io;
mod policy;

pub use dp::{
    bellman_apply, evaluate_mixture_exact, evaluate_policy_exact, mixture_occupancy_features,
    occupancy, occupancy_features, optimal_values, rollout, Occupancy, StageQTable, Transition,
    ValueFunctions,
};
pub(crate) use dp::{
    sample_index as dp_sample_index, sample_reward as dp_sample_reward,
};
pub use io::{from_spec_json, to_spec_json};
pub use policy::{
    DeterministicPolicy, MixturePolicy, Policy, QFunction, SoftmaxPolicy, TabularPolicy,
    UniformPolicy,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward observation model. Means are stored in the tables; observations
/// are drawn around them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardNoise {
    /// Observed reward equals the mean exactly.
    None,
    /// Observed reward is mean plus unit-variance Gaussian noise.
    Gaussian,
}

/// One available action at a given (stage, state): its stage-global id,
/// feature vector, mean reward, and transition row over next-stage states.
#[derive(Debug, Clone)]
pub struct ActionEntry {
    pub action: usize,
    pub features: DVector<f64>,
    pub reward_mean: f64,
    pub transition: Vec<f64>,
}

/// Per-stage data: feature dimension and, for each state, the available
/// actions with their tables.
#[derive(Debug, Clone)]
pub struct Stage {
    pub dim: usize,
    /// `actions[s]` lists the actions available in state `s`.
    pub actions: Vec<Vec<ActionEntry>>,
}

impl Stage {
    pub fn n_states(&self) -> usize {
        self.actions.len()
    }
}

/// A finite-horizon MDP with stage-indexed states, per-state action sets,
/// linear features, exact transition/reward tables, and a fixed initial
/// state. Stages are indexed `0..horizon` internally.
#[derive(Debug, Clone)]
pub struct TabularLinearMdp {
    horizon: usize,
    stages: Vec<Stage>,
    /// Size of the state space the final stage transitions into. Values
    /// there are identically zero (terminal convention).
    terminal_states: usize,
    initial_state: usize,
    reward_noise: RewardNoise,
}

const TRANSITION_TOL: f64 = 1e-12;
const FEATURE_NORM_TOL: f64 = 1e-9;

impl TabularLinearMdp {
    /// Validates tables and builds the MDP. Checks feature normalization
    /// (`‖φ‖₂ ≤ 1`), row-stochastic transitions, reward means in `[-1, 1]`,
    /// and shape consistency across stages.
    pub fn new(
        stages: Vec<Stage>,
        terminal_states: usize,
        initial_state: usize,
        reward_noise: RewardNoise,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Validation("horizon must be positive".into()));
        }
        let horizon = stages.len();
        if initial_state >= stages[0].n_states() {
            return Err(Error::Validation(format!(
                "initial state {initial_state} out of range for stage 1 ({} states)",
                stages[0].n_states()
            )));
        }
        for (h, stage) in stages.iter().enumerate() {
            let next_states = if h + 1 < horizon {
                stages[h + 1].n_states()
            } else {
                terminal_states
            };
            if stage.n_states() == 0 {
                return Err(Error::Validation(format!("stage {} has no states", h + 1)));
            }
            for (s, entries) in stage.actions.iter().enumerate() {
                if entries.is_empty() {
                    return Err(Error::Validation(format!(
                        "no available action at stage {} state {s}",
                        h + 1
                    )));
                }
                for e in entries {
                    if e.features.len() != stage.dim {
                        return Err(Error::Shape(format!(
                            "feature dim {} != stage dim {} at stage {} state {s}",
                            e.features.len(),
                            stage.dim,
                            h + 1
                        )));
                    }
                    if e.features.norm() > 1.0 + FEATURE_NORM_TOL {
                        return Err(Error::Validation(format!(
                            "feature norm {} > 1 at stage {} state {s} action {}",
                            e.features.norm(),
                            h + 1,
                            e.action
                        )));
                    }
                    if e.reward_mean.abs() > 1.0 + 1e-12 {
                        return Err(Error::Validation(format!(
                            "reward mean {} outside [-1,1] at stage {} state {s} action {}",
                            e.reward_mean,
                            h + 1,
                            e.action
                        )));
                    }
                    if e.transition.len() != next_states {
                        return Err(Error::Shape(format!(
                            "transition row of length {} (expected {next_states}) at stage {} state {s}",
                            e.transition.len(),
                            h + 1
                        )));
                    }
                    if e.transition.iter().any(|&p| p < 0.0) {
                        return Err(Error::Validation(format!(
                            "negative transition probability at stage {} state {s}",
                            h + 1
                        )));
                    }
                    let total: f64 = e.transition.iter().sum();
                    if (total - 1.0).abs() > TRANSITION_TOL {
                        return Err(Error::Validation(format!(
                            "transition row sums to {total} at stage {} state {s} action {}",
                            h + 1,
                            e.action
                        )));
                    }
                }
            }
        }
        Ok(Self {
            horizon,
            stages,
            terminal_states,
            initial_state,
            reward_noise,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reward_noise(&self) -> RewardNoise {
        self.reward_noise
    }

    pub fn stage(&self, h: usize) -> &Stage {
        &self.stages[h]
    }

    /// Number of states at stage `h`; `h == horizon` gives the terminal
    /// boundary size.
    pub fn n_states(&self, h: usize) -> usize {
        if h == self.horizon {
            self.terminal_states
        } else {
            self.stages[h].n_states()
        }
    }

    /// Available actions at (stage, state).
    pub fn actions(&self, h: usize, s: usize) -> &[ActionEntry] {
        &self.stages[h].actions[s]
    }

    /// Looks up the entry with stage-global action id `a` at (h, s).
    pub fn entry(&self, h: usize, s: usize, a: usize) -> Result<&ActionEntry> {
        self.actions(h, s)
            .iter()
            .find(|e| e.action == a)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "action {a} not available at stage {} state {s}",
                    h + 1
                ))
            })
    }

    /// Largest per-state action count over all stages and states; the
    /// `|A|` that enters the actor's step-size and regret expressions.
    pub fn max_action_count(&self) -> usize {
        self.stages
            .iter()
            .flat_map(|st| st.actions.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }

    /// Replaces reward means, leaving everything else untouched. Used by
    /// the induced-MDP construction, whose perturbed rewards may leave
    /// `[-1, 1]`; no reward-range validation is applied here.
    pub(crate) fn with_rewards(&self, rewards: &[Vec<Vec<f64>>]) -> Self {
        let mut out = self.clone();
        for (h, stage) in out.stages.iter_mut().enumerate() {
            for (s, entries) in stage.actions.iter_mut().enumerate() {
                for (j, e) in entries.iter_mut().enumerate() {
                    e.reward_mean = rewards[h][s][j];
                }
            }
        }
        out
    }
}

/// The feature-and-action surface of an MDP: everything the critic and
/// actor are allowed to touch. They never enumerate transitions or reward
/// tables; only the exact oracles do.
pub trait FeatureSet {
    fn horizon(&self) -> usize;
    /// Feature dimension at stage `h`.
    fn dim(&self, h: usize) -> usize;
    /// Number of actions available at (h, s).
    fn n_actions(&self, h: usize, s: usize) -> usize;
    /// The `j`-th available action at (h, s): stage-global id and features.
    fn action_feature(&self, h: usize, s: usize, j: usize) -> (usize, &DVector<f64>);
    /// Largest per-state action count.
    fn max_action_count(&self) -> usize;
}

impl FeatureSet for TabularLinearMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn dim(&self, h: usize) -> usize {
        self.stages[h].dim
    }

    fn n_actions(&self, h: usize, s: usize) -> usize {
        self.stages[h].actions[s].len()
    }

    fn action_feature(&self, h: usize, s: usize, j: usize) -> (usize, &DVector<f64>) {
        let e = &self.stages[h].actions[s][j];
        (e.action, &e.features)
    }

    fn max_action_count(&self) -> usize {
        TabularLinearMdp::max_action_count(self)
    }
}

/// Per-stage feature dimensions of a feature set.
pub fn stage_dims<F: FeatureSet + ?Sized>(fs: &F) -> Vec<usize> {
    (0..fs.horizon()).map(|h| fs.dim(h)).collect()
}
