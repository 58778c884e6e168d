//! `mdp_spec_v1` file format: explicit JSON tables (features, transitions,
//! reward means) plus horizon, initial state, and an optional metadata
//! block used by the instance generators.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ActionEntry, RewardNoise, Stage, TabularLinearMdp};
use crate::error::{Error, Result};

pub const MDP_SPEC_FORMAT: &str = "mdp_spec_v1";

#[derive(Serialize, Deserialize)]
struct SpecFile {
    format: String,
    horizon: usize,
    initial_state: usize,
    reward_noise: RewardNoise,
    terminal_states: usize,
    stages: Vec<SpecStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct SpecStage {
    dim: usize,
    states: Vec<SpecState>,
}

#[derive(Serialize, Deserialize)]
struct SpecState {
    actions: Vec<SpecAction>,
}

#[derive(Serialize, Deserialize)]
struct SpecAction {
    id: usize,
    features: Vec<f64>,
    reward_mean: f64,
    transition: Vec<f64>,
}

/// Serializes an MDP (with an optional metadata block) to `mdp_spec_v1`.
pub fn to_spec_json(mdp: &TabularLinearMdp, metadata: Option<serde_json::Value>) -> String {
    let file = SpecFile {
        format: MDP_SPEC_FORMAT.to_string(),
        horizon: mdp.horizon(),
        initial_state: mdp.initial_state(),
        reward_noise: mdp.reward_noise(),
        terminal_states: mdp.n_states(mdp.horizon()),
        stages: (0..mdp.horizon())
            .map(|h| SpecStage {
                dim: mdp.stage(h).dim,
                states: (0..mdp.n_states(h))
                    .map(|s| SpecState {
                        actions: mdp
                            .actions(h, s)
                            .iter()
                            .map(|e| SpecAction {
                                id: e.action,
                                features: e.features.iter().cloned().collect(),
                                reward_mean: e.reward_mean,
                                transition: e.transition.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
        metadata,
    };
    serde_json::to_string_pretty(&file).expect("mdp spec serializes")
}

/// Parses and validates an `mdp_spec_v1` document.
pub fn from_spec_json(text: &str) -> Result<(TabularLinearMdp, Option<serde_json::Value>)> {
    let file: SpecFile = serde_json::from_str(text)?;
    if file.format != MDP_SPEC_FORMAT {
        return Err(Error::Validation(format!(
            "unsupported format {:?} (expected {MDP_SPEC_FORMAT:?})",
            file.format
        )));
    }
    if file.stages.len() != file.horizon {
        return Err(Error::Shape(format!(
            "{} stages for horizon {}",
            file.stages.len(),
            file.horizon
        )));
    }
    let stages = file
        .stages
        .into_iter()
        .map(|st| Stage {
            dim: st.dim,
            actions: st
                .states
                .into_iter()
                .map(|state| {
                    state
                        .actions
                        .into_iter()
                        .map(|a| ActionEntry {
                            action: a.id,
                            features: DVector::from_vec(a.features),
                            reward_mean: a.reward_mean,
                            transition: a.transition,
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();
    let mdp = TabularLinearMdp::new(
        stages,
        file.terminal_states,
        file.initial_state,
        file.reward_noise,
    )?;
    Ok((mdp, file.metadata))
}
