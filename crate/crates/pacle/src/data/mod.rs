//! Offline dataset generation and cumulative covariance matrices.
//!
//! Every collection plan produces records in order, with each state-action
//! pair chosen using only the records before it; adaptive adversaries
//! receive the record prefix and nothing else, so the prefix-measurability
//! condition is enforced at the interface. Samples need not come from
//! contiguous trajectories and each record stores its stage explicitly.

mod covariance;
mod io;

pub use covariance::{build_covariances, feature_of, CumulativeCovariance};
pub use io::{read_jsonl, write_jsonl, DATASET_FORMAT};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{rollout, Policy, TabularLinearMdp};

/// One offline sample: the `index`-th observation, taken at `stage` from
/// `state` with `action` (stage-global id), the observed reward, and the
/// sampled next state. `provenance` records which part of the plan chose
/// the state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub provenance: String,
}

/// Ordered offline dataset plus per-stage index sets `I_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    records: Vec<SampleRecord>,
    stage_index: Vec<Vec<usize>>,
    horizon: usize,
}

impl OfflineDataset {
    pub fn from_records(records: Vec<SampleRecord>, horizon: usize) -> Result<Self> {
        let mut stage_index = vec![Vec::new(); horizon];
        for (i, r) in records.iter().enumerate() {
            if r.index != i {
                return Err(Error::Validation(format!(
                    "record {i} carries index {}",
                    r.index
                )));
            }
            if r.stage >= horizon {
                return Err(Error::Validation(format!(
                    "record {i} at stage {} with horizon {horizon}",
                    r.stage + 1
                )));
            }
            stage_index[r.stage].push(i);
        }
        Ok(Self {
            records,
            stage_index,
            horizon,
        })
    }

    pub fn empty(horizon: usize) -> Self {
        Self {
            records: Vec::new(),
            stage_index: vec![Vec::new(); horizon],
            horizon,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Indices of the records taken at stage `h`.
    pub fn stage_records(&self, h: usize) -> impl Iterator<Item = &SampleRecord> {
        self.stage_index[h].iter().map(|&i| &self.records[i])
    }

    /// `n_h`, the number of stage-`h` samples.
    pub fn stage_len(&self, h: usize) -> usize {
        self.stage_index[h].len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One generative probe: play `(stage, state, action)` a number of times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerativeProbe {
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub count: usize,
}

/// Chooses the next state-action probe from the record prefix alone.
pub trait AdaptiveAdversary {
    fn next_probe(&mut self, prefix: &[SampleRecord]) -> (usize, usize, usize);
}

impl<F> AdaptiveAdversary for F
where
    F: FnMut(&[SampleRecord]) -> (usize, usize, usize),
{
    fn next_probe(&mut self, prefix: &[SampleRecord]) -> (usize, usize, usize) {
        self(prefix)
    }
}

/// How the offline data is gathered.
pub enum CollectionPlan {
    /// Roll full trajectories from a fixed behavior policy.
    Behavior {
        policy: Box<dyn Policy>,
        episodes: usize,
    },
    /// Draw one member uniformly at the start of each episode.
    Mixture {
        policies: Vec<Box<dyn Policy>>,
        episodes: usize,
    },
    /// Explicit per-stage schedule of state-action probes.
    Generative { probes: Vec<GenerativeProbe> },
    /// Adversary that maps the record prefix to the next probe.
    Adaptive {
        steps: usize,
        adversary: Box<dyn AdaptiveAdversary>,
    },
}

/// Deterministically seeded RNG used everywhere randomness is needed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed (splitmix64 step),
/// so parallel loops can seed their own generators order-independently.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn probe_step(
    mdp: &TabularLinearMdp,
    h: usize,
    s: usize,
    a: usize,
    provenance: &str,
    records: &mut Vec<SampleRecord>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if h >= mdp.horizon() || s >= mdp.n_states(h) {
        return Err(Error::Validation(format!(
            "probe ({}, {s}, {a}) out of range",
            h + 1
        )));
    }
    let e = mdp.entry(h, s, a)?;
    let reward = crate::mdp::dp_sample_reward(e.reward_mean, mdp.reward_noise(), rng);
    let next_state = crate::mdp::dp_sample_index(&e.transition, rng);
    records.push(SampleRecord {
        index: records.len(),
        stage: h,
        state: s,
        action: a,
        reward,
        next_state,
        provenance: provenance.to_string(),
    });
    Ok(())
}

/// Generates an offline dataset under the given plan. Records are created
/// in collection order; the same seed reproduces the dataset bit for bit.
pub fn collect_dataset(
    mdp: &TabularLinearMdp,
    plan: CollectionPlan,
    rng_seed: u64,
) -> Result<OfflineDataset> {
    let mut rng = seeded_rng(rng_seed);
    let mut records: Vec<SampleRecord> = Vec::new();
    match plan {
        CollectionPlan::Behavior { policy, episodes } => {
            for ep in 0..episodes {
                let traj = rollout(mdp, policy.as_ref(), derive_seed(rng_seed, ep as u64));
                for t in traj {
                    records.push(SampleRecord {
                        index: records.len(),
                        stage: t.stage,
                        state: t.state,
                        action: t.action,
                        reward: t.reward,
                        next_state: t.next_state,
                        provenance: "behavior".to_string(),
                    });
                }
            }
        }
        CollectionPlan::Mixture { policies, episodes } => {
            if policies.is_empty() {
                return Err(Error::Validation("empty policy mixture".into()));
            }
            for ep in 0..episodes {
                let k = crate::mdp::dp_sample_index(
                    &vec![1.0 / policies.len() as f64; policies.len()],
                    &mut rng,
                );
                let traj = rollout(
                    mdp,
                    policies[k].as_ref(),
                    derive_seed(rng_seed, 1_000_003 + ep as u64),
                );
                for t in traj {
                    records.push(SampleRecord {
                        index: records.len(),
                        stage: t.stage,
                        state: t.state,
                        action: t.action,
                        reward: t.reward,
                        next_state: t.next_state,
                        provenance: format!("mixture:{k}"),
                    });
                }
            }
        }
        CollectionPlan::Generative { probes } => {
            for p in &probes {
                for _ in 0..p.count {
                    probe_step(
                        mdp,
                        p.stage,
                        p.state,
                        p.action,
                        "generative",
                        &mut records,
                        &mut rng,
                    )?;
                }
            }
        }
        CollectionPlan::Adaptive {
            steps,
            mut adversary,
        } => {
            for i in 0..steps {
                let (h, s, a) = adversary.next_probe(&records);
                probe_step(
                    mdp,
                    h,
                    s,
                    a,
                    &format!("adversary:{i}"),
                    &mut records,
                    &mut rng,
                )?;
            }
        }
    }
    OfflineDataset::from_records(records, mdp.horizon())
}
