//! Exact dynamic-programming oracles: Bellman evaluation, policy values,
//! occupancy measures, occupancy-weighted feature expectations, optimal
//! values, and seeded rollouts.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DeterministicPolicy, MixturePolicy, Policy, RewardNoise, TabularLinearMdp};
use crate::error::{Error, Result};

/// Value table over the (state, positional-action) pairs of one stage.
pub type StageQTable = Vec<Vec<f64>>;

/// Per-stage state values `V_h(s)` and action values `Q_h(s,a)`.
#[derive(Debug, Clone)]
pub struct ValueFunctions {
    pub q: Vec<StageQTable>,
    pub v: Vec<Vec<f64>>,
}

impl ValueFunctions {
    /// Value at the initial state.
    pub fn initial(&self, mdp: &TabularLinearMdp) -> f64 {
        self.v[0][mdp.initial_state()]
    }
}

/// Stage-h state-action occupancy measures `d^π_h(s,a)` from the initial
/// state, plus the marginal state occupancy.
#[derive(Debug, Clone)]
pub struct Occupancy {
    pub state_action: Vec<StageQTable>,
    pub state: Vec<Vec<f64>>,
}

fn zero_table(mdp: &TabularLinearMdp, h: usize) -> StageQTable {
    (0..mdp.n_states(h))
        .map(|s| vec![0.0; mdp.actions(h, s).len()])
        .collect()
}

/// One step of the Bellman evaluation operator for policy `pi`:
/// `(𝒯^π_h Q_next)(s,a) = r_h(s,a) + Σ_{s'} P_h(s'|s,a) Σ_{a'} π_{h+1}(a'|s') Q_next(s',a')`.
///
/// `q_next` must match the shape of stage `h+1`; an empty table stands for
/// the identically-zero function (the terminal convention at `h = H`).
pub fn bellman_apply(
    mdp: &TabularLinearMdp,
    h: usize,
    pi: &dyn Policy,
    q_next: &StageQTable,
) -> Result<StageQTable> {
    if h >= mdp.horizon() {
        return Err(Error::Validation(format!(
            "stage {} out of range (horizon {})",
            h + 1,
            mdp.horizon()
        )));
    }
    let next_values: Option<Vec<f64>> = if q_next.is_empty() {
        None
    } else {
        if h + 1 >= mdp.horizon() {
            return Err(Error::Shape(
                "non-empty continuation table beyond the final stage".into(),
            ));
        }
        if q_next.len() != mdp.n_states(h + 1) {
            return Err(Error::Shape(format!(
                "continuation table has {} states, stage {} has {}",
                q_next.len(),
                h + 2,
                mdp.n_states(h + 1)
            )));
        }
        let mut v = Vec::with_capacity(q_next.len());
        for (s, row) in q_next.iter().enumerate() {
            let n = mdp.actions(h + 1, s).len();
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "continuation table has {} actions at state {s}, stage {} has {n}",
                    row.len(),
                    h + 2
                )));
            }
            let probs = pi.probs(mdp, h + 1, s);
            v.push(row.iter().zip(&probs).map(|(q, p)| q * p).sum());
        }
        Some(v)
    };

    let mut out = zero_table(mdp, h);
    for (s, row) in out.iter_mut().enumerate() {
        for (j, e) in mdp.actions(h, s).iter().enumerate() {
            let cont = match &next_values {
                Some(v) => e.transition.iter().zip(v).map(|(p, val)| p * val).sum(),
                None => 0.0,
            };
            row[j] = e.reward_mean + cont;
        }
    }
    Ok(out)
}

/// Exact policy evaluation by backward induction; `V_h(s) = Σ_a π_h(a|s) Q_h(s,a)`.
pub fn evaluate_policy_exact(mdp: &TabularLinearMdp, pi: &dyn Policy) -> Result<ValueFunctions> {
    let horizon = mdp.horizon();
    let mut q: Vec<StageQTable> = vec![Vec::new(); horizon];
    let mut v: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut next: StageQTable = Vec::new();
    for h in (0..horizon).rev() {
        let table = bellman_apply(mdp, h, pi, &next)?;
        let mut vh = Vec::with_capacity(table.len());
        for (s, row) in table.iter().enumerate() {
            let probs = pi.probs(mdp, h, s);
            vh.push(row.iter().zip(&probs).map(|(x, p)| x * p).sum());
        }
        v[h] = vh;
        q[h] = table.clone();
        next = table;
    }
    Ok(ValueFunctions { q, v })
}

/// Exact stage occupancy measures from the initial state by forward
/// induction: `d_1(s₁) = 1`, `d_{h+1}(s') = Σ_{s,a} d_h(s,a) P_h(s'|s,a)`.
pub fn occupancy(mdp: &TabularLinearMdp, pi: &dyn Policy) -> Result<Occupancy> {
    let horizon = mdp.horizon();
    let mut state = vec![0.0; mdp.n_states(0)];
    state[mdp.initial_state()] = 1.0;

    let mut state_occ = Vec::with_capacity(horizon);
    let mut sa_occ = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut table = zero_table(mdp, h);
        let mut next = vec![0.0; mdp.n_states(h + 1)];
        for (s, &ds) in state.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            let probs = pi.probs(mdp, h, s);
            for (j, e) in mdp.actions(h, s).iter().enumerate() {
                let mass = ds * probs[j];
                table[s][j] = mass;
                if mass == 0.0 {
                    continue;
                }
                for (sp, &p) in e.transition.iter().enumerate() {
                    next[sp] += mass * p;
                }
            }
        }
        sa_occ.push(table);
        state_occ.push(state);
        state = next;
    }
    Ok(Occupancy {
        state_action: sa_occ,
        state: state_occ,
    })
}

/// Occupancy-weighted feature expectations
/// `φ̄_h = Σ_{s,a} d^π_h(s,a) φ_h(s,a)` for every stage.
pub fn occupancy_features(mdp: &TabularLinearMdp, pi: &dyn Policy) -> Result<Vec<DVector<f64>>> {
    let occ = occupancy(mdp, pi)?;
    let mut out = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let mut acc = DVector::zeros(mdp.stage(h).dim);
        for (s, row) in occ.state_action[h].iter().enumerate() {
            for (j, &mass) in row.iter().enumerate() {
                if mass != 0.0 {
                    acc += mdp.actions(h, s)[j].features.scale(mass);
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Mixture value at the initial state: the arithmetic mean of the member
/// values (a member is drawn uniformly at episode start).
pub fn evaluate_mixture_exact(mdp: &TabularLinearMdp, mixture: &MixturePolicy) -> Result<f64> {
    let mut total = 0.0;
    for member in &mixture.members {
        total += evaluate_policy_exact(mdp, member)?.initial(mdp);
    }
    Ok(total / mixture.len() as f64)
}

/// Mean of the member occupancy feature vectors, the mixture's `φ̄_h`.
pub fn mixture_occupancy_features(
    mdp: &TabularLinearMdp,
    mixture: &MixturePolicy,
) -> Result<Vec<DVector<f64>>> {
    let mut acc: Option<Vec<DVector<f64>>> = None;
    for member in &mixture.members {
        let feats = occupancy_features(mdp, member)?;
        acc = Some(match acc {
            None => feats,
            Some(mut a) => {
                for (x, f) in a.iter_mut().zip(feats) {
                    *x += f;
                }
                a
            }
        });
    }
    let scale = 1.0 / mixture.len() as f64;
    Ok(acc
        .expect("mixture is non-empty")
        .into_iter()
        .map(|v| v.scale(scale))
        .collect())
}

/// Optimal values by backward induction and the greedy deterministic
/// policy attaining them.
pub fn optimal_values(
    mdp: &TabularLinearMdp,
) -> Result<(ValueFunctions, DeterministicPolicy)> {
    let horizon = mdp.horizon();
    let mut q: Vec<StageQTable> = vec![Vec::new(); horizon];
    let mut v: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut choice: Vec<Vec<usize>> = vec![Vec::new(); horizon];
    let mut next_v: Vec<f64> = Vec::new();
    for h in (0..horizon).rev() {
        let mut table = zero_table(mdp, h);
        let mut vh = Vec::with_capacity(table.len());
        let mut ch = Vec::with_capacity(table.len());
        for (s, row) in table.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut best_j = 0;
            for (j, e) in mdp.actions(h, s).iter().enumerate() {
                let cont: f64 = if next_v.is_empty() {
                    0.0
                } else {
                    e.transition.iter().zip(&next_v).map(|(p, val)| p * val).sum()
                };
                row[j] = e.reward_mean + cont;
                if row[j] > best {
                    best = row[j];
                    best_j = j;
                }
            }
            vh.push(best);
            ch.push(best_j);
        }
        next_v = vh.clone();
        q[h] = table;
        v[h] = vh;
        choice[h] = ch;
    }
    Ok((ValueFunctions { q, v }, DeterministicPolicy { choice }))
}

/// One step of a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub stage: usize,
    pub state: usize,
    /// Stage-global action id.
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

pub(crate) fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub(crate) fn sample_reward<R: Rng>(mean: f64, noise: RewardNoise, rng: &mut R) -> f64 {
    match noise {
        RewardNoise::None => mean,
        RewardNoise::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            mean + z
        }
    }
}

pub(crate) fn rollout_with<R: Rng>(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    rng: &mut R,
) -> Vec<Transition> {
    let mut s = mdp.initial_state();
    let mut out = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let probs = pi.probs(mdp, h, s);
        let j = sample_index(&probs, rng);
        let e = &mdp.actions(h, s)[j];
        let r = sample_reward(e.reward_mean, mdp.reward_noise(), rng);
        let sp = sample_index(&e.transition, rng);
        out.push(Transition {
            stage: h,
            state: s,
            action: e.action,
            reward: r,
            next_state: sp,
        });
        s = sp;
    }
    out
}

/// Draws one trajectory from the initial state under `pi`. Rewards follow
/// the configured noise model; the same seed reproduces the trajectory
/// bit for bit.
pub fn rollout(mdp: &TabularLinearMdp, pi: &dyn Policy, rng_seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rollout_with(mdp, pi, &mut rng)
}
