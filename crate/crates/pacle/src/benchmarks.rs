//! Generators for constructed MDP families: random tabular instances for
//! verification sweeps, chain MDPs for closedness fixtures, hypercube
//! bandit instances for lower-bound experiments, and the desk instances
//! used by the batch experiments.

use nalgebra::DVector;
use rand::Rng;

use crate::data::seeded_rng;
use crate::error::Result;
use crate::mdp::{ActionEntry, Policy, RewardNoise, Stage, TabularLinearMdp};

/// Random well-formed tabular instance: `n_states` states and `n_actions`
/// actions per stage, random features of the per-stage dimensions (norm
/// ≤ 1), random stochastic transitions, rewards uniform in `[-0.5, 0.5]`.
pub fn random_instance(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    dims: &[usize],
    seed: u64,
) -> Result<TabularLinearMdp> {
    random_instance_with(
        n_states,
        n_actions,
        horizon,
        dims,
        0.5,
        RewardNoise::None,
        seed,
    )
}

/// As [`random_instance`] with explicit reward scale and noise model.
pub fn random_instance_with(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    dims: &[usize],
    reward_scale: f64,
    noise: RewardNoise,
    seed: u64,
) -> Result<TabularLinearMdp> {
    assert_eq!(dims.len(), horizon, "one feature dimension per stage");
    let mut rng = seeded_rng(seed);
    let mut stages = Vec::with_capacity(horizon);
    for &dim in dims.iter().take(horizon) {
        let mut actions = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let mut entries = Vec::with_capacity(n_actions);
            for a in 0..n_actions {
                let mut phi = DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
                let norm = phi.norm();
                if norm > 1.0 {
                    phi /= norm * (1.0 + 1e-12);
                }
                let mut row: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 0.05).collect();
                let total: f64 = row.iter().sum();
                for p in &mut row {
                    *p /= total;
                }
                fix_row_sum(&mut row);
                entries.push(ActionEntry {
                    action: a,
                    features: phi,
                    reward_mean: (rng.gen::<f64>() * 2.0 - 1.0) * reward_scale,
                    transition: row,
                });
            }
            actions.push(entries);
        }
        stages.push(Stage { dim, actions });
    }
    TabularLinearMdp::new(stages, n_states, 0, noise)
}

/// Rescales a probability row so it sums to one exactly (the largest
/// entry absorbs the float residue).
pub(crate) fn fix_row_sum(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    let residue = 1.0 - total;
    let argmax = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    row[argmax] += residue;
}

// ---------------------------------------------------------------------------
// Chain MDPs
// ---------------------------------------------------------------------------

/// Feature map variant of the chain MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainVariant {
    /// Scalar features `φ(s,a) = ±1` by action sign; not low-rank but
    /// closed under the Bellman evaluation operator.
    A,
    /// Two-dimensional features off the origin (`[1,0]` right, `[0,1]`
    /// left) with scalar `±1` at the origin; linear action values exist
    /// for every policy but closedness fails at the first stage.
    B,
}

/// Chain MDP with states `{-N,…,N}`, start at 0, deterministic moves
/// `s' = s + a`, and rewards only at the terminal states (`+1` at `+N`,
/// `-1` at `-N`). Horizon is `N + 1`; each stage holds only the states
/// reachable at that step (`|s| + 1 = h`), and off the origin only the
/// outward action is available. Stage-global action ids: 0 = left (−1),
/// 1 = right (+1). State index within a stage: 0 = negative side,
/// 1 = positive side (stage 1 has the origin only).
pub fn make_chain_mdp(n_chain: usize, variant: ChainVariant) -> Result<TabularLinearMdp> {
    assert!(n_chain >= 1, "chain length must be at least 1");
    let horizon = n_chain + 1;
    let phi = |action_right: bool, at_origin: bool| -> DVector<f64> {
        match (variant, at_origin) {
            (ChainVariant::A, _) | (ChainVariant::B, true) => {
                DVector::from_vec(vec![if action_right { 1.0 } else { -1.0 }])
            }
            (ChainVariant::B, false) => {
                if action_right {
                    DVector::from_vec(vec![1.0, 0.0])
                } else {
                    DVector::from_vec(vec![0.0, 1.0])
                }
            }
        }
    };
    let mut stages = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let last = h + 1 == horizon;
        let dim = match variant {
            ChainVariant::A => 1,
            ChainVariant::B => {
                if h == 0 {
                    1
                } else {
                    2
                }
            }
        };
        let mut actions: Vec<Vec<ActionEntry>> = Vec::new();
        if h == 0 {
            // origin: both actions, moving to state index 0 (left) or 1 (right)
            let mut entries = Vec::new();
            for (id, right) in [(0usize, false), (1usize, true)] {
                let mut row = vec![0.0; 2];
                row[if right { 1 } else { 0 }] = 1.0;
                entries.push(ActionEntry {
                    action: id,
                    features: phi(right, true),
                    reward_mean: 0.0,
                    transition: row,
                });
            }
            actions.push(entries);
        } else {
            // state 0 = −h (left side, only action 0), state 1 = +h
            for (s_idx, right) in [(0usize, false), (1usize, true)] {
                let mut row = vec![0.0; 2];
                row[s_idx] = 1.0; // keeps moving outward; self-index at terminal
                let terminal_reward = if right { 1.0 } else { -1.0 };
                actions.push(vec![ActionEntry {
                    action: if right { 1 } else { 0 },
                    features: phi(right, false),
                    reward_mean: if last { terminal_reward } else { 0.0 },
                    transition: row,
                }]);
            }
        }
        stages.push(Stage { dim, actions });
    }
    TabularLinearMdp::new(stages, 2, 0, RewardNoise::None)
}

/// The hand-constructed probe that witnesses the closedness failure of
/// chain variant (b): the stage-2 weight `[+1, +1]` backs up to targets
/// `+1` and `+1` on features `+1` and `−1`, which no scalar weight fits
/// with residual below one.
pub fn chain_adversarial_probes(variant: ChainVariant) -> Vec<(usize, DVector<f64>)> {
    match variant {
        ChainVariant::A => Vec::new(),
        ChainVariant::B => vec![(0, DVector::from_vec(vec![1.0, 1.0]))],
    }
}

// ---------------------------------------------------------------------------
// Hypercube bandit family for the lower-bound experiments
// ---------------------------------------------------------------------------

/// Exact-enumeration cap on the action dimension (the sign-action set has
/// `2^d` elements).
pub const LOWER_BOUND_DIM_CAP: usize = 10;

/// One member of the hypercube-indexed single-state MDP family: at every
/// stage there is one state, actions are vectors in `{-1,0,+1}^d`,
/// features are `[a/√(2d), 1/√2]`, and the mean reward is
/// `gap_scale·⟨a, u_h⟩/√(2d)` with unit-variance Gaussian observations.
/// The action set is stored compactly: the `2^d` sign vectors (needed to
/// evaluate policies) plus the probe actions `{e₁,…,e_d, 0}` played by
/// the data-collection schedule.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub dim: usize,
    pub horizon: usize,
    /// Per-stage sign vector `u_h ∈ {-1,+1}^d`.
    pub u: Vec<Vec<i8>>,
    /// `δ_gap = d·√H/√(2n) = d/√(2·n_sub)`.
    pub gap_scale: f64,
    pub n_total: usize,
    /// `n_sub = n/H` samples per stage.
    pub n_sub: usize,
    /// Enumerated action vectors; stage-global action id = index here.
    pub actions: Vec<Vec<i8>>,
    /// Ids of the probe actions `e₁,…,e_d, 0` in schedule order.
    pub probe_ids: Vec<usize>,
    /// Ids of the `2^d` sign-vector actions.
    pub sign_ids: Vec<usize>,
    pub mdp: TabularLinearMdp,
}

impl LowerBoundInstance {
    /// Feature vector of an action vector.
    pub fn features_of(dim: usize, a: &[i8]) -> DVector<f64> {
        let scale = 1.0 / (2.0 * dim as f64).sqrt();
        let mut v: Vec<f64> = a.iter().map(|&x| x as f64 * scale).collect();
        v.push(std::f64::consts::FRAC_1_SQRT_2);
        DVector::from_vec(v)
    }

    /// Mean reward of action vector `a` at stage `h`.
    pub fn reward_mean(&self, h: usize, a: &[i8]) -> f64 {
        let dot: f64 = a
            .iter()
            .zip(&self.u[h])
            .map(|(&x, &s)| x as f64 * s as f64)
            .sum();
        self.gap_scale * dot / (2.0 * self.dim as f64).sqrt()
    }

    /// Optimal value `V*(s₁) = Σ_h δ_gap·√(d/2)` (play `u_h` everywhere).
    pub fn optimal_value(&self) -> f64 {
        self.horizon as f64 * self.gap_scale * (self.dim as f64 / 2.0).sqrt()
    }

    /// Exact per-stage expected action vectors `E_{a~π_h}[a]` under a
    /// policy over the enumerated action set.
    pub fn expected_actions(&self, pi: &dyn Policy) -> Vec<Vec<f64>> {
        (0..self.horizon)
            .map(|h| {
                let probs = pi.probs(&self.mdp, h, 0);
                let mut mean = vec![0.0; self.dim];
                for (j, e) in self.mdp.actions(h, 0).iter().enumerate() {
                    let a = &self.actions[e.action];
                    for (m, &x) in mean.iter_mut().zip(a.iter()) {
                        *m += probs[j] * x as f64;
                    }
                }
                mean
            })
            .collect()
    }
}

fn sign_vectors(dim: usize) -> Vec<Vec<i8>> {
    let mut out = Vec::with_capacity(1 << dim);
    for mask in 0..(1usize << dim) {
        out.push(
            (0..dim)
                .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect(),
        );
    }
    out
}

/// Builds a lower-bound instance and its offline dataset. Requires
/// `n ≥ 2d³H³` (so the weight-radius regularity holds) and `n` divisible
/// by `H·(d+1)` (the schedule plays each probe action `n/(H(d+1))` times
/// per stage). The gap scale is `δ_gap = d√H/√(2n)`.
pub fn make_lower_bound_instance(
    dim: usize,
    horizon: usize,
    n_total: usize,
    u: Vec<Vec<i8>>,
    rng_seed: u64,
) -> Result<(LowerBoundInstance, crate::data::OfflineDataset)> {
    if dim == 0 || dim > LOWER_BOUND_DIM_CAP {
        return Err(crate::error::Error::Validation(format!(
            "dimension {dim} outside 1..={LOWER_BOUND_DIM_CAP}"
        )));
    }
    if u.len() != horizon || u.iter().any(|uh| uh.len() != dim) {
        return Err(crate::error::Error::Shape(format!(
            "u must hold {horizon} sign vectors of length {dim}"
        )));
    }
    if u.iter().flatten().any(|&x| x != 1 && x != -1) {
        return Err(crate::error::Error::Validation(
            "u entries must be ±1".into(),
        ));
    }
    if n_total < 2 * dim.pow(3) * horizon.pow(3) {
        return Err(crate::error::Error::Validation(format!(
            "sample size {n_total} below 2d³H³ = {}",
            2 * dim.pow(3) * horizon.pow(3)
        )));
    }
    if n_total % (horizon * (dim + 1)) != 0 {
        return Err(crate::error::Error::Validation(format!(
            "sample size {n_total} not divisible by H(d+1) = {}",
            horizon * (dim + 1)
        )));
    }
    let n_sub = n_total / horizon;
    let plays = n_sub / (dim + 1);
    let gap_scale = dim as f64 * (horizon as f64).sqrt() / (2.0 * n_total as f64).sqrt();
    debug_assert!(gap_scale <= 1.0 / (2.0 * (dim as f64).sqrt() * horizon as f64) + 1e-12);

    // Action inventory: sign vectors, then probes e_i and 0 (deduplicated).
    let mut actions = sign_vectors(dim);
    let sign_ids: Vec<usize> = (0..actions.len()).collect();
    let mut probe_ids = Vec::with_capacity(dim + 1);
    for i in 0..dim {
        let mut e = vec![0i8; dim];
        e[i] = 1;
        let id = actions.iter().position(|a| *a == e).unwrap_or_else(|| {
            actions.push(e);
            actions.len() - 1
        });
        probe_ids.push(id);
    }
    let zero = vec![0i8; dim];
    let zero_id = actions.iter().position(|a| *a == zero).unwrap_or_else(|| {
        actions.push(zero);
        actions.len() - 1
    });
    probe_ids.push(zero_id);

    let gap = gap_scale;
    let mut stages = Vec::with_capacity(horizon);
    for uh in u.iter().take(horizon) {
        let entries: Vec<ActionEntry> = actions
            .iter()
            .enumerate()
            .map(|(id, a)| {
                let dot: f64 = a.iter().zip(uh).map(|(&x, &s)| x as f64 * s as f64).sum();
                ActionEntry {
                    action: id,
                    features: LowerBoundInstance::features_of(dim, a),
                    reward_mean: gap * dot / (2.0 * dim as f64).sqrt(),
                    transition: vec![1.0],
                }
            })
            .collect();
        stages.push(Stage {
            dim: dim + 1,
            actions: vec![entries],
        });
    }
    let mdp = TabularLinearMdp::new(stages, 1, 0, RewardNoise::Gaussian)?;

    let probes: Vec<crate::data::GenerativeProbe> = (0..horizon)
        .flat_map(|h| {
            probe_ids.iter().map(move |&a| crate::data::GenerativeProbe {
                stage: h,
                state: 0,
                action: a,
                count: plays,
            })
        })
        .collect();
    let dataset = crate::data::collect_dataset(
        &mdp,
        crate::data::CollectionPlan::Generative { probes },
        rng_seed,
    )?;

    let instance = LowerBoundInstance {
        dim,
        horizon,
        u,
        gap_scale,
        n_total,
        n_sub,
        actions,
        probe_ids,
        sign_ids,
        mdp,
    };
    Ok((instance, dataset))
}

/// Exact value gap `V*(s₁) − V^π(s₁)` from the per-stage expected action
/// vectors: `(δ_gap/√(2d))·Σ_h Σ_i |u_hi − [E_{a~π_h} a]_i|`.
pub fn value_gap_from_means(instance: &LowerBoundInstance, means: &[Vec<f64>]) -> f64 {
    let scale = instance.gap_scale / (2.0 * instance.dim as f64).sqrt();
    let mut total = 0.0;
    for (uh, mh) in instance.u.iter().zip(means) {
        for (&u_i, &m_i) in uh.iter().zip(mh) {
            total += (u_i as f64 - m_i).abs();
        }
    }
    scale * total
}

/// Exact value gap of a policy over the enumerated action set.
pub fn value_gap(instance: &LowerBoundInstance, pi: &dyn Policy) -> f64 {
    value_gap_from_means(instance, &instance.expected_actions(pi))
}

/// Coordinate-wise sign estimate `u^π` (ties broken to +1) and its
/// Hamming distance from `u`. For any policy,
/// `value_gap ≥ (δ_gap/√(2d))·hamming` exactly.
pub fn hamming_estimate(instance: &LowerBoundInstance, means: &[Vec<f64>]) -> usize {
    let mut distance = 0;
    for (uh, mh) in instance.u.iter().zip(means) {
        for (&u_i, &m_i) in uh.iter().zip(mh) {
            let sign = if m_i >= 0.0 { 1 } else { -1 };
            if sign != i32::from(u_i) {
                distance += 1;
            }
        }
    }
    distance
}

/// KL divergence between two unit-variance Gaussians.
pub fn gaussian_kl(mu1: f64, mu2: f64) -> f64 {
    let d = mu1 - mu2;
    0.5 * d * d
}

/// KL divergence between the data distributions of two instances whose
/// `u` differ in exactly one coordinate, closed form: `n_sub·δ_gap²/d²`.
pub fn kl_adjacent_closed_form(instance: &LowerBoundInstance) -> f64 {
    instance.n_sub as f64 * instance.gap_scale * instance.gap_scale
        / (instance.dim as f64 * instance.dim as f64)
}

/// The same KL assembled sample by sample: under the product sampling
/// layout each basis direction receives `n_sub/d` Gaussian observations,
/// and flipping one coordinate of `u` moves exactly those means from
/// `+δ_gap/√(2d)` to `-δ_gap/√(2d)`.
pub fn kl_adjacent_per_sample(instance: &LowerBoundInstance) -> f64 {
    let mean = instance.gap_scale / (2.0 * instance.dim as f64).sqrt();
    let per_direction = instance.n_sub / instance.dim;
    (0..per_direction).map(|_| gaussian_kl(mean, -mean)).sum()
}

/// Result of the uncertainty sweep over policies on one instance.
#[derive(Debug, Clone)]
pub struct UncertaintySweep {
    /// Largest `U(π; √d·1)` over the swept policies.
    pub max_uncertainty: f64,
    /// `10·d·H·√(d/n_sub)`.
    pub bound: f64,
    pub policies_swept: usize,
}

/// Sweeps random softmax policies plus all `2^d` deterministic sign
/// policies and reports the largest uncertainty `U(π; √d·1)` computed on
/// the instance's dataset covariances, against `10·d·H·√(d/n_sub)`.
pub fn uncertainty_upper_check(
    instance: &LowerBoundInstance,
    dataset: &crate::data::OfflineDataset,
    sweep: usize,
    rng_seed: u64,
) -> Result<UncertaintySweep> {
    let covariances = crate::data::build_covariances(dataset, &instance.mdp, 1.0)?;
    let beta = vec![(instance.dim as f64).sqrt(); instance.horizon];
    let mut max_u = 0.0f64;
    let mut count = 0;

    // Deterministic sign policies: same sign action at every stage.
    for &id in &instance.sign_ids {
        let choice: Vec<Vec<usize>> = (0..instance.horizon)
            .map(|h| {
                let j = instance
                    .mdp
                    .actions(h, 0)
                    .iter()
                    .position(|e| e.action == id)
                    .unwrap();
                vec![j]
            })
            .collect();
        let pi = crate::mdp::DeterministicPolicy { choice };
        max_u = max_u.max(crate::analysis::uncertainty(
            &instance.mdp,
            &pi,
            &beta,
            &covariances,
        )?);
        count += 1;
    }
    // Random softmax policies over the enumerated action set.
    let mut rng = seeded_rng(rng_seed);
    for _ in 0..sweep {
        let theta: Vec<DVector<f64>> = (0..instance.horizon)
            .map(|_| DVector::from_fn(instance.dim + 1, |_, _| 6.0 * (rng.gen::<f64>() - 0.5)))
            .collect();
        let pi = crate::mdp::SoftmaxPolicy::new(theta);
        max_u = max_u.max(crate::analysis::uncertainty(
            &instance.mdp,
            &pi,
            &beta,
            &covariances,
        )?);
        count += 1;
    }
    let d = instance.dim as f64;
    Ok(UncertaintySweep {
        max_uncertainty: max_u,
        bound: 10.0 * d * instance.horizon as f64 * (d / instance.n_sub as f64).sqrt(),
        policies_swept: count,
    })
}

// ---------------------------------------------------------------------------
// Desk instances: well-specified low-rank MDPs and the coverage-gap bandit
// ---------------------------------------------------------------------------

/// A low-rank tabular instance with its factorization: features lie on
/// the probability simplex, `P_h(s'|s,a) = ⟨φ_h(s,a), ψ_h(·,s')⟩` with
/// row-stochastic `ψ_h`, and `r_h = ⟨φ_h, w^r_h⟩`. Every policy has an
/// exactly linear action-value function with weights
/// `w^π_h = w^r_h + ψ_h·V^π_{h+1}`, so the instance is closed under the
/// Bellman evaluation operator with zero error.
#[derive(Debug, Clone)]
pub struct LowRankInstance {
    pub mdp: TabularLinearMdp,
    /// `ψ_h` as a `d_h × |S_{h+1}|` matrix (rows are distributions).
    pub psi: Vec<nalgebra::DMatrix<f64>>,
    pub reward_weights: Vec<DVector<f64>>,
}

impl LowRankInstance {
    /// Exact linear weights of `pi`: `w^π_h = w^r_h + ψ_h·V^π_{h+1}`.
    pub fn exact_policy_weights(&self, pi: &dyn Policy) -> Result<Vec<DVector<f64>>> {
        let values = crate::mdp::evaluate_policy_exact(&self.mdp, pi)?;
        let horizon = self.mdp.horizon();
        let mut out = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let mut w = self.reward_weights[h].clone();
            if h + 1 < horizon {
                let v_next = DVector::from_vec(values.v[h + 1].clone());
                w += &self.psi[h] * v_next;
            }
            out.push(w);
        }
        Ok(out)
    }
}

/// Generates a well-specified low-rank instance. `reward_scale` bounds
/// `|r|`; exact policy weights then satisfy
/// `‖w^π_h‖₂ ≤ √d·reward_scale·(H−h+1)`, so pick
/// `reward_scale ≤ 1/(√d·H)` to stay inside the unit critic ball.
pub fn low_rank_instance(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    dim: usize,
    reward_scale: f64,
    seed: u64,
) -> Result<LowRankInstance> {
    let mut rng = seeded_rng(seed);
    fn simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
        let total: f64 = v.iter().sum();
        for x in &mut v {
            *x /= total;
        }
        fix_row_sum(&mut v);
        v
    }

    let mut psi = Vec::with_capacity(horizon);
    let mut reward_weights = Vec::with_capacity(horizon);
    let mut feature_table: Vec<Vec<Vec<DVector<f64>>>> = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut m = nalgebra::DMatrix::zeros(dim, n_states);
        for i in 0..dim {
            let row = simplex(n_states, &mut rng);
            for (sp, &p) in row.iter().enumerate() {
                m[(i, sp)] = p;
            }
        }
        psi.push(m);
        reward_weights.push(DVector::from_fn(dim, |_, _| {
            (rng.gen::<f64>() * 2.0 - 1.0) * reward_scale
        }));
        feature_table.push(
            (0..n_states)
                .map(|_| {
                    (0..n_actions)
                        .map(|_| DVector::from_vec(simplex(dim, &mut rng)))
                        .collect()
                })
                .collect(),
        );
    }

    let mut stages = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut actions = Vec::with_capacity(n_states);
        for s in 0..n_states {
            let mut entries = Vec::with_capacity(n_actions);
            for a in 0..n_actions {
                let phi = feature_table[h][s][a].clone();
                let mut row: Vec<f64> = (0..n_states)
                    .map(|sp| phi.dot(&DVector::from(psi[h].column(sp).clone_owned())))
                    .collect();
                fix_row_sum(&mut row);
                entries.push(ActionEntry {
                    action: a,
                    features: phi.clone(),
                    reward_mean: phi.dot(&reward_weights[h]),
                    transition: row,
                });
            }
            actions.push(entries);
        }
        stages.push(Stage { dim, actions });
    }
    let mdp = TabularLinearMdp::new(stages, n_states, 0, RewardNoise::Gaussian)?;
    Ok(LowRankInstance {
        mdp,
        psi,
        reward_weights,
    })
}

/// The coverage-gap bandit motivating pessimism: two actions with
/// orthonormal feature directions, the better one (`φ = e₁`, mean −0.1)
/// heavily sampled, the worse one (`φ = e₂`, mean −0.8) entirely
/// unsampled. Ridge regression pins the unsampled direction at zero, so a
/// greedy rule prefers the bad action on every dataset, while a
/// pessimistic evaluation discounts it.
pub fn coverage_gap_instance() -> Result<TabularLinearMdp> {
    let stages = vec![Stage {
        dim: 2,
        actions: vec![vec![
            ActionEntry {
                action: 0,
                features: DVector::from_vec(vec![1.0, 0.0]),
                reward_mean: -0.1,
                transition: vec![1.0],
            },
            ActionEntry {
                action: 1,
                features: DVector::from_vec(vec![0.0, 1.0]),
                reward_mean: -0.8,
                transition: vec![1.0],
            },
        ]],
    }];
    TabularLinearMdp::new(stages, 1, 0, RewardNoise::Gaussian)
}

/// The generative plan that samples only the covered action of the
/// coverage-gap bandit.
pub fn coverage_gap_plan(n: usize) -> crate::data::CollectionPlan {
    crate::data::CollectionPlan::Generative {
        probes: vec![crate::data::GenerativeProbe {
            stage: 0,
            state: 0,
            action: 0,
            count: n,
        }],
    }
}

/// A sequence of low-rank MDPs sharing features and transitions with
/// freshly drawn reward weights per round, for exact-feedback regret
/// experiments, together with the greedy comparator on the mean-reward
/// member.
pub fn regret_sequence(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    dim: usize,
    rounds: usize,
    reward_scale: f64,
    seed: u64,
) -> Result<(Vec<TabularLinearMdp>, crate::mdp::DeterministicPolicy)> {
    let base = low_rank_instance(n_states, n_actions, horizon, dim, reward_scale, seed)?;
    let mut rng = seeded_rng(derive_seed_local(seed));
    let mut sequence = Vec::with_capacity(rounds);
    let mut mean_rewards: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|h| {
            (0..n_states)
                .map(|s| vec![0.0; base.mdp.actions(h, s).len()])
                .collect()
        })
        .collect();
    for _ in 0..rounds {
        let mut rewards: Vec<Vec<Vec<f64>>> = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let w = DVector::from_fn(dim, |_, _| (rng.gen::<f64>() * 2.0 - 1.0) * reward_scale);
            let mut stage = Vec::with_capacity(n_states);
            for s in 0..n_states {
                let row: Vec<f64> = base
                    .mdp
                    .actions(h, s)
                    .iter()
                    .map(|e| e.features.dot(&w))
                    .collect();
                for (j, &r) in row.iter().enumerate() {
                    mean_rewards[h][s][j] += r / rounds as f64;
                }
                stage.push(row);
            }
            rewards.push(stage);
        }
        sequence.push(base.mdp.with_rewards(&rewards));
    }
    let mean_mdp = base.mdp.with_rewards(&mean_rewards);
    let (_, greedy) = crate::mdp::optimal_values(&mean_mdp)?;
    Ok((sequence, greedy))
}

fn derive_seed_local(seed: u64) -> u64 {
    crate::data::derive_seed(seed, 0x5eed)
}
