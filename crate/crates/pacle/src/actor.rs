//! Mirror-descent actor over softmax policies and the full driver loop.
//!
//! The actor keeps per-stage parameters `θ_h` and performs the
//! exponentiated-gradient update `θ_{t+1} = θ_t + η·w̲_t`, where `w̲_t` is
//! the weight vector the critic returns for the current policy. Because
//! the critic's estimate is linear in the features, this incremental form
//! is the exact mirror-descent/natural-policy-gradient update on the
//! softmax class. The returned policy is the uniform mixture of the
//! iterates.

use nalgebra::{DMatrix, DVector};

use crate::critic::{CriticConfig, CriticWorkspace};
use crate::data::{build_covariances, OfflineDataset};
use crate::error::{Error, Result};
use crate::mdp::{
    evaluate_policy_exact, stage_dims, FeatureSet, MixturePolicy, Policy, SoftmaxPolicy,
    TabularLinearMdp,
};

/// Actor configuration: iteration count `T`, learning rate `η`, and how
/// often to materialize a θ-snapshot (1 = every iteration).
#[derive(Debug, Clone)]
pub struct ActorConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub snapshot_every: usize,
}

impl ActorConfig {
    pub fn new(rounds: usize, learning_rate: f64) -> Self {
        Self {
            rounds,
            learning_rate,
            snapshot_every: 1,
        }
    }

    /// The step size `η = √(log|A|/T)` used by the main guarantee; valid
    /// once `T ≥ log|A|` (which keeps `η ≤ 1`).
    pub fn theorem_stepsize(rounds: usize, n_actions: usize) -> Result<f64> {
        let log_a = (n_actions as f64).ln();
        if (rounds as f64) < log_a {
            return Err(Error::Validation(format!(
                "T = {rounds} below log|A| = {log_a:.3}; the theorem step size needs T ≥ log|A|"
            )));
        }
        Ok((log_a / rounds as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Validation("actor needs at least one round".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Validation("snapshot_every must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One mirror-descent step: `θ'_h = θ_h + η·w_h` for every stage.
pub fn actor_step(
    theta: &[DVector<f64>],
    w: &[DVector<f64>],
    eta: f64,
) -> Result<Vec<DVector<f64>>> {
    if theta.len() != w.len() {
        return Err(Error::Shape(format!(
            "{} parameter stages vs {} weight stages",
            theta.len(),
            w.len()
        )));
    }
    theta
        .iter()
        .zip(w)
        .enumerate()
        .map(|(h, (t, g))| {
            if t.len() != g.len() {
                return Err(Error::Shape(format!(
                    "dim {} vs {} at stage {}",
                    t.len(),
                    g.len(),
                    h + 1
                )));
            }
            Ok(t + g.scale(eta))
        })
        .collect()
}

/// Per-iteration record of a driver run.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub round: usize,
    pub theta: Vec<DVector<f64>>,
    pub w_lower: Vec<DVector<f64>>,
    pub value_lower: f64,
    pub solver_iterations: usize,
    pub solver_kkt: f64,
}

/// Full trace of a driver run: one record per stored snapshot and the
/// final mixture policy.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
    pub mixture: MixturePolicy,
}

/// Runs the full loop: `T` critic calls alternating with actor steps,
/// returning the mixture of the visited softmax policies. The pessimism
/// parameters in `critic_config` must have been computed for the same
/// `(T, η, δ)` this run uses (they enter through `B = ηT`); critic
/// infeasibility propagates as an error.
pub fn run_pacle<F: FeatureSet + ?Sized>(
    dataset: &OfflineDataset,
    fs: &F,
    initial_state: usize,
    actor_config: &ActorConfig,
    critic_config: &CriticConfig,
) -> Result<RunTrace> {
    actor_config.validate()?;
    critic_config.validate(fs.horizon())?;
    let covariances = build_covariances(dataset, fs, critic_config.lambda)?;
    let workspace = CriticWorkspace::new(dataset, &covariances, fs)?;

    let mut theta: Vec<DVector<f64>> = stage_dims(fs).iter().map(|&d| DVector::zeros(d)).collect();
    let mut warm: Option<DVector<f64>> = None;
    let mut iterations = Vec::new();
    let mut members = Vec::new();
    for t in 0..actor_config.rounds {
        let pi = SoftmaxPolicy::new(theta.clone());
        let solution = workspace.run(fs, &pi, critic_config, initial_state, warm.as_ref())?;
        warm = Some(solution.report.x.clone());
        if t % actor_config.snapshot_every == 0 {
            iterations.push(IterationRecord {
                round: t + 1,
                theta: theta.clone(),
                w_lower: solution.w_lower.clone(),
                value_lower: solution.value_lower,
                solver_iterations: solution.report.iterations,
                solver_kkt: solution.report.kkt_residual,
            });
            members.push(pi);
        }
        theta = actor_step(&theta, &solution.w_lower, actor_config.learning_rate)?;
    }
    Ok(RunTrace {
        iterations,
        mixture: MixturePolicy::new(members)?,
    })
}

/// Outcome of an exact-feedback regret check.
#[derive(Debug, Clone)]
pub struct RegretCheck {
    pub average_regret: f64,
    /// `H·(log|A|/(ηT) + η)`.
    pub bound: f64,
    pub comparator_mean_value: f64,
    pub iterate_mean_value: f64,
}

fn fit_exact_weights(mdp: &TabularLinearMdp, q: &[Vec<Vec<f64>>]) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let d = mdp.stage(h).dim;
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for s in 0..mdp.n_states(h) {
            for (j, e) in mdp.actions(h, s).iter().enumerate() {
                rows.push(e.features.clone());
                targets.push(q[h][s][j]);
            }
        }
        let a = DMatrix::from_fn(rows.len(), d, |i, c| rows[i][c]);
        let b = DVector::from_vec(targets.clone());
        let svd = a.clone().svd(true, true);
        let w = svd
            .solve(&b, 1e-12)
            .map_err(|e| Error::Validation(format!("weight fit failed: {e}")))?;
        let residual = (&a * &w - &b).amax();
        if residual > 1e-8 {
            return Err(Error::Validation(format!(
                "action values are not linear in the features at stage {} (residual {residual:.2e})",
                h + 1
            )));
        }
        if w.norm() > 1.0 + 1e-8 {
            return Err(Error::Validation(format!(
                "exact weight norm {:.3} exceeds the unit radius at stage {}",
                w.norm(),
                h + 1
            )));
        }
        out.push(w);
    }
    Ok(out)
}

/// Runs the actor against a sequence of MDPs with exact linear action
/// values, feeding it the exact weight of its current policy on the
/// current MDP, and compares the average regret against the mirror
/// descent bound `H·(log|A|/(ηT) + η)`. Every MDP must admit exact
/// per-stage linear weights with `‖w‖₂ ≤ 1` and advantages bounded by 2.
pub fn mirror_descent_regret_check(
    mdp_sequence: &[TabularLinearMdp],
    comparator: &dyn Policy,
    eta: f64,
) -> Result<RegretCheck> {
    if mdp_sequence.is_empty() {
        return Err(Error::Validation("empty MDP sequence".into()));
    }
    let rounds = mdp_sequence.len();
    let horizon = mdp_sequence[0].horizon();
    let n_actions = mdp_sequence
        .iter()
        .map(|m| m.max_action_count())
        .max()
        .unwrap();
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Validation(format!(
            "step size {eta} outside (0, 1)"
        )));
    }

    let mut theta: Vec<DVector<f64>> = (0..horizon)
        .map(|h| DVector::zeros(mdp_sequence[0].stage(h).dim))
        .collect();
    let mut comparator_total = 0.0;
    let mut iterate_total = 0.0;
    for mdp in mdp_sequence {
        if mdp.horizon() != horizon {
            return Err(Error::Shape("sequence mixes horizons".into()));
        }
        let pi = SoftmaxPolicy::new(theta.clone());
        let values = evaluate_policy_exact(mdp, &pi)?;
        // Advantage bound |Q - V| ≤ 2 required by the regret analysis.
        for h in 0..horizon {
            for s in 0..mdp.n_states(h) {
                for (j, _) in mdp.actions(h, s).iter().enumerate() {
                    let adv = values.q[h][s][j] - values.v[h][s];
                    if adv.abs() > 2.0 + 1e-9 {
                        return Err(Error::Validation(format!(
                            "advantage {adv:.3} exceeds 2 at stage {}",
                            h + 1
                        )));
                    }
                }
            }
        }
        let w = fit_exact_weights(mdp, &values.q)?;
        iterate_total += values.initial(mdp);
        comparator_total += evaluate_policy_exact(mdp, comparator)?.initial(mdp);
        theta = actor_step(&theta, &w, eta)?;
    }

    let t = rounds as f64;
    let bound = horizon as f64 * ((n_actions as f64).ln() / (eta * t) + eta);
    Ok(RegretCheck {
        average_regret: (comparator_total - iterate_total) / t,
        bound,
        comparator_mean_value: comparator_total / t,
        iterate_mean_value: iterate_total / t,
    })
}

/// Left and right sides of the nearby-policies inequality at stage `h`:
/// `sup_s Σ_a |π_θ'(a|s) − π_θ(a|s)| ≤ 8·‖θ − θ'‖₂`, valid whenever
/// `‖θ − θ'‖₂ ≤ 1/2` and features have norm at most one.
pub fn nearby_policies_gap(
    mdp: &TabularLinearMdp,
    h: usize,
    theta: &DVector<f64>,
    theta_prime: &DVector<f64>,
) -> (f64, f64) {
    let wrap = |t: &DVector<f64>| {
        let mut per_stage: Vec<DVector<f64>> = (0..mdp.horizon())
            .map(|k| DVector::zeros(mdp.stage(k).dim))
            .collect();
        per_stage[h] = t.clone();
        SoftmaxPolicy::new(per_stage)
    };
    let p1 = wrap(theta);
    let p2 = wrap(theta_prime);
    let mut sup = 0.0f64;
    for s in 0..mdp.n_states(h) {
        let a = p1.probs(mdp, h, s);
        let b = p2.probs(mdp, h, s);
        let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        sup = sup.max(total);
    }
    (sup, 8.0 * (theta - theta_prime).norm())
}

/// Largest residual over actions of the natural-policy-gradient update
/// identity at (h, s): with `θ⁺ = θ + ηw` and any baseline `F`,
/// `Q(s,a) − F = (1/η)·[log(π_{θ⁺}(a|s)/π_θ(a|s)) + log Σ_{a'} π_θ(a'|s)·e^{η(Q(s,a') − F)}]`.
pub fn npg_update_identity_residual<F: FeatureSet + ?Sized>(
    fs: &F,
    stage_dims_all: &[usize],
    h: usize,
    s: usize,
    theta: &DVector<f64>,
    w: &DVector<f64>,
    eta: f64,
    baseline: f64,
) -> f64 {
    let wrap = |t: &DVector<f64>| {
        let mut per_stage: Vec<DVector<f64>> =
            stage_dims_all.iter().map(|&d| DVector::zeros(d)).collect();
        per_stage[h] = t.clone();
        SoftmaxPolicy::new(per_stage)
    };
    let pi = wrap(theta);
    let pi_plus = wrap(&(theta + w.scale(eta)));
    let p = pi.probs_from_features(fs, h, s);
    let p_plus = pi_plus.probs_from_features(fs, h, s);
    let n = fs.n_actions(h, s);
    let q: Vec<f64> = (0..n)
        .map(|j| {
            let (_, phi) = fs.action_feature(h, s, j);
            phi.dot(w)
        })
        .collect();
    let log_partition: f64 = (0..n)
        .map(|j| p[j] * (eta * (q[j] - baseline)).exp())
        .sum::<f64>()
        .ln();
    (0..n)
        .map(|j| {
            let rhs = ((p_plus[j] / p[j]).ln() + log_partition) / eta;
            (q[j] - baseline - rhs).abs()
        })
        .fold(0.0, f64::max)
}
