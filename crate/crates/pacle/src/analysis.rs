//! Executable forms of the supporting constructions: the uncertainty
//! functional, the induced MDP and its exactness identity, the sup-norm
//! projection operator, parameter-error measurements, probe-based
//! closedness estimation, pessimism calibration, and the value-bound
//! checks driven by `verify`.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::critic::CriticSolution;
use crate::data::{
    build_covariances, feature_of, seeded_rng, CumulativeCovariance, OfflineDataset,
};
use crate::error::{Error, Result};
use crate::mdp::{
    bellman_apply, evaluate_policy_exact, occupancy, occupancy_features, Policy,
    SoftmaxPolicy, StageQTable, TabularLinearMdp,
};
use crate::socp::{eliminate_equalities, solve, ConicProgram, SolveStatus, Tolerances};

/// Per-stage cap on `|S|·|A|` for the enumerating oracles.
const SUP_ENUMERATION_CAP: usize = 10_000;

/// The uncertainty functional `U(π; β) = 2·Σ_h β_h·‖φ̄_h‖_{Σ_h⁻¹}` where
/// `φ̄_h` is the exact occupancy-weighted feature expectation of `pi`.
pub fn uncertainty(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    beta: &[f64],
    covariances: &[CumulativeCovariance],
) -> Result<f64> {
    let phi_bar = occupancy_features(mdp, pi)?;
    Ok(uncertainty_from_features(&phi_bar, beta, covariances))
}

/// `U` from precomputed occupancy features (used for mixtures and sweeps).
pub fn uncertainty_from_features(
    phi_bar: &[DVector<f64>],
    beta: &[f64],
    covariances: &[CumulativeCovariance],
) -> f64 {
    phi_bar
        .iter()
        .zip(beta)
        .zip(covariances)
        .map(|((v, &b), cov)| 2.0 * b * cov.sigma_inv_norm(v))
        .sum()
}

/// The induced MDP: the base MDP with its reward perturbed by the
/// critic's Bellman residual,
/// `r̂^π_h(s,a) = r_h(s,a) + Q̲_h(s,a) − (𝒯^π_h Q̲_{h+1})(s,a)`.
/// Transitions and state/action spaces are shared with the base;
/// perturbed rewards may leave `[-1, 1]` and are stored separately.
#[derive(Debug, Clone)]
pub struct InducedMdp {
    perturbed: TabularLinearMdp,
    rewards_hat: Vec<Vec<Vec<f64>>>,
}

impl InducedMdp {
    /// A tabular MDP carrying the perturbed rewards; values of any policy
    /// on the induced MDP are exact DP values on this object.
    pub fn as_mdp(&self) -> &TabularLinearMdp {
        &self.perturbed
    }

    pub fn reward_hat(&self, h: usize, s: usize, j: usize) -> f64 {
        self.rewards_hat[h][s][j]
    }
}

/// Q-value tables induced by per-stage weights: `Q_h(s,a) = ⟨φ_h(s,a), w_h⟩`.
pub fn q_tables_from_weights(
    mdp: &TabularLinearMdp,
    weights: &[DVector<f64>],
) -> Vec<StageQTable> {
    (0..mdp.horizon())
        .map(|h| {
            (0..mdp.n_states(h))
                .map(|s| {
                    mdp.actions(h, s)
                        .iter()
                        .map(|e| e.features.dot(&weights[h]))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Builds the induced MDP of a critic solution for policy `pi`.
pub fn induced_mdp(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    solution: &CriticSolution,
) -> Result<InducedMdp> {
    let q_lower = q_tables_from_weights(mdp, &solution.w_lower);
    let mut rewards_hat = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let q_next = if h + 1 < mdp.horizon() {
            q_lower[h + 1].clone()
        } else {
            Vec::new()
        };
        let backed_up = bellman_apply(mdp, h, pi, &q_next)?;
        let mut stage = Vec::with_capacity(mdp.n_states(h));
        for s in 0..mdp.n_states(h) {
            let row: Vec<f64> = mdp
                .actions(h, s)
                .iter()
                .enumerate()
                .map(|(j, e)| e.reward_mean + q_lower[h][s][j] - backed_up[s][j])
                .collect();
            stage.push(row);
        }
        rewards_hat.push(stage);
    }
    Ok(InducedMdp {
        perturbed: mdp.with_rewards(&rewards_hat),
        rewards_hat,
    })
}

/// Largest deviation `max_{h,s,a} |Q̲_h(s,a) − Q^π_{h,M̂}(s,a)|` between
/// the critic's estimates and exact DP values on the induced MDP. This is
/// an exact identity for any feasible solution, so the gap is float noise.
pub fn critic_exactness_gap(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    solution: &CriticSolution,
) -> Result<f64> {
    let induced = induced_mdp(mdp, pi, solution)?;
    let dp = evaluate_policy_exact(induced.as_mdp(), pi)?;
    let q_lower = q_tables_from_weights(mdp, &solution.w_lower);
    let mut gap = 0.0f64;
    for h in 0..mdp.horizon() {
        for s in 0..mdp.n_states(h) {
            for j in 0..mdp.actions(h, s).len() {
                gap = gap.max((q_lower[h][s][j] - dp.q[h][s][j]).abs());
            }
        }
    }
    Ok(gap)
}

/// Both sides of the value-difference identity for an arbitrary
/// comparator: `V^π̃_{1,M̂}(s₁) − V^π̃_1(s₁) = Σ_h E_π̃[r̂_h − r_h]`, the
/// right side via exact occupancy measures.
pub fn value_difference_identity(
    mdp: &TabularLinearMdp,
    induced: &InducedMdp,
    comparator: &dyn Policy,
) -> Result<(f64, f64)> {
    let lhs = evaluate_policy_exact(induced.as_mdp(), comparator)?.initial(mdp)
        - evaluate_policy_exact(mdp, comparator)?.initial(mdp);
    let occ = occupancy(mdp, comparator)?;
    let mut rhs = 0.0;
    for h in 0..mdp.horizon() {
        for s in 0..mdp.n_states(h) {
            for (j, e) in mdp.actions(h, s).iter().enumerate() {
                rhs += occ.state_action[h][s][j] * (induced.reward_hat(h, s, j) - e.reward_mean);
            }
        }
    }
    Ok((lhs, rhs))
}

/// Sup-norm projection onto the weight ball: solves
/// `min_{‖w‖₂ ≤ D} max_{(s,a)} |⟨φ_h(s,a), w⟩ − (𝒯^π_h F)(s,a)|`
/// as a cone program (epigraph variable, two halfspaces per state-action
/// pair, ball on `w`), returning the minimizer and the optimal residual.
/// `q_next` is the table form of `F` at stage `h+1` (empty = zero).
pub fn sup_norm_projection(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    h: usize,
    q_next: &StageQTable,
    radius: f64,
) -> Result<(DVector<f64>, f64)> {
    let targets = bellman_apply(mdp, h, pi, q_next)?;
    sup_norm_fit(mdp, h, &targets, radius)
}

/// Best sup-norm linear fit of an explicit stage-`h` target table within
/// the `radius`-ball.
pub fn sup_norm_fit(
    mdp: &TabularLinearMdp,
    h: usize,
    targets: &StageQTable,
    radius: f64,
) -> Result<(DVector<f64>, f64)> {
    let d = mdp.stage(h).dim;
    let pairs: usize = (0..mdp.n_states(h)).map(|s| mdp.actions(h, s).len()).sum();
    if pairs > SUP_ENUMERATION_CAP {
        return Err(Error::Validation(format!(
            "stage {} has {pairs} state-action pairs (cap {SUP_ENUMERATION_CAP})",
            h + 1
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("radius {radius} must be > 0")));
    }
    let mut program = ConicProgram::new();
    let w = program.add_block("w", d);
    let t = program.add_block("t", 1);
    program.set_objective(t, DVector::from_element(1, 1.0));
    program.add_ball(w, radius);
    let mut max_target = 0.0f64;
    for s in 0..mdp.n_states(h) {
        for (j, e) in mdp.actions(h, s).iter().enumerate() {
            let y = targets[s][j];
            max_target = max_target.max(y.abs());
            let phi = e.features.clone();
            // ⟨φ, w⟩ − t ≤ y  and  −⟨φ, w⟩ − t ≤ −y
            program.add_halfspace(
                vec![(w, phi.clone()), (t, DVector::from_element(1, -1.0))],
                y,
            );
            program.add_halfspace(vec![(w, -phi), (t, DVector::from_element(1, -1.0))], -y);
        }
    }
    let reduced = eliminate_equalities(&program)?;
    // (w, t) = (0, max|y| + 1) is strictly interior.
    let mut start = DVector::zeros(d + 1);
    start[d] = max_target + 1.0;
    let report = solve(&reduced, Tolerances::default(), 50_000, Some(&start))?;
    if report.status != SolveStatus::Optimal {
        return Err(Error::SolverLimit(format!(
            "sup-norm projection stopped with status {:?}",
            report.status
        )));
    }
    let w_opt = report.blocks["w"].clone();
    let residual = report.blocks["t"][0];
    Ok((w_opt, residual))
}

/// The regression operator applied to an arbitrary stage-(h+1) value
/// table `F`: `Σ_h⁻¹ Σ_{k∈I_h} φ_hk [r_hk + Σ_a π_{h+1}(a|s'_hk) F(s'_hk, a)]`.
pub fn regression_operator_table(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    mdp: &TabularLinearMdp,
    h: usize,
    pi: &dyn Policy,
    f_next: &StageQTable,
) -> Result<DVector<f64>> {
    let d = mdp.stage(h).dim;
    let mut acc = DVector::zeros(d);
    for rec in dataset.stage_records(h) {
        let phi = feature_of(mdp, h, rec.state, rec.action)?;
        let continuation = if f_next.is_empty() {
            0.0
        } else {
            let probs = pi.probs(mdp, h + 1, rec.next_state);
            f_next[rec.next_state]
                .iter()
                .zip(&probs)
                .map(|(q, p)| q * p)
                .sum()
        };
        acc += phi.scale(rec.reward + continuation);
    }
    Ok(covariances[h].solve(&acc))
}

/// Parameter error at stage `h` for the value/policy probe
/// `(F = q_next, π)`: the regression estimate minus the sup-norm
/// projection, together with its `Σ_h`-norm.
#[allow(clippy::too_many_arguments)]
pub fn parameter_error(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    h: usize,
    q_next: &StageQTable,
    radius: f64,
) -> Result<(DVector<f64>, f64)> {
    let regression = regression_operator_table(dataset, covariances, mdp, h, pi, q_next)?;
    let (projection, _) = sup_norm_projection(mdp, pi, h, q_next, radius)?;
    let delta = regression - projection;
    let norm = covariances[h].sigma_norm(&delta);
    Ok((delta, norm))
}

/// One closedness probe and its fit residual.
#[derive(Debug, Clone)]
pub struct ClosednessProbe {
    pub stage: usize,
    pub w_next: Option<DVector<f64>>,
    pub theta_next: Option<DVector<f64>>,
    pub residual: f64,
}

/// Probe-based closedness measurement. `epsilon[h]` is the largest fit
/// residual observed at stage `h`; sampling cannot certify the supremum,
/// so these are lower estimates of the true per-stage closedness error.
#[derive(Debug, Clone)]
pub struct ClosednessReport {
    pub epsilon: Vec<f64>,
    pub probes: Vec<ClosednessProbe>,
}

/// Draws a point uniformly from the radius-`r` ball, or on its surface.
fn ball_point<R: Rng>(dim: usize, r: f64, surface: bool, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |_, _| {
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        z
    });
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let scale = if surface {
        r / norm
    } else {
        let u: f64 = rng.gen();
        r * u.powf(1.0 / dim as f64) / norm
    };
    v *= scale;
    v
}

use rand_distr::Distribution;

/// Measures per-stage closedness errors by sampling probe pairs
/// (`w_{h+1}` from the stage-(h+1) weight ball, `θ_{h+1}` from the
/// actor-radius ball) and fitting each backed-up target within the
/// stage-`h` ball. Hand-constructed adversarial probes (stage, weight)
/// are appended to the sampled inventory. At the final stage the target
/// is the reward alone, so a single probe suffices.
pub fn closedness_report(
    mdp: &TabularLinearMdp,
    radii: &[f64],
    actor_radius: f64,
    probe_count: usize,
    rng_seed: u64,
    adversarial: &[(usize, DVector<f64>)],
) -> Result<ClosednessReport> {
    let horizon = mdp.horizon();
    if radii.len() != horizon {
        return Err(Error::Shape(format!(
            "{} radii for horizon {horizon}",
            radii.len()
        )));
    }
    let mut rng = seeded_rng(rng_seed);
    let mut epsilon = vec![0.0f64; horizon];
    let mut probes = Vec::new();

    let run_probe = |h: usize,
                         w_next: Option<DVector<f64>>,
                         theta_next: Option<DVector<f64>>,
                         epsilon: &mut Vec<f64>,
                         probes: &mut Vec<ClosednessProbe>|
     -> Result<()> {
        let (q_next, pi): (StageQTable, SoftmaxPolicy) = if h + 1 < horizon {
            let w = w_next.clone().expect("inner stages carry a weight probe");
            let theta = theta_next
                .clone()
                .unwrap_or_else(|| DVector::zeros(mdp.stage(h + 1).dim));
            let mut theta_full: Vec<DVector<f64>> = (0..horizon)
                .map(|k| DVector::zeros(mdp.stage(k).dim))
                .collect();
            theta_full[h + 1] = theta;
            let table = (0..mdp.n_states(h + 1))
                .map(|s| {
                    mdp.actions(h + 1, s)
                        .iter()
                        .map(|e| e.features.dot(&w))
                        .collect()
                })
                .collect();
            (table, SoftmaxPolicy::new(theta_full))
        } else {
            (
                Vec::new(),
                SoftmaxPolicy::zeros(&crate::mdp::stage_dims(mdp)),
            )
        };
        let (_, residual) = sup_norm_projection(mdp, &pi, h, &q_next, radii[h])?;
        epsilon[h] = epsilon[h].max(residual);
        probes.push(ClosednessProbe {
            stage: h,
            w_next,
            theta_next,
            residual,
        });
        Ok(())
    };

    for h in 0..horizon {
        if h + 1 == horizon {
            run_probe(h, None, None, &mut epsilon, &mut probes)?;
            continue;
        }
        let d_next = mdp.stage(h + 1).dim;
        for i in 0..probe_count {
            let surface = i % 2 == 1;
            let w = ball_point(d_next, radii[h + 1], surface, &mut rng);
            let theta = ball_point(d_next, actor_radius, surface, &mut rng);
            run_probe(h, Some(w), Some(theta), &mut epsilon, &mut probes)?;
        }
    }
    for (h, w) in adversarial {
        if *h + 1 >= horizon {
            continue;
        }
        run_probe(*h, Some(w.clone()), None, &mut epsilon, &mut probes)?;
    }
    Ok(ClosednessReport { epsilon, probes })
}

/// Margins of the induced-MDP value bounds for the evaluated policy and a
/// set of comparators. Violations are admissible with frequency ≤ δ
/// across dataset resamples; this report is per-dataset evidence, not a
/// hard assertion.
#[derive(Debug, Clone, Serialize)]
pub struct Prop2Report {
    /// `V^π_{1,M̂}(s₁) − V^π_1(s₁) − Σε_h`; the bound holds when ≤ 0.
    pub evaluated_excess: f64,
    /// Per comparator: `|V^π̃_{1,M̂}(s₁) − V^π̃_1(s₁)|` and its bound
    /// `2Σ β_h‖φ̄^π̃_h‖_{Σ⁻¹} + Σε_h`.
    pub comparator_gaps: Vec<ComparatorGap>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparatorGap {
    pub absolute_difference: f64,
    pub bound: f64,
    /// `bound − absolute_difference`; nonnegative when the bound holds.
    pub margin: f64,
}

/// Checks the two induced-MDP value bounds on one dataset: (a) the
/// critic under-estimates the evaluated policy's value up to `Σε_h`, and
/// (b) any comparator's induced-MDP value differs from its true value by
/// at most `2Σ β_h‖φ̄^π̃_h‖_{Σ_h⁻¹} + Σε_h`.
pub fn verify_proposition2(
    mdp: &TabularLinearMdp,
    covariances: &[CumulativeCovariance],
    pi: &dyn Policy,
    comparators: &[&dyn Policy],
    solution: &CriticSolution,
    beta: &[f64],
    epsilon: &[f64],
) -> Result<Prop2Report> {
    let induced = induced_mdp(mdp, pi, solution)?;
    let eps_total: f64 = epsilon.iter().sum();
    let v_induced = evaluate_policy_exact(induced.as_mdp(), pi)?.initial(mdp);
    let v_true = evaluate_policy_exact(mdp, pi)?.initial(mdp);
    let evaluated_excess = v_induced - v_true - eps_total;

    let mut comparator_gaps = Vec::with_capacity(comparators.len());
    for comp in comparators {
        let lhs = (evaluate_policy_exact(induced.as_mdp(), *comp)?.initial(mdp)
            - evaluate_policy_exact(mdp, *comp)?.initial(mdp))
        .abs();
        let phi_bar = occupancy_features(mdp, *comp)?;
        let bound = phi_bar
            .iter()
            .zip(beta)
            .zip(covariances)
            .map(|((v, &b), cov)| 2.0 * b * cov.sigma_inv_norm(v))
            .sum::<f64>()
            + eps_total;
        comparator_gaps.push(ComparatorGap {
            absolute_difference: lhs,
            bound,
            margin: bound - lhs,
        });
    }
    Ok(Prop2Report {
        evaluated_excess,
        comparator_gaps,
    })
}

/// Accuracy of the backward best-predictor sequence: builds
/// `ŵ_h = 𝒮^π_h(Q̂_{h+1})` from the horizon down, records each stage's own
/// fit residual, and compares `Q̂_h` against the exact `Q^π_h`. Returns
/// per-stage `(max deviation, Σ residuals from h on)`; the deviation never
/// exceeds the residual tail.
pub fn best_predictor_accuracy(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    radii: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let horizon = mdp.horizon();
    let truth = evaluate_policy_exact(mdp, pi)?;
    let mut q_hat: StageQTable = Vec::new();
    let mut residuals = vec![0.0; horizon];
    let mut q_tables: Vec<StageQTable> = vec![Vec::new(); horizon];
    for h in (0..horizon).rev() {
        let (w, residual) = sup_norm_projection(mdp, pi, h, &q_hat, radii[h])?;
        residuals[h] = residual;
        q_hat = (0..mdp.n_states(h))
            .map(|s| {
                mdp.actions(h, s)
                    .iter()
                    .map(|e| e.features.dot(&w))
                    .collect()
            })
            .collect();
        q_tables[h] = q_hat.clone();
    }
    let mut out = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut dev = 0.0f64;
        for s in 0..mdp.n_states(h) {
            for j in 0..mdp.actions(h, s).len() {
                dev = dev.max((q_tables[h][s][j] - truth.q[h][s][j]).abs());
            }
        }
        let tail: f64 = residuals[h..].iter().sum();
        out.push((dev, tail));
    }
    Ok(out)
}

/// Fixed probe inventory used by calibration and good-event measurement:
/// per inner stage, pairs of (next-stage weight, next-stage policy
/// parameter) drawn once from a seed.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    /// `probes[h]` — probes used for stage `h`; empty at the final stage.
    pub probes: Vec<Vec<(DVector<f64>, DVector<f64>)>>,
}

impl ProbeSet {
    pub fn sample(
        mdp: &TabularLinearMdp,
        radii: &[f64],
        actor_radius: f64,
        per_stage: usize,
        rng_seed: u64,
    ) -> Self {
        let mut rng = seeded_rng(rng_seed);
        let horizon = mdp.horizon();
        let mut probes = vec![Vec::new(); horizon];
        for (h, stage_probes) in probes.iter_mut().enumerate().take(horizon.saturating_sub(1)) {
            let d_next = mdp.stage(h + 1).dim;
            for i in 0..per_stage {
                let surface = i % 2 == 1;
                let w = ball_point(d_next, radii[h + 1], surface, &mut rng);
                let theta = ball_point(d_next, actor_radius, surface, &mut rng);
                stage_probes.push((w, theta));
            }
        }
        Self { probes }
    }
}

/// Everything dataset-independent about one probe at one stage: the
/// probe's target table, its policy, and its sup-norm projection.
struct PreparedProbe {
    stage: usize,
    q_next: StageQTable,
    pi: SoftmaxPolicy,
    projection: DVector<f64>,
}

fn prepare_probes(
    mdp: &TabularLinearMdp,
    radii: &[f64],
    probe_set: &ProbeSet,
) -> Result<Vec<PreparedProbe>> {
    let horizon = mdp.horizon();
    let dims = crate::mdp::stage_dims(mdp);
    let mut out = Vec::new();
    for h in 0..horizon {
        if h + 1 == horizon {
            let pi = SoftmaxPolicy::zeros(&dims);
            let (projection, _) = sup_norm_projection(mdp, &pi, h, &Vec::new(), radii[h])?;
            out.push(PreparedProbe {
                stage: h,
                q_next: Vec::new(),
                pi,
                projection,
            });
            continue;
        }
        for (w, theta) in &probe_set.probes[h] {
            let mut theta_full: Vec<DVector<f64>> =
                dims.iter().map(|&d| DVector::zeros(d)).collect();
            theta_full[h + 1] = theta.clone();
            let pi = SoftmaxPolicy::new(theta_full);
            let q_next: StageQTable = (0..mdp.n_states(h + 1))
                .map(|s| {
                    mdp.actions(h + 1, s)
                        .iter()
                        .map(|e| e.features.dot(w))
                        .collect()
                })
                .collect();
            let (projection, _) = sup_norm_projection(mdp, &pi, h, &q_next, radii[h])?;
            out.push(PreparedProbe {
                stage: h,
                q_next,
                pi,
                projection,
            });
        }
    }
    Ok(out)
}

/// Per-stage sup over the probe set of `‖Δ^π_h(F)‖_{Σ_h}` on one dataset.
fn probe_sup_norms(
    mdp: &TabularLinearMdp,
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    prepared: &[PreparedProbe],
) -> Result<Vec<f64>> {
    let mut sup = vec![0.0f64; mdp.horizon()];
    for p in prepared {
        let regression =
            regression_operator_table(dataset, covariances, mdp, p.stage, &p.pi, &p.q_next)?;
        let norm = covariances[p.stage].sigma_norm(&(regression - &p.projection));
        sup[p.stage] = sup[p.stage].max(norm);
    }
    Ok(sup)
}

/// Smallest binomial order-statistic index whose coverage of the
/// `level`-quantile holds with the given confidence.
fn quantile_order_index(n: usize, level: f64, confidence: f64) -> usize {
    // smallest k (1-based) with P(Bin(n, level) ≤ k-1) ≥ confidence
    let mut log_pmf = (1.0 - level).ln() * n as f64; // P(X = 0)
    let mut cdf = log_pmf.exp();
    if cdf >= confidence {
        return 1;
    }
    for x in 0..n {
        // move from P(X = x) to P(X = x+1)
        log_pmf += ((n - x) as f64 / (x + 1) as f64).ln() + level.ln() - (1.0 - level).ln();
        cdf += log_pmf.exp();
        if cdf >= confidence {
            return x + 2;
        }
    }
    n
}

/// Empirical calibration of the pessimism parameters: regenerates
/// datasets with `sampler`, measures the per-stage probe supremum of
/// `‖Δ‖_{Σ_h}` on each, and returns a conservative (upper-confidence)
/// estimate of its `(1-δ)` quantile per stage. The projections are
/// dataset-independent and computed once.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_beta<S>(
    mdp: &TabularLinearMdp,
    radii: &[f64],
    lambda: f64,
    probe_set: &ProbeSet,
    sampler: S,
    resamples: usize,
    delta: f64,
    confidence: f64,
) -> Result<Vec<f64>>
where
    S: Fn(u64) -> Result<OfflineDataset> + Sync,
{
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Validation(format!("delta {delta} outside (0,1)")));
    }
    let prepared = prepare_probes(mdp, radii, probe_set)?;
    let sups: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let dataset = sampler(i as u64)?;
            let covariances = build_covariances(&dataset, mdp, lambda)?;
            probe_sup_norms(mdp, &dataset, &covariances, &prepared)
        })
        .collect::<Result<_>>()?;
    let k = quantile_order_index(resamples, 1.0 - delta, confidence);
    let mut beta = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let mut values: Vec<f64> = sups.iter().map(|s| s[h]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        beta.push(values[k - 1]);
    }
    Ok(beta)
}

/// Empirical good-event frequency: the fraction of freshly sampled
/// datasets on which the per-stage probe supremum of `‖Δ‖_{Σ_h}` stays
/// below `β_h`, reported per stage.
pub fn good_event_frequency<S>(
    mdp: &TabularLinearMdp,
    radii: &[f64],
    lambda: f64,
    probe_set: &ProbeSet,
    sampler: S,
    resamples: usize,
    beta: &[f64],
) -> Result<Vec<f64>>
where
    S: Fn(u64) -> Result<OfflineDataset> + Sync,
{
    let prepared = prepare_probes(mdp, radii, probe_set)?;
    let hits: Vec<Vec<bool>> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let dataset = sampler(i as u64)?;
            let covariances = build_covariances(&dataset, mdp, lambda)?;
            let sups = probe_sup_norms(mdp, &dataset, &covariances, &prepared)?;
            Ok(sups.iter().zip(beta).map(|(s, b)| s <= b).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..mdp.horizon())
        .map(|h| hits.iter().filter(|row| row[h]).count() as f64 / resamples as f64)
        .collect())
}

