//! Batch experiment orchestration: config parsing, dataset generation,
//! driver runs with baselines across seeds, and the verification suite.
//! The command-line front end is a thin wrapper over this module.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actor::{mirror_descent_regret_check, ActorConfig, RunTrace};
use crate::analysis::{
    best_predictor_accuracy, calibrate_beta, closedness_report, critic_exactness_gap,
    good_event_frequency, uncertainty, uncertainty_from_features, value_difference_identity,
    ProbeSet,
};
use crate::benchmarks::{
    chain_adversarial_probes, coverage_gap_instance, kl_adjacent_closed_form,
    kl_adjacent_per_sample, low_rank_instance, make_chain_mdp, make_lower_bound_instance,
    regret_sequence, uncertainty_upper_check, value_gap,
    ChainVariant,
};
use crate::critic::{pessimism_vector, run_critic, CriticConfig};
use crate::data::{
    build_covariances, collect_dataset, derive_seed, read_jsonl, seeded_rng, write_jsonl,
    CollectionPlan, CumulativeCovariance, GenerativeProbe, OfflineDataset,
};
use crate::error::{Error, Result};
use crate::mdp::{
    evaluate_mixture_exact, evaluate_policy_exact, from_spec_json, mixture_occupancy_features,
    optimal_values, stage_dims, to_spec_json, DeterministicPolicy, FeatureSet,
    SoftmaxPolicy, TabularLinearMdp, UniformPolicy,
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Where the MDP comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    /// An `mdp_spec_v1` file.
    File { path: String },
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    LowerBound {
        d: usize,
        horizon: usize,
        n: usize,
        /// Explicit sign vectors; drawn from `u_seed` when absent.
        #[serde(default)]
        u: Option<Vec<Vec<i8>>>,
        #[serde(default)]
        u_seed: u64,
    },
    Chain {
        n_chain: usize,
        variant: ChainVariant,
    },
    LowRank {
        states: usize,
        actions: usize,
        horizon: usize,
        dim: usize,
        reward_scale: f64,
        seed: u64,
    },
    CoverageGap {
        n: usize,
    },
}

/// How the offline data is collected (per seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "snake_case")]
pub enum DataPlanConfig {
    /// The generator's own schedule (lower-bound probe schedule,
    /// coverage-gap sampling). Invalid for `file` and plain generators.
    InstanceDefault,
    /// Uniform behavior policy rolled for `episodes` episodes.
    UniformBehavior { episodes: usize },
    /// Explicit probe schedule `[stage (1-based), state, action, count]`.
    Generative { probes: Vec<[usize; 4]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRate {
    /// `η = √(log|A|/T)`; requires `T ≥ log|A|`.
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorConfigJson {
    pub rounds: usize,
    pub learning_rate: LearningRate,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: usize,
}

fn default_snapshot() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BetaMode {
    /// Closed-form pessimism with constant `c` at failure level `delta`;
    /// `epsilon` defaults to zero mis-specification.
    Formula {
        c: f64,
        delta: f64,
        #[serde(default)]
        epsilon: Option<Vec<f64>>,
    },
    /// Empirical quantile calibration over dataset resamples.
    Calibrated {
        resamples: usize,
        delta: f64,
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "default_confidence")]
        confidence: f64,
    },
    /// Explicit per-stage values.
    Explicit { values: Vec<f64> },
}

fn default_probes() -> usize {
    8
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticConfigJson {
    /// Uniform weight radius `D ∈ (0,1]`.
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub beta: BetaMode,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_radius() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    1.0
}

/// Top-level batch experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub data: DataPlanConfig,
    pub actor: ActorConfigJson,
    pub critic: CriticConfigJson,
    /// Baselines to run alongside: `greedy_lsvi`, `beta_zero`.
    #[serde(default)]
    pub baselines: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Validation("at least one seed required".into()));
        }
        if let BetaMode::Formula { delta, .. } | BetaMode::Calibrated { delta, .. } =
            &self.critic.beta
        {
            if !(*delta > 0.0 && *delta < 1.0) {
                return Err(Error::Validation(format!("delta {delta} outside (0,1)")));
            }
        }
        for b in &self.baselines {
            if b != "greedy_lsvi" && b != "beta_zero" {
                return Err(Error::Validation(format!("unknown baseline {b:?}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Instance resolution
// ---------------------------------------------------------------------------

/// A resolved experiment instance: the MDP plus a seedable dataset plan.
pub struct ResolvedInstance {
    pub mdp: TabularLinearMdp,
    pub metadata: Option<serde_json::Value>,
    plan_probes: Option<Vec<GenerativeProbe>>,
    plan_episodes: Option<usize>,
}

impl ResolvedInstance {
    /// Collects the dataset for one seed.
    pub fn collect(&self, seed: u64) -> Result<OfflineDataset> {
        if let Some(probes) = &self.plan_probes {
            return collect_dataset(
                &self.mdp,
                CollectionPlan::Generative {
                    probes: probes.clone(),
                },
                seed,
            );
        }
        if let Some(episodes) = self.plan_episodes {
            return collect_dataset(
                &self.mdp,
                CollectionPlan::Behavior {
                    policy: Box::new(UniformPolicy),
                    episodes,
                },
                seed,
            );
        }
        Err(Error::Validation("no data plan resolved".into()))
    }
}

/// Resolves the MDP source and data plan of a config into an instance.
pub fn resolve_instance(config: &ExperimentConfig, base_dir: &Path) -> Result<ResolvedInstance> {
    let (mdp, metadata, default_probes): (
        TabularLinearMdp,
        Option<serde_json::Value>,
        Option<Vec<GenerativeProbe>>,
    ) = match &config.mdp {
        MdpSource::File { path } => {
            let text = std::fs::read_to_string(base_dir.join(path))?;
            let (mdp, metadata) = from_spec_json(&text)?;
            (mdp, metadata, None)
        }
        MdpSource::Generator(spec) => match spec {
            GeneratorSpec::LowerBound {
                d,
                horizon,
                n,
                u,
                u_seed,
            } => {
                let u = u.clone().unwrap_or_else(|| {
                    let mut rng = seeded_rng(*u_seed);
                    (0..*horizon)
                        .map(|_| {
                            (0..*d)
                                .map(|_| if rand::Rng::gen::<bool>(&mut rng) { 1 } else { -1 })
                                .collect()
                        })
                        .collect()
                });
                let (instance, _) = make_lower_bound_instance(*d, *horizon, *n, u.clone(), 0)?;
                let plays = instance.n_sub / (d + 1);
                let probes = (0..*horizon)
                    .flat_map(|h| {
                        instance.probe_ids.iter().map(move |&a| GenerativeProbe {
                            stage: h,
                            state: 0,
                            action: a,
                            count: plays,
                        })
                    })
                    .collect();
                let metadata = serde_json::json!({
                    "family": "lower_bound",
                    "d": d, "horizon": horizon, "n": n,
                    "u": u,
                    "gap_scale": instance.gap_scale,
                });
                (instance.mdp, Some(metadata), Some(probes))
            }
            GeneratorSpec::Chain { n_chain, variant } => {
                let mdp = make_chain_mdp(*n_chain, *variant)?;
                let metadata = serde_json::json!({
                    "family": "chain", "n_chain": n_chain, "variant": variant,
                });
                (mdp, Some(metadata), None)
            }
            GeneratorSpec::LowRank {
                states,
                actions,
                horizon,
                dim,
                reward_scale,
                seed,
            } => {
                let instance =
                    low_rank_instance(*states, *actions, *horizon, *dim, *reward_scale, *seed)?;
                let metadata = serde_json::json!({
                    "family": "low_rank", "states": states, "actions": actions,
                    "horizon": horizon, "dim": dim, "reward_scale": reward_scale,
                    "seed": seed,
                });
                (instance.mdp, Some(metadata), None)
            }
            GeneratorSpec::CoverageGap { n } => {
                let mdp = coverage_gap_instance()?;
                let probes = vec![GenerativeProbe {
                    stage: 0,
                    state: 0,
                    action: 0,
                    count: *n,
                }];
                let metadata = serde_json::json!({"family": "coverage_gap", "n": n});
                (mdp, Some(metadata), Some(probes))
            }
        },
    };

    let (plan_probes, plan_episodes) = match &config.data {
        DataPlanConfig::InstanceDefault => {
            let probes = default_probes.ok_or_else(|| {
                Error::Validation(
                    "instance_default data plan needs a generator with a schedule".into(),
                )
            })?;
            (Some(probes), None)
        }
        DataPlanConfig::UniformBehavior { episodes } => (None, Some(*episodes)),
        DataPlanConfig::Generative { probes } => {
            let probes = probes
                .iter()
                .map(|&[h, s, a, count]| {
                    if h == 0 {
                        return Err(Error::Validation("probe stages are 1-based".into()));
                    }
                    Ok(GenerativeProbe {
                        stage: h - 1,
                        state: s,
                        action: a,
                        count,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(probes), None)
        }
    };
    Ok(ResolvedInstance {
        mdp,
        metadata,
        plan_probes,
        plan_episodes,
    })
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Greedy least-squares value iteration: backward ridge regression with a
/// hard max over actions and the per-stage argmax policy, no pessimism.
/// The maximization-bias foil for the pessimistic runs.
pub fn greedy_lsvi(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    mdp: &TabularLinearMdp,
) -> Result<(Vec<DVector<f64>>, DeterministicPolicy)> {
    let horizon = mdp.horizon();
    let mut weights: Vec<DVector<f64>> = vec![DVector::zeros(0); horizon];
    for h in (0..horizon).rev() {
        let mut acc = DVector::zeros(mdp.dim(h));
        for rec in dataset.stage_records(h) {
            let phi = crate::data::feature_of(mdp, h, rec.state, rec.action)?;
            let continuation = if h + 1 < horizon {
                mdp.actions(h + 1, rec.next_state)
                    .iter()
                    .map(|e| e.features.dot(&weights[h + 1]))
                    .fold(f64::NEG_INFINITY, f64::max)
            } else {
                0.0
            };
            acc += phi.scale(rec.reward + continuation);
        }
        weights[h] = covariances[h].solve(&acc);
    }
    let choice = (0..horizon)
        .map(|h| {
            (0..mdp.n_states(h))
                .map(|s| {
                    mdp.actions(h, s)
                        .iter()
                        .enumerate()
                        .max_by(|(_, a), (_, b)| {
                            a.features
                                .dot(&weights[h])
                                .partial_cmp(&b.features.dot(&weights[h]))
                                .unwrap()
                        })
                        .map(|(j, _)| j)
                        .unwrap()
                })
                .collect()
        })
        .collect();
    Ok((weights, DeterministicPolicy { choice }))
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

/// Per-seed outcome of a batch run.
#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Exact value of the returned mixture policy at the initial state.
    pub value_mixture: f64,
    pub value_optimal: f64,
    /// `U(π*; β)` of the greedy-optimal comparator.
    pub uncertainty_optimal: f64,
    /// `4H√(log|A|/T)`.
    pub optimization_error: f64,
    /// `V* − V^ALG − U(π*;β) − R_opt`; the main bound holds when ≤ 0.
    pub bound_residual: f64,
    /// `U(mixture; β)`, the coverage of the returned policy itself.
    pub uncertainty_mixture: f64,
    pub value_lower_final: f64,
    pub baselines: BTreeMap<String, f64>,
    pub beta: Vec<f64>,
    pub failure: Option<String>,
}

/// Whole-run summary written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: serde_json::Value,
    pub inputs_hash: String,
    pub beta_mode: String,
    pub seed_results: Vec<SeedSummary>,
    pub failures: usize,
}

fn resolve_eta(actor: &ActorConfigJson, n_actions: usize) -> Result<f64> {
    match &actor.learning_rate {
        LearningRate::Value(v) => Ok(*v),
        LearningRate::Named(name) if name == "theorem" => {
            ActorConfig::theorem_stepsize(actor.rounds, n_actions)
        }
        LearningRate::Named(other) => Err(Error::Validation(format!(
            "unknown learning rate {other:?}"
        ))),
    }
}

/// Resolves the pessimism parameters for one instance/plan/config triple.
pub fn resolve_beta(
    instance: &ResolvedInstance,
    config: &ExperimentConfig,
    eta: f64,
) -> Result<Vec<f64>> {
    let mdp = &instance.mdp;
    let horizon = mdp.horizon();
    let radii = vec![config.critic.radius; horizon];
    match &config.critic.beta {
        BetaMode::Explicit { values } => {
            if values.len() != horizon {
                return Err(Error::Shape(format!(
                    "{} beta values for horizon {horizon}",
                    values.len()
                )));
            }
            Ok(values.clone())
        }
        BetaMode::Formula { c, delta, epsilon } => {
            let probe = instance.collect(derive_seed(0xbe7a, 0))?;
            let counts: Vec<usize> = (0..horizon).map(|h| probe.stage_len(h)).collect();
            let eps = epsilon.clone().unwrap_or_else(|| vec![0.0; horizon]);
            pessimism_vector(
                *delta,
                &stage_dims(mdp),
                &counts,
                config.actor.rounds,
                eta,
                &eps,
                config.critic.lambda,
                *c,
            )
        }
        BetaMode::Calibrated {
            resamples,
            delta,
            probes,
            confidence,
        } => {
            let actor_radius = (eta * config.actor.rounds as f64).max(1.0);
            let probe_set = ProbeSet::sample(mdp, &radii, actor_radius, *probes, 0xca11b);
            calibrate_beta(
                mdp,
                &radii,
                config.critic.lambda,
                &probe_set,
                |i| instance.collect(derive_seed(0xca11b7a5e, i)),
                *resamples,
                *delta,
                *confidence,
            )
        }
    }
}

/// Runs the full batch: per seed, collect data, run the driver and the
/// configured baselines, and compute the oracle metrics. Seeds fan out
/// across threads; results are merged in seed order.
pub fn cmd_run(config: &ExperimentConfig, base_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let instance = resolve_instance(config, base_dir)?;
    let mdp = &instance.mdp;
    let horizon = mdp.horizon();
    let n_actions = mdp.max_action_count();
    let eta = resolve_eta(&config.actor, n_actions)?;
    let beta = resolve_beta(&instance, config, eta)?;
    let radii = vec![config.critic.radius; horizon];
    let critic_config = CriticConfig::new(radii, beta.clone(), config.critic.lambda);
    let actor_config = ActorConfig {
        rounds: config.actor.rounds,
        learning_rate: eta,
        snapshot_every: config.actor.snapshot_every,
    };

    let (v_star, pi_star) = optimal_values(mdp).map(|(v, p)| (v.v[0][mdp.initial_state()], p))?;
    let r_opt = 4.0 * horizon as f64 * ((n_actions as f64).ln() / config.actor.rounds as f64).sqrt();

    let seed_results: Vec<SeedSummary> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            run_one_seed(
                &instance,
                config,
                &actor_config,
                &critic_config,
                seed,
                v_star,
                &pi_star,
                r_opt,
            )
        })
        .collect();

    let failures = seed_results.iter().filter(|s| s.failure.is_some()).count();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config)?);
    hasher.update(to_spec_json(mdp, instance.metadata.clone()).as_bytes());
    let summary = RunSummary {
        config: serde_json::to_value(config)?,
        inputs_hash: format!("{:x}", hasher.finalize()),
        beta_mode: match &config.critic.beta {
            BetaMode::Formula { .. } => "formula".into(),
            BetaMode::Calibrated { .. } => "calibrated".into(),
            BetaMode::Explicit { .. } => "explicit".into(),
        },
        seed_results,
        failures,
    };
    if let Some(dir) = &config.out_dir {
        write_run_outputs(&summary, config, &instance, base_dir.join(dir))?;
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_one_seed(
    instance: &ResolvedInstance,
    config: &ExperimentConfig,
    actor_config: &ActorConfig,
    critic_config: &CriticConfig,
    seed: u64,
    v_star: f64,
    pi_star: &DeterministicPolicy,
    r_opt: f64,
) -> SeedSummary {
    let mdp = &instance.mdp;
    let mut summary = SeedSummary {
        seed,
        value_mixture: f64::NAN,
        value_optimal: v_star,
        uncertainty_optimal: f64::NAN,
        optimization_error: r_opt,
        bound_residual: f64::NAN,
        uncertainty_mixture: f64::NAN,
        value_lower_final: f64::NAN,
        baselines: BTreeMap::new(),
        beta: critic_config.beta.clone(),
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let dataset = instance.collect(seed)?;
        let covariances = build_covariances(&dataset, mdp, critic_config.lambda)?;
        let trace = crate::actor::run_pacle(
            &dataset,
            mdp,
            mdp.initial_state(),
            actor_config,
            critic_config,
        )?;
        summary.value_mixture = evaluate_mixture_exact(mdp, &trace.mixture)?;
        summary.uncertainty_optimal =
            uncertainty(mdp, pi_star, &critic_config.beta, &covariances)?;
        summary.uncertainty_mixture = uncertainty_from_features(
            &mixture_occupancy_features(mdp, &trace.mixture)?,
            &critic_config.beta,
            &covariances,
        );
        summary.value_lower_final = trace
            .iterations
            .last()
            .map(|it| it.value_lower)
            .unwrap_or(f64::NAN);
        summary.bound_residual =
            v_star - summary.value_mixture - summary.uncertainty_optimal - r_opt;

        for baseline in &config.baselines {
            match baseline.as_str() {
                "greedy_lsvi" => {
                    let (_, policy) = greedy_lsvi(&dataset, &covariances, mdp)?;
                    let value = evaluate_policy_exact(mdp, &policy)?.initial(mdp);
                    summary.baselines.insert("greedy_lsvi".into(), value);
                }
                "beta_zero" => {
                    let zero = CriticConfig {
                        beta: vec![0.0; mdp.horizon()],
                        ..critic_config.clone()
                    };
                    let value = match crate::actor::run_pacle(
                        &dataset,
                        mdp,
                        mdp.initial_state(),
                        actor_config,
                        &zero,
                    ) {
                        Ok(trace) => evaluate_mixture_exact(mdp, &trace.mixture)?,
                        Err(_) => f64::NAN,
                    };
                    summary.baselines.insert("beta_zero".into(), value);
                }
                _ => unreachable!("validated"),
            }
        }
        if let Some(dir) = &config.out_dir {
            write_seed_trace(&trace, seed, Path::new(dir))?;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        summary.failure = Some(e.to_string());
    }
    summary
}

fn write_seed_trace(trace: &RunTrace, seed: u64, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut jsonl = String::new();
    let mut csv = String::from("round,value_lower\n");
    for it in &trace.iterations {
        let line = serde_json::json!({
            "t": it.round,
            "value_lower": it.value_lower,
            "theta": it.theta.iter().map(|v| v.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>(),
            "w_lower": it.w_lower.iter().map(|v| v.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>(),
            "solver_iterations": it.solver_iterations,
        });
        jsonl.push_str(&serde_json::to_string(&line)?);
        jsonl.push('\n');
        csv.push_str(&format!("{},{}\n", it.round, it.value_lower));
    }
    std::fs::write(dir.join(format!("trace_seed{seed}.jsonl")), jsonl)?;
    std::fs::write(dir.join(format!("values_seed{seed}.csv")), csv)?;
    Ok(())
}

fn write_run_outputs(
    summary: &RunSummary,
    _config: &ExperimentConfig,
    instance: &ResolvedInstance,
    dir: PathBuf,
) -> Result<()> {
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    std::fs::write(
        dir.join("mdp.json"),
        to_spec_json(&instance.mdp, instance.metadata.clone()),
    )?;
    Ok(())
}

/// Generates and writes the instance's MDP spec and one dataset file per
/// seed; returns the written paths.
pub fn cmd_generate(config: &ExperimentConfig, base_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let instance = resolve_instance(config, base_dir)?;
    let dir = base_dir.join(config.out_dir.as_deref().unwrap_or("out"));
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mdp_path = dir.join("mdp.json");
    std::fs::write(
        &mdp_path,
        to_spec_json(&instance.mdp, instance.metadata.clone()),
    )?;
    written.push(mdp_path);
    for &seed in &config.seeds {
        let dataset = instance.collect(seed)?;
        let path = dir.join(format!("dataset_seed{seed}.jsonl"));
        std::fs::write(&path, write_jsonl(&dataset))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a dataset file back (used by the CLI and tests).
pub fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    read_jsonl(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

/// Knobs for the verification suite. `corrupt_beta_factor` scales the
/// calibrated pessimism before the good-event frequency check; values
/// below one serve as a negative control that must degrade the reported
/// frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOptions {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_draws")]
    pub policy_draws: usize,
    #[serde(default = "default_corrupt")]
    pub corrupt_beta_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_instances() -> usize {
    20
}
fn default_resamples() -> usize {
    200
}
fn default_draws() -> usize {
    1000
}
fn default_corrupt() -> f64 {
    1.0
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            resamples: default_resamples(),
            policy_draws: default_draws(),
            corrupt_beta_factor: default_corrupt(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    /// The measured quantity (worst case over the check's sweep).
    pub value: f64,
    /// The threshold it was compared against.
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

fn check_le(name: &str, value: f64, threshold: f64, detail: String) -> VerifyCheck {
    VerifyCheck {
        name: name.into(),
        passed: value <= threshold,
        value,
        threshold,
        detail,
    }
}

fn check_ge(name: &str, value: f64, threshold: f64, detail: String) -> VerifyCheck {
    VerifyCheck {
        name: name.into(),
        passed: value >= threshold,
        value,
        threshold,
        detail,
    }
}

/// Random softmax policy with parameters in the per-stage balls of radius
/// `radius`.
pub fn random_softmax(mdp: &TabularLinearMdp, radius: f64, seed: u64) -> SoftmaxPolicy {
    let mut rng = seeded_rng(seed);
    SoftmaxPolicy::new(
        (0..mdp.horizon())
            .map(|h| {
                let v = DVector::from_fn(mdp.dim(h), |_, _| {
                    rand::Rng::gen::<f64>(&mut rng) * 2.0 - 1.0
                });
                let n = v.norm();
                if n > 0.0 {
                    v.scale(radius * rand::Rng::gen::<f64>(&mut rng) / n)
                } else {
                    v
                }
            })
            .collect(),
    )
}

/// Runs the critic with the given base pessimism, doubling it (up to a
/// few times) if the program is infeasible. The exactness identity holds
/// for any feasible solution, so the sweeps only need feasibility.
pub fn run_critic_feasible(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    mdp: &TabularLinearMdp,
    pi: &SoftmaxPolicy,
    beta0: f64,
    lambda: f64,
) -> Result<(crate::critic::CriticSolution, CriticConfig)> {
    let mut beta = beta0;
    for _ in 0..8 {
        let config = CriticConfig::uniform(mdp.horizon(), 1.0, beta, lambda);
        match run_critic(dataset, covariances, mdp, pi, &config, mdp.initial_state()) {
            Ok(solution) => return Ok((solution, config)),
            Err(Error::Infeasible { .. }) => beta *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Validation(
        "critic stayed infeasible after pessimism doubling".into(),
    ))
}

/// Runs the full verification suite: the critic exactness identity and
/// the value-difference identity on random instances, the good-event
/// frequency on the desk fixture, the exact-feedback regret bound, the
/// nearby-policies inequality, the closedness fixtures, the
/// best-predictor accuracy bound, the hypercube construction identities,
/// and solver KKT residuals.
pub fn cmd_verify(options: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let seed = options.seed;

    // --- identities on random tabular instances ---------------------------
    let mut exactness_worst = 0.0f64;
    let mut identity_worst = 0.0f64;
    let mut kkt_worst = 0.0f64;
    for i in 0..options.instances {
        let s = derive_seed(seed, 100 + i as u64);
        let mut rng = seeded_rng(s);
        let n_states = 2 + rand::Rng::gen_range(&mut rng, 0..3usize);
        let n_actions = 2 + rand::Rng::gen_range(&mut rng, 0..2usize);
        let horizon = 1 + rand::Rng::gen_range(&mut rng, 0..3usize);
        let dims: Vec<usize> = (0..horizon)
            .map(|_| 1 + rand::Rng::gen_range(&mut rng, 0..3usize))
            .collect();
        let mdp = crate::benchmarks::random_instance_with(
            n_states,
            n_actions,
            horizon,
            &dims,
            0.4,
            crate::mdp::RewardNoise::Gaussian,
            derive_seed(s, 1),
        )?;
        let dataset = collect_dataset(
            &mdp,
            CollectionPlan::Behavior {
                policy: Box::new(UniformPolicy),
                episodes: 12,
            },
            derive_seed(s, 2),
        )?;
        let covariances = build_covariances(&dataset, &mdp, 1.0)?;
        let pi = random_softmax(&mdp, 2.0, derive_seed(s, 3));
        let beta0 = 0.3 + 2.7 * rand::Rng::gen::<f64>(&mut rng);
        let (solution, _) =
            run_critic_feasible(&dataset, &covariances, &mdp, &pi, beta0, 1.0)?;
        kkt_worst = kkt_worst.max(solution.report.kkt_residual);
        exactness_worst = exactness_worst.max(critic_exactness_gap(&mdp, &pi, &solution)?);

        let induced = crate::analysis::induced_mdp(&mdp, &pi, &solution)?;
        let comparator = random_softmax(&mdp, 3.0, derive_seed(s, 4));
        let (lhs, rhs) = value_difference_identity(&mdp, &induced, &comparator)?;
        identity_worst = identity_worst.max((lhs - rhs).abs());
        let det = DeterministicPolicy {
            choice: (0..horizon)
                .map(|h| {
                    (0..mdp.n_states(h))
                        .map(|st| rand::Rng::gen_range(&mut rng, 0..mdp.actions(h, st).len()))
                        .collect()
                })
                .collect(),
        };
        let (lhs, rhs) = value_difference_identity(&mdp, &induced, &det)?;
        identity_worst = identity_worst.max((lhs - rhs).abs());
    }
    checks.push(check_le(
        "critic_exactness_identity",
        exactness_worst,
        1e-6,
        format!("max |Q̲ − Q_induced| over {} random instances", options.instances),
    ));
    checks.push(check_le(
        "value_difference_identity",
        identity_worst,
        1e-8,
        "max |lhs − rhs| over softmax and deterministic comparators".into(),
    ));
    checks.push(check_le(
        "critic_solver_kkt",
        kkt_worst,
        1e-6,
        "max KKT residual over critic solves".into(),
    ));

    // --- empty dataset: the identity needs no data -------------------------
    {
        let mdp = low_rank_instance(3, 2, 2, 2, 0.3, derive_seed(seed, 7))?.mdp;
        let dataset = OfflineDataset::empty(mdp.horizon());
        let covariances = build_covariances(&dataset, &mdp, 1.0)?;
        let pi = random_softmax(&mdp, 1.0, derive_seed(seed, 8));
        let (solution, _) = run_critic_feasible(&dataset, &covariances, &mdp, &pi, 1.0, 1.0)?;
        checks.push(check_le(
            "critic_exactness_empty_dataset",
            critic_exactness_gap(&mdp, &pi, &solution)?,
            1e-6,
            "identity on an empty dataset".into(),
        ));
    }

    // --- good-event frequency on the desk fixture --------------------------
    {
        let fixture = low_rank_instance(3, 2, 2, 2, 0.3, 0xf1c)?;
        let mdp = fixture.mdp.clone();
        let radii = vec![1.0; mdp.horizon()];
        let probe_set = ProbeSet::sample(&mdp, &radii, 2.0, 6, derive_seed(seed, 20));
        let sampler = |i: u64| {
            collect_dataset(
                &mdp,
                CollectionPlan::Behavior {
                    policy: Box::new(UniformPolicy),
                    episodes: 150,
                },
                derive_seed(0xde5c ^ seed, i),
            )
        };
        let beta = calibrate_beta(
            &mdp,
            &radii,
            1.0,
            &probe_set,
            |i| sampler(derive_seed(0xc0de, i)),
            options.resamples.max(200),
            0.1,
            0.95,
        )?;
        let beta_used: Vec<f64> = beta
            .iter()
            .map(|b| b * options.corrupt_beta_factor)
            .collect();
        let freq = good_event_frequency(
            &mdp,
            &radii,
            1.0,
            &probe_set,
            |i| sampler(derive_seed(0xe7a1, i)),
            options.resamples,
            &beta_used,
        )?;
        let min_freq = freq.iter().cloned().fold(f64::INFINITY, f64::min);
        checks.push(check_ge(
            "good_event_frequency",
            min_freq,
            0.9,
            format!("per-stage frequencies {freq:?} with beta {beta_used:?}"),
        ));
    }

    // --- exact-feedback regret bound ---------------------------------------
    {
        let (sequence, comparator) =
            regret_sequence(3, 4, 3, 3, 300, 0.18, derive_seed(seed, 30))?;
        let eta = ActorConfig::theorem_stepsize(300, 4)?;
        let check = mirror_descent_regret_check(&sequence, &comparator, eta)?;
        let stated = 2.0 * 3.0 * ((4.0f64).ln() / 300.0).sqrt();
        checks.push(check_le(
            "mirror_descent_regret",
            check.average_regret,
            stated.min(check.bound),
            format!("bound {} / stated {stated}", check.bound),
        ));
    }

    // --- nearby policies ----------------------------------------------------
    {
        let mdp = low_rank_instance(4, 3, 2, 3, 0.2, derive_seed(seed, 40))?.mdp;
        let mut rng = seeded_rng(derive_seed(seed, 41));
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..options.policy_draws {
            let h = rand::Rng::gen_range(&mut rng, 0..mdp.horizon());
            let d = mdp.dim(h);
            let theta = DVector::from_fn(d, |_, _| rand::Rng::gen::<f64>(&mut rng) * 4.0 - 2.0);
            let mut step = DVector::from_fn(d, |_, _| rand::Rng::gen::<f64>(&mut rng) - 0.5);
            let norm = step.norm();
            if norm > 0.0 {
                step = step.scale(0.5 * rand::Rng::gen::<f64>(&mut rng) / norm);
            }
            let (lhs, rhs) = crate::actor::nearby_policies_gap(&mdp, h, &theta, &(&theta + step));
            worst = worst.max(lhs - rhs);
        }
        checks.push(check_le(
            "nearby_policies",
            worst,
            0.0,
            format!("max(lhs − 8‖θ−θ'‖) over {} draws", options.policy_draws),
        ));
    }

    // --- closedness fixtures ------------------------------------------------
    {
        let chain_a = make_chain_mdp(3, ChainVariant::A)?;
        let report_a = closedness_report(
            &chain_a,
            &vec![2.0f64.sqrt(); chain_a.horizon()],
            2.0,
            24,
            derive_seed(seed, 50),
            &chain_adversarial_probes(ChainVariant::A),
        )?;
        let eps_a = report_a.epsilon.iter().cloned().fold(0.0, f64::max);
        checks.push(check_le(
            "closedness_chain_a",
            eps_a,
            1e-7,
            "chain variant (a) stays closed".into(),
        ));

        let chain_b = make_chain_mdp(3, ChainVariant::B)?;
        let report_b = closedness_report(
            &chain_b,
            &vec![2.0f64.sqrt(); chain_b.horizon()],
            2.0,
            24,
            derive_seed(seed, 51),
            &chain_adversarial_probes(ChainVariant::B),
        )?;
        checks.push(check_ge(
            "closedness_chain_b",
            report_b.epsilon[0],
            1.0 - 1e-6,
            "adversarial probe witnesses the closedness failure".into(),
        ));

        // fitting radii sized to the exact backup norms (√2·(0.2 + D_next))
        let low_rank = low_rank_instance(3, 2, 3, 2, 0.2, derive_seed(seed, 52))?;
        let report_lr = closedness_report(
            &low_rank.mdp,
            &[1.5, 0.8, 0.3],
            2.0,
            16,
            derive_seed(seed, 53),
            &[],
        )?;
        let eps_lr = report_lr.epsilon.iter().cloned().fold(0.0, f64::max);
        checks.push(check_le(
            "closedness_low_rank",
            eps_lr,
            1e-7,
            "low-rank instances stay closed".into(),
        ));
    }

    // --- best-predictor accuracy -------------------------------------------
    {
        let mdp = make_chain_mdp(3, ChainVariant::B)?;
        let pi = random_softmax(&mdp, 1.0, derive_seed(seed, 60));
        let rows = best_predictor_accuracy(&mdp, &pi, &vec![2.0f64.sqrt(); mdp.horizon()])?;
        let worst = rows
            .iter()
            .map(|(dev, tail)| dev - tail)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(check_le(
            "best_predictor_accuracy",
            worst,
            1e-6,
            "max (deviation − residual tail) per stage".into(),
        ));
    }

    // --- hypercube construction identities ----------------------------------
    {
        let u = vec![vec![1, -1], vec![-1, -1]];
        let (instance, dataset) =
            make_lower_bound_instance(2, 2, 192, u, derive_seed(seed, 70))?;
        let kl_gap =
            (kl_adjacent_closed_form(&instance) - kl_adjacent_per_sample(&instance)).abs();
        checks.push(check_le(
            "kl_adjacent",
            kl_gap,
            1e-10,
            "closed form vs per-sample Gaussian KL sum".into(),
        ));
        let pi = random_softmax(&instance.mdp, 2.0, derive_seed(seed, 71));
        let dp_gap = {
            let (v_star, _) = optimal_values(&instance.mdp)?;
            let v_pi = evaluate_policy_exact(&instance.mdp, &pi)?;
            (v_star.v[0][0] - v_pi.v[0][0] - value_gap(&instance, &pi)).abs()
        };
        checks.push(check_le(
            "value_gap_identity",
            dp_gap,
            1e-10,
            "exact display vs DP difference".into(),
        ));
        let sweep = uncertainty_upper_check(&instance, &dataset, 300, derive_seed(seed, 72))?;
        checks.push(check_le(
            "uncertainty_upper",
            sweep.max_uncertainty,
            sweep.bound,
            format!("{} policies swept", sweep.policies_swept),
        ));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}
