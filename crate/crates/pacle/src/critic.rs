//! Pessimistic least-squares policy evaluation.
//!
//! For a target softmax policy the critic minimizes the policy-weighted
//! initial value `Σ_a π₁(a|s₁)⟨φ₁(s₁,a), w₁⟩` over weight vectors tied
//! together by the backward regression chain
//!
//! `w_h = ξ_h + Σ_h⁻¹ Σ_{k∈I_h} φ_hk [r_hk + Σ_a π_{h+1}(a|s'_hk)⟨φ_{h+1}(s'_hk,a), w_{h+1}⟩]`
//!
//! with `w_{H+1} = 0`, subject to `‖ξ_h‖_{Σ_h} ≤ β_h` and `‖w_h‖₂ ≤ D_h`.
//! The pessimism enters by perturbing the regression solution directly, so
//! the estimate stays linear in the features; there are no bonus terms.
//! Solved as a cone program over the free `ξ` blocks.

use nalgebra::{DMatrix, DVector};

use crate::data::{feature_of, CumulativeCovariance, OfflineDataset};
use crate::error::{Error, Result};
use crate::mdp::{FeatureSet, SoftmaxPolicy};
use crate::socp::{
    eliminate_equalities, solve, ConicProgram, SolveReport, SolveStatus, Tolerances,
};

/// Critic configuration: per-stage weight radii `D_h ∈ (0,1]`, pessimism
/// parameters `β_h ≥ 0`, the covariance regularizer, and solver settings.
#[derive(Debug, Clone)]
pub struct CriticConfig {
    pub radii: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub tolerances: Tolerances,
    pub max_iters: usize,
}

impl CriticConfig {
    pub fn new(radii: Vec<f64>, beta: Vec<f64>, lambda: f64) -> Self {
        Self {
            radii,
            beta,
            lambda,
            tolerances: Tolerances::default(),
            max_iters: 20_000,
        }
    }

    /// Uniform radii and pessimism across stages.
    pub fn uniform(horizon: usize, radius: f64, beta: f64, lambda: f64) -> Self {
        Self::new(vec![radius; horizon], vec![beta; horizon], lambda)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.radii.len() != horizon || self.beta.len() != horizon {
            return Err(Error::Shape(format!(
                "config has {} radii / {} beta for horizon {horizon}",
                self.radii.len(),
                self.beta.len()
            )));
        }
        for (h, &d) in self.radii.iter().enumerate() {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Validation(format!(
                    "radius {d} outside (0, 1] at stage {}",
                    h + 1
                )));
            }
        }
        for (h, &b) in self.beta.iter().enumerate() {
            if !(b >= 0.0) {
                return Err(Error::Validation(format!(
                    "negative pessimism {b} at stage {}",
                    h + 1
                )));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Validation(format!(
                "lambda {} must be > 0",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Critic output: per-stage weight and pessimism vectors, the pessimistic
/// initial value (the program's objective), and solver diagnostics.
#[derive(Debug, Clone)]
pub struct CriticSolution {
    pub w_lower: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub value_lower: f64,
    pub report: SolveReport,
}

/// Per-dataset quantities that do not depend on the evaluated policy:
/// stacked stage features, the reward part of each regression constant,
/// and the sampled next states. Build once, reuse across actor iterations.
pub struct CriticWorkspace<'a> {
    dataset: &'a OfflineDataset,
    covariances: &'a [CumulativeCovariance],
    /// `Φ_hᵀ` with feature vectors as columns (`d_h × n_h`).
    phi_t: Vec<DMatrix<f64>>,
    /// `Σ_h⁻¹ Φ_hᵀ r_h`, the policy-independent regression constant.
    reward_term: Vec<DVector<f64>>,
    next_states: Vec<Vec<usize>>,
}

impl<'a> CriticWorkspace<'a> {
    pub fn new<F: FeatureSet + ?Sized>(
        dataset: &'a OfflineDataset,
        covariances: &'a [CumulativeCovariance],
        fs: &F,
    ) -> Result<Self> {
        let horizon = fs.horizon();
        if dataset.horizon() != horizon || covariances.len() != horizon {
            return Err(Error::Shape(format!(
                "dataset horizon {} / {} covariances for horizon {horizon}",
                dataset.horizon(),
                covariances.len()
            )));
        }
        let mut phi_t = Vec::with_capacity(horizon);
        let mut reward_term = Vec::with_capacity(horizon);
        let mut next_states = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let d = fs.dim(h);
            let n_h = dataset.stage_len(h);
            if covariances[h].dim() != d {
                return Err(Error::Shape(format!(
                    "covariance dim {} != feature dim {d} at stage {}",
                    covariances[h].dim(),
                    h + 1
                )));
            }
            let mut m = DMatrix::zeros(d, n_h);
            let mut r = DVector::zeros(d);
            let mut nexts = Vec::with_capacity(n_h);
            for (k, rec) in dataset.stage_records(h).enumerate() {
                let phi = feature_of(fs, h, rec.state, rec.action)?;
                m.set_column(k, phi);
                r += phi.scale(rec.reward);
                nexts.push(rec.next_state);
            }
            phi_t.push(m);
            reward_term.push(covariances[h].solve(&r));
            next_states.push(nexts);
        }
        Ok(Self {
            dataset,
            covariances,
            phi_t,
            reward_term,
            next_states,
        })
    }

    pub fn dataset(&self) -> &OfflineDataset {
        self.dataset
    }

    pub fn covariances(&self) -> &[CumulativeCovariance] {
        self.covariances
    }

    /// Policy-averaged next-state features for every stage-`h` record:
    /// column `k` holds `Σ_a π_{h+1}(a|s'_hk) φ_{h+1}(s'_hk, a)`.
    fn next_feature_matrix<F: FeatureSet + ?Sized>(
        &self,
        fs: &F,
        h: usize,
        pi: &SoftmaxPolicy,
    ) -> DMatrix<f64> {
        let d_next = fs.dim(h + 1);
        let n_h = self.next_states[h].len();
        let mut psi = DMatrix::zeros(d_next, n_h);
        for (k, &sp) in self.next_states[h].iter().enumerate() {
            let probs = pi.probs_from_features(fs, h + 1, sp);
            let mut col = DVector::zeros(d_next);
            for (j, &p) in probs.iter().enumerate() {
                let (_, phi) = fs.action_feature(h + 1, sp, j);
                col += phi.scale(p);
            }
            psi.set_column(k, &col);
        }
        psi
    }

    /// The linear part `G_h = Σ_h⁻¹ Φ_hᵀ Ψ_h(π)` of the regression map,
    /// so that `ŵ_h = reward_term_h + G_h w_{h+1}`.
    pub fn regression_affinity<F: FeatureSet + ?Sized>(
        &self,
        fs: &F,
        h: usize,
        pi: &SoftmaxPolicy,
    ) -> DMatrix<f64> {
        let psi = self.next_feature_matrix(fs, h, pi);
        self.covariances[h].solve_matrix(&(&self.phi_t[h] * psi.transpose()))
    }

    /// Regularized least-squares estimate
    /// `ŵ_h = Σ_h⁻¹ Σ_k φ_hk [r_hk + Σ_a π_{h+1}(a|s'_hk)⟨φ_{h+1}(s'_hk,a), w_next⟩]`.
    /// An empty stage yields `ŵ_h = 0` (the regularizer alone acts on an
    /// empty sum). At the final stage pass an empty `w_next`.
    pub fn regression_vector<F: FeatureSet + ?Sized>(
        &self,
        fs: &F,
        h: usize,
        pi: &SoftmaxPolicy,
        w_next: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let last = h + 1 == fs.horizon();
        if last {
            if w_next.len() != 0 {
                return Err(Error::Shape(
                    "final stage takes an empty continuation weight".into(),
                ));
            }
            return Ok(self.reward_term[h].clone());
        }
        if w_next.len() != fs.dim(h + 1) {
            return Err(Error::Shape(format!(
                "continuation weight dim {} != stage {} dim {}",
                w_next.len(),
                h + 2,
                fs.dim(h + 1)
            )));
        }
        Ok(&self.reward_term[h] + self.regression_affinity(fs, h, pi) * w_next)
    }

    /// Builds the critic's cone program for policy `pi` evaluated at the
    /// initial state. Stages with `β_h = 0` have their pessimism vector
    /// pinned to zero (no free block), which is exactly the degenerate
    /// ellipsoid's feasible set.
    pub fn assemble<F: FeatureSet + ?Sized>(
        &self,
        fs: &F,
        pi: &SoftmaxPolicy,
        config: &CriticConfig,
        initial_state: usize,
    ) -> Result<ConicProgram> {
        let horizon = fs.horizon();
        config.validate(horizon)?;
        let mut program = ConicProgram::new();
        let w_blocks: Vec<_> = (0..horizon)
            .map(|h| program.add_block(format!("w_{}", h + 1), fs.dim(h)))
            .collect();
        let xi_blocks: Vec<_> = (0..horizon)
            .map(|h| {
                (config.beta[h] > 0.0)
                    .then(|| program.add_block(format!("xi_{}", h + 1), fs.dim(h)))
            })
            .collect();

        for h in 0..horizon {
            let mut terms = Vec::new();
            if let Some(xi) = xi_blocks[h] {
                terms.push((xi, DMatrix::identity(fs.dim(h), fs.dim(h))));
            }
            if h + 1 < horizon {
                terms.push((w_blocks[h + 1], self.regression_affinity(fs, h, pi)));
            }
            program.add_equality(w_blocks[h], terms, self.reward_term[h].clone());
            if let Some(xi) = xi_blocks[h] {
                program.add_ellipsoid(
                    xi,
                    self.covariances[h].matrix().clone(),
                    config.beta[h],
                );
            }
            program.add_ball(w_blocks[h], config.radii[h]);
        }

        // Objective: the policy-weighted initial value.
        let probs = pi.probs_from_features(fs, 0, initial_state);
        let mut coeffs = DVector::zeros(fs.dim(0));
        for (j, &p) in probs.iter().enumerate() {
            let (_, phi) = fs.action_feature(0, initial_state, j);
            coeffs += phi.scale(p);
        }
        program.set_objective(w_blocks[0], coeffs);
        Ok(program)
    }

    /// Assembles, solves, and unpacks. Infeasibility (β or D too small for
    /// the regression chain) is returned as an error carrying the
    /// violation certificate: the driver must abort rather than silently
    /// relax the pessimism, which would void its guarantee.
    pub fn run<F: FeatureSet + ?Sized>(
        &self,
        fs: &F,
        pi: &SoftmaxPolicy,
        config: &CriticConfig,
        initial_state: usize,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<CriticSolution> {
        let program = self.assemble(fs, pi, config, initial_state)?;
        let reduced = eliminate_equalities(&program)?;
        let report = solve(&reduced, config.tolerances, config.max_iters, warm_start)?;
        match report.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => unreachable!("solve returns Err on infeasible"),
            SolveStatus::MaxIters => {
                return Err(Error::SolverLimit(format!(
                    "critic solve stopped after {} iterations (violation {:.2e})",
                    report.iterations, report.max_violation
                )))
            }
        }
        let horizon = fs.horizon();
        let mut w_lower = Vec::with_capacity(horizon);
        let mut xi = Vec::with_capacity(horizon);
        for h in 0..horizon {
            w_lower.push(report.blocks[&format!("w_{}", h + 1)].clone());
            xi.push(
                report
                    .blocks
                    .get(&format!("xi_{}", h + 1))
                    .cloned()
                    .unwrap_or_else(|| DVector::zeros(fs.dim(h))),
            );
        }
        Ok(CriticSolution {
            w_lower,
            xi,
            value_lower: report.objective,
            report,
        })
    }
}

/// Free-function form of [`CriticWorkspace::regression_vector`].
pub fn regression_vector<F: FeatureSet + ?Sized>(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    fs: &F,
    h: usize,
    pi: &SoftmaxPolicy,
    w_next: &DVector<f64>,
) -> Result<DVector<f64>> {
    CriticWorkspace::new(dataset, covariances, fs)?.regression_vector(fs, h, pi, w_next)
}

/// Free-function form of [`CriticWorkspace::assemble`].
pub fn assemble_critic_program<F: FeatureSet + ?Sized>(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    fs: &F,
    pi: &SoftmaxPolicy,
    config: &CriticConfig,
    initial_state: usize,
) -> Result<ConicProgram> {
    CriticWorkspace::new(dataset, covariances, fs)?.assemble(fs, pi, config, initial_state)
}

/// Free-function form of [`CriticWorkspace::run`]: one pessimistic
/// policy-evaluation call.
pub fn run_critic<F: FeatureSet + ?Sized>(
    dataset: &OfflineDataset,
    covariances: &[CumulativeCovariance],
    fs: &F,
    pi: &SoftmaxPolicy,
    config: &CriticConfig,
    initial_state: usize,
) -> Result<CriticSolution> {
    CriticWorkspace::new(dataset, covariances, fs)?.run(fs, pi, config, initial_state, None)
}

/// Closed-form pessimism parameters
/// `β_h = √λ + √n_h·ε_h + c·√(1 + d_h·ln(1 + T/(d_h λ)) + d_h·ln(1 + 8√T) + d_h·ln(1 + 16·B·√T) + ln(H/δ))`
/// with `B = ηT` the reach of the actor's parameter over `T` rounds. The
/// universal constant is exposed as `c` (default 1.0 in the experiment
/// configs); `ε_h` is the per-stage closedness error supplied by the user
/// or estimated from a closedness report.
#[allow(clippy::too_many_arguments)]
pub fn pessimism_vector(
    delta: f64,
    dims: &[usize],
    stage_counts: &[usize],
    rounds: usize,
    eta: f64,
    epsilon: &[f64],
    lambda: f64,
    c: f64,
) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Validation(format!("delta {delta} outside (0,1)")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Validation(format!("lambda {lambda} must be > 0")));
    }
    if c < 0.0 {
        return Err(Error::Validation(format!("constant c {c} must be >= 0")));
    }
    if dims.len() != stage_counts.len() || dims.len() != epsilon.len() {
        return Err(Error::Shape(
            "dims, stage counts, and epsilon must have one entry per stage".into(),
        ));
    }
    let horizon = dims.len() as f64;
    let t = rounds as f64;
    let reach = eta * t;
    Ok(dims
        .iter()
        .zip(stage_counts)
        .zip(epsilon)
        .map(|((&d_h, &n_h), &eps_h)| {
            let d = d_h as f64;
            let inner = 1.0
                + d * (1.0 + t / (d * lambda)).ln()
                + d * (1.0 + 8.0 * t.sqrt()).ln()
                + d * (1.0 + 16.0 * reach * t.sqrt()).ln()
                + (horizon / delta).ln();
            lambda.sqrt() + (n_h as f64).sqrt() * eps_h + c * inner.sqrt()
        })
        .collect())
}
