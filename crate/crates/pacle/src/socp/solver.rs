//! Log-barrier path-following solver for the reduced cone programs.
//!
//! Each cone `‖Fx + g‖ ≤ ⟨f, x⟩ + d` carries the standard self-concordant
//! barrier `-log((⟨f,x⟩+d)² - ‖Fx+g‖²)` with parameter 2, so the duality
//! gap after centering at parameter `t` is at most `2m/t`. Feasibility is
//! established by a lifted phase-I program minimizing the worst constraint
//! violation; a strictly positive phase-I optimum is the infeasibility
//! certificate.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::{Cone, ReducedProgram};
use crate::error::{Error, Result};

/// Solver tolerances. `feas` bounds the constraint violation accepted in
/// an optimal report; `opt` bounds the certified objective suboptimality
/// (in units of the normalized objective).
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub feas: f64,
    pub opt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: 1e-8,
            opt: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

/// Outcome of a solve: primal solution per block (free and reconstructed),
/// objective value, residuals, and iteration counts. `status == Optimal`
/// guarantees `max_violation ≤ feas` and a duality-gap certificate of
/// `opt`-suboptimality on the normalized objective.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub blocks: BTreeMap<String, DVector<f64>>,
    pub objective: f64,
    pub max_violation: f64,
    /// max(stationarity, violation, complementarity) of the KKT system at
    /// the returned point, measured on the unit-normalized objective.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

struct BarrierCone {
    f_mat: DMatrix<f64>,
    g: DVector<f64>,
    f_lin: DVector<f64>,
    d: f64,
}

impl BarrierCone {
    fn from_cone(c: &Cone) -> Self {
        Self {
            f_mat: c.f_mat.clone(),
            g: c.g.clone(),
            f_lin: c.f_lin.clone(),
            d: c.d,
        }
    }

    /// `q = v² - ‖u‖²` with `v = ⟨f,x⟩+d`, `u = Fx+g`; positive inside.
    fn q(&self, x: &DVector<f64>) -> (f64, f64, DVector<f64>) {
        let v = self.f_lin.dot(x) + self.d;
        let u = &self.f_mat * x + &self.g;
        (v * v - u.norm_squared(), v, u)
    }

    fn strictly_inside(&self, x: &DVector<f64>) -> bool {
        let (q, v, _) = self.q(x);
        v > 0.0 && q > 0.0
    }
}

struct Barrier {
    cones: Vec<BarrierCone>,
}

impl Barrier {
    fn domain_ok(&self, x: &DVector<f64>) -> bool {
        self.cones.iter().all(|c| c.strictly_inside(x))
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.cones
            .iter()
            .map(|c| {
                let (q, _, _) = c.q(x);
                -q.ln()
            })
            .sum()
    }

    /// Gradient and Hessian of the barrier at an interior point.
    fn grad_hess(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for c in &self.cones {
            let (q, v, u) = c.q(x);
            // ∇q = 2v f - 2Fᵀu,  ∇²q = 2ffᵀ - 2FᵀF
            let dq = c.f_lin.scale(2.0 * v) - c.f_mat.transpose() * u.scale(2.0);
            grad += dq.scale(-1.0 / q);
            // ∇²(-ln q) = ∇q∇qᵀ/q² - ∇²q/q, accumulated on the lower triangle.
            hess.syger(1.0 / (q * q), &dq, &dq, 1.0);
            hess.syger(-2.0 / q, &c.f_lin, &c.f_lin, 1.0);
            if c.f_mat.nrows() > 0 {
                let ftf = c.f_mat.transpose() * &c.f_mat;
                for i in 0..n {
                    for j in 0..=i {
                        hess[(i, j)] += 2.0 / q * ftf[(i, j)];
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        (grad, hess)
    }
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        if ridge > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += ridge * (1.0 + m[(i, i)].abs());
            }
        }
        if let Some(chol) = nalgebra::Cholesky::new(m) {
            return Some(chol.solve(rhs));
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
    }
    None
}

enum CenterEnd {
    Converged,
    Budget,
    Stalled,
}

/// Newton steps per centering stage; quadratic convergence makes this
/// generous, and capping it keeps degenerate geometries from spinning.
const NEWTON_CAP: usize = 150;

/// Damped Newton to the central point of `t·⟨c,x⟩ + barrier`. Always
/// returns the last interior iterate together with how it stopped.
fn center(
    c: &DVector<f64>,
    t: f64,
    barrier: &Barrier,
    mut x: DVector<f64>,
    budget: &mut usize,
) -> (DVector<f64>, CenterEnd) {
    let obj = |x: &DVector<f64>| t * c.dot(x) + barrier.value(x);
    let mut steps = 0;
    let mut prev_decrement_sq = f64::INFINITY;
    loop {
        if *budget == 0 {
            return (x, CenterEnd::Budget);
        }
        if steps == NEWTON_CAP {
            return (x, CenterEnd::Stalled);
        }
        steps += 1;
        *budget -= 1;
        let (bg, bh) = barrier.grad_hess(&x);
        let grad = c.scale(t) + bg;
        let step = match solve_spd(&bh, &grad) {
            Some(s) => s,
            None => return (x, CenterEnd::Stalled),
        };
        // Newton decrement squared; dimensionless for the self-concordant
        // barrier, so a flat threshold works at every t.
        let decrement_sq = grad.dot(&step);
        if decrement_sq <= 1e-15 {
            return (x, CenterEnd::Converged);
        }
        if decrement_sq <= 0.05 {
            // Quadratic convergence region: the undamped step is safe and
            // the objective-based line search would drown in float noise
            // at large t. Stop once the decrement no longer contracts.
            if decrement_sq > 0.25 * prev_decrement_sq {
                return (x, CenterEnd::Converged);
            }
            prev_decrement_sq = decrement_sq;
            let cand = &x - &step;
            if barrier.domain_ok(&cand) {
                x = cand;
                continue;
            }
        }
        prev_decrement_sq = decrement_sq;
        let base = obj(&x);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x - step.scale(alpha);
            if barrier.domain_ok(&cand) && obj(&cand) <= base - 0.25 * alpha * decrement_sq {
                x = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No further float-representable progress along the step.
            return (x, CenterEnd::Converged);
        }
    }
}

struct PathResult {
    x: DVector<f64>,
    t: f64,
    converged: bool,
}

/// Barrier path following from `t = 1` until the duality gap `2m/t` falls
/// below `gap_target` or `exit_early` fires.
fn path_follow(
    c: &DVector<f64>,
    barrier: &Barrier,
    x0: DVector<f64>,
    gap_target: f64,
    budget: &mut usize,
    mut exit_early: impl FnMut(&DVector<f64>, f64) -> bool,
) -> PathResult {
    let m = barrier.cones.len().max(1) as f64;
    let mut t = 1.0;
    let mut x = x0;
    loop {
        let (next, end) = center(c, t, barrier, x, budget);
        x = next;
        if matches!(end, CenterEnd::Budget) {
            return PathResult {
                x,
                t,
                converged: false,
            };
        }
        let gap = 2.0 * m / t;
        if exit_early(&x, gap) || gap <= gap_target {
            return PathResult {
                x,
                t,
                converged: true,
            };
        }
        t *= 20.0;
    }
}

/// KKT residual at a centered point: stationarity of
/// `c + Σ μ_i ∇G_i(x)` with `μ_i = 1/(t·q_i)`, primal violation, and
/// complementarity `μ_i·|G_i| = 1/t`.
fn kkt_residual(
    c: &DVector<f64>,
    barrier: &Barrier,
    x: &DVector<f64>,
    t: f64,
    violation: f64,
) -> f64 {
    let mut stat = c.clone();
    let mut comp: f64 = 0.0;
    for cone in &barrier.cones {
        let (q, v, u) = cone.q(x);
        if q <= 0.0 {
            return f64::INFINITY;
        }
        // G = ‖u‖² - v² ≤ 0, ∇G = 2Fᵀu - 2v·f, μ = 1/(t·q)
        let dg = cone.f_mat.transpose() * u.scale(2.0) - cone.f_lin.scale(2.0 * v);
        stat += dg.scale(1.0 / (t * q));
        comp = comp.max(1.0 / t);
    }
    stat.amax().max(violation).max(comp)
}

fn ball_radius_hint(cones: &[Cone]) -> f64 {
    cones
        .iter()
        .filter(|c| c.f_lin.amax() == 0.0)
        .map(|c| c.d)
        .fold(0.0, f64::max)
}

/// Solves a reduced program. `initial` may provide a warm-start point; a
/// phase-I search runs automatically when the start is not strictly
/// feasible. Cones of exactly zero radius are rejected — pin the block
/// (drop it from the program) instead of constraining it to a point.
pub fn solve(
    program: &ReducedProgram,
    tolerances: Tolerances,
    max_iters: usize,
    initial: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    let start = Instant::now();
    for cone in &program.cones {
        if cone.f_lin.amax() == 0.0 && cone.d <= 0.0 {
            return Err(Error::Validation(format!(
                "cone {} has zero radius; pin the block instead of constraining it",
                cone.label
            )));
        }
    }
    let barrier = Barrier {
        cones: program.cones.iter().map(BarrierCone::from_cone).collect(),
    };
    let mut budget = max_iters;
    let x_start = initial
        .cloned()
        .unwrap_or_else(|| DVector::zeros(program.n));

    // Phase I unless the start is already safely interior.
    let margin_needed = 1e-3 * (1.0 + ball_radius_hint(&program.cones));
    let interior = program
        .cones
        .iter()
        .all(|c| c.margin(&x_start) > tolerances.feas.max(1e-12));
    let x_interior = if interior && barrier.domain_ok(&x_start) {
        x_start
    } else {
        match phase_one(program, &x_start, tolerances, margin_needed, &mut budget) {
            PhaseOne::Interior(x) => x,
            PhaseOne::Infeasible { lower, detail } => {
                return Err(Error::Infeasible {
                    max_violation: lower,
                    detail,
                })
            }
            PhaseOne::Budget(x) => {
                return Ok(report_at(
                    program,
                    &barrier,
                    x,
                    None,
                    SolveStatus::MaxIters,
                    max_iters - budget,
                    start,
                ))
            }
        }
    };

    // Phase II on the normalized objective.
    let c_norm = program.objective.norm();
    if c_norm == 0.0 {
        return Ok(report_at(
            program,
            &barrier,
            x_interior,
            None,
            SolveStatus::Optimal,
            max_iters - budget,
            start,
        ));
    }
    let c_hat = program.objective.scale(1.0 / c_norm);
    let gap_target = tolerances.opt / c_norm.max(1.0);
    let path = path_follow(&c_hat, &barrier, x_interior, gap_target, &mut budget, |_, _| false);
    let status = if path.converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIters
    };
    Ok(report_at(
        program,
        &barrier,
        path.x,
        Some((c_hat, path.t)),
        status,
        max_iters - budget,
        start,
    ))
}

fn report_at(
    program: &ReducedProgram,
    barrier: &Barrier,
    x: DVector<f64>,
    certificate: Option<(DVector<f64>, f64)>,
    status: SolveStatus,
    iterations: usize,
    start: Instant,
) -> SolveReport {
    let violation = program.max_violation(&x);
    let kkt = match (&certificate, status) {
        (Some((c_hat, t)), SolveStatus::Optimal) => kkt_residual(c_hat, barrier, &x, *t, violation),
        (_, SolveStatus::Optimal) => violation,
        _ => f64::INFINITY,
    };
    SolveReport {
        status,
        blocks: program.block_values(&x),
        objective: program.objective_at(&x),
        max_violation: violation,
        kkt_residual: kkt,
        iterations,
        x,
        wall_time: start.elapsed(),
    }
}

enum PhaseOne {
    Interior(DVector<f64>),
    Infeasible { lower: f64, detail: String },
    Budget(DVector<f64>),
}

/// Lifted feasibility search: minimize `s` subject to
/// `‖F_i x + g_i‖ ≤ ⟨f_i, x⟩ + d_i + s`. Stops as soon as the iterate is
/// safely interior (`s ≤ -margin_needed`) or the gap certifies the verdict.
fn phase_one(
    program: &ReducedProgram,
    x_start: &DVector<f64>,
    tolerances: Tolerances,
    margin_needed: f64,
    budget: &mut usize,
) -> PhaseOne {
    let n = program.n;
    let lifted: Vec<BarrierCone> = program
        .cones
        .iter()
        .map(|c| {
            let mut f_mat = DMatrix::zeros(c.f_mat.nrows(), n + 1);
            f_mat
                .view_mut((0, 0), (c.f_mat.nrows(), n))
                .copy_from(&c.f_mat);
            let mut f_lin = DVector::zeros(n + 1);
            f_lin.rows_mut(0, n).copy_from(&c.f_lin);
            f_lin[n] = 1.0;
            BarrierCone {
                f_mat,
                g: c.g.clone(),
                f_lin,
                d: c.d,
            }
        })
        .collect();
    let barrier = Barrier { cones: lifted };

    let worst = program
        .cones
        .iter()
        .map(|c| -c.margin(x_start))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(x_start);
    z0[n] = worst.max(0.0) + 1.0;

    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let gap_target = 0.25 * tolerances.feas;
    let path = path_follow(&c, &barrier, z0, gap_target, budget, |z, gap| {
        let s = z[z.len() - 1];
        s <= -margin_needed || (s > 4.0 * tolerances.feas && gap <= 0.1 * s)
    });
    let s = path.x[n];
    let x = DVector::from(path.x.rows(0, n).clone_owned());
    if !path.converged {
        return PhaseOne::Budget(x);
    }
    let gap = 2.0 * barrier.cones.len() as f64 / path.t;
    if s <= -0.5 * tolerances.feas {
        PhaseOne::Interior(x)
    } else {
        PhaseOne::Infeasible {
            lower: (s - gap).max(0.0),
            detail: format!("phase-I optimum {s:.3e} (gap {gap:.1e})"),
        }
    }
}
