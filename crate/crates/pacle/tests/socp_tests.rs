//! Solver correctness: closed-form optima, equality elimination,
//! grid-search oracles on small critic-shaped programs, KKT residuals,
//! infeasibility certificates, and objective-scaling invariance.

mod common;

use nalgebra::{DMatrix, DVector};
use pacle::socp::{eliminate_equalities, solve, ConicProgram, SolveStatus, Tolerances};
use pacle::Error;

fn solve_default(program: &ConicProgram) -> pacle::socp::SolveReport {
    let reduced = eliminate_equalities(program).unwrap();
    solve(&reduced, Tolerances::default(), 50_000, None).unwrap()
}

#[test]
fn ball_constrained_linear_objective_closed_form() {
    // min ⟨c, ξ⟩ s.t. ‖ξ‖₂ ≤ β  →  ξ* = −β c/‖c‖, objective −β‖c‖.
    let mut p = ConicProgram::new();
    let xi = p.add_block("xi", 3);
    let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    p.set_objective(xi, c.clone());
    p.add_ball(xi, 0.8);
    let report = solve_default(&p);
    assert_eq!(report.status, SolveStatus::Optimal);
    let expect = -0.8 * c.norm();
    assert!((report.objective - expect).abs() < 1e-7, "{}", report.objective);
    let x_expect = c.scale(-0.8 / c.norm());
    assert!((&report.blocks["xi"] - x_expect).norm() < 1e-6);
    assert!(report.kkt_residual <= 1e-6);
}

#[test]
fn ellipsoid_constrained_linear_objective_closed_form() {
    // min ⟨c, ξ⟩ s.t. ‖ξ‖_M ≤ β  →  ξ* = −β M⁻¹c/‖c‖_{M⁻¹}.
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let c = DVector::from_vec(vec![1.0, 0.5]);
    let beta = 1.3;
    let mut p = ConicProgram::new();
    let xi = p.add_block("xi", 2);
    p.set_objective(xi, c.clone());
    p.add_ellipsoid(xi, m.clone(), beta);
    let report = solve_default(&p);

    let m_inv_c = m.clone().try_inverse().unwrap() * &c;
    let norm_dual = c.dot(&m_inv_c).sqrt();
    let x_expect = m_inv_c.scale(-beta / norm_dual);
    assert!((&report.blocks["xi"] - &x_expect).norm() < 1e-6);
    assert!((report.objective + beta * norm_dual).abs() < 1e-7);

    // dense grid oracle in d = 2 over the ellipsoid's bounding box
    let (_, grid_best) = common::grid_search_min(
        &[0.0, 0.0],
        2.0,
        12,
        41,
        0.4,
        &|x| {
            let v = DVector::from_vec(x.to_vec());
            v.dot(&(&m * &v)) <= beta * beta
        },
        &|x| c[0] * x[0] + c[1] * x[1],
    );
    assert!((report.objective - grid_best).abs() < 1e-3);
}

#[test]
fn one_dimensional_critic_program_piecewise_closed_form() {
    // min (ŵ+ξ)·φ̄ s.t. |ξ|√Σ ≤ β, |ŵ+ξ| ≤ D:
    // shift ŵ by −sign(φ̄)·β/√Σ, then clip to [−D, D].
    for (w_hat, phi_bar, sigma, beta, d_radius) in [
        (0.3, 1.0, 4.0, 0.6, 1.0),
        (0.9, -2.0, 9.0, 0.3, 1.0),
        (-0.2, 0.7, 1.0, 5.0, 0.5),
        (0.0, 1.0, 2.0, 0.1, 1.0),
    ] {
        let mut p = ConicProgram::new();
        let xi = p.add_block("xi", 1);
        let w = p.add_block("w", 1);
        p.add_equality(
            w,
            vec![(xi, DMatrix::identity(1, 1))],
            DVector::from_element(1, w_hat),
        );
        p.set_objective(w, DVector::from_element(1, phi_bar));
        p.add_ellipsoid(xi, DMatrix::from_element(1, 1, sigma), beta);
        p.add_ball(w, d_radius);
        let report = solve_default(&p);

        let shifted = w_hat - phi_bar.signum() * beta / sigma.sqrt();
        let expect = shifted.clamp(-d_radius, d_radius);
        assert!(
            (report.blocks["w"][0] - expect).abs() < 1e-6,
            "w {} expect {expect}",
            report.blocks["w"][0]
        );
        assert!(report.kkt_residual <= 1e-6);
    }
}

#[test]
fn eliminate_without_equalities_is_identity() {
    let mut p = ConicProgram::new();
    let a = p.add_block("a", 2);
    let b = p.add_block("b", 3);
    p.set_objective(a, DVector::from_vec(vec![1.0, 2.0]));
    p.add_ball(a, 1.0);
    p.add_ball(b, 2.0);
    let reduced = eliminate_equalities(&p).unwrap();
    assert_eq!(reduced.n, 5);
    assert_eq!(reduced.free_blocks.len(), 2);
    assert!(reduced.reconstruction.is_empty());
    assert_eq!(
        reduced.objective.as_slice(),
        &[1.0, 2.0, 0.0, 0.0, 0.0],
        "objective embeds into the free layout"
    );
}

#[test]
fn eliminate_single_stage_chain() {
    // H=1 critic shape: w₁ = ξ₁ + ŵ₁ with ŵ₁ constant.
    let mut p = ConicProgram::new();
    let xi = p.add_block("xi_1", 2);
    let w = p.add_block("w_1", 2);
    let w_hat = DVector::from_vec(vec![0.3, -0.4]);
    p.add_equality(w, vec![(xi, DMatrix::identity(2, 2))], w_hat.clone());
    p.set_objective(w, DVector::from_vec(vec![1.0, 1.0]));
    let reduced = eliminate_equalities(&p).unwrap();
    assert_eq!(reduced.n, 2, "only ξ₁ stays free");
    let (name, expr) = &reduced.reconstruction[0];
    assert_eq!(name, "w_1");
    let x = DVector::from_vec(vec![0.1, 0.2]);
    assert!((expr.eval(&x) - (&x + &w_hat)).norm() < 1e-15);
}

#[test]
fn eliminate_three_stage_chain_matches_finite_differences() {
    // w₃ = ξ₃ + c₃; w₂ = ξ₂ + G₂w₃ + c₂; w₁ = ξ₁ + G₁w₂ + c₁;
    // objective ⟨q, w₁⟩. The reduced objective's coefficient on ξ₃ must
    // equal the composed map qᵀG₁G₂, checked by finite differences of
    // the reconstructed objective.
    let d = 2;
    let g1 = DMatrix::from_row_slice(d, d, &[0.5, -0.2, 0.1, 0.3]);
    let g2 = DMatrix::from_row_slice(d, d, &[-0.4, 0.2, 0.6, 0.1]);
    let c1 = DVector::from_vec(vec![0.05, -0.02]);
    let c2 = DVector::from_vec(vec![0.1, 0.0]);
    let c3 = DVector::from_vec(vec![-0.07, 0.03]);
    let q = DVector::from_vec(vec![0.8, -0.6]);

    let mut p = ConicProgram::new();
    let xi1 = p.add_block("xi_1", d);
    let xi2 = p.add_block("xi_2", d);
    let xi3 = p.add_block("xi_3", d);
    let w1 = p.add_block("w_1", d);
    let w2 = p.add_block("w_2", d);
    let w3 = p.add_block("w_3", d);
    p.add_equality(w3, vec![(xi3, DMatrix::identity(d, d))], c3.clone());
    p.add_equality(
        w2,
        vec![(xi2, DMatrix::identity(d, d)), (w3, g2.clone())],
        c2.clone(),
    );
    p.add_equality(
        w1,
        vec![(xi1, DMatrix::identity(d, d)), (w2, g1.clone())],
        c1.clone(),
    );
    p.set_objective(w1, q.clone());
    for xi in [xi1, xi2, xi3] {
        p.add_ellipsoid(xi, DMatrix::identity(d, d), 1.0);
    }
    let reduced = eliminate_equalities(&p).unwrap();
    assert_eq!(reduced.n, 3 * d);

    let composed = (q.transpose() * &g1 * &g2).transpose();
    let xi3_range = reduced
        .free_blocks
        .iter()
        .find(|(n, _)| n == "xi_3")
        .unwrap()
        .1
        .clone();
    for (k, col) in xi3_range.clone().enumerate() {
        assert!((reduced.objective[col] - composed[k]).abs() < 1e-12);
    }

    // finite differences of the reconstructed objective
    let x0 = DVector::from_fn(reduced.n, |i, _| 0.01 * i as f64);
    let f = |x: &DVector<f64>| {
        let blocks = reduced.block_values(x);
        q.dot(&blocks["w_1"])
    };
    let eps = 1e-6;
    for col in 0..reduced.n {
        let mut xp = x0.clone();
        xp[col] += eps;
        let mut xm = x0.clone();
        xm[col] -= eps;
        let fd = (f(&xp) - f(&xm)) / (2.0 * eps);
        assert!(
            (fd - reduced.objective[col]).abs() < 1e-6,
            "col {col}: fd {fd} vs {}",
            reduced.objective[col]
        );
    }
}

#[test]
fn cyclic_equalities_are_rejected() {
    let mut p = ConicProgram::new();
    let a = p.add_block("a", 1);
    let b = p.add_block("b", 1);
    p.add_equality(a, vec![(b, DMatrix::identity(1, 1))], DVector::zeros(1));
    p.add_equality(b, vec![(a, DMatrix::identity(1, 1))], DVector::zeros(1));
    match eliminate_equalities(&p) {
        Err(Error::CyclicEqualities(_)) => {}
        other => panic!("expected cycle error, got {other:?}"),
    }
}

#[test]
fn random_critic_shaped_programs_match_grid_search() {
    // d ≤ 2, H ≤ 2 critic programs against a refining projected grid.
    let mut rng = pacle::data::seeded_rng(2024);
    for trial in 0..6 {
        let d = 1 + trial % 2;
        fn rand_vec(d: usize, scale: f64, rng: &mut impl rand::Rng) -> DVector<f64> {
            DVector::from_fn(d, |_, _| (rng.gen::<f64>() - 0.5) * scale)
        }
        fn rand_spd(d: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen::<f64>() - 0.5);
            &a * a.transpose() + DMatrix::identity(d, d)
        }
        let g = DMatrix::from_fn(d, d, |_, _| 0.6 * (rand::Rng::gen::<f64>(&mut rng) - 0.5));
        let c2 = rand_vec(d, 0.6, &mut rng);
        let c1 = rand_vec(d, 0.6, &mut rng);
        let q = rand_vec(d, 2.0, &mut rng);
        let m1 = rand_spd(d, &mut rng);
        let m2 = rand_spd(d, &mut rng);
        let beta = [
            0.2 + rand::Rng::gen::<f64>(&mut rng),
            0.2 + rand::Rng::gen::<f64>(&mut rng),
        ];
        let radius = [1.0, 1.0];

        let mut p = ConicProgram::new();
        let xi1 = p.add_block("xi_1", d);
        let xi2 = p.add_block("xi_2", d);
        let w1 = p.add_block("w_1", d);
        let w2 = p.add_block("w_2", d);
        p.add_equality(w2, vec![(xi2, DMatrix::identity(d, d))], c2.clone());
        p.add_equality(
            w1,
            vec![(xi1, DMatrix::identity(d, d)), (w2, g.clone())],
            c1.clone(),
        );
        p.set_objective(w1, q.clone());
        p.add_ellipsoid(xi1, m1.clone(), beta[0]);
        p.add_ellipsoid(xi2, m2.clone(), beta[1]);
        p.add_ball(w1, radius[0]);
        p.add_ball(w2, radius[1]);
        let report = solve_default(&p);
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!(
            report.kkt_residual <= 1e-6,
            "trial {trial}: kkt {} violation {} iters {}",
            report.kkt_residual,
            report.max_violation,
            report.iterations
        );

        // independent statement of the same program for the oracle
        let objective = |x: &[f64]| {
            let xi1v = DVector::from_vec(x[..d].to_vec());
            let xi2v = DVector::from_vec(x[d..].to_vec());
            let w2v = &xi2v + &c2;
            let w1v = &xi1v + &g * &w2v + &c1;
            q.dot(&w1v)
        };
        let feasible = |x: &[f64]| {
            let xi1v = DVector::from_vec(x[..d].to_vec());
            let xi2v = DVector::from_vec(x[d..].to_vec());
            let w2v = &xi2v + &c2;
            let w1v = &xi1v + &g * &w2v + &c1;
            xi1v.dot(&(&m1 * &xi1v)) <= beta[0] * beta[0]
                && xi2v.dot(&(&m2 * &xi2v)) <= beta[1] * beta[1]
                && w1v.norm() <= radius[0]
                && w2v.norm() <= radius[1]
        };
        let (_, grid_best) = common::grid_search_min(
            &vec![0.0; 2 * d],
            1.2,
            12,
            if d == 1 { 41 } else { 17 },
            0.45,
            &feasible,
            &objective,
        );
        // the grid only visits feasible points, so its optimum is an upper
        // bound; the solver must match it to tolerance from below
        assert!(
            report.objective <= grid_best + 1e-6,
            "trial {trial}: solver {} grid {grid_best}",
            report.objective
        );
        assert!(
            report.objective >= grid_best - 1e-3,
            "trial {trial}: solver {} grid {grid_best}",
            report.objective
        );
    }
}

#[test]
fn infeasible_ball_is_certified() {
    // w = ξ + ŵ with ‖ŵ‖ = 2, ‖w‖ ≤ 0.5 and a tight ellipsoid on ξ: the
    // chain cannot pull w inside the ball.
    let mut p = ConicProgram::new();
    let xi = p.add_block("xi", 2);
    let w = p.add_block("w", 2);
    p.add_equality(
        w,
        vec![(xi, DMatrix::identity(2, 2))],
        DVector::from_vec(vec![2.0, 0.0]),
    );
    p.set_objective(w, DVector::from_vec(vec![1.0, 0.0]));
    p.add_ellipsoid(xi, DMatrix::identity(2, 2).scale(4.0), 0.4); // ‖ξ‖ ≤ 0.2
    p.add_ball(w, 0.5);
    let reduced = eliminate_equalities(&p).unwrap();
    match solve(&reduced, Tolerances::default(), 50_000, None) {
        Err(Error::Infeasible { max_violation, .. }) => {
            // the phase-I relaxation inflates both cones by s, so the
            // least worst-case violation solves 1.8 − s/2 = 0.5 + s
            let expect = 13.0 / 15.0;
            assert!(
                (max_violation - expect).abs() < 0.02,
                "certificate {max_violation} vs {expect}"
            );
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn scaling_the_objective_leaves_the_argmin_unchanged() {
    let m = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.9]);
    let c = DVector::from_vec(vec![0.7, -0.3]);
    let base = {
        let mut p = ConicProgram::new();
        let xi = p.add_block("xi", 2);
        p.set_objective(xi, c.clone());
        p.add_ellipsoid(xi, m.clone(), 1.0);
        solve_default(&p).blocks["xi"].clone()
    };
    for scale in [1e-3, 0.5, 10.0, 1e4] {
        let mut p = ConicProgram::new();
        let xi = p.add_block("xi", 2);
        p.set_objective(xi, c.scale(scale));
        p.add_ellipsoid(xi, m.clone(), 1.0);
        let x = solve_default(&p).blocks["xi"].clone();
        assert!(
            (&x - &base).norm() < 1e-6,
            "scale {scale}: drift {}",
            (&x - &base).norm()
        );
    }
}

#[test]
fn zero_objective_returns_any_feasible_point() {
    let mut p = ConicProgram::new();
    let xi = p.add_block("xi", 2);
    p.add_ball(xi, 1.0);
    let report = solve_default(&p);
    assert_eq!(report.status, SolveStatus::Optimal);
    assert!(report.max_violation <= 1e-8);
}

#[test]
fn warm_start_skips_phase_one_and_agrees() {
    let mut p = ConicProgram::new();
    let xi = p.add_block("xi", 2);
    p.set_objective(xi, DVector::from_vec(vec![1.0, 0.3]));
    p.add_ball(xi, 1.0);
    let reduced = eliminate_equalities(&p).unwrap();
    let cold = solve(&reduced, Tolerances::default(), 50_000, None).unwrap();
    let start = DVector::from_vec(vec![0.2, 0.1]);
    let warm = solve(&reduced, Tolerances::default(), 50_000, Some(&start)).unwrap();
    assert!((cold.objective - warm.objective).abs() < 1e-7);
    assert!(warm.iterations <= cold.iterations);
}
