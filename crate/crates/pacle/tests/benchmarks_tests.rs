//! Construction identities of the generated families: the hypercube
//! bandit's gap scale, schedule, feature norms, KL divergences, value-gap
//! display, Hamming reduction and uncertainty sweep; the chain fixtures;
//! and the coverage-gap bandit's shape.

mod common;

use nalgebra::DVector;
use pacle::benchmarks::{
    coverage_gap_instance, gaussian_kl, hamming_estimate, kl_adjacent_closed_form,
    kl_adjacent_per_sample, make_chain_mdp, make_lower_bound_instance, uncertainty_upper_check,
    value_gap, value_gap_from_means, ChainVariant, LowerBoundInstance,
};
use pacle::mdp::{
    evaluate_policy_exact, optimal_values, DeterministicPolicy, FeatureSet, Policy,
};

#[test]
fn smallest_instance_arithmetic() {
    // d = 1, H = 1, n = 8: δ_gap = 1/4 and the probes {+1, 0} are played
    // four times each.
    let (instance, dataset) = make_lower_bound_instance(1, 1, 8, vec![vec![1]], 3).unwrap();
    assert!((instance.gap_scale - 0.25).abs() < 1e-15);
    assert_eq!(dataset.len(), 8);
    let mut plus = 0;
    let mut zero = 0;
    for r in dataset.records() {
        match instance.actions[r.action].as_slice() {
            [1] => plus += 1,
            [0] => zero += 1,
            other => panic!("unexpected probe {other:?}"),
        }
    }
    assert_eq!((plus, zero), (4, 4));
}

#[test]
fn validation_rejects_bad_sizes() {
    // below 2d³H³
    assert!(make_lower_bound_instance(2, 2, 60, vec![vec![1, 1], vec![1, 1]], 0).is_err());
    // not divisible by H(d+1)
    assert!(make_lower_bound_instance(2, 2, 190, vec![vec![1, 1], vec![1, 1]], 0).is_err());
    // u entries not ±1
    assert!(make_lower_bound_instance(1, 1, 8, vec![vec![0]], 0).is_err());
    // dimension cap
    assert!(make_lower_bound_instance(11, 1, 1 << 30, vec![vec![1; 11]], 0).is_err());
}

#[test]
fn features_stay_in_the_unit_ball() {
    let mut rng = pacle::data::seeded_rng(5);
    for _ in 0..1000 {
        let d = 1 + rand::Rng::gen_range(&mut rng, 0..6usize);
        let a: Vec<i8> = (0..d)
            .map(|_| rand::Rng::gen_range(&mut rng, -1i8..=1))
            .collect();
        let phi = LowerBoundInstance::features_of(d, &a);
        assert!(phi.norm() <= 1.0 + 1e-12);
        assert_eq!(phi.len(), d + 1);
        assert!((phi[d] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }
}

#[test]
fn flipping_u_only_moves_reward_means() {
    let u = vec![vec![1, -1], vec![-1, 1]];
    let mut u_flip = u.clone();
    u_flip[0][0] = -1;
    let (a, _) = make_lower_bound_instance(2, 2, 192, u, 0).unwrap();
    let (b, _) = make_lower_bound_instance(2, 2, 192, u_flip, 0).unwrap();
    for h in 0..2 {
        for (ea, eb) in a.mdp.actions(h, 0).iter().zip(b.mdp.actions(h, 0)) {
            assert_eq!(ea.features, eb.features);
            assert_eq!(ea.transition, eb.transition);
            if h == 0 && a.actions[ea.action][0] != 0 {
                // the flipped coordinate changes the mean for actions
                // touching it
                assert!((ea.reward_mean - eb.reward_mean).abs() > 0.0);
            }
        }
    }
}

#[test]
fn kl_between_adjacent_instances_matches_the_closed_form() {
    for (d, h, n) in [(1usize, 1usize, 8usize), (2, 2, 192), (3, 1, 144)] {
        let u = vec![vec![1; d]; h];
        let (instance, _) = make_lower_bound_instance(d, h, n, u, 0).unwrap();
        let closed = kl_adjacent_closed_form(&instance);
        let per_sample = kl_adjacent_per_sample(&instance);
        assert!(
            (closed - per_sample).abs() < 1e-10,
            "d={d} H={h}: {closed} vs {per_sample}"
        );
        // and the closed form is n_sub·δ²/d² by direct arithmetic
        let direct = instance.n_sub as f64 * instance.gap_scale.powi(2) / (d * d) as f64;
        assert!((closed - direct).abs() < 1e-15);
    }
}

#[test]
fn per_sample_kl_uses_unit_variance_gaussians() {
    assert!((gaussian_kl(0.5, -0.5) - 0.5).abs() < 1e-15);
    assert_eq!(gaussian_kl(0.3, 0.3), 0.0);
}

#[test]
fn value_gap_closed_forms() {
    let u = vec![vec![1, -1, 1], vec![-1, -1, 1]];
    let (instance, _) = make_lower_bound_instance(3, 2, 3456, u.clone(), 0).unwrap();
    let d = 3.0f64;

    // playing u_h deterministically: zero gap
    let choice: Vec<Vec<usize>> = (0..2)
        .map(|h| {
            let want: Vec<i8> = u[h].clone();
            let j = instance
                .mdp
                .actions(h, 0)
                .iter()
                .position(|e| instance.actions[e.action] == want)
                .unwrap();
            vec![j]
        })
        .collect();
    let pi = DeterministicPolicy { choice };
    assert!(value_gap(&instance, &pi).abs() < 1e-12);

    // playing −u_h deterministically: gap = δ·H·√(2d)
    let choice: Vec<Vec<usize>> = (0..2)
        .map(|h| {
            let want: Vec<i8> = u[h].iter().map(|x| -x).collect();
            let j = instance
                .mdp
                .actions(h, 0)
                .iter()
                .position(|e| instance.actions[e.action] == want)
                .unwrap();
            vec![j]
        })
        .collect();
    let pi = DeterministicPolicy { choice };
    let expect = instance.gap_scale * 2.0 * (2.0 * d).sqrt();
    assert!((value_gap(&instance, &pi) - expect).abs() < 1e-12);

    // E[a] = 0 (means given directly): gap = (δ/√(2d))·d·H
    let means = vec![vec![0.0; 3]; 2];
    let expect = instance.gap_scale / (2.0 * d).sqrt() * d * 2.0;
    assert!((value_gap_from_means(&instance, &means) - expect).abs() < 1e-15);
}

#[test]
fn value_gap_equals_dp_difference_exactly() {
    let u = vec![vec![1, -1], vec![-1, 1], vec![1, 1]];
    let (instance, _) = make_lower_bound_instance(2, 3, 3888, u, 0).unwrap();
    let (v_star, _) = optimal_values(&instance.mdp).unwrap();
    assert!((v_star.v[0][0] - instance.optimal_value()).abs() < 1e-12);
    for seed in 0..20u64 {
        let pi = common::random_softmax(&instance.mdp, 3.0, seed);
        let v_pi = evaluate_policy_exact(&instance.mdp, &pi).unwrap();
        let gap_dp = v_star.v[0][0] - v_pi.v[0][0];
        let gap_display = value_gap(&instance, &pi);
        assert!(
            (gap_dp - gap_display).abs() < 1e-10,
            "seed {seed}: {gap_dp} vs {gap_display}"
        );
    }
}

#[test]
fn hamming_reduction_bounds_the_gap_from_below() {
    let u = vec![vec![1, -1], vec![-1, 1]];
    let (instance, _) = make_lower_bound_instance(2, 2, 192, u, 0).unwrap();
    let scale = instance.gap_scale / (2.0f64 * 2.0).sqrt();
    for seed in 0..50u64 {
        let pi = common::random_softmax(&instance.mdp, 4.0, seed);
        let means = instance.expected_actions(&pi);
        let gap = value_gap_from_means(&instance, &means);
        let hamming = hamming_estimate(&instance, &means);
        assert!(
            gap + 1e-10 >= scale * hamming as f64,
            "seed {seed}: gap {gap} hamming {hamming}"
        );
    }
    // sign ties break to +1
    let means = vec![vec![0.0, 0.0]; 2];
    assert_eq!(hamming_estimate(&instance, &means), 2, "the two −1 entries disagree");
}

#[test]
fn uncertainty_sweep_stays_under_the_stated_bound_and_scales() {
    let u = vec![vec![1, -1], vec![-1, 1]];
    let (instance, dataset) = make_lower_bound_instance(2, 2, 192, u.clone(), 11).unwrap();
    let sweep = uncertainty_upper_check(&instance, &dataset, 1000, 31).unwrap();
    assert!(
        sweep.max_uncertainty <= sweep.bound,
        "max U {} bound {}",
        sweep.max_uncertainty,
        sweep.bound
    );
    assert!(sweep.policies_swept >= 1000 + (1 << 2));

    // doubling n shrinks the maximum by √2 within 10%
    let (instance2, dataset2) = make_lower_bound_instance(2, 2, 384, u, 12).unwrap();
    let sweep2 = uncertainty_upper_check(&instance2, &dataset2, 1000, 32).unwrap();
    let ratio = sweep.max_uncertainty / sweep2.max_uncertainty;
    assert!(
        (ratio - 2.0f64.sqrt()).abs() / 2.0f64.sqrt() < 0.10,
        "ratio {ratio}"
    );

    // zero pessimism zeroes the functional
    let covs = pacle::data::build_covariances(&dataset, &instance.mdp, 1.0).unwrap();
    let u0 = pacle::analysis::uncertainty(
        &instance.mdp,
        &pacle::mdp::UniformPolicy,
        &[0.0, 0.0],
        &covs,
    )
    .unwrap();
    assert_eq!(u0, 0.0);
}

#[test]
fn chain_reaches_terminal_rewards_and_masks_actions() {
    for variant in [ChainVariant::A, ChainVariant::B] {
        let mdp = make_chain_mdp(3, variant).unwrap();
        assert_eq!(mdp.horizon(), 4);
        // stage 1 has the origin only; both actions there
        assert_eq!(mdp.n_states(0), 1);
        assert_eq!(mdp.actions(0, 0).len(), 2);
        // off the origin a single action
        for h in 1..4 {
            assert_eq!(mdp.n_states(h), 2);
            for s in 0..2 {
                assert_eq!(mdp.actions(h, s).len(), 1);
            }
        }
        let (v_star, greedy) = optimal_values(&mdp).unwrap();
        assert!((v_star.v[0][0] - 1.0).abs() < 1e-12);
        // the greedy policy goes right from the origin
        assert_eq!(mdp.actions(0, 0)[greedy.choice[0][0]].action, 1);
        // always-left reaches −1
        let choice = (0..4)
            .map(|h| {
                (0..mdp.n_states(h))
                    .map(|s| {
                        mdp.actions(h, s)
                            .iter()
                            .position(|e| e.action == 0)
                            .unwrap_or(0)
                    })
                    .collect()
            })
            .collect();
        let left = DeterministicPolicy { choice };
        let v = evaluate_policy_exact(&mdp, &left).unwrap();
        assert!((v.initial(&mdp) + 1.0).abs() < 1e-12);
    }
}

#[test]
fn chain_b_has_stage_varying_dimensions() {
    let mdp = make_chain_mdp(2, ChainVariant::B).unwrap();
    assert_eq!(mdp.dim(0), 1);
    assert_eq!(mdp.dim(1), 2);
    let phi_right = &mdp.actions(1, 1)[0].features;
    assert_eq!(phi_right, &DVector::from_vec(vec![1.0, 0.0]));
    let phi_left = &mdp.actions(1, 0)[0].features;
    assert_eq!(phi_left, &DVector::from_vec(vec![0.0, 1.0]));
}

#[test]
fn single_action_softmax_degenerates_to_deterministic() {
    let mdp = make_chain_mdp(2, ChainVariant::A).unwrap();
    let pi = common::random_softmax(&mdp, 3.0, 8);
    for h in 1..mdp.horizon() {
        for s in 0..mdp.n_states(h) {
            let p = pi.probs(&mdp, h, s);
            assert_eq!(p, vec![1.0]);
        }
    }
}

#[test]
fn coverage_gap_shape() {
    let mdp = coverage_gap_instance().unwrap();
    assert_eq!(mdp.horizon(), 1);
    let entries = mdp.actions(0, 0);
    assert_eq!(entries.len(), 2);
    assert!(entries[0].reward_mean > entries[1].reward_mean);
    assert!((entries[0].features.dot(&entries[1].features)).abs() < 1e-15);
}
