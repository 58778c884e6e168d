//! Dataset collection plans, covariance identities, PSD monotonicity,
//! and the bit-exact file round trip.

mod common;

use nalgebra::DVector;
use pacle::benchmarks::{random_instance, random_instance_with};
use pacle::data::{
    build_covariances, collect_dataset, read_jsonl, write_jsonl, CollectionPlan,
    CumulativeCovariance, GenerativeProbe, OfflineDataset, SampleRecord,
};
use pacle::mdp::{FeatureSet, RewardNoise, UniformPolicy};
use proptest::prelude::*;

#[test]
fn empty_stage_covariance_is_identity() {
    let mdp = random_instance(2, 2, 2, &[2, 3], 1).unwrap();
    let dataset = OfflineDataset::empty(2);
    let covs = build_covariances(&dataset, &mdp, 1.0).unwrap();
    for (h, cov) in covs.iter().enumerate() {
        assert_eq!(cov.dim(), mdp.dim(h));
        let m = cov.matrix();
        for i in 0..cov.dim() {
            for j in 0..cov.dim() {
                assert_eq!(m[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn two_e1_samples_give_diag_3_1() {
    let v1 = DVector::from_vec(vec![1.0, 0.0]);
    let cov = CumulativeCovariance::from_features(2, 1.0, [&v1, &v1]).unwrap();
    let m = cov.matrix();
    assert_eq!(m[(0, 0)], 3.0);
    assert_eq!(m[(1, 1)], 1.0);
    assert_eq!(m[(0, 1)], 0.0);
    assert_eq!(m[(1, 0)], 0.0);
}

#[test]
fn covariance_trace_identity_and_eigen_floor() {
    // 500 random unit-norm features: trace = λ·d + Σ‖φ‖², eigmin ≥ λ.
    let mut rng = pacle::data::seeded_rng(44);
    let d = 4;
    let lambda = 0.7;
    let feats: Vec<DVector<f64>> = (0..500)
        .map(|_| {
            let v = DVector::from_fn(d, |_, _| rand::Rng::gen::<f64>(&mut rng) - 0.5);
            let n = v.norm();
            v.scale(1.0 / n.max(1e-12))
        })
        .collect();
    let total_sq: f64 = feats.iter().map(|f| f.norm_squared()).sum();
    let cov = CumulativeCovariance::from_features(d, lambda, feats.iter()).unwrap();
    let trace: f64 = (0..d).map(|i| cov.matrix()[(i, i)]).sum();
    assert!((trace - (lambda * d as f64 + total_sq)).abs() < 1e-9);
    let eig = nalgebra::SymmetricEigen::new(cov.matrix().clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min >= lambda - 1e-10);
}

#[test]
fn covariance_symmetry() {
    let mut rng = pacle::data::seeded_rng(9);
    let feats: Vec<DVector<f64>> = (0..40)
        .map(|_| DVector::from_fn(3, |_, _| rand::Rng::gen::<f64>(&mut rng) - 0.5).scale(0.5))
        .collect();
    let cov = CumulativeCovariance::from_features(3, 2.0, feats.iter()).unwrap();
    let m = cov.matrix();
    for i in 0..3 {
        for j in 0..3 {
            assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-12);
        }
    }
}

#[test]
fn appending_samples_is_psd_monotone() {
    // ‖v‖_{Σ⁻¹} never increases as samples are appended.
    let mut rng = pacle::data::seeded_rng(1212);
    let d = 3;
    let draws: Vec<DVector<f64>> = (0..60)
        .map(|_| DVector::from_fn(d, |_, _| rand::Rng::gen::<f64>(&mut rng) - 0.5))
        .collect();
    let probes: Vec<DVector<f64>> = (0..10)
        .map(|_| DVector::from_fn(d, |_, _| rand::Rng::gen::<f64>(&mut rng) - 0.5))
        .collect();
    let mut previous: Option<Vec<f64>> = None;
    for k in [0usize, 5, 20, 60] {
        let cov = CumulativeCovariance::from_features(d, 1.0, draws.iter().take(k)).unwrap();
        let norms: Vec<f64> = probes.iter().map(|v| cov.sigma_inv_norm(v)).collect();
        if let Some(prev) = &previous {
            for (now, before) in norms.iter().zip(prev) {
                assert!(*now <= before + 1e-12);
            }
        }
        previous = Some(norms);
    }
}

#[test]
fn behavior_plan_with_no_noise_records_exact_means() {
    let mdp = random_instance(3, 2, 3, &[2, 2, 2], 3).unwrap();
    let dataset = collect_dataset(
        &mdp,
        CollectionPlan::Behavior {
            policy: Box::new(UniformPolicy),
            episodes: 20,
        },
        5,
    )
    .unwrap();
    assert_eq!(dataset.len(), 60);
    for r in dataset.records() {
        let e = mdp.entry(r.stage, r.state, r.action).unwrap();
        assert_eq!(r.reward, e.reward_mean);
    }
    // stage index partitions the records
    let total: usize = (0..3).map(|h| dataset.stage_len(h)).sum();
    assert_eq!(total, dataset.len());
}

#[test]
fn generative_plan_plays_the_requested_schedule() {
    let mdp = random_instance(2, 2, 2, &[2, 2], 13).unwrap();
    let probes = vec![
        GenerativeProbe {
            stage: 0,
            state: 1,
            action: 0,
            count: 4,
        },
        GenerativeProbe {
            stage: 1,
            state: 0,
            action: 1,
            count: 2,
        },
    ];
    let dataset = collect_dataset(&mdp, CollectionPlan::Generative { probes }, 1).unwrap();
    assert_eq!(dataset.stage_len(0), 4);
    assert_eq!(dataset.stage_len(1), 2);
    for r in dataset.stage_records(0) {
        assert_eq!((r.state, r.action), (1, 0));
    }
}

#[test]
fn generative_plan_rejects_missing_actions() {
    let mdp = random_instance(2, 2, 2, &[2, 2], 13).unwrap();
    let probes = vec![GenerativeProbe {
        stage: 0,
        state: 0,
        action: 9,
        count: 1,
    }];
    assert!(collect_dataset(&mdp, CollectionPlan::Generative { probes }, 1).is_err());
}

#[test]
fn adaptive_adversary_sees_only_the_prefix() {
    let mdp = random_instance_with(2, 2, 2, &[2, 2], 0.5, RewardNoise::Gaussian, 23).unwrap();
    // play the action whose observed mean reward so far is larger at
    // stage 1 (state 0); prefix lengths observed along the way must match.
    let mut seen = Vec::new();
    let adversary = move |prefix: &[SampleRecord]| {
        seen.push(prefix.len());
        let mean_a: Vec<f64> = (0..2)
            .map(|a| {
                let rs: Vec<f64> = prefix
                    .iter()
                    .filter(|r| r.stage == 0 && r.action == a)
                    .map(|r| r.reward)
                    .collect();
                if rs.is_empty() {
                    0.0
                } else {
                    rs.iter().sum::<f64>() / rs.len() as f64
                }
            })
            .collect();
        (0, 0, if mean_a[0] >= mean_a[1] { 0 } else { 1 })
    };
    let dataset = collect_dataset(
        &mdp,
        CollectionPlan::Adaptive {
            steps: 25,
            adversary: Box::new(adversary),
        },
        77,
    )
    .unwrap();
    assert_eq!(dataset.len(), 25);
    for (i, r) in dataset.records().iter().enumerate() {
        assert_eq!(r.index, i);
        assert!(r.provenance.starts_with("adversary:"));
    }
}

#[test]
fn collection_is_deterministic_per_seed() {
    let mdp = random_instance_with(3, 2, 3, &[2, 2, 2], 0.5, RewardNoise::Gaussian, 31).unwrap();
    let plan = || CollectionPlan::Behavior {
        policy: Box::new(UniformPolicy),
        episodes: 30,
    };
    let a = collect_dataset(&mdp, plan(), 99).unwrap();
    let b = collect_dataset(&mdp, plan(), 99).unwrap();
    assert_eq!(write_jsonl(&a), write_jsonl(&b), "bit-identical files");
    let c = collect_dataset(&mdp, plan(), 100).unwrap();
    assert_ne!(write_jsonl(&a), write_jsonl(&c));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn dataset_roundtrip_is_bit_exact(seed in 0u64..1000, episodes in 1usize..20) {
        let mdp = random_instance_with(3, 2, 2, &[2, 2], 0.5, RewardNoise::Gaussian, 7).unwrap();
        let dataset = collect_dataset(
            &mdp,
            CollectionPlan::Behavior { policy: Box::new(UniformPolicy), episodes },
            seed,
        ).unwrap();
        let text = write_jsonl(&dataset);
        let back = read_jsonl(&text).unwrap();
        prop_assert_eq!(&dataset, &back);
        prop_assert_eq!(write_jsonl(&back), text);
    }
}
