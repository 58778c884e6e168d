//! Shared test oracles, independent of the library's computation paths:
//! exhaustive trajectory enumeration, direct Monte Carlo sampling, and a
//! refining grid search for small cone programs.

#![allow(dead_code)]

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pacle::mdp::{Policy, RewardNoise, TabularLinearMdp};

/// Exhaustive policy evaluation: sums reward over every trajectory
/// weighted by its probability, starting from `(h, s)` and optionally a
/// forced first action. Exponential in the horizon; for tiny instances.
pub fn brute_force_q(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    h: usize,
    s: usize,
    forced_action: usize,
) -> f64 {
    let e = &mdp.actions(h, s)[forced_action];
    let mut total = e.reward_mean;
    if h + 1 < mdp.horizon() {
        for (sp, &p) in e.transition.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            total += p * brute_force_v(mdp, pi, h + 1, sp);
        }
    }
    total
}

pub fn brute_force_v(mdp: &TabularLinearMdp, pi: &dyn Policy, h: usize, s: usize) -> f64 {
    let probs = pi.probs(mdp, h, s);
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if p == 0.0 {
                0.0
            } else {
                p * brute_force_q(mdp, pi, h, s, j)
            }
        })
        .sum()
}

/// Monte Carlo estimate of the initial value with its standard error,
/// sampled directly from the tables (not through the library's rollout).
pub fn monte_carlo_value(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut s = mdp.initial_state();
        let mut ret = 0.0;
        for h in 0..mdp.horizon() {
            let probs = pi.probs(mdp, h, s);
            let j = draw(&probs, &mut rng);
            let e = &mdp.actions(h, s)[j];
            ret += match mdp.reward_noise() {
                RewardNoise::None => e.reward_mean,
                RewardNoise::Gaussian => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    e.reward_mean + z
                }
            };
            s = draw(&e.transition, &mut rng);
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of the stage-h expected feature vector.
pub fn monte_carlo_features(
    mdp: &TabularLinearMdp,
    pi: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Vec<(DVector<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: Vec<DVector<f64>> = (0..mdp.horizon())
        .map(|h| DVector::zeros(mdp.stage(h).dim))
        .collect();
    let mut acc_sq: Vec<f64> = vec![0.0; mdp.horizon()];
    for _ in 0..episodes {
        let mut s = mdp.initial_state();
        for h in 0..mdp.horizon() {
            let probs = pi.probs(mdp, h, s);
            let j = draw(&probs, &mut rng);
            let e = &mdp.actions(h, s)[j];
            acc[h] += &e.features;
            acc_sq[h] += e.features.norm_squared();
            s = draw(&e.transition, &mut rng);
        }
    }
    let n = episodes as f64;
    acc.into_iter()
        .zip(acc_sq)
        .map(|(v, sq)| {
            let mean = v.scale(1.0 / n);
            let var = (sq / n - mean.norm_squared()).max(0.0);
            (mean, (var / n).sqrt())
        })
        .collect()
}

fn draw<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
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

/// Refining grid search over a box: minimizes `objective` over feasible
/// points, shrinking the box around the best point each round. The
/// feasibility and objective closures come from the test's own statement
/// of the problem, independent of the solver.
pub fn grid_search_min(
    center: &[f64],
    half_width: f64,
    rounds: usize,
    points_per_axis: usize,
    shrink: f64,
    feasible: &dyn Fn(&[f64]) -> bool,
    objective: &dyn Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let dim = center.len();
    let mut best_x = center.to_vec();
    let mut best = if feasible(center) {
        objective(center)
    } else {
        f64::INFINITY
    };
    let mut width = half_width;
    let mut mid = center.to_vec();
    for _ in 0..rounds {
        let mut idx = vec![0usize; dim];
        loop {
            let x: Vec<f64> = (0..dim)
                .map(|i| {
                    mid[i] - width
                        + 2.0 * width * idx[i] as f64 / (points_per_axis - 1) as f64
                })
                .collect();
            if feasible(&x) {
                let v = objective(&x);
                if v < best {
                    best = v;
                    best_x = x;
                }
            }
            // odometer increment
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < points_per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == dim {
                    break;
                }
            }
            if k == dim {
                break;
            }
        }
        mid = best_x.clone();
        width *= shrink;
    }
    (best_x, best)
}

/// Random softmax policy on the per-stage feature dimensions.
pub fn random_softmax(mdp: &TabularLinearMdp, radius: f64, seed: u64) -> pacle::mdp::SoftmaxPolicy {
    pacle::experiment::random_softmax(mdp, radius, seed)
}
