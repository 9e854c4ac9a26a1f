//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Posterior moments of the comparison model by plain rejection sampling:
/// draw every interest from the prior, draw each latent difference with
/// variance `2 beta^2`, and keep draws in which every winner came out ahead.
pub struct RejectionEstimate {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub accepted: usize,
    pub proposed: u64,
}

pub fn rejection_oracle(
    n_images: usize,
    pairs: &[(usize, usize)],
    prior_mean: f64,
    prior_sigma: f64,
    beta: f64,
    target_accepted: usize,
    seed: u64,
) -> RejectionEstimate {
    const CHUNKS: usize = 64;
    let per_chunk = target_accepted.div_ceil(CHUNKS);
    let diff_sd = (2.0f64).sqrt() * beta;
    let partials: Vec<(Vec<f64>, Vec<f64>, usize, u64)> = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let mut w = vec![0.0; n_images];
            let mut sum = vec![0.0; n_images];
            let mut sum_sq = vec![0.0; n_images];
            let mut accepted = 0usize;
            let mut proposed = 0u64;
            while accepted < per_chunk {
                proposed += 1;
                for x in w.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = prior_mean + prior_sigma * z;
                }
                let ok = pairs.iter().all(|&(a, b)| {
                    let z: f64 = rng.sample(StandardNormal);
                    w[a] - w[b] + diff_sd * z > 0.0
                });
                if ok {
                    accepted += 1;
                    for k in 0..n_images {
                        sum[k] += w[k];
                        sum_sq[k] += w[k] * w[k];
                    }
                }
            }
            (sum, sum_sq, accepted, proposed)
        })
        .collect();

    let mut sum = vec![0.0; n_images];
    let mut sum_sq = vec![0.0; n_images];
    let mut accepted = 0;
    let mut proposed = 0;
    for (s, q, a, p) in partials {
        for k in 0..n_images {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
        accepted += a;
        proposed += p;
    }
    let n = accepted as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let variances = sum_sq
        .iter()
        .zip(&means)
        .map(|(q, m)| (q / n - m * m) * n / (n - 1.0))
        .collect();
    RejectionEstimate {
        means,
        variances,
        accepted,
        proposed,
    }
}

/// A small random comparison graph whose outcomes are drawn from the model
/// itself, which keeps the rejection sampler's acceptance rate reasonable.
pub fn random_comparison_instance(
    rng: &mut ChaCha8Rng,
    max_images: usize,
    max_comparisons: usize,
    prior_sigma: f64,
    beta: f64,
) -> (usize, Vec<(usize, usize)>) {
    let n = rng.random_range(2..=max_images);
    let m = rng.random_range(1..=max_comparisons);
    let w: Vec<f64> = (0..n)
        .map(|_| prior_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let pairs = (0..m)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let z: f64 = rng.sample(StandardNormal);
            if w[a] - w[b] + (2.0f64).sqrt() * beta * z > 0.0 {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    (n, pairs)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn rbf_cosine(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    (-(1.0 - cosine(a, b)) / (2.0 * length_scale * length_scale)).exp()
}

/// GP posterior by explicit inversion of `K + diag(noise) + jitter I`.
pub fn dense_gp_oracle(
    train: &[Vec<f64>],
    targets: &[f64],
    noise: &[f64],
    length_scale: f64,
    jitter: f64,
    queries: &[Vec<f64>],
) -> Vec<(f64, f64)> {
    let n = train.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let mut v = rbf_cosine(&train[i], &train[j], length_scale);
        if i == j {
            v += noise[i] + jitter;
        }
        v
    });
    let inv = a.try_inverse().expect("oracle matrix is invertible");
    let y = DVector::from_column_slice(targets);
    let weights = &inv * y;
    queries
        .iter()
        .map(|q| {
            let k = DVector::from_iterator(n, train.iter().map(|t| rbf_cosine(q, t, length_scale)));
            let mean = k.dot(&weights);
            let var = 1.0 - k.dot(&(&inv * &k));
            (mean, var)
        })
        .collect()
}

/// `(v, w)` of the standard normal truncated to `x > -t`, by composite
/// Simpson integration of the density ratio relative to the cut point.
pub fn truncation_by_quadrature(t: f64) -> (f64, f64) {
    let a = -t;
    let upper = 40.0 + a.max(0.0);
    let steps = 400_000usize;
    let h = upper / steps as f64;
    let weight = |k: usize| -> f64 {
        if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    // Density of y = x - a, up to a constant: exp(-a y - y^2 / 2).
    let g = |y: f64| (-a * y - 0.5 * y * y).exp();
    let (mut z, mut m1) = (0.0, 0.0);
    for k in 0..=steps {
        let y = k as f64 * h;
        let f = weight(k) * g(y);
        z += f;
        m1 += f * y;
    }
    let mean_y = m1 / z;
    let mut m2 = 0.0;
    for k in 0..=steps {
        let y = k as f64 * h;
        m2 += weight(k) * g(y) * (y - mean_y) * (y - mean_y);
    }
    let var_y = m2 / z;
    (a + mean_y, 1.0 - var_y)
}

/// The greedy spacing rule written out directly: walk scores from best to
/// worst (earliest index first on ties), keep a candidate if it is at least
/// `d` away from everything kept so far, stop at `n`.
pub fn greedy_spacing_oracle(scores: &[f64], n: usize, d: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() == n {
            break;
        }
        if kept.iter().all(|&k| k.abs_diff(i) >= d) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Member minimizing the summed cosine distance to the rest of its group,
/// by exhaustive search; earliest index on ties.
pub fn exhaustive_medoid(features: &[Vec<f64>], members: &[usize]) -> usize {
    let cost = |m: usize| -> f64 {
        members
            .iter()
            .map(|&o| (1.0 - cosine(&features[m], &features[o])).clamp(0.0, 2.0))
            .sum()
    };
    let mut best = members[0];
    let mut best_cost = cost(best);
    for &m in &members[1..] {
        let c = cost(m);
        if c < best_cost {
            best = m;
            best_cost = c;
        }
    }
    best
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Best pair of medoids by exhaustive search: every point is charged its
/// cosine distance to the nearer medoid. Returned in ascending order.
pub fn exhaustive_two_medoids(features: &[Vec<f64>]) -> (usize, usize) {
    let n = features.len();
    let d = |i: usize, j: usize| (1.0 - cosine(&features[i], &features[j])).clamp(0.0, 2.0);
    let mut best = (0, 1);
    let mut best_cost = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            let cost: f64 = (0..n).map(|k| d(a, k).min(d(b, k))).sum();
            if cost < best_cost {
                best_cost = cost;
                best = (a, b);
            }
        }
    }
    best
}

/// Points scattered around a unit center with per-coordinate Gaussian spread.
pub fn blob(rng: &mut ChaCha8Rng, center: &[f64], spread: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            center
                .iter()
                .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}
