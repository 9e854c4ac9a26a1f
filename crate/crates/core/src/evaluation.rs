//! Comparison-prediction experiments on synthetic data.
//!
//! A dataset is a clustered set of feature vectors with a smooth hidden
//! interest function, plus comparisons of uniformly random pairs whose
//! outcomes follow `sign(w_i - w_j + noise)`. Comparisons are split into
//! train and test; each method is fit on a growing prefix of the training
//! comparisons and scored on how often it orders the test pairs correctly.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use chrono::{DateTime, TimeDelta, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureStore, FeatureVector, KernelConfig};
use crate::gp::GpModel;
use crate::ranker::{infer_ep_indexed, Comparison, EpOptions, InterestPosterior, PriorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Shuffles with `cfg.seed` and cuts off `round(fraction * N)` training
/// comparisons. The training half keeps the shuffled order, so prefixes of it
/// are the nested budgets used by [`accuracy_trace`].
pub fn split_comparisons(
    all: &[Comparison],
    cfg: &SplitConfig,
) -> Result<(Vec<Comparison>, Vec<Comparison>)> {
    cfg.validate()?;
    if all.is_empty() {
        return Err(Error::invalid("cannot split an empty comparison list"));
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = (cfg.train_fraction * all.len() as f64).round() as usize;
    let (train, test) = order.split_at(n_train.min(all.len()));
    Ok((
        train.iter().map(|&k| all[k].clone()).collect(),
        test.iter().map(|&k| all[k].clone()).collect(),
    ))
}

/// Fraction of `test` whose winner outscores its loser. Exact ties count as wrong.
pub fn prediction_accuracy(scores: &HashMap<String, f64>, test: &[Comparison]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("accuracy of an empty test set is undefined"));
    }
    let score = |id: &str| {
        scores
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no score for image {id:?}")))
    };
    let mut correct = 0usize;
    for c in test {
        if score(&c.winner_id)? > score(&c.loser_id)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub features: FeatureStore<f64>,
    pub true_interest: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn true_scores(&self) -> HashMap<String, f64> {
        self.features
            .ids()
            .into_iter()
            .zip(self.true_interest.iter().copied())
            .collect()
    }
}

/// Images per cluster center in synthetic datasets.
const IMAGES_PER_CLUSTER: usize = 25;
/// Within-cluster spread of feature directions relative to the unit center.
const CLUSTER_SPREAD: f64 = 0.6;
/// Standard deviation of the hidden interest across images.
const INTEREST_SCALE: f64 = 1.5;

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn epoch() -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp(1_500_000_000, 0).expect("valid timestamp")
}

/// Builds a reproducible synthetic dataset.
///
/// Features sit around `n_images / 25` (at least two) random unit cluster
/// centers; the hidden interest is a fixed random linear functional of the
/// normalized feature vector, scaled to a standard deviation of about 1.5.
pub fn synthesize_dataset(
    n_images: usize,
    dim: usize,
    n_comparisons: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if n_images < 2 {
        return Err(Error::invalid("need at least two images"));
    }
    if dim < 2 {
        return Err(Error::invalid("need feature dimension of at least two"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid("noise_std must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_clusters = (n_images / IMAGES_PER_CLUSTER).clamp(2, n_images);
    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| unit_gaussian(&mut rng, dim))
        .collect();
    let direction = unit_gaussian(&mut rng, dim);
    let scale = INTEREST_SCALE * (dim as f64).sqrt();

    let mut records = Vec::with_capacity(n_images);
    let mut true_interest = Vec::with_capacity(n_images);
    for k in 0..n_images {
        let center = &centers[rng.random_range(0..n_clusters)];
        let offset = unit_gaussian(&mut rng, dim);
        let features: Vec<f64> = center
            .iter()
            .zip(&offset)
            .map(|(c, o)| c + CLUSTER_SPREAD * o)
            .collect();
        let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
        let projection: f64 = features.iter().zip(&direction).map(|(x, u)| x * u).sum();
        true_interest.push(scale * projection / norm);
        records.push(FeatureVector {
            image_id: format!("img{k:05}"),
            image_path: format!("img{k:05}.png"),
            features,
        });
    }
    let features = FeatureStore::from_records(records)?;

    let ids = features.ids();
    let mut comparisons = Vec::with_capacity(n_comparisons);
    for k in 0..n_comparisons {
        let i = rng.random_range(0..n_images);
        let mut j = rng.random_range(0..n_images - 1);
        if j >= i {
            j += 1;
        }
        let noise: f64 = rng.sample(StandardNormal);
        let (winner, loser) = if true_interest[i] - true_interest[j] + noise_std * noise >= 0.0 {
            (i, j)
        } else {
            (j, i)
        };
        comparisons.push(Comparison::at(
            ids[winner].clone(),
            ids[loser].clone(),
            "synthetic",
            epoch() + TimeDelta::seconds(k as i64),
        )?);
    }

    Ok(SyntheticDataset {
        features,
        true_interest,
        comparisons,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// EP marginal means used directly.
    #[serde(rename = "TS")]
    TrueSkill,
    /// EP means smoothed by the feature-space GP.
    #[serde(rename = "GP-CNN")]
    GpCnn,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::TrueSkill, Method::GpCnn];

    pub fn label(self) -> &'static str {
        match self {
            Method::TrueSkill => "TS",
            Method::GpCnn => "GP-CNN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Model settings shared by all budgets of a trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub prior: PriorConfig<f64>,
    pub ep: EpOptions<f64>,
    pub kernel: KernelConfig<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTrace {
    pub method: Method,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTrace {
    pub seed: u64,
    pub budgets: Vec<usize>,
    pub series: Vec<MethodTrace>,
}

impl AccuracyTrace {
    pub fn accuracies(&self, method: Method) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|s| s.method == method)
            .map(|s| s.accuracies.as_slice())
    }

    /// Writes `method,budget,accuracy,seed` rows, without a header.
    pub fn write_csv_rows(&self, out: &mut impl Write) -> std::io::Result<()> {
        for series in &self.series {
            for (budget, accuracy) in self.budgets.iter().zip(&series.accuracies) {
                writeln!(
                    out,
                    "{},{},{},{}",
                    series.method, budget, accuracy, self.seed
                )?;
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "method,budget,accuracy,seed";

/// EP posterior over every image of `store` from index pairs.
pub fn fit_posterior(
    store: &FeatureStore<f64>,
    pairs: &[(usize, usize)],
    options: &TraceOptions,
) -> Result<InterestPosterior<f64>> {
    let fit = infer_ep_indexed(pairs, store.len(), &options.prior, &options.ep)?;
    Ok(InterestPosterior {
        ids: store.ids(),
        means: fit.means,
        variances: fit.variances,
        counts: fit.counts,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Scores every image of `store` with one method, given the EP posterior.
pub fn method_scores(
    store: &FeatureStore<f64>,
    posterior: &InterestPosterior<f64>,
    method: Method,
    options: &TraceOptions,
) -> Result<HashMap<String, f64>> {
    match method {
        Method::TrueSkill => Ok(posterior.score_map()),
        Method::GpCnn => {
            let model = GpModel::fit(store, &posterior.observed(), &options.kernel)?;
            Ok(model.predict_store(store)?.score_map())
        }
    }
}

/// Accuracy of each method at each training budget, for one dataset and split.
pub fn accuracy_trace(
    dataset: &SyntheticDataset,
    cfg: &SplitConfig,
    budgets: &[usize],
    methods: &[Method],
    options: &TraceOptions,
) -> Result<AccuracyTrace> {
    let (train, test) = split_comparisons(&dataset.comparisons, cfg)?;
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("budgets must be strictly increasing"));
    }
    if let Some(&b) = budgets.iter().find(|&&b| b > train.len()) {
        return Err(Error::invalid(format!(
            "budget {b} exceeds the {} training comparisons",
            train.len()
        )));
    }
    let store = &dataset.features;
    let pairs: Vec<(usize, usize)> = train
        .iter()
        .map(|c| {
            let index = |id: &str| {
                store
                    .position(id)
                    .ok_or_else(|| Error::invalid(format!("unknown image {id:?}")))
            };
            Ok((index(&c.winner_id)?, index(&c.loser_id)?))
        })
        .collect::<Result<_>>()?;

    let per_budget = budgets
        .par_iter()
        .map(|&budget| {
            let posterior = fit_posterior(store, &pairs[..budget], options)?;
            methods
                .par_iter()
                .map(|&method| {
                    prediction_accuracy(&method_scores(store, &posterior, method, options)?, &test)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<f64> = per_budget.into_iter().flatten().collect();

    let series = methods
        .iter()
        .enumerate()
        .map(|(m, &method)| MethodTrace {
            method,
            accuracies: (0..budgets.len())
                .map(|b| results[b * methods.len() + m])
                .collect(),
        })
        .collect();
    Ok(AccuracyTrace {
        seed: cfg.seed,
        budgets: budgets.to_vec(),
        series,
    })
}

/// Pointwise mean of several traces over the same budgets and methods.
pub fn mean_trace(traces: &[AccuracyTrace]) -> Result<AccuracyTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("no traces to average"))?;
    for t in traces {
        if t.budgets != first.budgets
            || t.series
                .iter()
                .map(|s| s.method)
                .ne(first.series.iter().map(|s| s.method))
        {
            return Err(Error::invalid("traces disagree on budgets or methods"));
        }
    }
    let n = traces.len() as f64;
    let series = first
        .series
        .iter()
        .enumerate()
        .map(|(m, s)| MethodTrace {
            method: s.method,
            accuracies: (0..first.budgets.len())
                .map(|b| {
                    traces
                        .iter()
                        .map(|t| t.series[m].accuracies[b])
                        .sum::<f64>()
                        / n
                })
                .collect(),
        })
        .collect();
    Ok(AccuracyTrace {
        seed: first.seed,
        budgets: first.budgets.clone(),
        series,
    })
}
