//! Gaussian-process smoothing of EP interest estimates over feature space.
//!
//! EP means are treated as noisy observations of a zero-mean GP with the
//! cosine RBF kernel, each with its own noise variance taken from the EP
//! marginal variance. The posterior mean at `x*` is `k*^T (K + S)^-1 w` and
//! the variance `k(x*, x*) - k*^T (K + S)^-1 k*`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{kernel_from_distance, unit_cosine_distance, FeatureStore, KernelConfig};
use crate::ranker::InterestPosterior;
use crate::scalar::Scalar;

/// Largest jitter tried before giving up on the factorization.
const MAX_JITTER: f64 = 1e-2;
/// Raw variances below `-NEGATIVE_VARIANCE_SLACK` are recorded as clamps.
const NEGATIVE_VARIANCE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction<T> {
    pub mean: T,
    pub variance: T,
}

/// Lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric matrix given row-major; `None` if not positive definite.
    pub(crate) fn factor(n: usize, matrix: &[T]) -> Option<Self> {
        debug_assert_eq!(matrix.len(), n * n);
        let mut lower = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = matrix[i * n + j];
                for k in 0..j {
                    sum = sum - lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return None;
                    }
                    lower[i * n + i] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Some(Cholesky { n, lower })
    }

    /// Solves `L y = b`.
    pub(crate) fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let dot: T = row.iter().zip(&y[..i]).map(|(&l, &v)| l * v).sum();
            y[i] = (y[i] - dot) / self.lower[i * n + i];
        }
        y
    }

    /// Solves `L^T x = y`.
    pub(crate) fn backward(&self, y: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut sum = x[i];
            for (k, &xk) in x.iter().enumerate().skip(i + 1) {
                sum = sum - self.lower[k * n + i] * xk;
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    pub(crate) fn solve(&self, b: &[T]) -> Vec<T> {
        self.backward(&self.forward(b))
    }
}

/// A fitted GP over a set of training images. Immutable; `predict` may be
/// called concurrently.
#[derive(Debug)]
pub struct GpModel<T> {
    training_ids: Vec<String>,
    train_units: Vec<Vec<T>>,
    w_m: Vec<T>,
    noise_diag: Vec<T>,
    counts: Vec<usize>,
    kernel_cfg: KernelConfig<T>,
    dim: Option<usize>,
    factor: Cholesky<T>,
    alpha: Vec<T>,
    jitter: T,
    source_converged: bool,
    source_iterations: usize,
    clamped: AtomicUsize,
}

impl<T: Scalar> GpModel<T> {
    /// Fits on every image of `posterior`, using its means as observations and
    /// its variances as per-image noise.
    pub fn fit(
        features: &FeatureStore<T>,
        posterior: &InterestPosterior<T>,
        cfg: &KernelConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = posterior.len();
        if posterior.means.len() != n || posterior.variances.len() != n {
            return Err(Error::invalid("posterior vectors have unequal lengths"));
        }
        let train_units = posterior
            .ids
            .iter()
            .map(|id| {
                features
                    .position(id)
                    .map(|k| features.unit(k).to_vec())
                    .ok_or_else(|| Error::invalid(format!("no feature vector for image {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        for (id, &v) in posterior.ids.iter().zip(&posterior.variances) {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "noise variance for {id:?} must be positive and finite, got {v}"
                )));
            }
        }
        if let Some(&m) = posterior.means.iter().find(|m| !m.is_finite()) {
            return Err(Error::invalid(format!("non-finite interest mean {m}")));
        }

        let gram = gram_matrix(&train_units, cfg);
        let (factor, jitter) = factor_with_jitter(n, &gram, &posterior.variances, cfg.jitter)?;
        let alpha = factor.solve(&posterior.means);

        Ok(GpModel {
            training_ids: posterior.ids.clone(),
            train_units,
            w_m: posterior.means.clone(),
            noise_diag: posterior.variances.clone(),
            counts: posterior.counts.clone(),
            kernel_cfg: *cfg,
            dim: features.dim(),
            factor,
            alpha,
            jitter,
            source_converged: posterior.converged,
            source_iterations: posterior.iterations,
            clamped: AtomicUsize::new(0),
        })
    }

    pub fn training_ids(&self) -> &[String] {
        &self.training_ids
    }

    pub fn w_m(&self) -> &[T] {
        &self.w_m
    }

    pub fn noise_diag(&self) -> &[T] {
        &self.noise_diag
    }

    pub fn kernel_config(&self) -> &KernelConfig<T> {
        &self.kernel_cfg
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// Number of predictions whose raw variance fell below `-1e-8` and was clamped.
    pub fn clamped_predictions(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.training_ids.is_empty()
    }

    /// Posterior mean and variance at a feature vector.
    pub fn predict(&self, x_star: &[T]) -> Result<Prediction<T>> {
        if let Some(dim) = self.dim {
            if x_star.len() != dim {
                return Err(Error::invalid(format!(
                    "query has dimension {}, model expects {dim}",
                    x_star.len()
                )));
            }
        }
        let norm = x_star.iter().map(|&x| x * x).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::NumericalDomain(
                "query feature vector has zero or non-finite norm".into(),
            ));
        }
        let unit: Vec<T> = x_star.iter().map(|&x| x / norm).collect();
        Ok(self.predict_unit(&unit))
    }

    fn predict_unit(&self, unit: &[T]) -> Prediction<T> {
        if self.is_empty() {
            return Prediction {
                mean: T::zero(),
                variance: T::one(),
            };
        }
        let k_star: Vec<T> = self
            .train_units
            .iter()
            .map(|u| kernel_from_distance(unit_cosine_distance(unit, u), &self.kernel_cfg))
            .collect();
        let mean = k_star.iter().zip(&self.alpha).map(|(&k, &a)| k * a).sum();
        let v = self.factor.forward(&k_star);
        let prior_var = kernel_from_distance(T::zero(), &self.kernel_cfg);
        let raw = prior_var - v.iter().map(|&x| x * x).sum::<T>();
        if raw < T::lit(-NEGATIVE_VARIANCE_SLACK) {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        Prediction {
            mean,
            variance: raw.max(T::zero()),
        }
    }

    /// Smoothed interest for every training image, in training order.
    pub fn smooth_all(&self) -> InterestPosterior<T> {
        let predictions: Vec<Prediction<T>> = self
            .train_units
            .par_iter()
            .map(|u| self.predict_unit(u))
            .collect();
        InterestPosterior {
            ids: self.training_ids.clone(),
            means: predictions.iter().map(|p| p.mean).collect(),
            variances: predictions.iter().map(|p| p.variance).collect(),
            counts: self.counts.clone(),
            converged: self.source_converged,
            iterations: self.source_iterations,
        }
    }

    /// Smoothed interest for every image in `store`, in capture order.
    /// Images outside the training set get their GP prediction.
    pub fn predict_store(&self, store: &FeatureStore<T>) -> Result<InterestPosterior<T>> {
        if let (Some(model_dim), Some(store_dim)) = (self.dim, store.dim()) {
            if model_dim != store_dim {
                return Err(Error::invalid(format!(
                    "store dimension {store_dim} differs from model dimension {model_dim}"
                )));
            }
        }
        let counts: HashMap<&str, usize> = self
            .training_ids
            .iter()
            .map(String::as_str)
            .zip(self.counts.iter().copied())
            .collect();
        let predictions: Vec<Prediction<T>> = (0..store.len())
            .into_par_iter()
            .map(|k| self.predict_unit(store.unit(k)))
            .collect();
        let ids = store.ids();
        Ok(InterestPosterior {
            counts: ids
                .iter()
                .map(|id| counts.get(id.as_str()).copied().unwrap_or(0))
                .collect(),
            ids,
            means: predictions.iter().map(|p| p.mean).collect(),
            variances: predictions.iter().map(|p| p.variance).collect(),
            converged: self.source_converged,
            iterations: self.source_iterations,
        })
    }
}

/// Factors `gram + diag(noise) + jitter I`, escalating the jitter tenfold
/// (from at least 1e-8) up to [`MAX_JITTER`] until the factorization succeeds.
fn factor_with_jitter<T: Scalar>(
    n: usize,
    gram: &[T],
    noise: &[T],
    start: T,
) -> Result<(Cholesky<T>, T)> {
    let mut jitter = start;
    loop {
        let mut matrix = gram.to_vec();
        for i in 0..n {
            matrix[i * n + i] = matrix[i * n + i] + noise[i] + jitter;
        }
        if let Some(factor) = Cholesky::factor(n, &matrix) {
            return Ok((factor, jitter));
        }
        if jitter.as_f64() >= MAX_JITTER * (1.0 - 1e-9) {
            return Err(Error::Factorization {
                jitter: jitter.as_f64(),
            });
        }
        jitter = if jitter < T::lit(1e-8) {
            T::lit(1e-8)
        } else {
            (jitter * T::lit(10.0)).min(T::lit(MAX_JITTER))
        };
    }
}

/// Kernel matrix over unit vectors, row-major, exactly symmetric.
fn gram_matrix<T: Scalar>(units: &[Vec<T>], cfg: &KernelConfig<T>) -> Vec<T> {
    let n = units.len();
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if i == j {
                        kernel_from_distance(T::zero(), cfg)
                    } else {
                        kernel_from_distance(unit_cosine_distance(&units[i], &units[j]), cfg)
                    }
                })
                .collect()
        })
        .collect();
    let mut gram = vec![T::zero(); n * n];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &k) in row.iter().enumerate() {
            let j = i + offset;
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    gram
}
