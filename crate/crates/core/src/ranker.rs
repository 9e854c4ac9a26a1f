//! Interest marginals from pairwise comparisons by expectation propagation.
//!
//! Every image has a latent interest `w ~ N(prior_mean, prior_sigma^2)`. A
//! comparison between `i` and `j` observes the sign of
//! `t ~ N(w_i - w_j, 2 beta^2)`. The comparison graph is usually loopy, so
//! the factor updates are swept until the marginals stop moving.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{std_normal_cdf, truncation_moments, Gaussian1D};
use crate::gp::Cholesky;
use crate::scalar::Scalar;

/// One operator judgment: `winner_id` was preferred over `loser_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    #[serde(rename = "winner")]
    pub winner_id: String,
    #[serde(rename = "loser")]
    pub loser_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "session")]
    pub session_id: String,
}

impl Comparison {
    pub fn new(
        winner_id: impl Into<String>,
        loser_id: impl Into<String>,
        session_id: impl Into<String>,
    ) -> Result<Self> {
        Self::at(winner_id, loser_id, session_id, Utc::now())
    }

    pub fn at(
        winner_id: impl Into<String>,
        loser_id: impl Into<String>,
        session_id: impl Into<String>,
        timestamp: DateTime<Utc>,
    ) -> Result<Self> {
        let comparison = Comparison {
            winner_id: winner_id.into(),
            loser_id: loser_id.into(),
            timestamp,
            session_id: session_id.into(),
        };
        comparison.validate()?;
        Ok(comparison)
    }

    pub fn validate(&self) -> Result<()> {
        if self.winner_id == self.loser_id {
            return Err(Error::invalid(format!(
                "comparison of image {:?} against itself",
                self.winner_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig<T> {
    pub prior_mean: T,
    pub prior_sigma: T,
    /// Per-image performance noise; a comparison's difference carries `2 beta^2`.
    pub beta: T,
}

impl<T: Scalar> Default for PriorConfig<T> {
    /// Zero-centered prior with `sigma = 2` and `beta = sigma / 2`.
    fn default() -> Self {
        PriorConfig {
            prior_mean: T::zero(),
            prior_sigma: T::lit(2.0),
            beta: T::one(),
        }
    }
}

impl<T: Scalar> PriorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.prior_mean.is_finite() {
            return Err(Error::invalid("prior_mean must be finite"));
        }
        if !(self.prior_sigma > T::zero()) || !self.prior_sigma.is_finite() {
            return Err(Error::invalid("prior_sigma must be positive and finite"));
        }
        if !(self.beta > T::zero()) || !self.beta.is_finite() {
            return Err(Error::invalid("beta must be positive and finite"));
        }
        Ok(())
    }

    pub fn prior_variance(&self) -> T {
        self.prior_sigma * self.prior_sigma
    }

    /// Variance of the latent difference `t` around `w_i - w_j`.
    pub fn difference_noise(&self) -> T {
        T::lit(2.0) * self.beta * self.beta
    }
}

/// Sweep controls for [`infer_ep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpOptions<T> {
    pub tol: T,
    pub max_iters: usize,
    /// Weight on the freshly computed message; 1 disables damping.
    pub damping: T,
    /// Compared images are tracked with a full joint covariance up to this
    /// many; beyond it each image gets an independent marginal, which scales
    /// linearly but ignores the correlations comparisons create.
    pub max_joint_images: usize,
}

impl<T: Scalar> Default for EpOptions<T> {
    fn default() -> Self {
        EpOptions {
            tol: T::lit(1e-4),
            max_iters: 100,
            damping: T::one(),
            max_joint_images: 1000,
        }
    }
}

impl<T: Scalar> EpOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(Error::invalid("damping must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-image marginal means and variances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterestPosterior<T> {
    pub ids: Vec<String>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
    /// Number of comparisons each image took part in.
    pub counts: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> InterestPosterior<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// `(mean, variance)` of one image.
    pub fn get(&self, id: &str) -> Option<(T, T)> {
        self.position(id)
            .map(|k| (self.means[k], self.variances[k]))
    }

    pub fn score_map(&self) -> HashMap<String, T> {
        self.ids
            .iter()
            .cloned()
            .zip(self.means.iter().copied())
            .collect()
    }

    /// Restriction to images that appear in at least one comparison.
    pub fn observed(&self) -> InterestPosterior<T> {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| self.counts[k] > 0).collect();
        InterestPosterior {
            ids: keep.iter().map(|&k| self.ids[k].clone()).collect(),
            means: keep.iter().map(|&k| self.means[k]).collect(),
            variances: keep.iter().map(|&k| self.variances[k]).collect(),
            counts: keep.iter().map(|&k| self.counts[k]).collect(),
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

/// Runs EP over `comparisons` for every image in `image_ids`.
///
/// Images without comparisons keep the prior exactly. Running out of
/// iterations is not an error; the result is returned with `converged = false`.
pub fn infer_ep<T: Scalar>(
    comparisons: &[Comparison],
    image_ids: &[String],
    prior: &PriorConfig<T>,
    options: &EpOptions<T>,
) -> Result<InterestPosterior<T>> {
    let mut index = HashMap::with_capacity(image_ids.len());
    for (k, id) in image_ids.iter().enumerate() {
        if index.insert(id.as_str(), k).is_some() {
            return Err(Error::invalid(format!("duplicate image id {id:?}")));
        }
    }
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("comparison references unknown image {id:?}")))
    };
    let pairs = comparisons
        .iter()
        .map(|c| {
            c.validate()?;
            Ok((lookup(&c.winner_id)?, lookup(&c.loser_id)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let fit = infer_ep_indexed(&pairs, image_ids.len(), prior, options)?;
    Ok(InterestPosterior {
        ids: image_ids.to_vec(),
        means: fit.means,
        variances: fit.variances,
        counts: fit.counts,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Index-based EP result.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedPosterior<T> {
    pub means: Vec<T>,
    pub variances: Vec<T>,
    pub counts: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

/// EP over `(winner, loser)` index pairs into `0..n_images`.
pub fn infer_ep_indexed<T: Scalar>(
    pairs: &[(usize, usize)],
    n_images: usize,
    prior: &PriorConfig<T>,
    options: &EpOptions<T>,
) -> Result<IndexedPosterior<T>> {
    prior.validate()?;
    options.validate()?;
    let mut counts = vec![0usize; n_images];
    for &(w, l) in pairs {
        if w >= n_images || l >= n_images {
            return Err(Error::invalid(format!(
                "pair ({w}, {l}) out of range for {n_images} images"
            )));
        }
        if w == l {
            return Err(Error::invalid(format!("image {w} compared with itself")));
        }
        counts[w] += 1;
        counts[l] += 1;
    }

    let mut local = vec![usize::MAX; n_images];
    let mut active = Vec::new();
    for (k, &count) in counts.iter().enumerate() {
        if count > 0 {
            local[k] = active.len();
            active.push(k);
        }
    }
    let local_pairs: Vec<(usize, usize)> =
        pairs.iter().map(|&(w, l)| (local[w], local[l])).collect();
    let fit = if active.len() <= options.max_joint_images {
        joint_sweeps(&local_pairs, active.len(), prior, options)?
    } else {
        factorized_sweeps(&local_pairs, active.len(), prior, options)?
    };

    let mut means = vec![prior.prior_mean; n_images];
    let mut variances = vec![prior.prior_variance(); n_images];
    for (k, &image) in active.iter().enumerate() {
        means[image] = fit.moments[k].0;
        variances[image] = fit.moments[k].1;
    }
    Ok(IndexedPosterior {
        means,
        variances,
        counts,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

struct Sweeps<T> {
    moments: Vec<(T, T)>,
    converged: bool,
    iterations: usize,
}

/// Largest absolute change in any marginal mean or variance; errors on non-finite values.
fn sweep_change<T: Scalar>(
    previous: &mut [(T, T)],
    current: impl Iterator<Item = (T, T)>,
) -> Result<T> {
    let mut change = T::zero();
    for (prev, cur) in previous.iter_mut().zip(current) {
        change = change
            .max((cur.0 - prev.0).abs())
            .max((cur.1 - prev.1).abs());
        *prev = cur;
    }
    if !change.is_finite() {
        return Err(Error::NumericalDomain(
            "EP sweep produced non-finite marginals".into(),
        ));
    }
    Ok(change)
}

/// EP with one independent Gaussian per image: linear in the number of
/// images, but blind to the correlations comparisons induce.
fn factorized_sweeps<T: Scalar>(
    pairs: &[(usize, usize)],
    n: usize,
    prior: &PriorConfig<T>,
    options: &EpOptions<T>,
) -> Result<Sweeps<T>> {
    let prior_g = Gaussian1D::from_moments(prior.prior_mean, prior.prior_variance())?;
    let noise = prior.difference_noise();
    let mut marginals = vec![prior_g; n];
    let mut messages = vec![(Gaussian1D::flat(), Gaussian1D::flat()); pairs.len()];
    let mut moments = vec![(prior.prior_mean, prior.prior_variance()); n];

    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        for (&(w, l), (to_winner, to_loser)) in pairs.iter().zip(messages.iter_mut()) {
            let cavity_w = marginals[w].divide(to_winner)?;
            let cavity_l = marginals[l].divide(to_loser)?;
            let (new_w, new_l) = update_factor(&cavity_w, &cavity_l, noise)?;

            let msg_w = new_w.divide(&cavity_w)?;
            let msg_l = new_l.divide(&cavity_l)?;
            *to_winner = msg_w.blend(to_winner, options.damping);
            *to_loser = msg_l.blend(to_loser, options.damping);
            marginals[w] = cavity_w.multiply(to_winner);
            marginals[l] = cavity_l.multiply(to_loser);
        }
        let current = marginals
            .iter()
            .map(|m| m.to_moments())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::NumericalDomain("marginal lost all precision".into()))?;
        if sweep_change(&mut moments, current.into_iter())? < options.tol {
            return Ok(Sweeps {
                moments,
                converged: true,
                iterations,
            });
        }
    }
    Ok(Sweeps {
        moments,
        converged: false,
        iterations,
    })
}

/// EP over the joint Gaussian of all compared images. Each comparison keeps
/// a Gaussian site on its interest difference; the posterior covariance is
/// updated in place with a rank-one correction per site and rebuilt from the
/// site parameters after every sweep to shed rounding drift.
fn joint_sweeps<T: Scalar>(
    pairs: &[(usize, usize)],
    m: usize,
    prior: &PriorConfig<T>,
    options: &EpOptions<T>,
) -> Result<Sweeps<T>> {
    let noise = prior.difference_noise();
    let one = T::one();
    // (precision, precision * mean) of each site, on w_winner - w_loser.
    let mut sites = vec![(T::zero(), T::zero()); pairs.len()];
    let mut cov = vec![T::zero(); m * m];
    for i in 0..m {
        cov[i * m + i] = prior.prior_variance();
    }
    let mut mean = vec![prior.prior_mean; m];
    let mut moments = vec![(prior.prior_mean, prior.prior_variance()); m];
    let mut column = vec![T::zero(); m];

    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        for (&(a, b), site) in pairs.iter().zip(sites.iter_mut()) {
            for (i, c) in column.iter_mut().enumerate() {
                *c = cov[i * m + a] - cov[i * m + b];
            }
            let var_d = column[a] - column[b];
            let mean_d = mean[a] - mean[b];
            let cavity_precision = one / var_d - site.0;
            if !(cavity_precision > T::zero()) {
                return Err(Error::NumericalDomain("EP cavity is improper".into()));
            }
            let cavity_var = one / cavity_precision;
            let cavity_pm = mean_d / var_d - site.1;
            let cavity_mean = cavity_pm * cavity_var;

            let c = cavity_var + noise;
            let sqrt_c = c.sqrt();
            let (v, w) = truncation_moments(cavity_mean / sqrt_c);
            let tilted_mean = cavity_mean + cavity_var / sqrt_c * v;
            let tilted_var = cavity_var * (one - cavity_var / c * w);

            let fresh = (
                one / tilted_var - cavity_precision,
                tilted_mean / tilted_var - cavity_pm,
            );
            let updated = (
                options.damping * fresh.0 + (one - options.damping) * site.0,
                options.damping * fresh.1 + (one - options.damping) * site.1,
            );
            let d_precision = updated.0 - site.0;
            let d_pm = updated.1 - site.1;
            *site = updated;

            let denom = one + d_precision * var_d;
            let shrink = d_precision / denom;
            let shift = (d_pm - d_precision * mean_d) / denom;
            for i in 0..m {
                mean[i] = mean[i] + column[i] * shift;
                let scaled = shrink * column[i];
                let row = &mut cov[i * m..(i + 1) * m];
                for (entry, &cj) in row.iter_mut().zip(&column) {
                    *entry = *entry - scaled * cj;
                }
            }
        }

        rebuild_joint(pairs, &sites, m, prior, &mut cov, &mut mean)?;
        let current = (0..m).map(|i| (mean[i], cov[i * m + i]));
        if sweep_change(&mut moments, current)? < options.tol {
            return Ok(Sweeps {
                moments,
                converged: true,
                iterations,
            });
        }
    }
    Ok(Sweeps {
        moments,
        converged: false,
        iterations,
    })
}

/// Recomputes covariance and mean as the inverse of prior plus site precisions.
fn rebuild_joint<T: Scalar>(
    pairs: &[(usize, usize)],
    sites: &[(T, T)],
    m: usize,
    prior: &PriorConfig<T>,
    cov: &mut [T],
    mean: &mut [T],
) -> Result<()> {
    let prior_precision = T::one() / prior.prior_variance();
    let mut precision = vec![T::zero(); m * m];
    let mut pm = vec![prior.prior_mean * prior_precision; m];
    for i in 0..m {
        precision[i * m + i] = prior_precision;
    }
    for (&(a, b), &(tau, nu)) in pairs.iter().zip(sites) {
        precision[a * m + a] = precision[a * m + a] + tau;
        precision[b * m + b] = precision[b * m + b] + tau;
        precision[a * m + b] = precision[a * m + b] - tau;
        precision[b * m + a] = precision[b * m + a] - tau;
        pm[a] = pm[a] + nu;
        pm[b] = pm[b] - nu;
    }
    let factor = Cholesky::factor(m, &precision).ok_or_else(|| {
        Error::NumericalDomain("EP posterior precision is not positive definite".into())
    })?;
    let mut unit = vec![T::zero(); m];
    for j in 0..m {
        unit[j] = T::one();
        let col = factor.solve(&unit);
        unit[j] = T::zero();
        for i in 0..m {
            cov[i * m + j] = col[i];
        }
    }
    for i in 0..m {
        for j in 0..i {
            let avg = (cov[i * m + j] + cov[j * m + i]) * T::lit(0.5);
            cov[i * m + j] = avg;
            cov[j * m + i] = avg;
        }
    }
    mean.copy_from_slice(&factor.solve(&pm));
    Ok(())
}

/// Moment-matched marginals of winner and loser after conditioning their
/// cavities on `w_winner - w_loser + noise > 0`.
fn update_factor<T: Scalar>(
    cavity_w: &Gaussian1D<T>,
    cavity_l: &Gaussian1D<T>,
    noise: T,
) -> Result<(Gaussian1D<T>, Gaussian1D<T>)> {
    let improper = || Error::NumericalDomain("EP cavity is improper".into());
    let (mean_w, var_w) = cavity_w.to_moments().ok_or_else(improper)?;
    let (mean_l, var_l) = cavity_l.to_moments().ok_or_else(improper)?;

    let c = var_w + var_l + noise;
    let sqrt_c = c.sqrt();
    let (v, w) = truncation_moments((mean_w - mean_l) / sqrt_c);

    let winner = Gaussian1D::from_moments(
        mean_w + var_w / sqrt_c * v,
        var_w * (T::one() - var_w / c * w),
    )?;
    let loser = Gaussian1D::from_moments(
        mean_l - var_l / sqrt_c * v,
        var_l * (T::one() - var_l / c * w),
    )?;
    Ok((winner, loser))
}

/// Probability that image `i` wins a fresh comparison against `j`.
///
/// `predict_outcome(i, j) + predict_outcome(j, i)` is exactly one.
pub fn predict_outcome<T: Scalar>(
    posterior: &InterestPosterior<T>,
    i: &str,
    j: &str,
    beta: T,
) -> Result<T> {
    let unknown = |id: &str| Error::invalid(format!("image {id:?} not in posterior"));
    let (mean_i, var_i) = posterior.get(i).ok_or_else(|| unknown(i))?;
    let (mean_j, var_j) = posterior.get(j).ok_or_else(|| unknown(j))?;
    Ok(win_probability(mean_i - mean_j, var_i + var_j, beta))
}

/// `Phi(diff / sqrt(var_sum + 2 beta^2))`, computed from the lower tail so
/// the two orientations sum to exactly one.
pub fn win_probability<T: Scalar>(mean_diff: T, var_sum: T, beta: T) -> T {
    let z = mean_diff / (var_sum + T::lit(2.0) * beta * beta).sqrt();
    if z.is_nan() {
        return T::lit(0.5);
    }
    let lower = std_normal_cdf(-z.abs());
    if z >= T::zero() {
        T::one() - lower
    } else {
        lower
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn cmp(w: &str, l: &str) -> Comparison {
        Comparison::new(w, l, "test").unwrap()
    }

    fn unit_prior() -> PriorConfig<f64> {
        PriorConfig {
            prior_mean: 0.0,
            prior_sigma: 2.0,
            beta: 1.0,
        }
    }

    #[test]
    fn no_comparisons_keeps_prior() {
        let prior = PriorConfig {
            prior_mean: 0.3,
            prior_sigma: 1.7,
            beta: 1.0,
        };
        let post = infer_ep(&[], &ids(&["a", "b", "c"]), &prior, &EpOptions::default()).unwrap();
        assert!(post.converged);
        assert_eq!(post.iterations, 1);
        for k in 0..3 {
            assert_eq!(post.means[k], 0.3);
            assert_eq!(post.variances[k], 1.7 * 1.7);
        }
    }

    #[test]
    fn opposing_results_cancel() {
        // The default tolerance stops ~5e-6 short of the symmetric fixed point.
        let options = EpOptions {
            tol: 1e-8,
            ..EpOptions::default()
        };
        let post = infer_ep(
            &[cmp("a", "b"), cmp("b", "a")],
            &ids(&["a", "b"]),
            &unit_prior(),
            &options,
        )
        .unwrap();
        assert!(post.converged);
        assert!(post.means[0].abs() < 1e-6);
        assert!(post.means[1].abs() < 1e-6);
        assert!(post.variances[0] < 4.0);
    }

    #[test]
    fn single_game_moves_winner_up_and_loser_down() {
        let post = infer_ep(
            &[cmp("a", "b")],
            &ids(&["a", "b", "c"]),
            &unit_prior(),
            &EpOptions::default(),
        )
        .unwrap();
        assert!(post.means[0] > 0.0);
        assert!(post.means[1] < 0.0);
        assert_eq!(post.means[2], 0.0);
        assert_eq!(post.variances[2], 4.0);
        assert_eq!(post.counts, vec![1, 1, 0]);
    }

    #[test]
    fn unknown_and_self_comparisons_are_rejected() {
        let err = infer_ep(
            &[cmp("a", "zzz")],
            &ids(&["a", "b"]),
            &unit_prior(),
            &EpOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(Comparison::new("a", "a", "s").is_err());
        assert!(infer_ep_indexed(&[(0, 0)], 2, &unit_prior(), &EpOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_is_not_an_error() {
        let comparisons = vec![cmp("a", "b"), cmp("b", "c"), cmp("c", "a"), cmp("a", "c")];
        let options = EpOptions {
            tol: 1e-300,
            max_iters: 3,
            ..EpOptions::default()
        };
        let post = infer_ep(
            &comparisons,
            &ids(&["a", "b", "c"]),
            &unit_prior(),
            &options,
        )
        .unwrap();
        assert!(!post.converged);
        assert_eq!(post.iterations, 3);
    }

    #[test]
    fn damping_reaches_the_same_fixed_point() {
        let comparisons = vec![
            cmp("a", "b"),
            cmp("a", "b"),
            cmp("b", "c"),
            cmp("a", "c"),
            cmp("b", "c"),
        ];
        let names = ids(&["a", "b", "c"]);
        let tight = EpOptions {
            tol: 1e-10,
            max_iters: 1000,
            ..EpOptions::default()
        };
        let plain = infer_ep(&comparisons, &names, &unit_prior(), &tight).unwrap();
        let damped = infer_ep(
            &comparisons,
            &names,
            &unit_prior(),
            &EpOptions {
                damping: 0.5,
                ..tight
            },
        )
        .unwrap();
        for k in 0..3 {
            assert!((plain.means[k] - damped.means[k]).abs() < 1e-8);
            assert!((plain.variances[k] - damped.variances[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn joint_and_factorized_agree_on_a_single_game() {
        let joint = infer_ep_indexed(&[(0, 1)], 3, &unit_prior(), &EpOptions::default()).unwrap();
        let factorized = infer_ep_indexed(
            &[(0, 1)],
            3,
            &unit_prior(),
            &EpOptions {
                max_joint_images: 0,
                ..EpOptions::default()
            },
        )
        .unwrap();
        for k in 0..3 {
            assert!((joint.means[k] - factorized.means[k]).abs() < 1e-12);
            assert!((joint.variances[k] - factorized.variances[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_tracks_correlation_that_factorized_misses() {
        // A beats B twice, B beats C twice: the joint fit keeps the chain's
        // correlations, so the end images are less certain than the
        // factorized fit claims.
        let pairs = [(0, 1), (0, 1), (1, 2), (1, 2)];
        let tight = EpOptions {
            tol: 1e-10,
            max_iters: 1000,
            ..EpOptions::default()
        };
        let joint = infer_ep_indexed(&pairs, 3, &unit_prior(), &tight).unwrap();
        let factorized = infer_ep_indexed(
            &pairs,
            3,
            &unit_prior(),
            &EpOptions {
                max_joint_images: 0,
                ..tight
            },
        )
        .unwrap();
        assert!(joint.converged && factorized.converged);
        assert!(joint.variances[0] > factorized.variances[0]);
        assert!((joint.means[1]).abs() < 1e-9);
    }

    #[test]
    fn predict_outcome_examples() {
        let post = InterestPosterior {
            ids: ids(&["a", "b", "c"]),
            means: vec![3.0, 0.0, 3.0],
            variances: vec![0.0, 0.0, 0.0],
            counts: vec![1, 1, 1],
            converged: true,
            iterations: 1,
        };
        assert_eq!(predict_outcome(&post, "a", "c", 1.0).unwrap(), 0.5);
        // Phi(3 / sqrt 2), 40-digit reference.
        let p: f64 = predict_outcome(&post, "a", "b", 1.0).unwrap();
        assert!((p - 0.983_052_573_237_655_4).abs() < 1e-12);
        let q = predict_outcome(&post, "b", "a", 1.0).unwrap();
        assert_eq!(p + q, 1.0);
        assert!(predict_outcome(&post, "a", "nope", 1.0).is_err());

        assert_eq!(win_probability(1e300, 1.0, 1.0), 1.0);
        assert_eq!(win_probability(-1e300, 1.0, 1.0), 0.0);
    }

    #[test]
    fn works_in_f32() {
        let prior = PriorConfig::<f32>::default();
        let post = infer_ep(
            &[cmp("a", "b"), cmp("a", "b")],
            &ids(&["a", "b"]),
            &prior,
            &EpOptions::default(),
        )
        .unwrap();
        assert!(post.means[0] > 0.5 && post.means[1] < -0.5);
    }
}
