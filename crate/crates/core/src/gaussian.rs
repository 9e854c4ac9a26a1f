//! One-dimensional Gaussians in natural parameters, and the truncated-normal
//! corrections used when conditioning on the sign of a comparison.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Below this argument `v` and `w` switch to their asymptotic expansions.
const ASYMPTOTIC_BELOW: f64 = -30.0;

/// A Gaussian stored as `(1/variance, mean/variance)`.
///
/// Zero precision is the flat (improper uniform) message; its
/// `precision_mean` is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D<T> {
    precision: T,
    precision_mean: T,
}

impl<T: Scalar> Default for Gaussian1D<T> {
    fn default() -> Self {
        Self::flat()
    }
}

impl<T: Scalar> Gaussian1D<T> {
    pub fn flat() -> Self {
        Gaussian1D {
            precision: T::zero(),
            precision_mean: T::zero(),
        }
    }

    /// Builds a Gaussian from natural parameters.
    pub fn from_natural(precision: T, precision_mean: T) -> Result<Self> {
        if !(precision >= T::zero()) || !precision.is_finite() || !precision_mean.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "natural parameters ({precision}, {precision_mean}) are not a valid Gaussian"
            )));
        }
        if precision == T::zero() && precision_mean != T::zero() {
            return Err(Error::NumericalDomain(
                "zero precision requires zero precision-mean".into(),
            ));
        }
        Ok(Gaussian1D {
            precision,
            precision_mean,
        })
    }

    pub fn from_moments(mean: T, variance: T) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance <= T::zero() {
            return Err(Error::invalid(format!(
                "Gaussian needs finite mean and positive finite variance, got ({mean}, {variance})"
            )));
        }
        let precision = variance.recip();
        Ok(Gaussian1D {
            precision,
            precision_mean: mean * precision,
        })
    }

    /// `(mean, variance)`, or `None` for the flat Gaussian.
    pub fn to_moments(&self) -> Option<(T, T)> {
        if self.precision > T::zero() {
            let variance = self.precision.recip();
            Some((self.precision_mean * variance, variance))
        } else {
            None
        }
    }

    #[inline]
    pub fn precision(&self) -> T {
        self.precision
    }

    #[inline]
    pub fn precision_mean(&self) -> T {
        self.precision_mean
    }

    #[inline]
    pub fn is_flat(&self) -> bool {
        self.precision == T::zero()
    }

    pub fn mean(&self) -> Option<T> {
        self.to_moments().map(|(m, _)| m)
    }

    pub fn variance(&self) -> Option<T> {
        self.to_moments().map(|(_, v)| v)
    }

    /// Product of densities (up to normalization).
    pub fn multiply(&self, other: &Self) -> Self {
        Gaussian1D {
            precision: self.precision + other.precision,
            precision_mean: self.precision_mean + other.precision_mean,
        }
    }

    /// Quotient of densities; used to form EP cavities.
    ///
    /// A result with exactly zero precision is returned as the flat Gaussian.
    pub fn divide(&self, other: &Self) -> Result<Self> {
        let precision = self.precision - other.precision;
        if precision < T::zero() {
            return Err(Error::NumericalDomain(format!(
                "division leaves negative precision {precision}"
            )));
        }
        if precision == T::zero() {
            return Ok(Self::flat());
        }
        Ok(Gaussian1D {
            precision,
            precision_mean: self.precision_mean - other.precision_mean,
        })
    }

    /// Convex combination of natural parameters, `weight * self + (1 - weight) * other`.
    pub fn blend(&self, other: &Self, weight: T) -> Self {
        let keep = T::one() - weight;
        Gaussian1D {
            precision: weight * self.precision + keep * other.precision,
            precision_mean: weight * self.precision_mean + keep * other.precision_mean,
        }
    }
}

impl<T: Scalar> Mul for Gaussian1D<T> {
    type Output = Gaussian1D<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        self.multiply(&rhs)
    }
}

/// Standard normal density.
pub fn std_normal_pdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::lit((-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal CDF, accurate in the lower tail through `erfc`.
pub fn std_normal_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5 * libm::erfc(-x.as_f64() / std::f64::consts::SQRT_2))
}

/// Mean and variance corrections `(v, w)` for a unit-variance Gaussian with
/// mean `t` conditioned on being positive: the conditioned mean is `t + v`
/// and the conditioned variance is `1 - w`.
///
/// `v(t) = pdf(t) / cdf(t)` and `w(t) = v(t) (v(t) + t)`.
pub fn truncation_moments<T: Scalar>(t: T) -> (T, T) {
    let (v, w) = truncation_moments_f64(t.as_f64());
    (T::lit(v), T::lit(w))
}

fn truncation_moments_f64(t: f64) -> (f64, f64) {
    if t < ASYMPTOTIC_BELOW {
        // Mills-ratio expansion in u = 1/t^2. `v + t` is formed directly from
        // the series so `w` does not suffer cancellation.
        let x = -t;
        let u = 1.0 / (x * x);
        let excess = (1.0 + u * (-2.0 + u * (10.0 + u * (-74.0 + u * 706.0)))) / x;
        let v = x + excess;
        return (v, v * excess);
    }
    let cdf = 0.5 * libm::erfc(-t / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let v = pdf / cdf;
    (v, v * (v + t))
}
