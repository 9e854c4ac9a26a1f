//! Learning an operator's image-interest function from pairwise comparisons.
//!
//! Expectation propagation over comparison outcomes ([`ranker`]) yields a
//! Gaussian belief per compared image. A Gaussian process over CNN feature
//! vectors ([`gp`]) then spreads those beliefs to every image. The smoothed
//! scores drive storyboards ([`storyboard`]) and occlusion saliency maps
//! ([`saliency`]), and [`evaluation`] replays the comparison-prediction
//! experiment on synthetic data.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the rest of the tooling uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod features;
pub mod gaussian;
pub mod gp;
pub mod ranker;
pub mod saliency;
pub mod scalar;
pub mod storyboard;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Gaussian = gaussian::Gaussian1D<f64>;
pub type PriorConfig = ranker::PriorConfig<f64>;
pub type EpOptions = ranker::EpOptions<f64>;
pub type InterestPosterior = ranker::InterestPosterior<f64>;
pub type FeatureVector = features::FeatureVector<f64>;
pub type FeatureStore = features::FeatureStore<f64>;
pub type KernelConfig = features::KernelConfig<f64>;
pub type GpModel = gp::GpModel<f64>;
pub type Prediction = gp::Prediction<f64>;

pub type FeatureStore32 = features::FeatureStore<f32>;
pub type GpModel32 = gp::GpModel<f32>;
pub type InterestPosterior32 = ranker::InterestPosterior<f32>;

pub use ranker::Comparison;
pub use saliency::{Extractor, OcclusionConfig};
pub type SaliencyMap = saliency::SaliencyMap<f64>;
