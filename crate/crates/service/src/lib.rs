//! Comparison-collection service for the image-interest pipeline.
//!
//! A [`Session`] holds the feature store next to the durable comparison log
//! and keeps the latest score snapshot. [`http::router`] exposes it as a JSON
//! API, while the `interest` binary wraps the same pieces as command-line tools.

pub mod error;
pub mod extract;
pub mod http;
pub mod journal;
pub mod session;

pub use error::{Result, ServiceError};
pub use session::{Session, SessionConfig, Snapshot};
