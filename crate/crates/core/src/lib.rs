//! Video anomaly detection with cluster-wise one-class SVMs.
//!
//! Training clusters augmented spatio-temporal cubes with k-means, drops the
//! small clusters and fits a linear one-class SVM to each survivor. A test
//! cube's abnormality is the negated best normality score over those SVMs.

pub mod augment;
pub mod cluster;
pub mod cubes;
pub mod detect;
pub mod error;
pub mod eval;
mod filter;
pub mod ingest;
pub mod ocsvm;
pub mod samples;
pub mod synth;

pub use error::{Error, Result};
pub use samples::Samples;
