//! Hybrid statistical / machine-learning toolkit for e-commerce transaction
//! data: feature engineering, descriptive statistics, boosted trees with
//! classical baselines, k-means product clustering and tree SHAP
//! explanations, plus a seeded synthetic data generator.

// `!(x > 0.0)` deliberately rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod frame;
pub mod gbdt;
pub mod ingest;
pub mod shap;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
