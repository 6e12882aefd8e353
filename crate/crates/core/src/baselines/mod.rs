//! Classical comparison models: ridge, LASSO, k-nearest-neighbours and
//! naive Bayes, plus the RMSE and precision metrics and split helpers.
//!
//! Linear and neighbour models work on a one-hot encoded, z-scored copy of
//! the frame; the boosted trees keep integer category codes.

mod cv;
mod encode;
mod knn;
mod linear;
mod metrics;
mod nb;

use serde::{Deserialize, Serialize};

pub use cv::{kfold, select_k, select_lambda, train_test_split, GridResult, Split, K_GRID, LAMBDA_GRID};
pub use encode::{EncodedColumn, Encoder, Matrix, Standardizer};
pub use knn::{aggregate, knn_predict, nearest, squared_distance, KnnModel, KnnParams, KnnTask, Neighbor, Weighting};
pub use linear::{
    fit_lasso, fit_ridge, lasso_fit_matrix, lasso_lambda_max, ridge_fit_matrix, soft_threshold,
    LinearFit, LinearModel, Penalty,
};
pub use metrics::{precision, rmse, Averaging, PrecisionReport};
pub use nb::{fit_nb, nb_predict, NbFeature, NbModel, NbParams};

use crate::error::Result;
use crate::frame::Frame;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    Linear(LinearModel),
    Knn(KnnModel),
    NaiveBayes(NbModel),
}

impl BaselineModel {
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        match self {
            Self::Linear(m) => m.predict(frame),
            Self::Knn(m) => m.predict(frame),
            Self::NaiveBayes(m) => m.predict(frame),
        }
    }
}

/// Versioned on-disk form of a baseline model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDocument {
    pub version: u32,
    pub model: BaselineModel,
}

impl From<BaselineModel> for BaselineDocument {
    fn from(model: BaselineModel) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            model,
        }
    }
}
