//! Shapley-value explanations for boosted tree ensembles.
//!
//! [`exact`] enumerates coalitions and serves as the reference;
//! [`treeshap`] is the polynomial path algorithm over node covers. Both
//! explain the model in margin space: the raw (possibly log1p) regression
//! score, or per-class log-odds for softmax models.

pub mod exact;
pub mod hstat;
pub mod plots;
pub mod treeshap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use exact::{exact_interactions, exact_shapley, exact_shapley_all, CoalitionGame, FnGame, MAX_EXACT_PLAYERS};
pub use hstat::{h_matrix, h_row, h_statistic, partial_dependence, sample_rows, HStatistic, DEFAULT_H_SAMPLE};
pub use plots::{
    decision_plot_data, dependence_data, importance, interaction_partner, value_plot_data, BeeswarmRecord,
    DecisionPath, DecisionStep, DependenceData, DependenceRecord, ImportanceRecord,
};
pub use treeshap::{tree_value_function, validate_covers, Condition, TreeGame};

use crate::error::{Error, Result};
use crate::frame::{FeatureSpec, Frame, Task};
use crate::gbdt::{Ensemble, Objective};
use treeshap::{tree_features, tree_mean, tree_shap_into};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub row_id: String,
    /// Expected margin per output.
    pub base_value: Vec<f64>,
    /// `shap_values[output][feature]`.
    pub shap_values: Vec<Vec<f64>>,
    /// Margin per output; equals `base_value + Σ shap_values`.
    pub model_output: Vec<f64>,
    pub feature_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub features: Vec<FeatureSpec>,
    /// One label per output: the target name or the class names.
    pub outputs: Vec<String>,
    /// Human-readable description of the explained output space.
    pub output_space: String,
    pub explanations: Vec<Explanation>,
}

impl ExplanationSet {
    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{name}`")))
    }

    pub fn output_index(&self, label: &str) -> Result<usize> {
        self.outputs
            .iter()
            .position(|o| o == label)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown output `{label}`")))
    }
}

/// Expected margin per output under cover weighting.
pub fn base_values(ensemble: &Ensemble) -> Vec<f64> {
    let p = ensemble.n_features();
    let dummy = vec![0.0; p];
    let mut base = ensemble.base_score.clone();
    for (t, tree) in ensemble.trees.iter().enumerate() {
        base[ensemble.tree_output(t)] += ensemble.learning_rate * tree_mean(tree, &ensemble.bins, &dummy);
    }
    base
}

fn check_row(ensemble: &Ensemble, row: &[f64]) -> Result<()> {
    if row.len() != ensemble.n_features() {
        return Err(Error::InvalidArgument(format!(
            "row has {} values, model expects {}",
            row.len(),
            ensemble.n_features()
        )));
    }
    Ok(())
}

/// SHAP values of one row for every output.
pub fn tree_shap_row(ensemble: &Ensemble, row: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_row(ensemble, row)?;
    let k = ensemble.n_outputs();
    let p = ensemble.n_features();
    let mut phi = vec![vec![0.0; p]; k];
    for (t, tree) in ensemble.trees.iter().enumerate() {
        tree_shap_into(
            tree,
            &ensemble.bins,
            row,
            Condition::None,
            ensemble.learning_rate,
            &mut phi[ensemble.tree_output(t)],
        );
    }
    Ok((phi, ensemble.predict_margin_row(row)))
}

pub fn output_space(ensemble: &Ensemble) -> String {
    match ensemble.objective {
        Objective::SquaredError if ensemble.params.log1p_target => {
            format!("margin: log1p({})", ensemble.schema.target)
        }
        Objective::SquaredError => format!("margin: {}", ensemble.schema.target),
        Objective::Softmax { .. } => "margin: per-class log-odds (softmax logits)".into(),
    }
}

fn output_labels(ensemble: &Ensemble) -> Vec<String> {
    match &ensemble.schema.task {
        Task::Classification { classes } => classes.clone(),
        Task::Regression => vec![ensemble.schema.target.clone()],
    }
}

/// Explains the given rows of `frame` (all rows when `rows` is `None`).
pub fn tree_shap(ensemble: &Ensemble, frame: &Frame, rows: Option<&[usize]>) -> Result<ExplanationSet> {
    ensemble.check_frame(frame)?;
    validate_covers(ensemble)?;
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..frame.n_rows()).collect();
            &all
        }
    };
    if let Some(bad) = rows.iter().find(|&&r| r >= frame.n_rows()) {
        return Err(Error::InvalidArgument(format!("row {bad} out of range")));
    }
    let base = base_values(ensemble);
    let explanations = rows
        .par_iter()
        .map(|&i| {
            let row = frame.row(i);
            let (shap_values, model_output) = tree_shap_row(ensemble, row)?;
            Ok(Explanation {
                row_id: frame.row_ids()[i].clone(),
                base_value: base.clone(),
                shap_values,
                model_output,
                feature_values: row.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplanationSet {
        features: ensemble.schema.features.clone(),
        outputs: output_labels(ensemble),
        output_space: output_space(ensemble),
        explanations,
    })
}

/// SHAP interaction matrix for one row and output: off-diagonal entries
/// split each pairwise effect evenly, and each row sums to that feature's
/// SHAP value.
pub fn shap_interactions(ensemble: &Ensemble, row: &[f64], output: usize) -> Result<Vec<Vec<f64>>> {
    check_row(ensemble, row)?;
    validate_covers(ensemble)?;
    if output >= ensemble.n_outputs() {
        return Err(Error::InvalidArgument(format!("output {output} out of range")));
    }
    let p = ensemble.n_features();
    let mut out = vec![vec![0.0; p]; p];
    let lr = ensemble.learning_rate;
    for (t, tree) in ensemble.trees.iter().enumerate() {
        if ensemble.tree_output(t) != output {
            continue;
        }
        let mut phi = vec![0.0; p];
        tree_shap_into(tree, &ensemble.bins, row, Condition::None, lr, &mut phi);
        for j in 0..p {
            out[j][j] += phi[j];
        }
        for j in tree_features(tree) {
            let mut on = vec![0.0; p];
            let mut off = vec![0.0; p];
            tree_shap_into(tree, &ensemble.bins, row, Condition::On(j), lr, &mut on);
            tree_shap_into(tree, &ensemble.bins, row, Condition::Off(j), lr, &mut off);
            for k in 0..p {
                let v = (on[k] - off[k]) / 2.0;
                out[j][k] += v;
                out[j][j] -= v;
            }
        }
    }
    Ok(out)
}
