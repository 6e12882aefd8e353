//! Data behind the four explanation plots: global importance, the value
//! (beeswarm) plot, dependence scatter with an interaction partner, and the
//! cumulative decision path.

use serde::{Deserialize, Serialize};

use super::hstat::{h_row, HStatistic};
use super::{Explanation, ExplanationSet};
use crate::error::{Error, Result};
use crate::gbdt::Ensemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub rank: usize,
    pub feature: String,
    pub mean_abs_shap: f64,
}

fn check_output(set: &ExplanationSet, output: usize) -> Result<()> {
    if set.explanations.is_empty() {
        return Err(Error::InvalidArgument("no explanations to summarize".into()));
    }
    if output >= set.outputs.len() {
        return Err(Error::InvalidArgument(format!("output {output} out of range")));
    }
    Ok(())
}

/// Mean |φ| per feature, descending; ties keep feature order.
pub fn importance(set: &ExplanationSet, output: usize) -> Result<Vec<ImportanceRecord>> {
    check_output(set, output)?;
    let n = set.explanations.len() as f64;
    let mut scores: Vec<(usize, f64)> = (0..set.features.len())
        .map(|j| {
            let total: f64 = set
                .explanations
                .iter()
                .map(|e| e.shap_values[output][j].abs())
                .sum();
            (j, total / n)
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scores
        .into_iter()
        .enumerate()
        .map(|(rank, (j, s))| ImportanceRecord {
            rank: rank + 1,
            feature: set.features[j].name.clone(),
            mean_abs_shap: s,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRecord {
    pub feature: String,
    pub row_id: String,
    pub shap: f64,
    pub value: f64,
    pub display: String,
    /// Per-feature min-max position of the value in `[0, 1]`; `None` for
    /// missing cells.
    pub color: Option<f64>,
}

/// Min-max color scale per feature over non-missing values.
fn color_scale(set: &ExplanationSet, j: usize) -> impl Fn(f64) -> Option<f64> + '_ {
    let spec = &set.features[j];
    let (lo, hi) = set
        .explanations
        .iter()
        .map(|e| e.feature_values[j])
        .filter(|v| !spec.is_missing(*v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    move |v: f64| {
        if spec.is_missing(v) {
            None
        } else if hi > lo {
            Some((v - lo) / (hi - lo))
        } else {
            Some(0.5)
        }
    }
}

/// One record per (feature, row), features in importance order.
pub fn value_plot_data(set: &ExplanationSet, output: usize) -> Result<Vec<BeeswarmRecord>> {
    let ranking = importance(set, output)?;
    let mut out = Vec::with_capacity(ranking.len() * set.explanations.len());
    for r in &ranking {
        let j = set.feature_index(&r.feature)?;
        let spec = &set.features[j];
        let color = color_scale(set, j);
        for e in &set.explanations {
            let v = e.feature_values[j];
            out.push(BeeswarmRecord {
                feature: spec.name.clone(),
                row_id: e.row_id.clone(),
                shap: e.shap_values[output][j],
                value: v,
                display: spec.display_value(v),
                color: color(v),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceRecord {
    pub row_id: String,
    pub x: f64,
    pub x_display: String,
    pub shap: f64,
    pub partner_value: Option<f64>,
    pub color: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceData {
    pub feature: String,
    pub output: String,
    pub partner: Option<String>,
    pub partner_h: Option<HStatistic>,
    pub records: Vec<DependenceRecord>,
}

/// The feature with the largest H against `feature` (lowest index on
/// ties), or `None` when every H is zero.
pub fn interaction_partner(
    ensemble: &Ensemble,
    feature: usize,
    sample: &[Vec<f64>],
    output: usize,
) -> Result<Option<(usize, HStatistic)>> {
    let row = h_row(ensemble, feature, sample, output)?;
    let mut best: Option<(usize, HStatistic)> = None;
    for (k, h) in row.into_iter().enumerate() {
        if let Some(h) = h {
            if h.value > 0.0 && best.is_none_or(|(_, b)| h.value > b.value) {
                best = Some((k, h));
            }
        }
    }
    Ok(best)
}

pub fn dependence_data(
    set: &ExplanationSet,
    feature: usize,
    partner: Option<(usize, HStatistic)>,
    output: usize,
) -> Result<DependenceData> {
    check_output(set, output)?;
    if feature >= set.features.len() {
        return Err(Error::InvalidArgument(format!("feature index {feature} out of range")));
    }
    let spec = &set.features[feature];
    let color = partner.map(|(k, _)| color_scale(set, k));
    let records = set
        .explanations
        .iter()
        .map(|e| {
            let x = e.feature_values[feature];
            let pv = partner.map(|(k, _)| e.feature_values[k]);
            DependenceRecord {
                row_id: e.row_id.clone(),
                x,
                x_display: spec.display_value(x),
                shap: e.shap_values[output][feature],
                partner_value: pv,
                color: match (&color, pv) {
                    (Some(c), Some(v)) => c(v),
                    _ => None,
                },
            }
        })
        .collect();
    Ok(DependenceData {
        feature: spec.name.clone(),
        output: set.outputs[output].clone(),
        partner: partner.map(|(k, _)| set.features[k].name.clone()),
        partner_h: partner.map(|(_, h)| h),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStep {
    pub feature: String,
    pub value: f64,
    pub display: String,
    pub shap: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub row_id: String,
    pub output: String,
    pub output_space: String,
    pub base_value: f64,
    pub model_output: f64,
    pub steps: Vec<DecisionStep>,
}

/// Cumulative path from the base value to the model output. The default
/// order is ascending |φ| (ties by feature index), so the largest effects
/// come last.
pub fn decision_plot_data(
    set: &ExplanationSet,
    explanation: &Explanation,
    output: usize,
    order: Option<&[usize]>,
) -> Result<DecisionPath> {
    if output >= set.outputs.len() {
        return Err(Error::InvalidArgument(format!("output {output} out of range")));
    }
    let phi = &explanation.shap_values[output];
    let order: Vec<usize> = match order {
        Some(o) => {
            let mut sorted = o.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != o.len() || sorted.iter().any(|&j| j >= phi.len()) {
                return Err(Error::InvalidArgument("decision order must list distinct feature indices".into()));
            }
            o.to_vec()
        }
        None => {
            let mut idx: Vec<usize> = (0..phi.len()).collect();
            idx.sort_by(|&a, &b| phi[a].abs().total_cmp(&phi[b].abs()).then(a.cmp(&b)));
            idx
        }
    };
    let base = explanation.base_value[output];
    let mut cumulative = base;
    let steps = order
        .iter()
        .map(|&j| {
            cumulative += phi[j];
            let v = explanation.feature_values[j];
            DecisionStep {
                feature: set.features[j].name.clone(),
                value: v,
                display: set.features[j].display_value(v),
                shap: phi[j],
                cumulative,
            }
        })
        .collect();
    Ok(DecisionPath {
        row_id: explanation.row_id.clone(),
        output: set.outputs[output].clone(),
        output_space: set.output_space.clone(),
        base_value: base,
        model_output: explanation.model_output[output],
        steps,
    })
}
