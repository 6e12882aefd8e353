//! Naive Bayes with categorical (Laplace-smoothed) and Gaussian features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FeatureKind, Frame, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    /// Laplace pseudo-count added to every categorical level.
    pub alpha: f64,
    /// Fraction of the pooled feature variance added to every class variance.
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            var_smoothing: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NbFeature {
    /// `log_probs[c]` has one entry per level plus a trailing missing slot.
    Categorical {
        n_levels: usize,
        missing_code: Option<f64>,
        log_probs: Vec<Vec<f64>>,
        /// Log probability for a level never seen at fit time.
        log_floor: Vec<f64>,
    },
    Gaussian {
        missing_code: Option<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub params: NbParams,
    pub classes: Vec<String>,
    pub priors: Vec<f64>,
    pub features: Vec<NbFeature>,
    pub feature_hash: String,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn is_missing(v: f64, code: Option<f64>) -> bool {
    v.is_nan() || code == Some(v)
}

pub fn fit_nb(frame: &Frame, params: NbParams) -> Result<NbModel> {
    if !(params.alpha > 0.0 && params.alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be positive, got {}",
            params.alpha
        )));
    }
    let classes = match &frame.schema().task {
        Task::Classification { classes } => classes.clone(),
        Task::Regression => {
            return Err(Error::InvalidArgument(
                "naive Bayes needs a classification frame".into(),
            ))
        }
    };
    let n = frame.n_rows();
    if n == 0 {
        return Err(Error::Data("cannot fit naive Bayes on zero rows".into()));
    }
    let k = classes.len();
    let y: Vec<usize> = frame.target().iter().map(|t| *t as usize).collect();
    let mut counts = vec![0usize; k];
    for &c in &y {
        counts[c] += 1;
    }
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let features = frame
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, spec)| match &spec.kind {
            FeatureKind::Categorical { levels } => {
                let slots = levels.len() + 1;
                let mut freq = vec![vec![0usize; slots]; k];
                for (i, &c) in y.iter().enumerate() {
                    let v = frame.value(i, j);
                    let slot = if is_missing(v, spec.missing_code) {
                        Some(levels.len())
                    } else if v >= 0.0 && (v as usize) < levels.len() && v.fract() == 0.0 {
                        Some(v as usize)
                    } else {
                        None
                    };
                    if let Some(s) = slot {
                        freq[c][s] += 1;
                    }
                }
                let mut log_probs = Vec::with_capacity(k);
                let mut log_floor = Vec::with_capacity(k);
                for row in &freq {
                    let total = row.iter().sum::<usize>() as f64 + params.alpha * slots as f64;
                    log_probs.push(
                        row.iter()
                            .map(|&f| ((f as f64 + params.alpha) / total).ln())
                            .collect(),
                    );
                    log_floor.push((params.alpha / total).ln());
                }
                NbFeature::Categorical {
                    n_levels: levels.len(),
                    missing_code: spec.missing_code,
                    log_probs,
                    log_floor,
                }
            }
            FeatureKind::Numeric => {
                let present: Vec<(usize, f64)> = y
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (c, frame.value(i, j)))
                    .filter(|(_, v)| !is_missing(*v, spec.missing_code))
                    .collect();
                let pooled: Vec<f64> = present.iter().map(|(_, v)| *v).collect();
                let (pooled_mean, pooled_var) = mean_var(&pooled);
                let eps = (params.var_smoothing * pooled_var).max(1e-12);
                let mut mean = Vec::with_capacity(k);
                let mut var = Vec::with_capacity(k);
                for c in 0..k {
                    let vals: Vec<f64> = present
                        .iter()
                        .filter(|(cc, _)| *cc == c)
                        .map(|(_, v)| *v)
                        .collect();
                    let (m, v) = if vals.is_empty() {
                        (pooled_mean, pooled_var)
                    } else {
                        mean_var(&vals)
                    };
                    mean.push(m);
                    var.push(v + eps);
                }
                NbFeature::Gaussian {
                    missing_code: spec.missing_code,
                    mean,
                    var,
                }
            }
        })
        .collect();

    Ok(NbModel {
        params,
        classes,
        priors,
        features,
        feature_hash: frame.feature_hash(),
    })
}

impl NbModel {
    /// Unnormalized log posterior per class.
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.priors.iter().map(|p| p.ln()).collect();
        for (feature, &v) in self.features.iter().zip(row) {
            match feature {
                NbFeature::Categorical {
                    n_levels,
                    missing_code,
                    log_probs,
                    log_floor,
                } => {
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += if is_missing(v, *missing_code) {
                            log_probs[c][*n_levels]
                        } else if v >= 0.0 && (v as usize) < *n_levels && v.fract() == 0.0 {
                            log_probs[c][v as usize]
                        } else {
                            log_floor[c]
                        };
                    }
                }
                NbFeature::Gaussian {
                    missing_code,
                    mean,
                    var,
                } => {
                    if is_missing(v, *missing_code) {
                        continue;
                    }
                    for (c, o) in out.iter_mut().enumerate() {
                        let d = v - mean[c];
                        *o += -0.5 * (2.0 * std::f64::consts::PI * var[c]).ln() - d * d / (2.0 * var[c]);
                    }
                }
            }
        }
        out
    }

    /// Posterior class probabilities, normalized with log-sum-exp.
    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let jll = self.joint_log_likelihood(row);
        let max = jll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = jll.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    pub fn predict_proba(&self, frame: &Frame) -> Result<Vec<Vec<f64>>> {
        self.check(frame)?;
        Ok(frame.rows().map(|r| self.predict_proba_row(r)).collect())
    }

    /// Most probable class code per row; ties go to the smaller code.
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        self.check(frame)?;
        Ok(frame
            .rows()
            .map(|r| {
                let jll = self.joint_log_likelihood(r);
                let mut best = 0;
                for (c, l) in jll.iter().enumerate() {
                    if *l > jll[best] {
                        best = c;
                    }
                }
                best as f64
            })
            .collect())
    }

    fn check(&self, frame: &Frame) -> Result<()> {
        if frame.feature_hash() != self.feature_hash {
            return Err(Error::SchemaHash {
                model: self.feature_hash.clone(),
                frame: frame.feature_hash(),
            });
        }
        Ok(())
    }
}

/// Posterior for a single row of `frame`.
pub fn nb_predict(model: &NbModel, frame: &Frame, row: usize) -> Result<Vec<f64>> {
    model.check(frame)?;
    Ok(model.predict_proba_row(frame.row(row)))
}
