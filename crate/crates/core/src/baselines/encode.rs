//! Dense design matrices for the linear and nearest-neighbour models.
//!
//! Categorical features are one-hot expanded (one column per level plus one
//! for the missing code). Numeric features with a missing code get an
//! indicator column and have missing cells replaced by the training mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FeatureKind, Frame, Schema};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape");
        Self { data, rows, cols }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EncodedColumn {
    Value { feature: usize, fill: f64 },
    MissingIndicator { feature: usize },
    Level { feature: usize, code: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<EncodedColumn>,
    pub names: Vec<String>,
    pub feature_hash: String,
    pub n_features: usize,
}

impl Encoder {
    pub fn fit(frame: &Frame) -> Self {
        let schema: &Schema = frame.schema();
        let mut columns = Vec::new();
        let mut names = Vec::new();
        for (j, spec) in schema.features.iter().enumerate() {
            match &spec.kind {
                FeatureKind::Numeric => {
                    let present: Vec<f64> = (0..frame.n_rows())
                        .map(|i| frame.value(i, j))
                        .filter(|v| !spec.is_missing(*v))
                        .collect();
                    let fill = if present.is_empty() {
                        0.0
                    } else {
                        present.iter().sum::<f64>() / present.len() as f64
                    };
                    columns.push(EncodedColumn::Value { feature: j, fill });
                    names.push(spec.name.clone());
                    if spec.missing_code.is_some() {
                        columns.push(EncodedColumn::MissingIndicator { feature: j });
                        names.push(format!("{}=missing", spec.name));
                    }
                }
                FeatureKind::Categorical { levels } => {
                    for (code, level) in levels.iter().enumerate() {
                        columns.push(EncodedColumn::Level {
                            feature: j,
                            code: code as f64,
                        });
                        names.push(format!("{}={level}", spec.name));
                    }
                    columns.push(EncodedColumn::MissingIndicator { feature: j });
                    names.push(format!("{}=missing", spec.name));
                }
            }
        }
        Self {
            columns,
            names,
            feature_hash: frame.feature_hash(),
            n_features: frame.n_features(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn encode_row_into(&self, row: &[f64], missing: &[Option<f64>], out: &mut Vec<f64>) {
        for col in &self.columns {
            out.push(match *col {
                EncodedColumn::Value { feature, fill } => {
                    let v = row[feature];
                    if missing[feature] == Some(v) || v.is_nan() {
                        fill
                    } else {
                        v
                    }
                }
                EncodedColumn::MissingIndicator { feature } => {
                    let v = row[feature];
                    f64::from(u8::from(missing[feature] == Some(v) || v.is_nan()))
                }
                EncodedColumn::Level { feature, code } => f64::from(u8::from(row[feature] == code)),
            });
        }
    }

    pub fn encode(&self, frame: &Frame) -> Result<Matrix> {
        if frame.feature_hash() != self.feature_hash {
            return Err(Error::SchemaHash {
                model: self.feature_hash.clone(),
                frame: frame.feature_hash(),
            });
        }
        let missing: Vec<Option<f64>> =
            frame.schema().features.iter().map(|f| f.missing_code).collect();
        let mut data = Vec::with_capacity(frame.n_rows() * self.width());
        for row in frame.rows() {
            self.encode_row_into(row, &missing, &mut data);
        }
        Ok(Matrix::new(data, frame.n_rows(), self.width()))
    }
}

/// Column-wise z-scoring; constant columns get scale 1 and become zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows as f64;
        let mut mean = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant = Vec::with_capacity(x.cols);
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // relative threshold so that rounding noise on a constant column is ignored
                let is_const = !(sd > 1e-12 * m.abs().max(1.0));
                constant.push(is_const);
                if is_const {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self {
            mean,
            scale,
            constant,
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut data = x.data.clone();
        for row in data.chunks_exact_mut(x.cols.max(1)) {
            self.transform_row_in_place(row);
        }
        Matrix::new(data, x.rows, x.cols)
    }

    pub fn transform_row_in_place(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if self.constant[j] {
                0.0
            } else {
                (*v - self.mean[j]) / self.scale[j]
            };
        }
    }
}
