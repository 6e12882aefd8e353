//! Brute-force k-nearest-neighbours on the encoded (and optionally
//! z-scored) design.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::{Encoder, Matrix, Standardizer};
use crate::error::{Error, Result};
use crate::frame::{Frame, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnTask {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub weighting: Weighting,
    pub standardize: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 10,
            weighting: Weighting::Uniform,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` closest rows of `train` to `query`, ordered by distance with
/// ties broken by row index.
pub fn nearest(train: &[f64], cols: usize, query: &[f64], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = train
        .chunks_exact(cols.max(1))
        .enumerate()
        .map(|(i, row)| Neighbor {
            distance: squared_distance(row, query),
            index: i,
        })
        .collect();
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance_then_index);
        all.truncate(k);
    }
    all.sort_by(by_distance_then_index);
    for n in &mut all {
        n.distance = n.distance.sqrt();
    }
    all
}

/// Aggregates neighbour targets into a prediction. For classification the
/// result is the winning class code; ties go to the smallest code.
pub fn aggregate(
    neighbors: &[Neighbor],
    targets: &[f64],
    task: KnnTask,
    weighting: Weighting,
) -> f64 {
    let exact: Vec<&Neighbor> = neighbors.iter().filter(|n| n.distance == 0.0).collect();
    let (used, weights): (Vec<&Neighbor>, Vec<f64>) = match weighting {
        Weighting::Uniform => (neighbors.iter().collect(), vec![1.0; neighbors.len()]),
        Weighting::InverseDistance if !exact.is_empty() => {
            let w = vec![1.0; exact.len()];
            (exact, w)
        }
        Weighting::InverseDistance => (
            neighbors.iter().collect(),
            neighbors.iter().map(|n| 1.0 / n.distance).collect(),
        ),
    };
    match task {
        KnnTask::Regression => {
            let total: f64 = weights.iter().sum();
            used.iter()
                .zip(&weights)
                .map(|(n, w)| w * targets[n.index])
                .sum::<f64>()
                / total
        }
        KnnTask::Classification { n_classes } => {
            let mut votes = vec![0.0; n_classes];
            for (n, w) in used.iter().zip(&weights) {
                votes[targets[n.index] as usize] += w;
            }
            let mut best = 0;
            for (c, v) in votes.iter().enumerate() {
                if *v > votes[best] {
                    best = c;
                }
            }
            best as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub task: KnnTask,
    pub encoder: Encoder,
    pub scaler: Option<Standardizer>,
    pub targets: Vec<f64>,
    /// Row-major prepared training design.
    pub design: Vec<f64>,
}

impl KnnModel {
    pub fn fit(frame: &Frame, params: KnnParams) -> Result<Self> {
        if params.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if params.k > frame.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "k = {} exceeds {} training rows",
                params.k,
                frame.n_rows()
            )));
        }
        let task = match &frame.schema().task {
            Task::Regression => KnnTask::Regression,
            Task::Classification { classes } => KnnTask::Classification {
                n_classes: classes.len(),
            },
        };
        let encoder = Encoder::fit(frame);
        let x = encoder.encode(frame)?;
        let scaler = params.standardize.then(|| Standardizer::fit(&x));
        let x = match &scaler {
            Some(s) => s.transform(&x),
            None => x,
        };
        Ok(Self {
            params,
            task,
            encoder,
            scaler,
            design: x.data,
            targets: frame.target().to_vec(),
        })
    }

    fn neighbors(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        nearest(&self.design, self.encoder.width(), query, k)
    }

    /// Encodes and scales `frame` into the model's distance space.
    pub fn prepare(&self, frame: &Frame) -> Result<Matrix> {
        let x = self.encoder.encode(frame)?;
        Ok(match &self.scaler {
            Some(s) => s.transform(&x),
            None => x,
        })
    }

    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        let q = self.prepare(frame)?;
        Ok((0..q.rows)
            .into_par_iter()
            .map(|i| {
                let nb = self.neighbors(q.row(i), self.params.k);
                aggregate(&nb, &self.targets, self.task, self.params.weighting)
            })
            .collect())
    }

    /// Predictions for several `k` at once from a single neighbour search.
    pub fn predict_multi_k(&self, frame: &Frame, ks: &[usize]) -> Result<Vec<Vec<f64>>> {
        let kmax = ks.iter().copied().max().unwrap_or(0);
        if kmax > self.targets.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {kmax} exceeds {} training rows",
                self.targets.len()
            )));
        }
        let q = self.prepare(frame)?;
        let per_row: Vec<Vec<f64>> = (0..q.rows)
            .into_par_iter()
            .map(|i| {
                let nb = self.neighbors(q.row(i), kmax);
                ks.iter()
                    .map(|&k| aggregate(&nb[..k], &self.targets, self.task, self.params.weighting))
                    .collect()
            })
            .collect();
        Ok((0..ks.len())
            .map(|j| per_row.iter().map(|r| r[j]).collect())
            .collect())
    }
}

/// Single-query convenience wrapper around a fitted model.
pub fn knn_predict(model: &KnnModel, query: &Frame, row: usize) -> Result<f64> {
    let q = model.prepare(&query.subset(&[row]))?;
    let nb = model.neighbors(q.row(0), model.params.k);
    Ok(aggregate(&nb, &model.targets, model.task, model.params.weighting))
}
