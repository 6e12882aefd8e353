//! Histogram-based gradient-boosted decision trees with leaf-wise growth,
//! for squared-error regression and multi-class softmax.
//!
//! Predictions in margin space are `base + learning_rate * Σ leaf`, with
//! trees for a softmax model stored round-major (class `t % K` owns tree
//! `t`).

mod bin;
mod grow;
mod tree;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bin::{apply_bins, bin_features, fit_bins, quantile_edges, BinnedData, FeatureBins, MAX_BINS_LIMIT};
pub use tree::{Node, Split, Tree};

use crate::error::{Error, Result};
use crate::frame::{Frame, Schema, Task};
use grow::{grow_tree, GrowParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

const MIN_HESSIAN: f64 = 1e-16;
const MIN_PRIOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub num_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_child_weight: f64,
    pub min_data_in_leaf: usize,
    pub l2_leaf_penalty: f64,
    pub min_split_gain: f64,
    pub max_bins: usize,
    pub feature_fraction: f64,
    pub bagging_fraction: f64,
    pub seed: u64,
    /// Fit on `ln(1 + y)` and report predictions back on the original scale.
    pub log1p_target: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            num_rounds: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            min_child_weight: 1.0,
            min_data_in_leaf: 20,
            l2_leaf_penalty: 1.0,
            min_split_gain: 0.0,
            max_bins: 255,
            feature_fraction: 1.0,
            bagging_fraction: 1.0,
            seed: 0,
            log1p_target: false,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.num_rounds == 0 {
            return bad("num_rounds must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_leaves == 0 {
            return bad("max_leaves must be positive");
        }
        if !(self.min_child_weight >= 0.0) || !(self.l2_leaf_penalty >= 0.0) || !(self.min_split_gain >= 0.0) {
            return bad("min_child_weight, l2_leaf_penalty and min_split_gain must be non-negative");
        }
        if !(2..=MAX_BINS_LIMIT).contains(&self.max_bins) {
            return bad("max_bins must lie in 2..=255");
        }
        for f in [self.feature_fraction, self.bagging_fraction] {
            if !(f > 0.0 && f <= 1.0) {
                return bad("feature and bagging fractions must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Objective {
    SquaredError,
    Softmax { n_classes: usize },
}

impl Objective {
    pub fn n_outputs(&self) -> usize {
        match self {
            Objective::SquaredError => 1,
            Objective::Softmax { n_classes } => *n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub version: u32,
    pub objective: Objective,
    /// One entry per output (class) in margin space.
    pub base_score: Vec<f64>,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub bins: Vec<FeatureBins>,
    pub schema: Schema,
    pub feature_hash: String,
    pub params: TrainParams,
    /// Training loss after each round (MSE or mean cross-entropy).
    pub train_loss: Vec<f64>,
}

pub fn softmax(margins: &[f64]) -> Vec<f64> {
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = margins.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn loss(objective: Objective, margins: &[f64], y: &[f64]) -> f64 {
    match objective {
        Objective::SquaredError => {
            margins.iter().zip(y).map(|(m, t)| (m - t) * (m - t)).sum::<f64>() / y.len() as f64
        }
        Objective::Softmax { n_classes } => {
            margins
                .chunks_exact(n_classes)
                .zip(y)
                .map(|(m, t)| -softmax(m)[*t as usize].max(f64::MIN_POSITIVE).ln())
                .sum::<f64>()
                / y.len() as f64
        }
    }
}

pub fn fit(frame: &Frame, params: &TrainParams) -> Result<Ensemble> {
    params.validate()?;
    let n = frame.n_rows();
    if n == 0 {
        return Err(Error::Data("cannot train on zero rows".into()));
    }
    let objective = match &frame.schema().task {
        Task::Regression => Objective::SquaredError,
        Task::Classification { classes } => Objective::Softmax { n_classes: classes.len() },
    };
    let k = objective.n_outputs();
    let y: Vec<f64> = match objective {
        Objective::SquaredError if params.log1p_target => {
            if let Some(bad) = frame.target().iter().find(|t| **t <= -1.0) {
                return Err(Error::Data(format!("log1p target needs y > -1, found {bad}")));
            }
            frame.target().iter().map(|t| t.ln_1p()).collect()
        }
        Objective::SquaredError => frame.target().to_vec(),
        Objective::Softmax { n_classes } => {
            if let Some(bad) = frame
                .target()
                .iter()
                .find(|t| t.fract() != 0.0 || **t < 0.0 || **t >= n_classes as f64)
            {
                return Err(Error::Data(format!("class label {bad} outside 0..{n_classes}")));
            }
            frame.target().to_vec()
        }
    };
    let base_score: Vec<f64> = match objective {
        Objective::SquaredError => vec![y.iter().sum::<f64>() / n as f64],
        Objective::Softmax { n_classes } => {
            let mut counts = vec![0usize; n_classes];
            for t in &y {
                counts[*t as usize] += 1;
            }
            counts
                .iter()
                .map(|&c| (c as f64 / n as f64).max(MIN_PRIOR).ln())
                .collect()
        }
    };

    let bins = fit_bins(frame, params.max_bins)?;
    let data = apply_bins(frame, &bins);
    let grow = GrowParams {
        max_leaves: params.max_leaves,
        min_child_weight: params.min_child_weight,
        min_data_in_leaf: params.min_data_in_leaf.max(1),
        l2: params.l2_leaf_penalty,
        min_split_gain: params.min_split_gain,
    };
    let p = frame.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut margins: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut trees = Vec::with_capacity(params.num_rounds * k);
    let mut train_loss = Vec::with_capacity(params.num_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..params.num_rounds {
        let rows: Vec<u32> = if params.bagging_fraction < 1.0 {
            let m = ((n as f64 * params.bagging_fraction).round() as usize).max(1);
            let mut r: Vec<u32> = sample(&mut rng, n, m).into_iter().map(|i| i as u32).collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        // gradients for every class come from the margins at round start
        let probs: Vec<Vec<f64>> = match objective {
            Objective::Softmax { .. } => margins.chunks_exact(k).map(softmax).collect(),
            Objective::SquaredError => Vec::new(),
        };
        let mut round_trees = Vec::with_capacity(k);
        for c in 0..k {
            for i in 0..n {
                match objective {
                    Objective::SquaredError => {
                        grad[i] = margins[i] - y[i];
                        hess[i] = 1.0;
                    }
                    Objective::Softmax { .. } => {
                        let pc = probs[i][c];
                        let indicator = if y[i] as usize == c { 1.0 } else { 0.0 };
                        grad[i] = pc - indicator;
                        hess[i] = (pc * (1.0 - pc)).max(MIN_HESSIAN);
                    }
                }
            }
            let allowed: Vec<bool> = if params.feature_fraction < 1.0 {
                let m = ((p as f64 * params.feature_fraction).round() as usize).clamp(1, p);
                let mut mask = vec![false; p];
                for j in sample(&mut rng, p, m) {
                    mask[j] = true;
                }
                mask
            } else {
                vec![true; p]
            };
            round_trees.push(grow_tree(&data, &grad, &hess, rows.clone(), &allowed, &grow));
        }
        for (c, tree) in round_trees.iter().enumerate() {
            let updates: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| tree.leaf_value(frame.row(i), &bins))
                .collect();
            for (i, u) in updates.into_iter().enumerate() {
                margins[i * k + c] += params.learning_rate * u;
            }
        }
        trees.extend(round_trees);
        train_loss.push(loss(objective, &margins, &y));
    }

    Ok(Ensemble {
        version: MODEL_FORMAT_VERSION,
        objective,
        base_score,
        learning_rate: params.learning_rate,
        trees,
        bins,
        schema: frame.schema().clone(),
        feature_hash: frame.feature_hash(),
        params: params.clone(),
        train_loss,
    })
}

impl Ensemble {
    pub fn n_outputs(&self) -> usize {
        self.objective.n_outputs()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Output (class) index that tree `t` contributes to.
    pub fn tree_output(&self, t: usize) -> usize {
        t % self.n_outputs()
    }

    pub fn check_frame(&self, frame: &Frame) -> Result<()> {
        self.schema.check_compatible(frame.schema())
    }

    /// Raw margins: `base + learning_rate * Σ leaf` per output.
    pub fn predict_margin_row(&self, row: &[f64]) -> Vec<f64> {
        let k = self.n_outputs();
        let mut acc = self.base_score.clone();
        for (t, tree) in self.trees.iter().enumerate() {
            acc[t % k] += self.learning_rate * tree.leaf_value(row, &self.bins);
        }
        acc
    }

    /// Regression value on the original target scale, or class
    /// probabilities for softmax.
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let m = self.predict_margin_row(row);
        match self.objective {
            Objective::SquaredError if self.params.log1p_target => vec![m[0].exp_m1()],
            Objective::SquaredError => m,
            Objective::Softmax { .. } => softmax(&m),
        }
    }

    pub fn predict_margin(&self, frame: &Frame) -> Result<Vec<Vec<f64>>> {
        self.check_frame(frame)?;
        Ok((0..frame.n_rows())
            .into_par_iter()
            .map(|i| self.predict_margin_row(frame.row(i)))
            .collect())
    }

    pub fn predict_proba(&self, frame: &Frame) -> Result<Vec<Vec<f64>>> {
        self.check_frame(frame)?;
        Ok((0..frame.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(frame.row(i)))
            .collect())
    }

    /// Point predictions: the regression value or the most probable class
    /// code (ties to the smaller code).
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        Ok(self
            .predict_proba(frame)?
            .into_iter()
            .map(|p| match self.objective {
                Objective::SquaredError => p[0],
                Objective::Softmax { .. } => {
                    let mut best = 0;
                    for (c, v) in p.iter().enumerate() {
                        if *v > p[best] {
                            best = c;
                        }
                    }
                    best as f64
                }
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Ensemble = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                model.version
            )));
        }
        if model.schema.feature_hash() != model.feature_hash {
            return Err(Error::Invariant("model feature hash does not match its schema".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FeatureSpec;
    use rand::Rng;

    fn regression(rows: &[Vec<f64>], y: Vec<f64>) -> Frame {
        let names: Vec<String> = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        Frame::from_rows(&names, rows, y).unwrap()
    }

    fn small_params() -> TrainParams {
        TrainParams {
            min_data_in_leaf: 1,
            ..TrainParams::default()
        }
    }

    /// Independent walk used as the traversal oracle.
    fn oracle(model: &Ensemble, row: &[f64]) -> Vec<f64> {
        let k = model.n_outputs();
        let mut acc = model.base_score.clone();
        for (t, tree) in model.trees.iter().enumerate() {
            let mut i = 0;
            let value = loop {
                match &tree.nodes[i] {
                    Node::Leaf { value, .. } => break *value,
                    Node::Internal { feature, split, default_left, left, right, .. } => {
                        let v = row[*feature];
                        let left_side = if model.bins[*feature].is_missing(v) {
                            *default_left
                        } else {
                            match split {
                                Split::Numeric { threshold } => v <= *threshold,
                                Split::Categorical { left_levels } => left_levels.contains(&(v as u32)),
                            }
                        };
                        i = if left_side { *left } else { *right };
                    }
                }
            };
            acc[t % k] += model.learning_rate * value;
        }
        acc
    }

    fn check_covers(tree: &Tree) {
        for node in &tree.nodes {
            match node {
                Node::Leaf { cover, .. } => assert!(*cover > 0.0),
                Node::Internal { left, right, cover, .. } => {
                    assert_eq!(tree.nodes[*left].cover() + tree.nodes[*right].cover(), *cover);
                }
            }
        }
    }

    #[test]
    fn constant_target_gives_constant_model() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let f = regression(&rows, vec![0.7; 50]);
        let m = fit(&f, &TrainParams { num_rounds: 5, ..small_params() }).unwrap();
        assert!(m.trees.iter().all(|t| t.n_leaves() == 1));
        for p in m.predict(&f).unwrap() {
            assert!((p - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn one_leaf_one_round_is_mean() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let mean = y.iter().sum::<f64>() / 10.0;
        let params = TrainParams { num_rounds: 1, learning_rate: 1.0, max_leaves: 1, ..small_params() };
        let m = fit(&regression(&rows, y), &params).unwrap();
        assert!((m.predict_row(&[3.0])[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn stump_prediction_is_base_plus_scaled_leaf() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let params = TrainParams { num_rounds: 1, max_leaves: 2, l2_leaf_penalty: 0.0, ..small_params() };
        let m = fit(&regression(&rows, y), &params).unwrap();
        let right = match &m.trees[0].nodes[0] {
            Node::Internal { right, .. } => *right,
            _ => panic!("expected a split"),
        };
        let Node::Leaf { value, .. } = m.trees[0].nodes[right] else { panic!() };
        assert_eq!(m.predict_row(&[1.0])[0], m.base_score[0] + 0.1 * value);
        assert!((value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn xor_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| f64::from(u8::from((r[0] > 0.5) != (r[1] > 0.5))))
            .collect();
        let f = regression(&rows, y.clone());
        let m = fit(&f, &TrainParams { num_rounds: 50, ..TrainParams::default() }).unwrap();
        let pred = m.predict(&f).unwrap();
        let rmse = (pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 400.0).sqrt();
        assert!(rmse < 0.1, "rmse {rmse}");
        assert!(m.trees.iter().any(|t| t.depth() >= 2));
    }

    #[test]
    fn loss_non_increasing_and_covers_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random_range(0..3) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 6.0).sin() + r[1] * r[2]).collect();
        let m = fit(&regression(&rows, y), &TrainParams { num_rounds: 30, ..TrainParams::default() }).unwrap();
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        m.trees.iter().for_each(check_covers);
    }

    #[test]
    fn softmax_probabilities_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let schema = Schema {
            features: vec![
                FeatureSpec::numeric_with_missing("a"),
                FeatureSpec::categorical("c", vec!["x".into(), "y".into(), "z".into(), "w".into()]),
            ],
            target: "label".into(),
            task: Task::Classification { classes: vec!["0".into(), "1".into(), "2".into()] },
        };
        let n = 300;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a = if rng.random::<f64>() < 0.1 { -1.0 } else { rng.random::<f64>() * 10.0 };
            let c = if rng.random::<f64>() < 0.1 { -1.0 } else { rng.random_range(0..4) as f64 };
            data.extend([a, c]);
            let label = if c == 1.0 || c == 3.0 { 2.0 } else if a > 5.0 { 1.0 } else { 0.0 };
            y.push(label);
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        let f = Frame::new(schema, data, y, ids).unwrap();
        let m = fit(&f, &TrainParams { num_rounds: 20, ..TrainParams::default() }).unwrap();
        assert_eq!(m.trees.len(), 60);
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for i in 0..n {
            let p = m.predict_row(f.row(i));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(m.predict_margin_row(f.row(i)), oracle(&m, f.row(i)));
        }
        m.trees.iter().for_each(check_covers);
        let acc = m.predict(&f).unwrap().iter().zip(f.target()).filter(|(a, b)| a == b).count();
        assert!(acc as f64 / n as f64 > 0.95);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 3.3 - r[1]).collect();
        let f = regression(&rows, y);
        let m = fit(&f, &TrainParams { num_rounds: 50, ..small_params() }).unwrap();
        let back = Ensemble::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for i in 0..100 {
            assert_eq!(
                back.predict_row(f.row(i))[0].to_bits(),
                m.predict_row(f.row(i))[0].to_bits()
            );
            assert_eq!(m.predict_margin_row(f.row(i)), oracle(&m, f.row(i)));
        }
    }

    #[test]
    fn schema_mismatch_names_feature() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 1.0]).collect();
        let f = regression(&rows, (0..30).map(f64::from).collect());
        let m = fit(&f, &TrainParams { num_rounds: 2, ..small_params() }).unwrap();
        let other = Frame::from_rows(&["x0", "zz"], &rows, vec![0.0; 30]).unwrap();
        let err = m.predict(&other).unwrap_err().to_string();
        assert!(err.contains("x1"), "{err}");
    }

    #[test]
    fn deterministic_with_bagging() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[1] * r[2]).collect();
        let f = regression(&rows, y);
        let params = TrainParams { num_rounds: 20, bagging_fraction: 0.7, feature_fraction: 0.67, seed: 4, ..TrainParams::default() };
        assert_eq!(fit(&f, &params).unwrap(), fit(&f, &params).unwrap());
    }
}
