//! Seeded holdout and k-fold splits, and grid selection of baseline
//! hyperparameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::Encoder;
use super::knn::{KnnModel, KnnParams};
use super::linear::{lasso_fit_matrix, ridge_fit_matrix, Penalty};
use super::metrics::{precision, rmse, Averaging};
use crate::error::{Error, Result};
use crate::frame::{Frame, Task};

pub const LAMBDA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
pub const K_GRID: [usize; 4] = [1, 5, 10, 25];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffled holdout; both halves are returned in ascending row order.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Data(format!(
            "{n} rows cannot be split with test fraction {test_fraction}"
        )));
    }
    let idx = shuffled(n, seed);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "cannot make {folds} folds from {n} rows"
        )));
    }
    let idx = shuffled(n, seed);
    Ok((0..folds)
        .map(|f| {
            let lo = f * n / folds;
            let hi = (f + 1) * n / folds;
            let mut test = idx[lo..hi].to_vec();
            let mut train: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
            test.sort_unstable();
            train.sort_unstable();
            Split { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult<T> {
    pub best: T,
    /// Mean validation score per candidate, in grid order.
    pub scores: Vec<(T, f64)>,
    /// True when lower scores are better.
    pub minimize: bool,
}

fn pick<T: Copy>(grid: &[T], means: Vec<f64>, minimize: bool) -> GridResult<T> {
    let mut best = 0;
    for (i, m) in means.iter().enumerate() {
        let better = if minimize { *m < means[best] } else { *m > means[best] };
        if better {
            best = i;
        }
    }
    GridResult {
        best: grid[best],
        scores: grid.iter().copied().zip(means).collect(),
        minimize,
    }
}

fn column_means(per_fold: &[Vec<f64>], width: usize) -> Vec<f64> {
    (0..width)
        .map(|j| per_fold.iter().map(|f| f[j]).sum::<f64>() / per_fold.len() as f64)
        .collect()
}

/// Chooses λ by k-fold validation RMSE.
pub fn select_lambda(
    frame: &Frame,
    penalty: Penalty,
    grid: &[f64],
    folds: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<GridResult<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    let splits = kfold(frame.n_rows(), folds, seed)?;
    let per_fold = splits
        .par_iter()
        .map(|s| {
            let train = frame.subset(&s.train);
            let test = frame.subset(&s.test);
            let enc = Encoder::fit(&train);
            let xtr = enc.encode(&train)?;
            let xte = enc.encode(&test)?;
            grid.iter()
                .map(|&l| {
                    let fit = match penalty {
                        Penalty::L2 => ridge_fit_matrix(&xtr, train.target(), l)?,
                        Penalty::L1 => lasso_fit_matrix(&xtr, train.target(), l, tol, max_iter)?,
                    };
                    let pred: Vec<f64> = (0..xte.rows)
                        .map(|i| {
                            fit.intercept
                                + xte
                                    .row(i)
                                    .iter()
                                    .zip(&fit.coefficients)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>()
                        })
                        .collect();
                    rmse(&pred, test.target())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pick(grid, column_means(&per_fold, grid.len()), true))
}

/// Chooses k by validation RMSE (regression) or macro precision
/// (classification). Candidates larger than a training fold are skipped.
pub fn select_k(
    frame: &Frame,
    params: &KnnParams,
    grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<GridResult<usize>> {
    let splits = kfold(frame.n_rows(), folds, seed)?;
    let min_train = splits.iter().map(|s| s.train.len()).min().unwrap_or(0);
    let grid: Vec<usize> = grid.iter().copied().filter(|&k| k >= 1 && k <= min_train).collect();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("no feasible k in grid".into()));
    }
    let classification = matches!(frame.schema().task, Task::Classification { .. });
    let per_fold = splits
        .par_iter()
        .map(|s| {
            let train = frame.subset(&s.train);
            let test = frame.subset(&s.test);
            let model = KnnModel::fit(&train, KnnParams { k: grid[0], ..params.clone() })?;
            model
                .predict_multi_k(&test, &grid)?
                .iter()
                .map(|pred| {
                    if classification {
                        precision(pred, test.target(), Averaging::Macro).map(|r| r.value)
                    } else {
                        rmse(pred, test.target())
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pick(&grid, column_means(&per_fold, grid.len()), !classification))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_partitions_rows() {
        let s = train_test_split(100, 0.2, 7).unwrap();
        assert_eq!(s.test.len(), 20);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, train_test_split(100, 0.2, 7).unwrap());
        assert_ne!(s, train_test_split(100, 0.2, 8).unwrap());
    }

    #[test]
    fn folds_cover_each_row_once() {
        let folds = kfold(23, 5, 1).unwrap();
        let mut seen = [0; 23];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            assert_eq!(f.train.len() + f.test.len(), 23);
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(kfold(3, 5, 1).is_err());
    }

    #[test]
    fn lambda_selection_prefers_small_penalty_on_clean_data() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i * 13 % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1]).collect();
        let f = Frame::from_rows(&["a", "b"], &rows, y).unwrap();
        let r = select_lambda(&f, Penalty::L2, &LAMBDA_GRID, 5, 3, 1e-8, 1000).unwrap();
        assert_eq!(r.best, 1e-3);
        assert_eq!(r.scores.len(), 5);
    }
}
