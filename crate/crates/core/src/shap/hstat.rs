//! Friedman's H-statistic from partial dependence over a sample.
//!
//! Partial dependence `PD_S(x_S) = mean_b f(x_S, x_{b,C})` is evaluated at
//! every sample point. Instead of the quadratic double loop, each leaf is
//! split into the path conditions on `S` (checked at the evaluation point)
//! and on the complement (averaged once over the sample). The result is
//! the same sum, regrouped.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, Node, Tree};

pub const DEFAULT_H_SAMPLE: usize = 500;

/// Denominators below this (per sample row) make H degenerate.
const H_DEGENERATE_EPS: f64 = 1e-12;

/// Seeded sample of at most `size` row indices, ascending.
pub fn sample_rows(n_rows: usize, size: usize, seed: u64) -> Vec<usize> {
    if n_rows <= size {
        return (0..n_rows).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n_rows, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Root-to-leaf path: `(node, child taken)` per step, plus the leaf value.
struct LeafPath {
    steps: Vec<(usize, usize)>,
    value: f64,
}

fn leaf_paths(tree: &Tree) -> Vec<LeafPath> {
    fn walk(tree: &Tree, i: usize, steps: &mut Vec<(usize, usize)>, out: &mut Vec<LeafPath>) {
        match &tree.nodes[i] {
            Node::Leaf { value, .. } => out.push(LeafPath {
                steps: steps.clone(),
                value: *value,
            }),
            Node::Internal { left, right, .. } => {
                for child in [*left, *right] {
                    steps.push((i, child));
                    walk(tree, child, steps, out);
                    steps.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, 0, &mut Vec::new(), &mut out);
    out
}

fn step_feature(tree: &Tree, node: usize) -> usize {
    match &tree.nodes[node] {
        Node::Internal { feature, .. } => *feature,
        Node::Leaf { .. } => unreachable!("path steps start at internal nodes"),
    }
}

/// Partial dependence on the feature set `subset`, evaluated at each
/// sample row, in margin space for `output`.
pub fn partial_dependence(ensemble: &Ensemble, rows: &[Vec<f64>], subset: &[usize], output: usize) -> Vec<f64> {
    let n = rows.len();
    let in_s = |f: usize| subset.contains(&f);
    let mut pd = vec![ensemble.base_score[output]; n];
    for (t, tree) in ensemble.trees.iter().enumerate() {
        if ensemble.tree_output(t) != output {
            continue;
        }
        let paths = leaf_paths(tree);
        let contributions: Vec<Vec<f64>> = paths
            .par_iter()
            .map(|leaf| {
                let follows = |row: &[f64], want_s: bool| {
                    leaf.steps.iter().all(|&(node, child)| {
                        in_s(step_feature(tree, node)) != want_s
                            || tree.route(node, row, &ensemble.bins) == Some(child)
                    })
                };
                let share = rows.iter().filter(|r| follows(r, false)).count() as f64 / n as f64;
                if share == 0.0 {
                    return vec![0.0; n];
                }
                rows.iter()
                    .map(|r| if follows(r, true) { leaf.value * share } else { 0.0 })
                    .collect()
            })
            .collect();
        for c in contributions {
            for (p, v) in pd.iter_mut().zip(c) {
                *p += ensemble.learning_rate * v;
            }
        }
    }
    pd
}

fn centered(mut v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HStatistic {
    pub value: f64,
    /// The joint partial dependence was numerically flat; value reported as 0.
    pub degenerate: bool,
    /// The raw ratio exceeded 1 and was clamped.
    pub clamped: bool,
}

fn h_from_pd(joint: &[f64], a: &[f64], b: &[f64]) -> HStatistic {
    let n = joint.len() as f64;
    let den: f64 = joint.iter().map(|x| x * x).sum();
    if den <= H_DEGENERATE_EPS * n {
        return HStatistic {
            value: 0.0,
            degenerate: true,
            clamped: false,
        };
    }
    let num: f64 = joint
        .iter()
        .zip(a)
        .zip(b)
        .map(|((j, x), y)| (j - x - y).powi(2))
        .sum();
    let h = (num / den).sqrt();
    HStatistic {
        value: h.min(1.0),
        degenerate: false,
        clamped: h > 1.0,
    }
}

fn check_sample(ensemble: &Ensemble, rows: &[Vec<f64>], features: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("H-statistic needs a non-empty sample".into()));
    }
    if let Some(f) = features.iter().find(|&&f| f >= ensemble.n_features()) {
        return Err(Error::InvalidArgument(format!("feature index {f} out of range")));
    }
    Ok(())
}

/// Pairwise H for features `j` and `k` on the sample `rows`.
pub fn h_statistic(ensemble: &Ensemble, j: usize, k: usize, rows: &[Vec<f64>], output: usize) -> Result<HStatistic> {
    check_sample(ensemble, rows, &[j, k])?;
    let joint = centered(partial_dependence(ensemble, rows, &[j, k], output));
    let a = centered(partial_dependence(ensemble, rows, &[j], output));
    let b = centered(partial_dependence(ensemble, rows, &[k], output));
    Ok(h_from_pd(&joint, &a, &b))
}

/// H between `feature` and every other feature (`None` on the diagonal).
pub fn h_row(ensemble: &Ensemble, feature: usize, rows: &[Vec<f64>], output: usize) -> Result<Vec<Option<HStatistic>>> {
    check_sample(ensemble, rows, &[feature])?;
    let own = centered(partial_dependence(ensemble, rows, &[feature], output));
    (0..ensemble.n_features())
        .map(|k| {
            if k == feature {
                return Ok(None);
            }
            let joint = centered(partial_dependence(ensemble, rows, &[feature, k], output));
            let other = centered(partial_dependence(ensemble, rows, &[k], output));
            Ok(Some(h_from_pd(&joint, &own, &other)))
        })
        .collect()
}

/// Full symmetric H matrix (diagonal zero).
pub fn h_matrix(ensemble: &Ensemble, rows: &[Vec<f64>], output: usize) -> Result<Vec<Vec<HStatistic>>> {
    check_sample(ensemble, rows, &[])?;
    let p = ensemble.n_features();
    let single: Vec<Vec<f64>> = (0..p)
        .map(|j| centered(partial_dependence(ensemble, rows, &[j], output)))
        .collect();
    let zero = HStatistic {
        value: 0.0,
        degenerate: false,
        clamped: false,
    };
    let mut out = vec![vec![zero; p]; p];
    for j in 0..p {
        for k in j + 1..p {
            let joint = centered(partial_dependence(ensemble, rows, &[j, k], output));
            let h = h_from_pd(&joint, &single[j], &single[k]);
            out[j][k] = h;
            out[k][j] = h;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use crate::gbdt::{fit, TrainParams};
    use rand::{Rng, SeedableRng};

    fn trained(f: impl Fn(&[f64]) -> f64, seed: u64) -> (Ensemble, Vec<Vec<f64>>) {
        trained_with(f, seed, 8)
    }

    fn trained_with(f: impl Fn(&[f64]) -> f64, seed: u64, leaves: usize) -> (Ensemble, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        let frame = Frame::from_rows(&["a", "b", "c"], &rows, y).unwrap();
        let params = TrainParams { num_rounds: 40, max_leaves: leaves, ..TrainParams::default() };
        (fit(&frame, &params).unwrap(), rows)
    }

    fn brute_pd(m: &Ensemble, rows: &[Vec<f64>], subset: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|a| {
                rows.iter()
                    .map(|b| {
                        let hybrid: Vec<f64> =
                            (0..b.len()).map(|j| if subset.contains(&j) { a[j] } else { b[j] }).collect();
                        m.predict_margin_row(&hybrid)[0]
                    })
                    .sum::<f64>()
                    / rows.len() as f64
            })
            .collect()
    }

    #[test]
    fn leaf_decomposition_matches_brute_force() {
        let (m, rows) = trained(|r| r[0] * r[1] + r[2], 1);
        let sample: Vec<Vec<f64>> = rows[..60].to_vec();
        for subset in [vec![0], vec![1, 2], vec![0, 1, 2]] {
            let fast = partial_dependence(&m, &sample, &subset, 0);
            let slow = brute_pd(&m, &sample, &subset);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn additive_model_has_zero_h() {
        // stumps only: every tree depends on a single feature
        let (m, rows) = trained_with(|r| f64::from(u8::from(r[0] > 0.5)) + 2.0 * f64::from(u8::from(r[1] > 0.3)), 2, 2);
        let h = h_statistic(&m, 0, 1, &rows[..100], 0).unwrap();
        assert!(h.value < 1e-8, "{h:?}");
    }

    #[test]
    fn product_model_has_large_h() {
        let (m, rows) = trained(|r| if (r[0] > 0.5) == (r[1] > 0.5) { 1.0 } else { -1.0 }, 3);
        let h = h_statistic(&m, 0, 1, &rows[..100], 0).unwrap();
        assert!(h.value > 0.5, "{h:?}");
        let hm = h_matrix(&m, &rows[..100], 0).unwrap();
        assert_eq!(hm[0][1], hm[1][0]);
    }

    #[test]
    fn empty_sample_rejected() {
        let (m, _) = trained(|r| r[0], 4);
        assert!(h_statistic(&m, 0, 1, &[], 0).is_err());
    }
}
