//! Path-dependent tree SHAP: the polynomial-time recursion over unique
//! feature paths, including the conditioned variant used for interaction
//! values, and the cover-weighted value function it is equivalent to.

use super::exact::CoalitionGame;
use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, FeatureBins, Node, Tree};

/// Checks that every node has positive cover.
pub fn validate_covers(ensemble: &Ensemble) -> Result<()> {
    for (t, tree) in ensemble.trees.iter().enumerate() {
        for (i, node) in tree.nodes.iter().enumerate() {
            if !(node.cover() > 0.0) {
                return Err(Error::Invariant(format!(
                    "tree {t} node {i} has cover {}; path-dependent expectations need positive covers",
                    node.cover()
                )));
            }
        }
    }
    Ok(())
}

/// Expected tree output when features in `coalition` follow `row` and the
/// rest split in proportion to child covers.
pub fn tree_expectation(tree: &Tree, bins: &[FeatureBins], row: &[f64], coalition: u64) -> f64 {
    fn walk(tree: &Tree, bins: &[FeatureBins], row: &[f64], s: u64, i: usize) -> f64 {
        match &tree.nodes[i] {
            Node::Leaf { value, .. } => *value,
            Node::Internal {
                feature,
                left,
                right,
                cover,
                ..
            } => {
                if s.checked_shr(*feature as u32).unwrap_or(0) & 1 == 1 {
                    let next = tree.route(i, row, bins).expect("internal node routes");
                    walk(tree, bins, row, s, next)
                } else {
                    let l = tree.nodes[*left].cover();
                    let r = tree.nodes[*right].cover();
                    (l * walk(tree, bins, row, s, *left) + r * walk(tree, bins, row, s, *right)) / cover
                }
            }
        }
    }
    walk(tree, bins, row, coalition, 0)
}

/// Ensemble value function in margin space for one output.
pub fn tree_value_function(ensemble: &Ensemble, row: &[f64], coalition: u64, output: usize) -> f64 {
    let mut acc = ensemble.base_score[output];
    for (t, tree) in ensemble.trees.iter().enumerate() {
        if ensemble.tree_output(t) == output {
            acc += ensemble.learning_rate * tree_expectation(tree, &ensemble.bins, row, coalition);
        }
    }
    acc
}

/// The coalition game whose Shapley values tree SHAP reproduces.
pub struct TreeGame<'a> {
    pub ensemble: &'a Ensemble,
    pub row: &'a [f64],
    pub output: usize,
}

impl<'a> TreeGame<'a> {
    pub fn new(ensemble: &'a Ensemble, row: &'a [f64], output: usize) -> Result<Self> {
        validate_covers(ensemble)?;
        if row.len() != ensemble.n_features() {
            return Err(Error::InvalidArgument(format!(
                "row has {} values, model expects {}",
                row.len(),
                ensemble.n_features()
            )));
        }
        Ok(Self { ensemble, row, output })
    }
}

impl CoalitionGame for TreeGame<'_> {
    fn n_players(&self) -> usize {
        self.ensemble.n_features()
    }

    fn value(&self, coalition: u32) -> f64 {
        tree_value_function(self.ensemble, self.row, u64::from(coalition), self.output)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: i64,
    zero: f64,
    one: f64,
    pweight: f64,
}

fn extend(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: i64) {
    path[depth] = PathElement {
        feature,
        zero,
        one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one;
    let zero = path[index].zero;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
}

fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one;
    let zero = path[index].zero;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next_one * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * ((depth - i) as f64 / d1);
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight / (zero * ((depth - i) as f64 / d1));
        }
    }
    total
}

/// Conditioning for interaction values: `On` fixes the feature to the row,
/// `Off` marginalizes it, `None` is the plain algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    None,
    On(usize),
    Off(usize),
}

struct Walker<'a> {
    tree: &'a Tree,
    bins: &'a [FeatureBins],
    row: &'a [f64],
    condition: Condition,
    scale: f64,
}

impl Walker<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        node: usize,
        depth: usize,
        parent: &[PathElement],
        parent_zero: f64,
        parent_one: f64,
        parent_feature: i64,
        condition_fraction: f64,
        phi: &mut [f64],
    ) {
        if condition_fraction == 0.0 {
            return;
        }
        let mut path = vec![PathElement::default(); depth + 1];
        let keep = parent.len().min(depth + 1);
        path[..keep].copy_from_slice(&parent[..keep]);
        let conditioned_feature = match self.condition {
            Condition::None => None,
            Condition::On(f) | Condition::Off(f) => Some(f as i64),
        };
        if conditioned_feature != Some(parent_feature) {
            extend(&mut path, depth, parent_zero, parent_one, parent_feature);
        }
        let (feature, left, right, cover) = match &self.tree.nodes[node] {
            Node::Leaf { value, .. } => {
                for i in 1..=depth {
                    let w = unwound_sum(&path, depth, i);
                    let el = path[i];
                    phi[el.feature as usize] +=
                        w * (el.one - el.zero) * condition_fraction * value * self.scale;
                }
                return;
            }
            Node::Internal {
                feature,
                left,
                right,
                cover,
                ..
            } => (*feature, *left, *right, *cover),
        };
        let hot = self.tree.route(node, self.row, self.bins).expect("internal node routes");
        let cold = if hot == left { right } else { left };
        let hot_zero = self.tree.nodes[hot].cover() / cover;
        let cold_zero = self.tree.nodes[cold].cover() / cover;
        let mut incoming_zero = 1.0;
        let mut incoming_one = 1.0;
        // signed depth: conditioning can take it to -1 before the +1 below
        let mut d = depth as i64;
        if let Some(idx) = (0..=depth).find(|&k| path[k].feature == feature as i64) {
            incoming_zero = path[idx].zero;
            incoming_one = path[idx].one;
            unwind(&mut path, depth, idx);
            d -= 1;
        }
        let mut hot_fraction = condition_fraction;
        let mut cold_fraction = condition_fraction;
        match self.condition {
            Condition::On(f) if f == feature => {
                cold_fraction = 0.0;
                d -= 1;
            }
            Condition::Off(f) if f == feature => {
                hot_fraction *= hot_zero;
                cold_fraction *= cold_zero;
                d -= 1;
            }
            _ => {}
        }
        let child_depth = (d + 1) as usize;
        self.recurse(
            hot,
            child_depth,
            &path,
            hot_zero * incoming_zero,
            incoming_one,
            feature as i64,
            hot_fraction,
            phi,
        );
        self.recurse(
            cold,
            child_depth,
            &path,
            cold_zero * incoming_zero,
            0.0,
            feature as i64,
            cold_fraction,
            phi,
        );
    }
}

/// Adds `scale * φ(tree)` for `row` into `phi` (one slot per feature).
pub fn tree_shap_into(
    tree: &Tree,
    bins: &[FeatureBins],
    row: &[f64],
    condition: Condition,
    scale: f64,
    phi: &mut [f64],
) {
    let walker = Walker {
        tree,
        bins,
        row,
        condition,
        scale,
    };
    walker.recurse(0, 0, &[], 1.0, 1.0, -1, 1.0, phi);
}

/// Cover-weighted mean leaf value of a tree.
pub fn tree_mean(tree: &Tree, bins: &[FeatureBins], row: &[f64]) -> f64 {
    tree_expectation(tree, bins, row, 0)
}

/// Features a tree splits on, ascending.
pub fn tree_features(tree: &Tree) -> Vec<usize> {
    let mut f: Vec<usize> = tree
        .nodes
        .iter()
        .filter_map(|n| match n {
            Node::Internal { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
        .collect();
    f.sort_unstable();
    f.dedup();
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::Split;

    fn stump(feature: usize, threshold: f64, lv: f64, rv: f64, lc: f64, rc: f64) -> Tree {
        Tree {
            nodes: vec![
                Node::Internal {
                    feature,
                    split: Split::Numeric { threshold },
                    default_left: true,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                    cover: lc + rc,
                },
                Node::Leaf { value: lv, cover: lc },
                Node::Leaf { value: rv, cover: rc },
            ],
        }
    }

    fn bins(n: usize) -> Vec<FeatureBins> {
        (0..n)
            .map(|_| FeatureBins::Numeric { edges: vec![0.5], missing_code: None })
            .collect()
    }

    #[test]
    fn stump_attribution() {
        let t = stump(0, 0.5, 0.0, 1.0, 10.0, 10.0);
        let b = bins(2);
        let mut phi = vec![0.0; 2];
        tree_shap_into(&t, &b, &[1.0, 0.0], Condition::None, 1.0, &mut phi);
        assert!((phi[0] - 0.5).abs() < 1e-12);
        assert_eq!(phi[1], 0.0);
        assert!((tree_mean(&t, &b, &[1.0, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn repeated_feature_on_path() {
        // x0 split twice, x1 once; check local accuracy
        let t = Tree {
            nodes: vec![
                Node::Internal { feature: 0, split: Split::Numeric { threshold: 0.5 }, default_left: true, left: 1, right: 2, gain: 1.0, cover: 10.0 },
                Node::Internal { feature: 1, split: Split::Numeric { threshold: 0.5 }, default_left: true, left: 3, right: 4, gain: 1.0, cover: 6.0 },
                Node::Leaf { value: 3.0, cover: 4.0 },
                Node::Internal { feature: 0, split: Split::Numeric { threshold: 0.2 }, default_left: true, left: 5, right: 6, gain: 1.0, cover: 4.0 },
                Node::Leaf { value: -1.0, cover: 2.0 },
                Node::Leaf { value: 2.0, cover: 1.0 },
                Node::Leaf { value: 5.0, cover: 3.0 },
            ],
        };
        let b = bins(2);
        for row in [[0.1, 0.1], [0.3, 0.1], [0.3, 0.9], [0.9, 0.9]] {
            let mut phi = vec![0.0; 2];
            tree_shap_into(&t, &b, &row, Condition::None, 1.0, &mut phi);
            let total = tree_mean(&t, &b, &row) + phi.iter().sum::<f64>();
            assert!((total - t.leaf_value(&row, &b)).abs() < 1e-12);
        }
    }
}
