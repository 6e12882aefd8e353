use serde::{Deserialize, Serialize};

use super::bin::FeatureBins;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Split {
    /// `v <= threshold` goes left; missing cells follow `default_left`.
    Numeric { threshold: f64 },
    /// Levels in `left_levels` (sorted) go left; unseen levels go right.
    Categorical { left_levels: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        cover: f64,
    },
    Internal {
        feature: usize,
        split: Split,
        default_left: bool,
        left: usize,
        right: usize,
        gain: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Leaf { cover, .. } | Node::Internal { cover, .. } => *cover,
        }
    }
}

/// A regression tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    /// Child index that `row` is routed to from internal node `node`.
    pub fn route(&self, node: usize, row: &[f64], bins: &[FeatureBins]) -> Option<usize> {
        match &self.nodes[node] {
            Node::Leaf { .. } => None,
            Node::Internal {
                feature,
                split,
                default_left,
                left,
                right,
                ..
            } => {
                let v = row[*feature];
                let go_left = if bins[*feature].is_missing(v) {
                    *default_left
                } else {
                    match split {
                        Split::Numeric { threshold } => v <= *threshold,
                        Split::Categorical { left_levels } => {
                            v >= 0.0
                                && v.fract() == 0.0
                                && left_levels.binary_search(&(v as u32)).is_ok()
                        }
                    }
                };
                Some(if go_left { *left } else { *right })
            }
        }
    }

    pub fn leaf_index(&self, row: &[f64], bins: &[FeatureBins]) -> usize {
        let mut i = 0;
        while let Some(next) = self.route(i, row, bins) {
            i = next;
        }
        i
    }

    pub fn leaf_value(&self, row: &[f64], bins: &[FeatureBins]) -> f64 {
        match self.nodes[self.leaf_index(row, bins)] {
            Node::Leaf { value, .. } => value,
            Node::Internal { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }
}
