//! Leaf-wise histogram tree growth on second-order gradient statistics.

use std::ops::{Add, Sub};

use rayon::prelude::*;

use super::bin::{BinnedData, FeatureBins};
use super::tree::{Node, Split, Tree};

/// Smoothing added to the hessian when ordering categories for a split.
const CAT_SMOOTH: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_leaves: usize,
    pub min_child_weight: f64,
    pub min_data_in_leaf: usize,
    pub l2: f64,
    pub min_split_gain: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Stat {
    g: f64,
    h: f64,
    n: u32,
}

impl Add for Stat {
    type Output = Stat;
    fn add(self, o: Stat) -> Stat {
        Stat {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }
}

impl Sub for Stat {
    type Output = Stat;
    fn sub(self, o: Stat) -> Stat {
        Stat {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

/// Per-feature histograms, one `Vec<Stat>` per feature.
type Hist = Vec<Vec<Stat>>;

#[derive(Debug, Clone)]
struct Candidate {
    gain: f64,
    feature: usize,
    split: Split,
    default_left: bool,
    /// Membership of each bin (missing bin last) in the left child.
    left_bins: Vec<bool>,
}

struct LeafState {
    node: usize,
    rows: Vec<u32>,
    hist: Hist,
    best: Option<Candidate>,
}

fn score(s: Stat, l2: f64) -> f64 {
    s.g * s.g / (s.h + l2)
}

fn split_gain(left: Stat, right: Stat, p: &GrowParams) -> Option<f64> {
    let ok = |s: Stat| s.h >= p.min_child_weight && s.n as usize >= p.min_data_in_leaf && s.n > 0;
    if !ok(left) || !ok(right) {
        return None;
    }
    let gain = 0.5 * (score(left, p.l2) + score(right, p.l2) - score(left + right, p.l2));
    gain.is_finite().then_some(gain)
}

fn build_hist(data: &BinnedData, rows: &[u32], grad: &[f64], hess: &[f64], allowed: &[bool]) -> Hist {
    data.features
        .par_iter()
        .enumerate()
        .map(|(j, fb)| {
            let mut h = vec![Stat::default(); fb.n_bins()];
            if allowed[j] {
                let col = &data.bins[j];
                for &r in rows {
                    let r = r as usize;
                    let s = &mut h[col[r] as usize];
                    s.g += grad[r];
                    s.h += hess[r];
                    s.n += 1;
                }
            }
            h
        })
        .collect()
}

fn subtract(parent: &Hist, child: &Hist) -> Hist {
    parent
        .iter()
        .zip(child)
        .map(|(p, c)| p.iter().zip(c).map(|(a, b)| *a - *b).collect())
        .collect()
}

fn best_numeric(j: usize, edges: &[f64], h: &[Stat], p: &GrowParams) -> Option<Candidate> {
    let nv = edges.len() + 1;
    let missing = h[nv];
    let total = h.iter().fold(Stat::default(), |a, b| a + *b);
    let mut best: Option<(f64, usize, bool)> = None;
    let mut left = Stat::default();
    for t in 0..nv - 1 {
        left = left + h[t];
        let right = total - left - missing;
        let options: &[bool] = if missing.n == 0 {
            // no missing cells seen: send them to the heavier child
            if left.h >= right.h {
                &[true]
            } else {
                &[false]
            }
        } else {
            &[true, false]
        };
        for &dl in options {
            let (l, r) = if dl { (left + missing, right) } else { (left, right + missing) };
            if let Some(g) = split_gain(l, r, p) {
                if best.is_none_or(|(bg, _, _)| g > bg) {
                    best = Some((g, t, dl));
                }
            }
        }
    }
    best.map(|(gain, t, default_left)| {
        let mut left_bins: Vec<bool> = (0..nv).map(|b| b <= t).collect();
        left_bins.push(default_left);
        Candidate {
            gain,
            feature: j,
            split: Split::Numeric { threshold: edges[t] },
            default_left,
            left_bins,
        }
    })
}

fn best_categorical(j: usize, n_levels: usize, h: &[Stat], p: &GrowParams) -> Option<Candidate> {
    let mut cats: Vec<usize> = (0..=n_levels).filter(|&b| h[b].n > 0).collect();
    if cats.len() < 2 {
        return None;
    }
    cats.sort_by(|&a, &b| {
        let ra = h[a].g / (h[a].h + CAT_SMOOTH);
        let rb = h[b].g / (h[b].h + CAT_SMOOTH);
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let total = cats.iter().fold(Stat::default(), |a, &b| a + h[b]);
    let mut best: Option<(f64, usize)> = None;
    let mut left = Stat::default();
    for (s, &c) in cats.iter().enumerate().take(cats.len() - 1) {
        left = left + h[c];
        if let Some(g) = split_gain(left, total - left, p) {
            if best.is_none_or(|(bg, _)| g > bg) {
                best = Some((g, s + 1));
            }
        }
    }
    best.map(|(gain, size)| {
        let mut left_bins = vec![false; n_levels + 1];
        for &c in &cats[..size] {
            left_bins[c] = true;
        }
        let mut left_levels: Vec<u32> = cats[..size]
            .iter()
            .filter(|&&c| c < n_levels)
            .map(|&c| c as u32)
            .collect();
        left_levels.sort_unstable();
        let default_left = left_bins[n_levels];
        Candidate {
            gain,
            feature: j,
            split: Split::Categorical { left_levels },
            default_left,
            left_bins,
        }
    })
}

fn find_best(data: &BinnedData, hist: &Hist, allowed: &[bool], p: &GrowParams) -> Option<Candidate> {
    let per_feature: Vec<Option<Candidate>> = data
        .features
        .par_iter()
        .enumerate()
        .map(|(j, fb)| {
            if !allowed[j] {
                return None;
            }
            match fb {
                FeatureBins::Numeric { edges, .. } if !edges.is_empty() => {
                    best_numeric(j, edges, &hist[j], p)
                }
                FeatureBins::Numeric { .. } => None,
                FeatureBins::Categorical { n_levels, .. } => {
                    best_categorical(j, *n_levels, &hist[j], p)
                }
            }
        })
        .collect();
    // fixed-order reduction: the lowest feature index wins ties
    let mut best: Option<Candidate> = None;
    for c in per_feature.into_iter().flatten() {
        if c.gain > p.min_split_gain && best.as_ref().is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best
}

/// Grows one tree on `rows`. Leaf values are the Newton step
/// `-G / (H + l2)`; covers are hessian sums, with internal covers equal to
/// the sum of their children.
pub(crate) fn grow_tree(
    data: &BinnedData,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<u32>,
    allowed: &[bool],
    p: &GrowParams,
) -> Tree {
    let mut nodes = vec![Node::Leaf { value: 0.0, cover: 0.0 }];
    let hist = build_hist(data, &rows, grad, hess, allowed);
    let best = find_best(data, &hist, allowed, p);
    let mut leaves = vec![LeafState {
        node: 0,
        rows,
        hist,
        best,
    }];
    let mut n_leaves = 1;
    while n_leaves < p.max_leaves {
        let mut pick: Option<usize> = None;
        for (i, l) in leaves.iter().enumerate() {
            if let Some(c) = &l.best {
                let better = match pick {
                    None => true,
                    Some(k) => c.gain > leaves[k].best.as_ref().map_or(f64::NEG_INFINITY, |b| b.gain),
                };
                if better {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = leaves.remove(i);
        let cand = leaf.best.expect("picked leaf has a split");
        let col = &data.bins[cand.feature];
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = leaf
            .rows
            .iter()
            .partition(|&&r| cand.left_bins[col[r as usize] as usize]);
        let (lhist, rhist) = if lrows.len() <= rrows.len() {
            let l = build_hist(data, &lrows, grad, hess, allowed);
            let r = subtract(&leaf.hist, &l);
            (l, r)
        } else {
            let r = build_hist(data, &rrows, grad, hess, allowed);
            let l = subtract(&leaf.hist, &r);
            (l, r)
        };
        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        nodes[leaf.node] = Node::Internal {
            feature: cand.feature,
            split: cand.split,
            default_left: cand.default_left,
            left: left_id,
            right: right_id,
            gain: cand.gain,
            cover: 0.0,
        };
        let lbest = find_best(data, &lhist, allowed, p);
        let rbest = find_best(data, &rhist, allowed, p);
        leaves.push(LeafState { node: left_id, rows: lrows, hist: lhist, best: lbest });
        leaves.push(LeafState { node: right_id, rows: rrows, hist: rhist, best: rbest });
        n_leaves += 1;
    }
    for leaf in &leaves {
        let (g, h) = leaf
            .rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + grad[r as usize], h + hess[r as usize]));
        nodes[leaf.node] = Node::Leaf {
            value: -g / (h + p.l2),
            cover: h,
        };
    }
    let mut tree = Tree { nodes };
    fill_covers(&mut tree, 0);
    tree
}

fn fill_covers(tree: &mut Tree, i: usize) -> f64 {
    let (l, r) = match tree.nodes[i] {
        Node::Leaf { cover, .. } => return cover,
        Node::Internal { left, right, .. } => (left, right),
    };
    let c = fill_covers(tree, l) + fill_covers(tree, r);
    if let Node::Internal { cover, .. } = &mut tree.nodes[i] {
        *cover = c;
    }
    c
}
