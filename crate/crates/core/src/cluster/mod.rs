//! K-means (Lloyd iterations, k-means++ seeding) and elbow-based K selection.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the relative inertia improvement drops below this.
    pub tol: f64,
    /// Z-score each coordinate before clustering.
    pub standardize: bool,
    /// k-means++ restarts; the run with the lowest inertia is kept.
    pub n_init: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 0,
            max_iter: 300,
            tol: 1e-10,
            standardize: true,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    fn fit(points: &[Vec<f64>]) -> Self {
        let d = points[0].len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for p in points {
            for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// Fitted clustering. Centroids are reported in the original coordinates;
/// inertia is measured in the working (possibly standardized) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub scaler: Option<Scaler>,
    /// Optional identifiers of the clustered points, aligned with `assignments`.
    #[serde(default)]
    pub ids: Vec<String>,
    #[serde(default)]
    n_clusters: usize,
}

impl ClusterModel {
    /// Model reconstructed from an id → label listing (no geometry).
    pub fn from_labels(ids: Vec<String>, labels: Vec<usize>, k: usize) -> Self {
        Self {
            centroids: Vec::new(),
            assignments: labels,
            inertia: 0.0,
            inertia_trace: Vec::new(),
            iterations: 0,
            converged: true,
            seed: 0,
            scaler: None,
            ids,
            n_clusters: k,
        }
    }

    pub fn k(&self) -> usize {
        self.n_clusters
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Self {
        self.ids = ids;
        self
    }

    pub fn labels_by_id(&self) -> HashMap<String, usize> {
        self.ids
            .iter()
            .cloned()
            .zip(self.assignments.iter().copied())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    fn working_centroids(&self) -> Vec<Vec<f64>> {
        match &self.scaler {
            Some(s) => self.centroids.iter().map(|c| s.transform(c)).collect(),
            None => self.centroids.clone(),
        }
    }

    /// Nearest centroid for a point in original coordinates.
    pub fn predict(&self, point: &[f64]) -> usize {
        let p = match &self.scaler {
            Some(s) => s.transform(point),
            None => point.to_vec(),
        };
        nearest(&p, &self.working_centroids()).0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            // guard against landing on an existing centroid through rounding
            if d2[idx] == 0.0 {
                argmax(&d2)
            } else {
                idx
            }
        } else {
            argmax(&d2)
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct LloydRun {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl LloydRun {
    fn inertia(&self) -> f64 {
        *self.trace.last().expect("at least one assignment step")
    }
}

/// One Lloyd run from k-means++ seeds. Empty clusters are reseeded at the
/// point farthest from its assigned centroid.
fn lloyd(work: &[Vec<f64>], k: usize, seed: u64, params: &KMeansParams) -> LloydRun {
    let d = work[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(work, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let nearest_all: Vec<(usize, f64)> =
            work.par_iter().map(|p| nearest(p, &centroids)).collect();
        let new_assign: Vec<usize> = nearest_all.iter().map(|a| a.0).collect();
        let inertia: f64 = nearest_all.iter().map(|a| a.1).sum();
        let stable = new_assign == assignments;
        let small_gain = trace
            .last()
            .is_some_and(|&prev: &f64| prev - inertia <= params.tol * prev.max(f64::MIN_POSITIVE));
        assignments = new_assign;
        trace.push(inertia);
        if stable || small_gain {
            converged = true;
            break;
        }
        if iterations >= params.max_iter {
            break;
        }
        // update
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in work.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = work
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                taken.push(far.0);
                centroids[c] = work[far.0].clone();
            }
        }
    }
    LloydRun { centroids, assignments, trace, iterations, converged }
}

/// Best of `n_init` Lloyd runs. Labels are canonicalized by ascending
/// centroid coordinates.
pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<ClusterModel> {
    let k = params.k;
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points to cluster".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidArgument("points must share a positive dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("points must be finite".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }
    let scaler = params.standardize.then(|| Scaler::fit(points));
    let work: Vec<Vec<f64>> = match &scaler {
        Some(s) => points.iter().map(|p| s.transform(p)).collect(),
        None => points.to_vec(),
    };

    if params.n_init == 0 {
        return Err(Error::InvalidArgument("n_init must be positive".into()));
    }
    // Restart 0 uses the seed itself; later restarts derive theirs from it.
    let mut best: Option<LloydRun> = None;
    for r in 0..params.n_init as u64 {
        let seed = params.seed ^ r.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let run = lloyd(&work, k, seed, params);
        if best.as_ref().is_none_or(|b| run.inertia() < b.inertia()) {
            best = Some(run);
        }
    }
    let LloydRun { centroids, assignments, trace, iterations, converged } =
        best.expect("at least one restart");

    // Canonical label order: ascending centroid, coordinate by coordinate.
    let original: Vec<Vec<f64>> = match &scaler {
        Some(s) => centroids.iter().map(|c| s.inverse(c)).collect(),
        None => centroids.clone(),
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        original[a]
            .iter()
            .zip(&original[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let centroids_out: Vec<Vec<f64>> = order.iter().map(|&o| original[o].clone()).collect();
    let assignments: Vec<usize> = assignments.iter().map(|&a| relabel[a]).collect();
    let inertia = *trace.last().expect("at least one assignment step");
    Ok(ClusterModel {
        centroids: centroids_out,
        assignments,
        inertia,
        inertia_trace: trace,
        iterations,
        converged,
        seed: params.seed,
        scaler,
        ids: Vec::new(),
        n_clusters: k,
    })
}

/// Minimum ratio between the inertia drop into the knee and the drop out of
/// it for the knee to count as real structure.
pub const KNEE_MIN_SHARPNESS: f64 = 4.0;
/// Minimum normalized distance from the chord for a knee.
pub const KNEE_MIN_DISTANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub k: usize,
    /// `(k, inertia)` for every evaluated k.
    pub curve: Vec<(usize, f64)>,
    /// Normalized distance of each curve point from the endpoint chord.
    pub chord_distance: Vec<f64>,
    /// No knee was found; `k` is the smallest candidate.
    pub degenerate: bool,
}

/// Picks the k whose inertia point lies farthest from the chord joining
/// the curve's endpoints (both axes min-max normalized).
pub fn elbow_select(
    points: &[Vec<f64>],
    k_range: &[usize],
    base: &KMeansParams,
) -> Result<ElbowResult> {
    if k_range.len() < 3 {
        return Err(Error::InvalidArgument("elbow needs at least three k values".into()));
    }
    if k_range.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("k range must be strictly ascending".into()));
    }
    let curve: Vec<(usize, f64)> = k_range
        .iter()
        .map(|&k| {
            let params = KMeansParams { k, ..base.clone() };
            kmeans(points, &params).map(|m| (k, m.inertia))
        })
        .collect::<Result<_>>()?;
    let chord_distance = knee_distances(&curve);
    let best = argmax(&chord_distance);
    let sharp = if best == 0 || best + 1 >= curve.len() {
        false
    } else {
        let into = curve[best - 1].1 - curve[best].1;
        let out = curve[best].1 - curve[best + 1].1;
        into > 0.0 && (out <= 0.0 || into / out >= KNEE_MIN_SHARPNESS)
    };
    let degenerate = !sharp || chord_distance[best] < KNEE_MIN_DISTANCE;
    Ok(ElbowResult {
        k: if degenerate { curve[0].0 } else { curve[best].0 },
        curve,
        chord_distance,
        degenerate,
    })
}

fn knee_distances(curve: &[(usize, f64)]) -> Vec<f64> {
    let (k0, kn) = (curve[0].0 as f64, curve[curve.len() - 1].0 as f64);
    let ys: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let ymax = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let yspan = if ymax > ymin { ymax - ymin } else { 1.0 };
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .map(|&(k, y)| ((k as f64 - k0) / (kn - k0), (y - ymin) / yspan))
        .collect();
    let (x1, y1) = pts[0];
    let (x2, y2) = pts[pts.len() - 1];
    let len = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt();
    pts.iter()
        .map(|&(x, y)| {
            if len == 0.0 {
                0.0
            } else {
                ((y2 - y1) * x - (x2 - x1) * y + x2 * y1 - y2 * x1).abs() / len
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(vec![
                    center[0] + noise.sample(&mut rng),
                    center[1] + noise.sample(&mut rng),
                ]);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn duplicate_groups_give_zero_inertia() {
        let mut pts = vec![vec![0.0, 0.0]; 5];
        pts.extend(vec![vec![100.0, 50.0]; 5]);
        let m = kmeans(&pts, &KMeansParams { k: 2, standardize: false, ..Default::default() }).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert_eq!(m.centroids, vec![vec![0.0, 0.0], vec![100.0, 50.0]]);
        assert_eq!(m.sizes(), vec![5, 5]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let m = kmeans(&pts, &KMeansParams { k: 1, standardize: false, ..Default::default() }).unwrap();
        assert!((m.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((m.centroids[0][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        let err = kmeans(&pts, &KMeansParams { k: 3, ..Default::default() });
        assert!(err.is_err());
    }

    #[test]
    fn planted_gaussians_recovered() {
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
        let (pts, truth) = blobs(&centers, 50, 1.0, 7);
        let m = kmeans(&pts, &KMeansParams { k: 4, seed: 3, ..Default::default() }).unwrap();
        // Labels are canonical; map through the majority label of each planted group.
        let agree = agreement(&m.assignments, &truth, 4);
        assert!(agree >= 0.95, "agreement {agree}");
        for w in m.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    fn agreement(pred: &[usize], truth: &[usize], k: usize) -> f64 {
        let mut counts = vec![vec![0usize; k]; k];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[t][p] += 1;
        }
        let hits: usize = counts.iter().map(|row| *row.iter().max().unwrap()).sum();
        hits as f64 / pred.len() as f64
    }

    #[test]
    fn assignments_are_nearest_and_deterministic() {
        let (pts, _) = blobs(&[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]], 40, 1.5, 11);
        let p = KMeansParams { k: 3, seed: 5, ..Default::default() };
        let a = kmeans(&pts, &p).unwrap();
        let b = kmeans(&pts, &p).unwrap();
        assert_eq!(a, b);
        let work: Vec<Vec<f64>> = pts.iter().map(|x| a.scaler.as_ref().unwrap().transform(x)).collect();
        let cents = a.working_centroids();
        let mut inertia = 0.0;
        for (x, &l) in work.iter().zip(&a.assignments) {
            let dists: Vec<f64> = cents.iter().map(|c| sq_dist(x, c)).collect();
            let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(dists[l] <= min + 1e-9);
            inertia += dists[l];
        }
        assert!((inertia - a.inertia).abs() < 1e-6 * a.inertia.max(1.0));
        assert_eq!(a.sizes().iter().sum::<usize>(), pts.len());
    }

    #[test]
    fn elbow_finds_planted_counts() {
        let (four, _) = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]], 50, 0.7, 1);
        let ks: Vec<usize> = (1..=8).collect();
        let r = elbow_select(&four, &ks, &KMeansParams { seed: 2, ..Default::default() }).unwrap();
        assert_eq!(r.k, 4);
        assert!(!r.degenerate);

        let (two, _) = blobs(&[[0.0, 0.0], [12.0, 3.0]], 80, 0.8, 2);
        let r = elbow_select(&two, &ks, &KMeansParams { seed: 2, ..Default::default() }).unwrap();
        assert_eq!(r.k, 2);
    }

    #[test]
    fn single_blob_is_degenerate() {
        let (one, _) = blobs(&[[5.0, 5.0]], 300, 1.0, 4);
        let ks: Vec<usize> = (1..=8).collect();
        let r = elbow_select(&one, &ks, &KMeansParams { seed: 2, ..Default::default() }).unwrap();
        assert!(r.degenerate, "{r:?}");
        assert_eq!(r.k, 1);
    }
}
