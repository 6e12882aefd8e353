#![allow(dead_code)]

use std::path::{Path, PathBuf};

use glassbox::cli::pipeline::{cluster_skus, prepare, task_frame, ClusterConfig, TaskKind};
use glassbox::frame::{FeatureSpec, Frame, Schema, Task, MISSING};
use glassbox::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sales and choice frames built from a synthetic month.
pub fn synthetic_frames(config: &SynthConfig) -> (Frame, Frame) {
    let s = generate(config).expect("synth");
    let prepared = prepare(s.tables);
    let clusters = cluster_skus(&prepared.tables, &ClusterConfig::default()).expect("cluster");
    let (sales, _) = task_frame(&prepared, TaskKind::Sales, None).expect("sales frame");
    let (choice, _) = task_frame(&prepared, TaskKind::Choice, Some(&clusters.model)).expect("choice frame");
    (sales, choice)
}

/// Random frame with a mix of numeric (some with missing cells) and
/// categorical features. `n_classes == 0` gives a regression target.
pub fn random_mixed_frame(rng: &mut ChaCha8Rng, p: usize, n: usize, n_classes: usize) -> Frame {
    let features: Vec<FeatureSpec> = (0..p)
        .map(|j| match rng.random_range(0..3) {
            0 => FeatureSpec::categorical(
                format!("c{j}"),
                (0..rng.random_range(2..6)).map(|l| format!("l{l}")).collect(),
            ),
            1 => FeatureSpec::numeric_with_missing(format!("m{j}")),
            _ => FeatureSpec::numeric(format!("x{j}")),
        })
        .collect();
    let mut data = Vec::with_capacity(n * p);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = features
            .iter()
            .map(|f| match f.levels() {
                Some(_) if rng.random::<f64>() < 0.1 => MISSING,
                Some(levels) => rng.random_range(0..levels.len()) as f64,
                None if f.missing_code.is_some() && rng.random::<f64>() < 0.1 => MISSING,
                None => (rng.random::<f64>() * 10.0).floor() / 2.0,
            })
            .collect();
        data.extend_from_slice(&row);
        rows.push(row);
    }
    let w: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let score = |r: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..p {
            s += w[j] * r[j];
            if j + 1 < p {
                s += (r[j] * r[j + 1]).sin();
            }
        }
        s
    };
    let raw: Vec<f64> = rows.iter().map(|r| score(r) + rng.random::<f64>() * 0.3).collect();
    let (target, task) = if n_classes == 0 {
        (raw, Task::Regression)
    } else {
        let mut sorted = raw.clone();
        sorted.sort_by(f64::total_cmp);
        let cuts: Vec<f64> = (1..n_classes).map(|c| sorted[c * n / n_classes]).collect();
        let y = raw.iter().map(|v| cuts.iter().filter(|c| v >= c).count() as f64).collect();
        (y, Task::Classification { classes: (0..n_classes).map(|c| format!("k{c}")).collect() })
    };
    let schema = Schema { features, target: "y".into(), task };
    let ids = (0..n).map(|i| format!("r{i}")).collect();
    Frame::new(schema, data, target, ids).expect("valid frame")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_glassbox"))
}

/// Every regular file below `root`, as sorted paths relative to it.
pub fn files_below(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.push(path.strip_prefix(root).expect("below root").to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
