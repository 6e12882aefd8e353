//! Acceptance suite: nine end-to-end criteria, each reported on one
//! PASS/FAIL line. Run with `cargo test --release --test acceptance -- --nocapture`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use glassbox::baselines::{fit_lasso, fit_nb, fit_ridge, nearest, KnnModel, KnnParams, NbParams, Weighting};
use glassbox::cli::pipeline::{bench, BenchConfig, ModelKind, TaskKind};
use glassbox::cluster::{elbow_select, kmeans, KMeansParams};
use glassbox::frame::{FeatureSpec, Frame, Schema, Task};
use glassbox::gbdt::{fit, Ensemble, Node, Split, TrainParams};
use glassbox::ingest::RawTables;
use glassbox::shap::{
    decision_plot_data, exact_shapley_all, h_statistic, shap_interactions, tree_shap, tree_shap_row, TreeGame,
};
use glassbox::stats::{conditional_2d_histogram, order_count_table, spend_distribution, Demographic, Metric};
use glassbox::synth::{generate, SynthConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::{bin, files_below, random_mixed_frame, rng, synthetic_frames};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn count_categorical_splits(m: &Ensemble) -> usize {
    m.trees
        .iter()
        .flat_map(|t| &t.nodes)
        .filter(|n| matches!(n, Node::Internal { split: Split::Categorical { .. }, .. }))
        .count()
}

// 1. tree SHAP against exhaustive enumeration of the tree value function.
fn shapley_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut categorical_splits = 0;
    let mut comparisons = 0;
    for e in 0..100u64 {
        let mut r = rng(1000 + e);
        let p = r.random_range(2..=12);
        let classification = e % 3 == 0;
        let (n_classes, rounds) = if classification { (3, r.random_range(1..=6)) } else { (0, r.random_range(1..=20)) };
        let frame = random_mixed_frame(&mut r, p, 300, n_classes);
        let params = TrainParams {
            num_rounds: rounds,
            max_leaves: r.random_range(2..=12),
            min_data_in_leaf: 5,
            seed: e,
            ..TrainParams::default()
        };
        let m = fit(&frame, &params).map_err(|err| err.to_string())?;
        if m.trees.len() > 20 {
            return Err(format!("ensemble {e} has {} trees", m.trees.len()));
        }
        categorical_splits += count_categorical_splits(&m);
        for i in 0..5 {
            let row = frame.row(i * 37);
            let (phi, _) = tree_shap_row(&m, row).map_err(|err| err.to_string())?;
            for (o, phi_o) in phi.iter().enumerate() {
                let game = TreeGame::new(&m, row, o).map_err(|err| err.to_string())?;
                let exact = exact_shapley_all(&game).map_err(|err| err.to_string())?;
                worst = worst.max(max_abs_diff(&exact, phi_o));
                comparisons += 1;
            }
        }
    }
    check(
        worst < 1e-8 && categorical_splits > 0,
        format!("max |tree_shap - exact| = {worst:.2e} over {comparisons} row-outputs; {categorical_splits} categorical splits"),
    )
}

fn local_accuracy_error(m: &Ensemble, frame: &Frame, rows: &[usize]) -> Result<f64, String> {
    let set = tree_shap(m, frame, Some(rows)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (e, &i) in set.explanations.iter().zip(rows) {
        let margin = m.predict_margin_row(frame.row(i));
        for (o, m_o) in margin.iter().enumerate() {
            let total = e.base_value[o] + e.shap_values[o].iter().sum::<f64>();
            worst = worst.max((total - m_o).abs());
        }
    }
    Ok(worst)
}

// 2. local accuracy on 10k rows, regression and every softmax class.
fn local_accuracy() -> Outcome {
    let (sales, choice) = synthetic_frames(&SynthConfig { n_users: 80_000, ..SynthConfig::with_seed(11) });
    let n = 10_000;
    if sales.n_rows() < n || choice.n_rows() < n {
        return Err(format!("too few rows: sales {}, choice {}", sales.n_rows(), choice.n_rows()));
    }
    let rows: Vec<usize> = (0..n).collect();
    let reg = fit(&sales, &TrainParams::default()).map_err(|e| e.to_string())?;
    let cls = fit(&choice, &TrainParams { num_rounds: 100, ..TrainParams::default() }).map_err(|e| e.to_string())?;
    let e_reg = local_accuracy_error(&reg, &sales, &rows)?;
    let e_cls = local_accuracy_error(&cls, &choice, &rows)?;
    check(
        e_reg < 1e-9 && e_cls < 1e-9,
        format!("max |base + sum(phi) - margin|: regression {e_reg:.2e}, softmax ({} classes) {e_cls:.2e}", cls.n_outputs()),
    )
}

fn uniform_frame(f: impl Fn(&[f64]) -> f64, n: usize, p: usize, seed: u64) -> Frame {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
    let y = rows.iter().map(|x| f(x)).collect();
    let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    Frame::from_rows(&names, &rows, y).expect("frame")
}

// 3. interaction rows sum to phi; H separates additive from pairwise models.
fn interaction_consistency() -> Outcome {
    let frame = uniform_frame(|x| 3.0 * x[0] * x[1] + x[2] - (x[3] * 6.0).sin(), 2000, 5, 3);
    let m = fit(&frame, &TrainParams { num_rounds: 60, max_leaves: 12, ..TrainParams::default() })
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let row = frame.row(i);
        let phi = tree_shap_row(&m, row).map_err(|e| e.to_string())?.0;
        let inter = shap_interactions(&m, row, 0).map_err(|e| e.to_string())?;
        let sums: Vec<f64> = inter.iter().map(|r| r.iter().sum()).collect();
        worst = worst.max(max_abs_diff(&sums, &phi[0]));
    }

    let additive = uniform_frame(|x| (x[0] * 5.0).floor() + 2.0 * (x[1] > 0.4) as u8 as f64, 1000, 3, 4);
    let stumps = fit(&additive, &TrainParams { num_rounds: 50, max_leaves: 2, ..TrainParams::default() })
        .map_err(|e| e.to_string())?;
    let sample: Vec<Vec<f64>> = (0..500).map(|i| additive.row(i).to_vec()).collect();
    let h_add = h_statistic(&stumps, 0, 1, &sample, 0).map_err(|e| e.to_string())?;

    let pair = uniform_frame(|x| if (x[0] > 0.5) == (x[1] > 0.5) { 1.0 } else { -1.0 }, 1000, 3, 5);
    let pm = fit(&pair, &TrainParams { num_rounds: 50, max_leaves: 4, ..TrainParams::default() })
        .map_err(|e| e.to_string())?;
    let sample: Vec<Vec<f64>> = (0..500).map(|i| pair.row(i).to_vec()).collect();
    let h_pair = h_statistic(&pm, 0, 1, &sample, 0).map_err(|e| e.to_string())?;
    check(
        worst < 1e-8 && h_add.value.abs() < 1e-8 && h_pair.value > 0.5,
        format!(
            "max |row sum - phi| = {worst:.2e} on 1000 rows; H additive = {:.2e}; H pair = {:.3}",
            h_add.value, h_pair.value
        ),
    )
}

// 4. GBDT beats every baseline on both tasks for five seeds.
fn benchmark_ordering() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let (sales, choice) = synthetic_frames(&SynthConfig::with_seed(seed));
        let cfg = BenchConfig { split_seed: seed, ..BenchConfig::default() };
        // Unit counts are heavy-tailed: the sales GBDT is fit on log1p(units)
        // and scored on the raw scale like every baseline.
        let mut sales_cfg = cfg.clone();
        sales_cfg.model.gbdt.log1p_target = true;
        let s = bench(&sales, TaskKind::Sales, &sales_cfg).map_err(|e| e.to_string())?;
        let c = bench(&choice, TaskKind::Choice, &cfg).map_err(|e| e.to_string())?;
        let g = s.score_of(ModelKind::Gbdt).unwrap_or(f64::NAN);
        let best_base = [ModelKind::Lasso, ModelKind::Ridge, ModelKind::Knn]
            .iter()
            .filter_map(|&k| s.score_of(k))
            .fold(f64::INFINITY, f64::min);
        let gp = c.score_of(ModelKind::Gbdt).unwrap_or(f64::NAN);
        let best_cls = [ModelKind::Nb, ModelKind::Knn]
            .iter()
            .filter_map(|&k| c.score_of(k))
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= g < best_base && gp > best_cls;
        lines.push(format!("seed {seed}: rmse {g:.4} vs {best_base:.4}, precision {gp:.4} vs {best_cls:.4}"));
    }
    check(ok, lines.join("; "))
}

fn linear_oracle(frame: &Frame) -> (Vec<f64>, f64) {
    let n = frame.n_rows();
    let p = frame.n_features();
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { frame.value(i, j - 1) });
    let y = DVector::from_column_slice(frame.target());
    let beta = x.svd(true, true).solve(&y, 1e-14).expect("least squares");
    (beta.iter().skip(1).copied().collect(), beta[0])
}

// 5. baseline oracles: least squares, brute-force neighbours, hand-computed NB.
fn baseline_oracles() -> Outcome {
    let mut r = rng(55);
    let noise = Normal::new(0.0, 0.5).expect("normal");
    let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..5).map(|_| r.random::<f64>() * 4.0 - 2.0).collect()).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|x| 1.5 + 2.0 * x[0] - x[1] + 0.5 * x[2] + 0.1 * x[4] + noise.sample(&mut r))
        .collect();
    let frame = Frame::from_rows(&["a", "b", "c", "d", "e"], &rows, y).expect("frame");
    let (beta, b0) = linear_oracle(&frame);
    let ridge = fit_ridge(&frame, 0.0).map_err(|e| e.to_string())?;
    let lasso = fit_lasso(&frame, 0.0, 1e-13, 100_000).map_err(|e| e.to_string())?;
    let lin_err = [&ridge, &lasso]
        .iter()
        .map(|m| max_abs_diff(&m.coefficients, &beta).max((m.intercept - b0).abs()))
        .fold(0.0, f64::max);

    // KNN on 1000 training rows, including duplicated rows to force ties.
    let mut train_rows: Vec<Vec<f64>> = (0..950).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
    for i in 0..50 {
        train_rows.push(train_rows[i * 7].clone());
    }
    let targets: Vec<f64> = train_rows.iter().map(|x| x[0] + x[1] * x[2]).collect();
    let train = Frame::from_rows(&["a", "b", "c"], &train_rows, targets.clone()).expect("frame");
    let queries: Vec<Vec<f64>> = (0..1000).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
    let qframe = Frame::from_rows(&["a", "b", "c"], &queries, vec![0.0; 1000]).expect("frame");
    let k = 7;
    let model = KnnModel::fit(&train, KnnParams { k, weighting: Weighting::Uniform, standardize: false })
        .map_err(|e| e.to_string())?;
    let pred = model.predict(&qframe).map_err(|e| e.to_string())?;
    let flat: Vec<f64> = train_rows.iter().flatten().copied().collect();
    let mut knn_mismatch = 0;
    for (q, got) in queries.iter().zip(&pred) {
        let mut all: Vec<(f64, usize)> = train_rows
            .iter()
            .enumerate()
            .map(|(i, t)| (t.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let idx: Vec<usize> = all[..k].iter().map(|a| a.1).collect();
        let from_lib: Vec<usize> = nearest(&flat, 3, q, k).iter().map(|nb| nb.index).collect();
        let mean = idx.iter().map(|&i| targets[i]).sum::<f64>() / k as f64;
        if idx != from_lib || mean != *got {
            knn_mismatch += 1;
        }
    }

    // Naive Bayes on a 3-class toy with one categorical and one Gaussian feature.
    let obs = [
        (0, 0.0, 1.0), (0, 0.0, 2.0), (0, 1.0, 3.0),
        (1, 1.0, 4.0), (1, 1.0, 6.0),
        (2, 0.0, 5.0), (2, 1.0, 5.0), (2, 0.0, 7.0), (2, 1.0, 9.0),
    ];
    let schema = Schema {
        features: vec![
            FeatureSpec::categorical("color", vec!["red".into(), "green".into()]),
            FeatureSpec::numeric("x"),
        ],
        target: "class".into(),
        task: Task::Classification { classes: vec!["a".into(), "b".into(), "c".into()] },
    };
    let data: Vec<f64> = obs.iter().flat_map(|o| [o.1, o.2]).collect();
    let target: Vec<f64> = obs.iter().map(|o| f64::from(o.0)).collect();
    let ids = (0..obs.len()).map(|i| i.to_string()).collect();
    let toy = Frame::new(schema, data, target, ids).expect("frame");
    let nb = fit_nb(&toy, NbParams { alpha: 1.0, var_smoothing: 0.0 }).map_err(|e| e.to_string())?;
    // Laplace with one pseudo-count per level and a missing slot (3 slots);
    // variances are population variances plus the 1e-12 floor.
    let prior = [3.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0];
    let p_color = [[3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0], [1.0 / 5.0, 3.0 / 5.0, 1.0 / 5.0], [3.0 / 7.0, 3.0 / 7.0, 1.0 / 7.0]];
    let mean = [2.0, 5.0, 6.5];
    let var = [2.0 / 3.0 + 1e-12, 1.0 + 1e-12, 2.75 + 1e-12];
    let gauss = |x: f64, c: usize| (-(x - mean[c]).powi(2) / (2.0 * var[c])).exp() / (2.0 * std::f64::consts::PI * var[c]).sqrt();
    let mut nb_err: f64 = 0.0;
    for (color, slot, x) in [(1.0, 1, 4.5), (0.0, 0, 2.5), (-1.0, 2, 6.0)] {
        let joint: Vec<f64> = (0..3).map(|c| prior[c] * p_color[c][slot] * gauss(x, c)).collect();
        let total: f64 = joint.iter().sum();
        let hand: Vec<f64> = joint.iter().map(|j| j / total).collect();
        nb_err = nb_err.max(max_abs_diff(&hand, &nb.predict_proba_row(&[color, x])));
    }
    check(
        lin_err < 1e-6 && knn_mismatch == 0 && nb_err < 1e-12,
        format!(
            "linear at lambda 0 vs least squares {lin_err:.2e}; knn mismatches {knn_mismatch}/1000; nb posterior error {nb_err:.2e}"
        ),
    )
}

// 6. elbow finds four planted blobs; Lloyd inertia never increases.
fn clustering() -> Outcome {
    let mut r = rng(66);
    let noise = Normal::new(0.0, 0.8).expect("normal");
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..250 {
            points.push(vec![center[0] + noise.sample(&mut r), center[1] + noise.sample(&mut r)]);
            truth.push(c);
        }
    }
    let ks: Vec<usize> = (1..=8).collect();
    let base = KMeansParams { seed: 6, ..KMeansParams::default() };
    let elbow = elbow_select(&points, &ks, &base).map_err(|e| e.to_string())?;
    let m = kmeans(&points, &KMeansParams { k: 4, ..base.clone() }).map_err(|e| e.to_string())?;
    let mut table = [[0usize; 4]; 4];
    for (&p, &t) in m.assignments.iter().zip(&truth) {
        table[t][p] += 1;
    }
    let agree = table.iter().map(|row| *row.iter().max().unwrap_or(&0)).sum::<usize>() as f64 / points.len() as f64;
    let mut monotone = true;
    for k in 1..=8 {
        let run = kmeans(&points, &KMeansParams { k, ..base.clone() }).map_err(|e| e.to_string())?;
        monotone &= run.inertia_trace.windows(2).all(|w| w[1] <= w[0]);
    }
    check(
        elbow.k == 4 && !elbow.degenerate && agree >= 0.95 && monotone,
        format!("elbow k = {}, agreement {:.3}, inertia monotone: {monotone}", elbow.k, agree),
    )
}

fn histogram_row_error(tables: &RawTables) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for d in Demographic::ALL {
        for metric in Metric::ALL {
            let g = conditional_2d_histogram(tables, d, metric, metric.default_bins()).map_err(|e| e.to_string())?;
            for (row, empty) in g.values.iter().zip(&g.empty_rows) {
                if !empty {
                    worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    Ok(worst)
}

// 7. calibrated marginals: units per buyer, conditional histograms, spend.
fn descriptive_statistics() -> Outcome {
    let s = generate(&SynthConfig::with_seed(7)).map_err(|e| e.to_string())?;
    let table = order_count_table(&s.tables);
    let target = [94.69, 4.77, 0.40, 0.06, 0.02, 0.01, 0.01, 0.005, 0.005, 0.03];
    let share_err = max_abs_diff(&table.percentages, &target);
    let row_err = histogram_row_error(&s.tables)?;
    let spend = spend_distribution(&s.tables, 10.0).map_err(|e| e.to_string())?;
    let (median, p90) = (spend.median.unwrap_or(f64::NAN), spend.p90.unwrap_or(f64::NAN));
    let rel = ((median - 80.0).abs() / 80.0).max((p90 - 210.0).abs() / 210.0);
    check(
        share_err <= 1.0 && row_err <= 1e-12 && rel <= 0.05,
        format!(
            "max share error {share_err:.3} pp over {} buyers; max row-sum error {row_err:.1e}; spend median {median:.2}, p90 {p90:.2}",
            table.total_buyers
        ),
    )
}

// 8. decision paths run from the base value to the model output.
fn decision_arithmetic() -> Outcome {
    let (sales, choice) = synthetic_frames(&SynthConfig { n_users: 20_000, ..SynthConfig::with_seed(8) });
    let mut worst: f64 = 0.0;
    let mut paths = 0;
    for frame in [&sales, &choice] {
        let m = fit(frame, &TrainParams { num_rounds: 80, ..TrainParams::default() }).map_err(|e| e.to_string())?;
        let set = tree_shap(&m, frame, None).map_err(|e| e.to_string())?;
        for e in &set.explanations {
            for o in 0..set.outputs.len() {
                let path = decision_plot_data(&set, e, o, None).map_err(|e| e.to_string())?;
                let first = path.steps.first().map_or(path.base_value, |s| s.cumulative - s.shap);
                let last = path.steps.last().map_or(path.base_value, |s| s.cumulative);
                worst = worst
                    .max((first - e.base_value[o]).abs())
                    .max((last - path.model_output).abs())
                    .max((path.model_output - m.predict_margin_row(&e.feature_values)[o]).abs());
                paths += 1;
            }
        }
    }
    check(worst < 1e-9, format!("{paths} paths; max endpoint error {worst:.2e}"))
}

fn run_pipeline(root: &Path, threads: usize) -> Result<(), String> {
    let steps: Vec<Vec<String>> = vec![
        vec!["synth", "--out", "data", "--seed", "9", "--n-users", "15000"],
        vec!["cluster", "--data", "data", "--out", "clusters"],
        vec!["ingest", "--data", "data", "--clusters", "clusters/clusters.json", "--out", "frames"],
        vec!["train", "--frame", "frames/sales.csv", "--out", "sales_model", "--rounds", "60"],
        vec!["train", "--frame", "frames/choice.csv", "--out", "choice_model", "--rounds", "30"],
        vec!["explain", "--model", "sales_model/model.json", "--frame", "frames/sales.csv", "--out", "sales_explain",
             "--sample-size", "400", "--h-sample", "100"],
        vec!["explain", "--model", "choice_model/model.json", "--frame", "frames/choice.csv", "--out",
             "choice_explain", "--sample-size", "300", "--h-sample", "80", "--set", "top_features=2"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in steps {
        let out = Command::new(bin())
            .args(&args)
            .current_dir(root)
            .env("GLASSBOX_THREADS", threads.to_string())
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

// 9. byte-identical artifacts across repeats and thread counts.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("a", 1), ("b", 4), ("c", 4)];
    for (name, threads) in runs {
        let dir = tmp.path().join(name);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        run_pipeline(&dir, threads)?;
    }
    let reference = files_below(&tmp.path().join("a"));
    let mut differing = Vec::new();
    for (name, _) in &runs[1..] {
        let other = files_below(&tmp.path().join(name));
        if other != reference {
            return Err(format!("run {name} produced a different file set"));
        }
        for f in &reference {
            let a = std::fs::read(tmp.path().join("a").join(f)).map_err(|e| e.to_string())?;
            let b = std::fs::read(tmp.path().join(name).join(f)).map_err(|e| e.to_string())?;
            if a != b {
                differing.push(format!("{name}/{}", f.display()));
            }
        }
    }
    check(
        differing.is_empty() && !reference.is_empty(),
        format!(
            "{} artifacts compared across 1, 4, 4 threads; differing: {:?}",
            reference.len(),
            differing
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("shapley oracle equivalence", shapley_oracle),
        ("local accuracy", local_accuracy),
        ("interaction consistency", interaction_consistency),
        ("benchmark ordering", benchmark_ordering),
        ("baseline oracles", baseline_oracles),
        ("clustering", clustering),
        ("descriptive statistics", descriptive_statistics),
        ("decision-plot arithmetic", decision_arithmetic),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                println!("FAIL {} {name} ({secs:.1}s): {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
