//! Subcommand handlers. Each resolves its parameters, reads upstream
//! artifacts, writes its products and a resolved-config snapshot.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{read_json, resolve, write_json, Overrides, RunConfig};
use super::pipeline::{
    bench, cluster_skus, prepare, score, task_frame, train, BenchConfig, ClusterConfig, ClusterOutcome, ModelConfig,
    ModelKind, TaskKind, Trained, TrainedModel,
};
use super::products::{num, opt_num, read_product, write_product, PlotKind, PlotSpec, ProductMeta, Table};
use super::svg::render;
use crate::error::{Error, Result};
use crate::frame::{Frame, Task};
use crate::gbdt::Ensemble;
use crate::ingest::{parse_tables, sku_points, ClickHistory, MonthWindow, ParseOptions, RawTables, TablePaths};
use crate::shap::{
    decision_plot_data, dependence_data, importance, interaction_partner, sample_rows, tree_shap, value_plot_data,
    ExplanationSet,
};
use crate::stats::{
    conditional_2d_histogram, interaction_time_distribution, order_count_table, spend_distribution, Demographic,
    Metric,
};
use crate::synth::{generate, SynthConfig};

pub const CLUSTERS_FILE: &str = "clusters.json";
pub const MODEL_FILE: &str = "model.json";

fn out_dir(path: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(path)?;
    Ok(path.to_path_buf())
}

/// Parses `YYYY-MM` into the month's window.
pub fn parse_month(s: &str) -> Result<MonthWindow> {
    let bad = || Error::InvalidArgument(format!("`{s}` is not a YYYY-MM month"));
    let (y, m) = s.split_once('-').ok_or_else(bad)?;
    let (y, m): (i32, u32) = (y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
    NaiveDate::from_ymd_opt(y, m, 1).ok_or_else(bad)?;
    Ok(MonthWindow::month(y, m))
}

/// Where and how the four raw tables are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct InputParams {
    pub window: MonthWindow,
    /// Skip malformed rows with a diagnostic instead of failing.
    pub lenient: bool,
}


fn read_tables(data: &Path, input: &InputParams) -> Result<RawTables> {
    let paths = TablePaths::in_dir(data);
    if !data.is_dir() {
        return Err(Error::MissingArtifact {
            what: "table directory".into(),
            path: data.to_path_buf(),
            producer: "synth".into(),
        });
    }
    parse_tables(&paths, input.window, ParseOptions { lenient: input.lenient })
}

fn read_frame(path: &Path) -> Result<Frame> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            what: "frame".into(),
            path: path.to_path_buf(),
            producer: "ingest".into(),
        });
    }
    Frame::read(path)
}

fn task_of(frame: &Frame, requested: Option<TaskKind>) -> Result<TaskKind> {
    let actual = match frame.schema().task {
        Task::Classification { .. } => TaskKind::Choice,
        Task::Regression => TaskKind::Sales,
    };
    match requested {
        Some(t) if t != actual => Err(Error::InvalidArgument(format!(
            "the frame holds the {} task but --task {} was given",
            actual.name(),
            t.name()
        ))),
        _ => Ok(actual),
    }
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(out: &Path, config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let params: SynthConfig = resolve("synth", config, overrides)?;
    params.validate()?;
    let out = out_dir(out)?;
    let synthetic = generate(&params)?;
    synthetic.write_dir(&out)?;
    RunConfig::new("synth", &params).write(&out)?;
    Ok(())
}

// -------------------------------------------------------------- cluster

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub input: InputParams,
    pub cluster: ClusterConfig,
}

pub fn cmd_cluster(data: &Path, out: &Path, config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let params: ClusterParams = resolve("cluster", config, overrides)?;
    let tables = read_tables(data, &params.input)?;
    let out = out_dir(out)?;
    let outcome = cluster_skus(&tables, &params.cluster)?;
    write_json(&out.join(CLUSTERS_FILE), &outcome)?;

    if let Some(e) = &outcome.elbow {
        let mut t = Table::new(&["k", "inertia", "chord_distance"]);
        for ((k, inertia), d) in e.curve.iter().zip(&e.chord_distance) {
            t.push(vec![k.to_string(), num(*inertia), num(*d)]);
        }
        let meta = ProductMeta {
            product: "elbow".into(),
            title: "K-means inertia by number of clusters".into(),
            x_label: "k".into(),
            y_label: "inertia".into(),
            plot: PlotSpec::new(PlotKind::Line, "k", "inertia"),
            metadata: json!({ "selected_k": e.k, "degenerate": e.degenerate, "seed": outcome.model.seed }),
        };
        write_product(&out, "elbow", &t, &meta)?;
    }

    let (ids, points) = sku_points(&tables);
    let mut t = Table::new(&["sku_id", "attribute1", "attribute2", "cluster", "cluster_color"]);
    let k = outcome.model.k().max(2) - 1;
    for ((id, p), label) in ids.iter().zip(&points).zip(&outcome.model.assignments) {
        t.push(vec![
            id.clone(),
            num(p[0]),
            num(p[1]),
            label.to_string(),
            num(*label as f64 / k as f64),
        ]);
    }
    let meta = ProductMeta {
        product: "sku_clusters".into(),
        title: "SKU clusters".into(),
        x_label: "attribute1".into(),
        y_label: "attribute2".into(),
        plot: PlotSpec::new(PlotKind::Scatter, "attribute1", "attribute2").color("cluster_color"),
        metadata: json!({ "k": outcome.model.k(), "sizes": outcome.model.sizes(), "centroids": outcome.model.centroids }),
    };
    write_product(&out, "sku_clusters", &t, &meta)?;
    RunConfig::new("cluster", &params).input("data", data, &out).write(&out)?;
    Ok(())
}

// --------------------------------------------------------------- ingest

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestParams {
    pub input: InputParams,
}

pub fn cmd_ingest(
    data: &Path,
    clusters: Option<&Path>,
    out: &Path,
    config: Option<&Path>,
    overrides: &Overrides,
) -> Result<()> {
    let params: IngestParams = resolve("ingest", config, overrides)?;
    let raw = read_tables(data, &params.input)?;
    let counts = raw.counts();
    let mut diagnostics = raw.diagnostics.clone();
    let prepared = prepare(raw);
    let out = out_dir(out)?;

    let (sales, diag) = task_frame(&prepared, TaskKind::Sales, None)?;
    diagnostics.extend(diag);
    sales.write(&out, "sales")?;
    let mut frames = vec![json!({ "task": "sales", "rows": sales.n_rows(), "feature_hash": sales.feature_hash() })];

    let mut snapshot = RunConfig::new("ingest", &params).input("data", data, &out);
    if let Some(path) = clusters {
        let outcome: ClusterOutcome = read_json(path, "cluster labels", "cluster")?;
        let (choice, diag) = task_frame(&prepared, TaskKind::Choice, Some(&outcome.model))?;
        diagnostics.extend(diag);
        choice.write(&out, "choice")?;
        frames.push(json!({ "task": "choice", "rows": choice.n_rows(), "feature_hash": choice.feature_hash() }));
        snapshot = snapshot.input("clusters", path, &out);
    }
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    write_json(&out.join("summary.json"), &json!({ "tables": counts, "frames": frames }))?;
    snapshot.write(&out)?;
    Ok(())
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsParams {
    pub input: InputParams,
    pub spend_bin_width: f64,
    pub span_bin_minutes: u32,
}

impl Default for StatsParams {
    fn default() -> Self {
        Self {
            input: InputParams::default(),
            spend_bin_width: 10.0,
            span_bin_minutes: 60,
        }
    }
}

pub fn cmd_stats(data: &Path, out: &Path, config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let params: StatsParams = resolve("stats", config, overrides)?;
    let tables = read_tables(data, &params.input)?;
    let out = out_dir(out)?;

    let oc = order_count_table(&tables);
    let mut t = Table::new(&["units", "buyers", "percent"]);
    for ((l, c), p) in oc.labels.iter().zip(&oc.counts).zip(&oc.percentages) {
        t.push(vec![l.clone(), c.to_string(), num(*p)]);
    }
    let meta = ProductMeta {
        product: "order_counts".into(),
        title: "Buyers by units ordered".into(),
        x_label: "share of buyers (%)".into(),
        y_label: "units".into(),
        plot: PlotSpec::new(PlotKind::Bar, "units", "percent"),
        metadata: json!({ "total_buyers": oc.total_buyers }),
    };
    write_product(&out, "order_counts", &t, &meta)?;

    let spend = spend_distribution(&tables, params.spend_bin_width)?;
    let mut t = Table::new(&["bin_start", "bin_end", "probability"]);
    let edges = &spend.histogram.bin_edges;
    for (i, p) in spend.histogram.counts.iter().enumerate() {
        let end = if spend.histogram.last_bin_open && i + 1 == spend.histogram.counts.len() {
            String::new()
        } else {
            num(edges[i + 1])
        };
        t.push(vec![num(edges[i]), end, num(*p)]);
    }
    let meta = ProductMeta {
        product: "spend".into(),
        title: "Spend per buyer".into(),
        x_label: "spend".into(),
        y_label: "probability".into(),
        plot: PlotSpec::new(PlotKind::Line, "bin_start", "probability"),
        metadata: json!({
            "buyers": spend.buyers,
            "median": spend.median,
            "p90": spend.p90,
            "last_bin_open": spend.histogram.last_bin_open,
        }),
    };
    write_product(&out, "spend", &t, &meta)?;

    let history = ClickHistory::raw(&tables);
    let cohorts = interaction_time_distribution(&history, params.span_bin_minutes)?;
    let mut t = Table::new(&["cohort", "minutes", "probability"]);
    let mut checkpoints = serde_json::Map::new();
    for c in &cohorts {
        for (edge, p) in c.pdf.bin_edges.iter().zip(&c.pdf.counts) {
            t.push(vec![c.cohort.clone(), num(*edge), num(*p)]);
        }
        let cp: serde_json::Map<String, serde_json::Value> =
            c.checkpoints.iter().map(|(l, _, v)| (l.clone(), json!(v))).collect();
        checkpoints.insert(c.cohort.clone(), json!({ "users": c.users, "cdf": cp }));
    }
    let meta = ProductMeta {
        product: "interaction_time".into(),
        title: "First-to-last interaction span".into(),
        x_label: "minutes".into(),
        y_label: "probability".into(),
        plot: PlotSpec::new(PlotKind::Line, "minutes", "probability").series("cohort").log_x(),
        metadata: json!({ "bin_minutes": params.span_bin_minutes, "cohorts": checkpoints }),
    };
    write_product(&out, "interaction_time", &t, &meta)?;

    for feature in Demographic::ALL {
        for metric in Metric::ALL {
            let grid = conditional_2d_histogram(&tables, feature, metric, metric.default_bins())?;
            let mut header = vec![feature.name().to_string()];
            header.extend(grid.col_edges[..grid.values.first().map_or(0, Vec::len)].iter().map(|e| num(*e)));
            let mut t = Table::with_header(header);
            for (label, row) in grid.row_labels.iter().zip(&grid.values) {
                let mut r = vec![label.clone()];
                r.extend(row.iter().map(|v| num(*v)));
                t.push(r);
            }
            let meta = ProductMeta {
                product: "conditional_histogram".into(),
                title: format!("{} by {}", metric.name(), feature.name()),
                x_label: metric.name().into(),
                y_label: feature.name().into(),
                plot: PlotSpec::new(PlotKind::Heatmap, feature.name(), ""),
                metadata: json!({
                    "row_counts": grid.row_counts,
                    "empty_rows": grid.empty_rows,
                    "last_bin_open": grid.last_bin_open,
                    "normalization": "row",
                }),
            };
            write_product(&out, &format!("hist2d_{}_{}", feature.name(), metric.name()), &t, &meta)?;
        }
    }
    RunConfig::new("stats", &params).input("data", data, &out).write(&out)?;
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunParams {
    pub model: ModelKind,
    pub task: Option<TaskKind>,
    pub hyper: ModelConfig,
}

impl Default for TrainRunParams {
    fn default() -> Self {
        Self {
            model: ModelKind::Gbdt,
            task: None,
            hyper: ModelConfig::default(),
        }
    }
}

pub fn cmd_train(frame_path: &Path, out: &Path, config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let params: TrainRunParams = resolve("train", config, overrides)?;
    let frame = read_frame(frame_path)?;
    let task = task_of(&frame, params.task)?;
    let out = out_dir(out)?;
    let trained = train(&frame, params.model, &params.hyper)?;
    let pred = trained.model.predict(&frame)?;
    write_json(&out.join(MODEL_FILE), &trained)?;
    write_json(
        &out.join("train_report.json"),
        &json!({
            "task": task,
            "model": params.model,
            "rows": frame.n_rows(),
            "feature_hash": frame.feature_hash(),
            "metric": task.metric(),
            "train_score": score(&frame, &pred)?,
            "selection": trained.selection,
        }),
    )?;
    RunConfig::new("train", &params).input("frame", frame_path, &out).write(&out)?;
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchRunParams {
    pub task: Option<TaskKind>,
    pub bench: BenchConfig,
}

pub fn cmd_bench(frame_path: &Path, out: &Path, config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let params: BenchRunParams = resolve("bench", config, overrides)?;
    let frame = read_frame(frame_path)?;
    let task = task_of(&frame, params.task)?;
    let out = out_dir(out)?;
    let report = bench(&frame, task, &params.bench)?;
    write_json(&out.join("bench_report.json"), &report)?;
    let mut t = Table::new(&["model", "score", "selected"]);
    for r in &report.rows {
        t.push(vec![r.model.name().into(), num(r.score), r.selected.clone().unwrap_or_default()]);
    }
    let meta = ProductMeta {
        product: "bench".into(),
        title: format!("{} benchmark ({})", task.name(), task.metric()),
        x_label: task.metric().into(),
        y_label: "model".into(),
        plot: PlotSpec::new(PlotKind::Bar, "model", "score"),
        metadata: json!({
            "task": task,
            "metric": task.metric(),
            "test_fraction": report.test_fraction,
            "split_seed": report.split_seed,
            "train_rows": report.train_ids.len(),
            "test_rows": report.test_ids.len(),
        }),
    };
    write_product(&out, "bench", &t, &meta)?;
    RunConfig::new("bench", &params).input("frame", frame_path, &out).write(&out)?;
    Ok(())
}

// -------------------------------------------------------------- explain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainParams {
    /// Output label to explain; the first output when unset.
    pub output: Option<String>,
    /// Rows explained; a seeded sample when the frame is larger.
    pub sample_size: usize,
    pub seed: u64,
    /// Row ids that get decision paths (always explained).
    pub rows: Vec<String>,
    /// Features that get dependence plots; the most important ones when empty.
    pub features: Vec<String>,
    pub top_features: usize,
    /// Sample size for partial dependence when choosing interaction partners.
    pub h_sample: usize,
}

impl Default for ExplainParams {
    fn default() -> Self {
        Self {
            output: None,
            sample_size: 2000,
            seed: 0,
            rows: Vec::new(),
            features: Vec::new(),
            top_features: 3,
            h_sample: 200,
        }
    }
}

fn file_stem_for(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn cmd_explain(
    model_path: &Path,
    frame_path: &Path,
    out: &Path,
    config: Option<&Path>,
    overrides: &Overrides,
) -> Result<()> {
    let params: ExplainParams = resolve("explain", config, overrides)?;
    let trained: Trained = read_json(model_path, "model", "train")?;
    let ensemble: Ensemble = match trained.model {
        TrainedModel::Gbdt { ensemble } => *ensemble,
        TrainedModel::Baseline { .. } => {
            return Err(Error::InvalidArgument(format!(
                "explanations need a gbdt model; {} holds {}",
                model_path.display(),
                trained.kind.name()
            )))
        }
    };
    let frame = read_frame(frame_path)?;
    if ensemble.feature_hash != frame.feature_hash() {
        return Err(Error::SchemaHash {
            model: ensemble.feature_hash.clone(),
            frame: frame.feature_hash(),
        });
    }
    if params.sample_size == 0 || params.h_sample == 0 {
        return Err(Error::Config("sample_size and h_sample must be positive".into()));
    }

    let mut rows = sample_rows(frame.n_rows(), params.sample_size, params.seed);
    let mut decision_rows = Vec::new();
    for id in &params.rows {
        let i = frame
            .row_ids()
            .iter()
            .position(|r| r == id)
            .ok_or_else(|| Error::InvalidArgument(format!("row `{id}` is not in {}", frame_path.display())))?;
        decision_rows.push(i);
        rows.push(i);
    }
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() {
        return Err(Error::Data("the frame has no rows to explain".into()));
    }
    if decision_rows.is_empty() {
        decision_rows.push(rows[0]);
    }

    let set = tree_shap(&ensemble, &frame, Some(&rows))?;
    let output = match &params.output {
        Some(label) => set.output_index(label)?,
        None => 0,
    };
    let out = out_dir(out)?;
    write_shap_values(&out, &set)?;

    let ranking = importance(&set, output)?;
    let mut t = Table::new(&["rank", "feature", "mean_abs_shap"]);
    for r in &ranking {
        t.push(vec![r.rank.to_string(), r.feature.clone(), num(r.mean_abs_shap)]);
    }
    let meta_common = json!({
        "output": set.outputs[output],
        "output_space": set.output_space,
        "rows_explained": set.explanations.len(),
        "feature_hash": ensemble.feature_hash,
    });
    write_product(
        &out,
        "importance",
        &t,
        &ProductMeta {
            product: "importance".into(),
            title: "Mean |SHAP value|".into(),
            x_label: "mean |SHAP value|".into(),
            y_label: "feature".into(),
            plot: PlotSpec::new(PlotKind::Bar, "feature", "mean_abs_shap"),
            metadata: meta_common.clone(),
        },
    )?;

    let lanes: Vec<&str> = ranking.iter().map(|r| r.feature.as_str()).collect();
    let mut t = Table::new(&["feature", "lane", "row_id", "shap", "value", "display", "color"]);
    for r in value_plot_data(&set, output)? {
        let lane = lanes.iter().position(|f| *f == r.feature).unwrap_or(0);
        t.push(vec![
            r.feature,
            num(-(lane as f64)),
            r.row_id,
            num(r.shap),
            num(r.value),
            r.display,
            opt_num(r.color),
        ]);
    }
    write_product(
        &out,
        "value",
        &t,
        &ProductMeta {
            product: "value".into(),
            title: "SHAP values by feature".into(),
            x_label: "SHAP value".into(),
            y_label: "feature (lane 0 is most important)".into(),
            plot: PlotSpec::new(PlotKind::Scatter, "shap", "lane").color("color"),
            metadata: json!({ "lanes": lanes, "common": meta_common }),
        },
    )?;

    let dependence_features: Vec<usize> = if params.features.is_empty() {
        ranking
            .iter()
            .take(params.top_features)
            .map(|r| set.feature_index(&r.feature))
            .collect::<Result<_>>()?
    } else {
        params.features.iter().map(|f| set.feature_index(f)).collect::<Result<_>>()?
    };
    let h_idx = sample_rows(frame.n_rows(), params.h_sample, params.seed);
    let h_rows: Vec<Vec<f64>> = h_idx.iter().map(|&i| frame.row(i).to_vec()).collect();
    let mut partners = Vec::new();
    for &j in &dependence_features {
        let partner = interaction_partner(&ensemble, j, &h_rows, output)?;
        let d = dependence_data(&set, j, partner, output)?;
        let mut t = Table::new(&["row_id", "x", "x_display", "shap", "partner_value", "color"]);
        for r in &d.records {
            t.push(vec![
                r.row_id.clone(),
                num(r.x),
                r.x_display.clone(),
                num(r.shap),
                opt_num(r.partner_value),
                opt_num(r.color),
            ]);
        }
        let mut spec = PlotSpec::new(PlotKind::Scatter, "x", "shap");
        if d.partner.is_some() {
            spec = spec.color("color");
        }
        partners.push(json!({ "feature": d.feature, "partner": d.partner, "h": d.partner_h }));
        write_product(
            &out,
            &format!("dependence_{}", file_stem_for(&d.feature)),
            &t,
            &ProductMeta {
                product: "dependence".into(),
                title: match &d.partner {
                    Some(p) => format!("Dependence on {} (color: {p})", d.feature),
                    None => format!("Dependence on {}", d.feature),
                },
                x_label: d.feature.clone(),
                y_label: format!("SHAP value for {}", d.feature),
                plot: spec,
                metadata: json!({ "partner": d.partner, "partner_h": d.partner_h, "common": meta_common }),
            },
        )?;
    }

    for &i in &decision_rows {
        let pos = rows.binary_search(&i).expect("decision rows are explained");
        let path = decision_plot_data(&set, &set.explanations[pos], output, None)?;
        let mut t = Table::new(&["step", "feature", "value", "display", "shap", "cumulative"]);
        t.push(vec!["0".into(), "base".into(), String::new(), String::new(), "0".into(), num(path.base_value)]);
        for (s, st) in path.steps.iter().enumerate() {
            t.push(vec![
                (s + 1).to_string(),
                st.feature.clone(),
                num(st.value),
                st.display.clone(),
                num(st.shap),
                num(st.cumulative),
            ]);
        }
        write_product(
            &out,
            &format!("decision_{}", file_stem_for(&path.row_id)),
            &t,
            &ProductMeta {
                product: "decision".into(),
                title: format!("Decision path for {}", path.row_id),
                x_label: path.output_space.clone(),
                y_label: "step".into(),
                plot: PlotSpec::new(PlotKind::Line, "cumulative", "step"),
                metadata: json!({
                    "row_id": path.row_id,
                    "output": path.output,
                    "base_value": path.base_value,
                    "model_output": path.model_output,
                }),
            },
        )?;
    }

    write_json(
        &out.join("explain_report.json"),
        &json!({
            "output": set.outputs[output],
            "outputs": set.outputs,
            "output_space": set.output_space,
            "base_value": set.explanations[0].base_value,
            "rows_explained": set.explanations.len(),
            "feature_hash": ensemble.feature_hash,
            "interaction_partners": partners,
        }),
    )?;
    RunConfig::new("explain", &params)
        .input("model", model_path, &out)
        .input("frame", frame_path, &out)
        .write(&out)?;
    Ok(())
}

/// One line per (row, output): base, model margin and every φ.
fn write_shap_values(out: &Path, set: &ExplanationSet) -> Result<()> {
    let mut header = vec!["row_id".to_string(), "output".into(), "base_value".into(), "model_output".into()];
    header.extend(set.features.iter().map(|f| f.name.clone()));
    let mut t = Table::with_header(header);
    for e in &set.explanations {
        for (o, label) in set.outputs.iter().enumerate() {
            let mut r = vec![e.row_id.clone(), label.clone(), num(e.base_value[o]), num(e.model_output[o])];
            r.extend(e.shap_values[o].iter().map(|v| num(*v)));
            t.push(r);
        }
    }
    t.write_csv(&out.join("shap_values.csv"))
}

// ----------------------------------------------------------------- plot

/// Renders one product, or every product in a directory, to SVG.
pub fn cmd_plot(input: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let sources: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        v.retain(|p| p.extension().is_some_and(|e| e == "csv") && p.with_extension("json").exists());
        v.sort();
        v
    } else if input.exists() {
        vec![input.to_path_buf()]
    } else {
        return Err(Error::MissingFile { path: input.to_path_buf() });
    };
    let mut written = Vec::new();
    for src in sources {
        let (table, meta) = read_product(&src)?;
        let svg = render(&table, &meta)?;
        let dest = match out {
            Some(o) if !input.is_dir() => o.to_path_buf(),
            Some(o) => {
                std::fs::create_dir_all(o)?;
                o.join(src.with_extension("svg").file_name().expect("file name"))
            }
            None => src.with_extension("svg"),
        };
        std::fs::write(&dest, svg)?;
        written.push(dest);
    }
    Ok(written)
}
