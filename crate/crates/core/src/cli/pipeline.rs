//! Library-level pipeline steps shared by the subcommands and the test
//! suites: table preparation, SKU clustering, frame building, training and
//! benchmarking on a common seeded split.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_lasso, fit_nb, fit_ridge, precision, rmse, select_k, select_lambda, train_test_split, Averaging,
    BaselineModel, GridResult, KnnModel, KnnParams, NbParams, Penalty, Weighting, K_GRID, LAMBDA_GRID,
};
use crate::cluster::{elbow_select, kmeans, ClusterModel, ElbowResult, KMeansParams};
use crate::error::{Error, Result};
use crate::frame::{Frame, Task};
use crate::gbdt::{self, Ensemble, TrainParams};
use crate::ingest::{build_choice_frame, build_sales_frame, count_gifts, dedup_clicks, sku_points, ClickHistory, Diagnostic, RawTables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Sales,
    Choice,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sales => "sales",
            Self::Choice => "choice",
        }
    }

    pub fn metric(self) -> &'static str {
        match self {
            Self::Sales => "rmse",
            Self::Choice => "macro_precision",
        }
    }

    pub fn default_models(self) -> Vec<ModelKind> {
        match self {
            Self::Sales => vec![ModelKind::Gbdt, ModelKind::Lasso, ModelKind::Ridge, ModelKind::Knn],
            Self::Choice => vec![ModelKind::Gbdt, ModelKind::Nb, ModelKind::Knn],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbdt,
    Lasso,
    Ridge,
    Knn,
    Nb,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gbdt => "gbdt",
            Self::Lasso => "lasso",
            Self::Ridge => "ridge",
            Self::Knn => "knn",
            Self::Nb => "nb",
        }
    }
}

/// Gift-folded tables and deduplicated histories.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tables: RawTables,
    pub history: ClickHistory,
}

pub fn prepare(raw: RawTables) -> Prepared {
    let tables = count_gifts(raw);
    let history = dedup_clicks(&tables);
    Prepared { tables, history }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Candidate k values for the elbow; a single value skips selection.
    pub k_range: Vec<usize>,
    pub seed: u64,
    pub standardize: bool,
    pub max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_range: (1..=8).collect(),
            seed: 0,
            standardize: true,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub elbow: Option<ElbowResult>,
    pub model: ClusterModel,
}

/// Clusters SKUs with both attributes; k comes from the elbow when more
/// than one candidate is given.
pub fn cluster_skus(tables: &RawTables, config: &ClusterConfig) -> Result<ClusterOutcome> {
    let (ids, points) = sku_points(tables);
    if points.is_empty() {
        return Err(Error::Data("no SKU has both attributes; nothing to cluster".into()));
    }
    let base = KMeansParams {
        k: config.k_range.first().copied().unwrap_or(1),
        seed: config.seed,
        max_iter: config.max_iter,
        standardize: config.standardize,
        ..KMeansParams::default()
    };
    let (k, elbow) = match config.k_range.as_slice() {
        [] => return Err(Error::Config("cluster k_range is empty".into())),
        [k] => (*k, None),
        range => {
            let feasible: Vec<usize> = range.iter().copied().filter(|&k| k <= points.len()).collect();
            let e = elbow_select(&points, &feasible, &base)?;
            (e.k, Some(e))
        }
    };
    let model = kmeans(&points, &KMeansParams { k, ..base })?.with_ids(ids);
    Ok(ClusterOutcome { elbow, model })
}

pub fn task_frame(prepared: &Prepared, task: TaskKind, clusters: Option<&ClusterModel>) -> Result<(Frame, Vec<Diagnostic>)> {
    let build = match task {
        TaskKind::Sales => build_sales_frame(&prepared.tables, &prepared.history)?,
        TaskKind::Choice => {
            let c = clusters.ok_or_else(|| {
                Error::Config("the choice task needs cluster labels; run `cluster` first".into())
            })?;
            build_choice_frame(&prepared.tables, &prepared.history, c)?
        }
    };
    Ok((build.frame, build.diagnostics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gbdt: TrainParams,
    pub lambda_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub folds: usize,
    pub cv_seed: u64,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub knn_weighting: Weighting,
    pub nb: NbParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gbdt: TrainParams::default(),
            lambda_grid: LAMBDA_GRID.to_vec(),
            k_grid: K_GRID.to_vec(),
            folds: 5,
            cv_seed: 0,
            lasso_tol: 1e-6,
            lasso_max_iter: 5000,
            knn_weighting: Weighting::Uniform,
            nb: NbParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TrainedModel {
    Gbdt { ensemble: Box<Ensemble> },
    Baseline { model: BaselineModel },
}

impl TrainedModel {
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        match self {
            Self::Gbdt { ensemble } => ensemble.predict(frame),
            Self::Baseline { model } => model.predict(frame),
        }
    }
}

/// Hyperparameter chosen by cross-validation, with the scores per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case")]
pub enum Selection {
    Lambda(GridResult<f64>),
    K(GridResult<usize>),
}

impl Selection {
    pub fn describe(&self) -> String {
        match self {
            Self::Lambda(g) => format!("lambda={}", g.best),
            Self::K(g) => format!("k={}", g.best),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    pub kind: ModelKind,
    pub model: TrainedModel,
    pub selection: Option<Selection>,
}

fn is_classification(frame: &Frame) -> bool {
    matches!(frame.schema().task, Task::Classification { .. })
}

/// Fits one model family, running the cross-validated grid where the family
/// has one.
pub fn train(frame: &Frame, kind: ModelKind, config: &ModelConfig) -> Result<Trained> {
    let classification = is_classification(frame);
    let (model, selection) = match kind {
        ModelKind::Gbdt => (
            TrainedModel::Gbdt {
                ensemble: Box::new(gbdt::fit(frame, &config.gbdt)?),
            },
            None,
        ),
        ModelKind::Lasso | ModelKind::Ridge => {
            if classification {
                return Err(Error::InvalidArgument(format!(
                    "{} is a regression model; use gbdt, knn or nb for the choice task",
                    kind.name()
                )));
            }
            let penalty = if kind == ModelKind::Lasso { Penalty::L1 } else { Penalty::L2 };
            let grid = select_lambda(
                frame,
                penalty,
                &config.lambda_grid,
                config.folds,
                config.cv_seed,
                config.lasso_tol,
                config.lasso_max_iter,
            )?;
            let m = match penalty {
                Penalty::L1 => fit_lasso(frame, grid.best, config.lasso_tol, config.lasso_max_iter)?,
                Penalty::L2 => fit_ridge(frame, grid.best)?,
            };
            (TrainedModel::Baseline { model: BaselineModel::Linear(m) }, Some(Selection::Lambda(grid)))
        }
        ModelKind::Knn => {
            let params = KnnParams {
                weighting: config.knn_weighting,
                ..KnnParams::default()
            };
            let grid = select_k(frame, &params, &config.k_grid, config.folds, config.cv_seed)?;
            let m = KnnModel::fit(frame, KnnParams { k: grid.best, ..params })?;
            (TrainedModel::Baseline { model: BaselineModel::Knn(m) }, Some(Selection::K(grid)))
        }
        ModelKind::Nb => {
            if !classification {
                return Err(Error::InvalidArgument(
                    "naive Bayes is a classifier; use it with the choice task".into(),
                ));
            }
            (
                TrainedModel::Baseline {
                    model: BaselineModel::NaiveBayes(fit_nb(frame, config.nb)?),
                },
                None,
            )
        }
    };
    Ok(Trained { kind, model, selection })
}

/// RMSE for regression frames, macro precision for classification frames.
pub fn score(frame: &Frame, predictions: &[f64]) -> Result<f64> {
    if is_classification(frame) {
        Ok(precision(predictions, frame.target(), Averaging::Macro)?.value)
    } else {
        rmse(predictions, frame.target())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Empty means the task's default model list.
    pub models: Vec<ModelKind>,
    pub model: ModelConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            split_seed: 0,
            models: Vec::new(),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: ModelKind,
    pub score: f64,
    pub selected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub task: TaskKind,
    pub metric: String,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn score_of(&self, model: ModelKind) -> Option<f64> {
        self.rows.iter().find(|r| r.model == model).map(|r| r.score)
    }
}

/// Trains every requested model on the same seeded split and scores it on
/// the held-out rows.
pub fn bench(frame: &Frame, task: TaskKind, config: &BenchConfig) -> Result<BenchReport> {
    let split = train_test_split(frame.n_rows(), config.test_fraction, config.split_seed)?;
    let train_frame = frame.subset(&split.train);
    let test_frame = frame.subset(&split.test);
    let models = if config.models.is_empty() { task.default_models() } else { config.models.clone() };
    let rows = models
        .iter()
        .map(|&kind| {
            let trained = train(&train_frame, kind, &config.model)?;
            let pred = trained.model.predict(&test_frame)?;
            Ok(BenchRow {
                model: kind,
                score: score(&test_frame, &pred)?,
                selected: trained.selection.as_ref().map(Selection::describe),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        task,
        metric: task.metric().into(),
        test_fraction: config.test_fraction,
        split_seed: config.split_seed,
        train_ids: train_frame.row_ids().to_vec(),
        test_ids: test_frame.row_ids().to_vec(),
        rows,
    })
}
