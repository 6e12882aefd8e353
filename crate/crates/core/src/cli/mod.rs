//! Command-line orchestration.
//!
//! Every subcommand resolves its parameters from built-in defaults, an
//! optional JSON `--config` file (a parameter object or an earlier run's
//! `config.json` snapshot) and flags, in that order. `--set path=value`
//! reaches any parameter by its dotted path.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod products;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::Overrides;
use pipeline::{ModelKind, TaskKind};

pub const THREADS_ENV: &str = "GLASSBOX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "glassbox", version, about = "Transaction analytics with explainable boosted trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON parameter file or an earlier run's config.json.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any parameter by dotted path, e.g. `hyper.gbdt.num_rounds=50`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Overrides> {
        let mut o = Overrides::new();
        for s in &self.set {
            o.assign(s)?;
        }
        Ok(o)
    }
}

#[derive(Debug, Args)]
pub struct InputFlags {
    /// Month the records must fall in (YYYY-MM).
    #[arg(long)]
    pub month: Option<String>,
    /// Skip malformed rows with a diagnostic instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

impl InputFlags {
    fn apply(&self, o: &mut Overrides) -> Result<()> {
        let window = self.month.as_deref().map(commands::parse_month).transpose()?;
        o.set("input.window", window).flag("input.lenient", self.lenient);
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct HyperFlags {
    /// Boosting rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_leaves: Option<usize>,
    #[arg(long)]
    pub min_child_weight: Option<f64>,
    #[arg(long)]
    pub min_data_in_leaf: Option<usize>,
    /// L2 penalty on leaf values.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Boosting seed.
    #[arg(long)]
    pub gbdt_seed: Option<u64>,
    /// Fit the regression target on log1p scale.
    #[arg(long)]
    pub log1p: bool,
    /// Cross-validation folds for the baseline grids.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
}

impl HyperFlags {
    fn apply(&self, prefix: &str, o: &mut Overrides) {
        let p = |s: &str| format!("{prefix}.{s}");
        o.set(&p("gbdt.num_rounds"), self.rounds)
            .set(&p("gbdt.learning_rate"), self.learning_rate)
            .set(&p("gbdt.max_leaves"), self.max_leaves)
            .set(&p("gbdt.min_child_weight"), self.min_child_weight)
            .set(&p("gbdt.min_data_in_leaf"), self.min_data_in_leaf)
            .set(&p("gbdt.l2_leaf_penalty"), self.l2)
            .set(&p("gbdt.seed"), self.gbdt_seed)
            .flag(&p("gbdt.log1p_target"), self.log1p)
            .set(&p("folds"), self.folds)
            .set(&p("cv_seed"), self.cv_seed);
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic month of users, clicks, orders and SKUs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_users: Option<usize>,
        #[arg(long)]
        n_skus: Option<usize>,
        #[arg(long)]
        buyer_fraction: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Parse raw tables and build the model-ready frames.
    Ingest {
        /// Directory holding users.csv, clicks.csv, orders.csv and skus.csv.
        #[arg(long)]
        data: PathBuf,
        /// clusters.json from `cluster`; enables the choice frame.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        input: InputFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Descriptive statistics over the raw tables.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spend_bin: Option<f64>,
        #[arg(long)]
        span_bin_minutes: Option<u32>,
        #[command(flatten)]
        input: InputFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Cluster SKUs on their attributes, choosing k by the elbow.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Fixed k (skips the elbow).
        #[arg(long, conflicts_with_all = ["k_min", "k_max"])]
        k: Option<usize>,
        #[arg(long, requires = "k_max")]
        k_min: Option<usize>,
        #[arg(long, requires = "k_min")]
        k_max: Option<usize>,
        /// Cluster raw attribute values instead of z-scores.
        #[arg(long)]
        no_standardize: bool,
        #[command(flatten)]
        input: InputFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model on a frame.
    Train {
        /// Frame CSV written by `ingest` (its .schema.json must sit beside it).
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long, value_enum)]
        task: Option<TaskKind>,
        #[command(flatten)]
        hyper: HyperFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Compare models on one seeded train/test split.
    Bench {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        task: Option<TaskKind>,
        /// Models to compare (default: every model for the task).
        #[arg(long, value_enum, value_delimiter = ',')]
        models: Vec<ModelKind>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[command(flatten)]
        hyper: HyperFlags,
        #[command(flatten)]
        common: Common,
    },
    /// SHAP explanations: importance, value, dependence and decision products.
    Explain {
        /// model.json written by `train` (gbdt only).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Row id to draw a decision path for (repeatable).
        #[arg(long = "row")]
        rows: Vec<String>,
        /// Feature to draw a dependence plot for (repeatable).
        #[arg(long = "feature")]
        features: Vec<String>,
        /// Output label (class name for the choice task).
        #[arg(long)]
        output: Option<String>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        h_sample: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a product CSV (or a directory of them) to SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// SVG file, or a directory when the input is a directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Caps the global rayon pool from the environment.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}=`{raw}` must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, seed, n_users, n_skus, buyer_fraction, common } => {
            let mut o = common.overrides()?;
            o.set("seed", seed)
                .set("n_users", n_users)
                .set("n_skus", n_skus)
                .set("buyer_fraction", buyer_fraction);
            commands::cmd_synth(&out, common.config.as_deref(), &o)
        }
        Command::Ingest { data, clusters, out, input, common } => {
            let mut o = common.overrides()?;
            input.apply(&mut o)?;
            commands::cmd_ingest(&data, clusters.as_deref(), &out, common.config.as_deref(), &o)
        }
        Command::Stats { data, out, spend_bin, span_bin_minutes, input, common } => {
            let mut o = common.overrides()?;
            input.apply(&mut o)?;
            o.set("spend_bin_width", spend_bin).set("span_bin_minutes", span_bin_minutes);
            commands::cmd_stats(&data, &out, common.config.as_deref(), &o)
        }
        Command::Cluster { data, out, seed, k, k_min, k_max, no_standardize, input, common } => {
            let mut o = common.overrides()?;
            input.apply(&mut o)?;
            let range = match (k, k_min, k_max) {
                (Some(k), _, _) => Some(vec![k]),
                (None, Some(a), Some(b)) if a <= b => Some((a..=b).collect()),
                (None, Some(_), Some(_)) => {
                    return Err(Error::InvalidArgument("--k-min must not exceed --k-max".into()))
                }
                _ => None,
            };
            o.set("cluster.seed", seed)
                .set("cluster.k_range", range)
                .set("cluster.standardize", no_standardize.then_some(false));
            commands::cmd_cluster(&data, &out, common.config.as_deref(), &o)
        }
        Command::Train { frame, out, model, task, hyper, common } => {
            let mut o = common.overrides()?;
            o.set("model", model).set("task", task);
            hyper.apply("hyper", &mut o);
            commands::cmd_train(&frame, &out, common.config.as_deref(), &o)
        }
        Command::Bench { frame, out, task, models, test_fraction, split_seed, hyper, common } => {
            let mut o = common.overrides()?;
            o.set("task", task)
                .set("bench.models", (!models.is_empty()).then_some(models))
                .set("bench.test_fraction", test_fraction)
                .set("bench.split_seed", split_seed);
            hyper.apply("bench.model", &mut o);
            commands::cmd_bench(&frame, &out, common.config.as_deref(), &o)
        }
        Command::Explain { model, frame, out, rows, features, output, sample_size, h_sample, seed, common } => {
            let mut o = common.overrides()?;
            o.set("rows", (!rows.is_empty()).then_some(rows))
                .set("features", (!features.is_empty()).then_some(features))
                .set("output", output)
                .set("sample_size", sample_size)
                .set("h_sample", h_sample)
                .set("seed", seed);
            commands::cmd_explain(&model, &frame, &out, common.config.as_deref(), &o)
        }
        Command::Plot { input, out } => commands::cmd_plot(&input, out.as_deref()).map(|_| ()),
    }
}
