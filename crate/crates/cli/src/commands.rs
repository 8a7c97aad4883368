//! Subcommand drivers. Each creates a run directory, performs its stage and
//! finishes with a manifest (plus a `FAILED` marker on error).

use std::path::PathBuf;

use pricegraph::data::{synth_corpus, write_ohlcv};
use pricegraph::train::evaluate;

use crate::config::{Config, ConfigError};
use crate::pipeline::{
    backtest_all, build_embeddings, build_graphs, datasets, evaluate_all, load_model, load_windows, metrics_row,
    train_model, METRICS_HEADER,
};
use crate::run::RunDir;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Graph,
    Embed,
    Train,
    Eval { checkpoint: PathBuf },
    Backtest { checkpoint: PathBuf },
    Pipeline,
    Synth { out: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Graph => "graph",
            Command::Embed => "embed",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Backtest { .. } => "backtest",
            Command::Pipeline => "pipeline",
            Command::Synth { .. } => "synth",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: PathBuf,
    /// Human-readable summary printed by the binary.
    pub summary: String,
}

/// Checks that need the filesystem, done before any run directory exists.
pub fn preflight(cfg: &Config, cmd: &Command) -> Result<(), ConfigError> {
    cfg.validate()?;
    if matches!(cmd, Command::Synth { .. }) {
        return Ok(());
    }
    cfg.validate_paths()?;
    let needs_split = !matches!(cmd, Command::Graph | Command::Embed);
    if needs_split && cfg.train_val_end()?.is_none() {
        return Err(ConfigError::Invalid(format!("split.train_val_end is required by `{}`", cmd.name())));
    }
    if let Command::Eval { checkpoint } | Command::Backtest { checkpoint } = cmd {
        if !checkpoint.is_file() {
            return Err(ConfigError::Invalid(format!("checkpoint {} does not exist", checkpoint.display())));
        }
    }
    Ok(())
}

pub fn execute(cfg: &Config, cmd: &Command) -> anyhow::Result<Outcome> {
    preflight(cfg, cmd)?;
    let mut run = RunDir::create(cfg, cmd.name())?;
    log::info!("run directory {}", run.path.display());
    let result = dispatch(cfg, cmd, &mut run);
    run.finish(cfg, result.as_ref().err())?;
    result.map(|summary| Outcome { run_dir: run.path.clone(), summary })
}

fn dispatch(cfg: &Config, cmd: &Command, run: &mut RunDir) -> anyhow::Result<String> {
    match cmd {
        Command::Synth { out } => {
            let tables = synth_corpus(&cfg.synth_params())?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_ohlcv(out, &tables)?;
            let rows: usize = tables.iter().map(|t| t.rows.len()).sum();
            let s = format!("tickers = {}\nrows = {rows}\npath = {}\n", tables.len(), out.display());
            run.write("synth.txt", &s)?;
            Ok(s)
        }
        Command::Graph => {
            let windows = load_windows(cfg)?;
            let (_, report) = build_graphs(cfg, &windows)?;
            let s = format!("windows = {}\n{}", windows.len(), report.render("graphs"));
            run.write("graph_report.txt", &s)?;
            Ok(s)
        }
        Command::Embed => {
            let windows = load_windows(cfg)?;
            let (graphs, g) = build_graphs(cfg, &windows)?;
            let (_, e) = build_embeddings(cfg, &graphs)?;
            let s = format!("windows = {}\n{}{}", windows.len(), g.render("graphs"), e.render("embeddings"));
            run.write("embed_report.txt", &s)?;
            Ok(s)
        }
        Command::Train => {
            let data = datasets(cfg)?;
            run.write("features.txt", &features(&data))?;
            let outcome = train_model(cfg, &data, run)?;
            let mut s = format!("{METRICS_HEADER}\n");
            if !data.val.is_empty() {
                s.push_str(&metrics_row("val", &evaluate(&outcome.params, &data.val, cfg.model.batch_size)?.metrics));
                s.push('\n');
            }
            run.write("metrics.csv", &s)?;
            Ok(s)
        }
        Command::Eval { checkpoint } => {
            let params = load_model(cfg, checkpoint)?;
            let data = datasets(cfg)?;
            let (csv, _) = evaluate_all(cfg, &params, &data)?;
            run.write("metrics.csv", &csv)?;
            Ok(csv)
        }
        Command::Backtest { checkpoint } => {
            let params = load_model(cfg, checkpoint)?;
            let data = datasets(cfg)?;
            let (_, tests) = evaluate_all(cfg, &params, &data)?;
            let (csv, _) = backtest_all(cfg, &tests, run)?;
            run.write("backtest_summary.csv", &csv)?;
            Ok(csv)
        }
        Command::Pipeline => {
            let data = datasets(cfg)?;
            run.write("features.txt", &features(&data))?;
            let outcome = train_model(cfg, &data, run)?;
            let (metrics, tests) = evaluate_all(cfg, &outcome.params, &data)?;
            run.write("metrics.csv", &metrics)?;
            let (bt, _) = backtest_all(cfg, &tests, run)?;
            run.write("backtest_summary.csv", &bt)?;
            Ok(format!("{metrics}\n{bt}"))
        }
    }
}

fn features(d: &crate::pipeline::Datasets) -> String {
    let tests: Vec<String> = d.tests.iter().map(|t| t.len().to_string()).collect();
    format!(
        "train = {}\nval = {}\ntests = {}\n{}{}",
        d.train.len(),
        d.val.len(),
        tests.join(","),
        d.report.graphs.render("graphs"),
        d.report.embeddings.render("embeddings")
    )
}
