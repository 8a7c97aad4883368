//! Stage implementations shared by the subcommands.

use std::collections::HashMap;
use std::fmt::Write as _;

use anyhow::{bail, Context};
use pricegraph::backtest::{market_baseline, simulate, PeriodSummary, SignalTable, SUMMARY_HEADER};
use pricegraph::cache::{EmbeddingStore, GraphCache, Lookup};
use pricegraph::data::{load_ohlcv_with, make_windows, split_windows, LoadOptions, PriceWindow, Split, SplitSpec, CHANNELS};
use pricegraph::embed::embedding_key;
use pricegraph::graph::Graph;
use pricegraph::model::{load_checkpoint, save_checkpoint, ModelLayout, ModelParams, StockSample};
use pricegraph::struc2vec::{embed_graph, EmbeddingMatrix};
use pricegraph::train::{evaluate, train, Evaluation, Metrics, TrainOutcome, HISTORY_HEADER};
use rayon::prelude::*;

use crate::config::{Config, ConfigError};
use crate::run::RunDir;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheReport {
    pub built: usize,
    pub reused: usize,
    pub rebuilt: usize,
}

impl CacheReport {
    pub fn total(&self) -> usize {
        self.built + self.reused + self.rebuilt
    }

    fn add(&mut self, l: Lookup) {
        match l {
            Lookup::Built => self.built += 1,
            Lookup::Reused => self.reused += 1,
            Lookup::Rebuilt => self.rebuilt += 1,
        }
    }

    pub fn render(&self, what: &str) -> String {
        format!(
            "{what}.total = {}\n{what}.built = {}\n{what}.reused = {}\n{what}.rebuilt = {}\n",
            self.total(),
            self.built,
            self.reused,
            self.rebuilt
        )
    }
}

/// All windows of the configured data file.
pub fn load_windows(cfg: &Config) -> anyhow::Result<Vec<PriceWindow>> {
    cfg.validate_paths()?;
    let opts = LoadOptions { max_gap_days: (cfg.data.max_gap_days > 0).then_some(cfg.data.max_gap_days) };
    let tables = load_ohlcv_with(&cfg.data.path, &opts)?;
    let windows: Vec<PriceWindow> = tables.iter().flat_map(|t| make_windows(t, cfg.data.lookback)).collect();
    log::info!("{} tickers, {} windows", tables.len(), windows.len());
    Ok(windows)
}

pub fn split(cfg: &Config, windows: &[PriceWindow]) -> anyhow::Result<Split> {
    let Some(train_val_end) = cfg.train_val_end()? else {
        return Err(ConfigError::Invalid("split.train_val_end is required for this command".into()).into());
    };
    let spec = SplitSpec {
        train_val_end,
        test_periods: cfg.test_periods()?,
        val_fraction: cfg.split.val_fraction,
        seed: cfg.seeds().split,
    };
    Ok(split_windows(windows, &spec)?)
}

/// Graph and raw CI for every (window, channel), in window-major order.
pub fn build_graphs(cfg: &Config, windows: &[PriceWindow]) -> anyhow::Result<(Vec<(Graph, Vec<u64>)>, CacheReport)> {
    let cache = GraphCache::open(&cfg.cache_dir)?;
    let radius = cfg.graph.ci_radius;
    let out: Vec<(Graph, Vec<u64>, Lookup)> = windows
        .par_iter()
        .flat_map_iter(|w| CHANNELS.iter().map(move |&c| (w, c)))
        .map(|(w, c)| cache.get_or_build(w.channel(c), radius))
        .collect::<pricegraph::Result<_>>()?;
    let mut report = CacheReport::default();
    let graphs = out
        .into_iter()
        .map(|(g, ci, l)| {
            report.add(l);
            (g, ci)
        })
        .collect();
    Ok((graphs, report))
}

/// struc2vec embeddings for every graph, through the embedding store.
pub fn build_embeddings(cfg: &Config, graphs: &[(Graph, Vec<u64>)]) -> anyhow::Result<(Vec<EmbeddingMatrix>, CacheReport)> {
    let s2v = cfg.embed_config().struc2vec;
    let keys: Vec<String> = graphs.par_iter().map(|(g, _)| embedding_key(g, &s2v)).collect();
    let mut first: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<usize> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        first.entry(k.as_str()).or_insert_with(|| {
            unique.push(i);
            i
        });
    }
    let mut store = EmbeddingStore::open(&cfg.cache_dir)?;
    let unique_keys: Vec<String> = unique.iter().map(|&i| keys[i].clone()).collect();
    let found = store.get_many(&unique_keys)?;
    let mut report = CacheReport::default();
    let mut todo = Vec::new();
    let mut by_key: HashMap<String, EmbeddingMatrix> = HashMap::with_capacity(unique.len());
    for (&i, r) in unique.iter().zip(found) {
        match r {
            Ok(Some(m)) if m.n == graphs[i].0.n() && m.dim == s2v.dim => {
                report.add(Lookup::Reused);
                by_key.insert(keys[i].clone(), m);
            }
            Ok(None) => todo.push((i, Lookup::Built)),
            Ok(Some(_)) | Err(_) => {
                log::warn!("embedding cache entry {} is corrupt; recomputing", keys[i]);
                todo.push((i, Lookup::Rebuilt));
            }
        }
    }
    log::info!("embedding {} graphs ({} cached)", todo.len(), report.reused);
    let fresh: Vec<(String, EmbeddingMatrix)> = todo
        .par_iter()
        .map(|&(i, _)| Ok((keys[i].clone(), embed_graph(&graphs[i].0, &s2v)?)))
        .collect::<pricegraph::Result<_>>()?;
    store.put_many(&fresh)?;
    for (&(_, l), (k, m)) in todo.iter().zip(fresh) {
        report.add(l);
        by_key.insert(k, m);
    }
    let embeddings = keys.iter().map(|k| by_key[k].clone()).collect();
    Ok((embeddings, report))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FeatureReport {
    pub graphs: CacheReport,
    pub embeddings: CacheReport,
}

/// Model inputs for `windows` (graphs, CI and embeddings via the caches).
pub fn build_samples(cfg: &Config, windows: &[PriceWindow]) -> anyhow::Result<(Vec<StockSample>, FeatureReport)> {
    let (graphs, g_report) = build_graphs(cfg, windows)?;
    let (embeddings, e_report) = build_embeddings(cfg, &graphs)?;
    let mode = cfg.ci_mode()?;
    let k = CHANNELS.len();
    let samples = windows
        .iter()
        .enumerate()
        .map(|(w_idx, w)| StockSample {
            ticker: w.ticker.clone(),
            date: w.end_date,
            next_date: w.next_date,
            embeddings: embeddings[w_idx * k..(w_idx + 1) * k].to_vec(),
            ci: graphs[w_idx * k..(w_idx + 1) * k].iter().map(|(_, raw)| mode.apply(raw)).collect(),
            label: w.label,
            next_return: w.next_return(),
        })
        .collect();
    Ok((samples, FeatureReport { graphs: g_report, embeddings: e_report }))
}

pub const METRICS_HEADER: &str = "split,n,loss,accuracy,precision,recall,f1";

pub fn metrics_row(name: &str, m: &Metrics) -> String {
    format!("{name},{},{},{},{},{},{}", m.n, m.loss, m.accuracy, m.precision, m.recall, m.f1)
}

/// Split windows turned into samples.
pub struct Datasets {
    pub train: Vec<StockSample>,
    pub val: Vec<StockSample>,
    pub tests: Vec<Vec<StockSample>>,
    pub report: FeatureReport,
}

pub fn datasets(cfg: &Config) -> anyhow::Result<Datasets> {
    let windows = load_windows(cfg)?;
    let split = split(cfg, &windows)?;
    if split.train.is_empty() {
        bail!("no training windows end on or before split.train_val_end");
    }
    let (n_tr, n_val) = (split.train.len(), split.val.len());
    let sizes: Vec<usize> = split.tests.iter().map(Vec::len).collect();
    let all: Vec<PriceWindow> =
        split.train.into_iter().chain(split.val).chain(split.tests.into_iter().flatten()).collect();
    let (mut samples, report) = build_samples(cfg, &all)?;
    let mut rest = samples.split_off(n_tr);
    let train = samples;
    let mut tail = rest.split_off(n_val);
    let val = rest;
    let mut tests = Vec::with_capacity(sizes.len());
    for n in sizes {
        let after = tail.split_off(n);
        tests.push(tail);
        tail = after;
    }
    Ok(Datasets { train, val, tests, report })
}

pub fn train_model(cfg: &Config, data: &Datasets, run: &mut RunDir) -> anyhow::Result<TrainOutcome> {
    let layout = ModelLayout::new(cfg.model_config())?;
    let init = ModelParams::init(layout, cfg.seeds().init);
    let mut history = String::from(HISTORY_HEADER);
    history.push('\n');
    let history_path = run.file("history.csv");
    let outcome = train(init, &data.train, &data.val, &cfg.train_config(), |rec| {
        history.push_str(&rec.csv_row());
        history.push('\n');
        let _ = std::fs::write(&history_path, &history);
    })
    .context("training failed")?;
    run.write("history.csv", &history)?;
    save_checkpoint(&run.file("model.ckpt"), &outcome.params, &cfg.result_echo())?;
    run.artifact("model.ckpt");
    Ok(outcome)
}

pub fn load_model(cfg: &Config, path: &std::path::Path) -> anyhow::Result<ModelParams> {
    let (params, _) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if params.layout.config != cfg.model_config() {
        return Err(ConfigError::Invalid(format!(
            "checkpoint dims {:?} do not match the config {:?}",
            params.layout.config,
            cfg.model_config()
        ))
        .into());
    }
    Ok(params)
}

pub fn period_name(k: usize) -> String {
    format!("test{}", k + 1)
}

/// Validation and per-period test metrics.
pub fn evaluate_all(cfg: &Config, params: &ModelParams, data: &Datasets) -> anyhow::Result<(String, Vec<Evaluation>)> {
    let bs = cfg.model.batch_size;
    let mut csv = format!("{METRICS_HEADER}\n");
    if !data.val.is_empty() {
        let e = evaluate(params, &data.val, bs)?;
        writeln!(csv, "{}", metrics_row("val", &e.metrics))?;
    }
    let mut tests = Vec::new();
    for (k, t) in data.tests.iter().enumerate() {
        let e = evaluate(params, t, bs)?;
        writeln!(csv, "{}", metrics_row(&period_name(k), &e.metrics))?;
        tests.push(e);
    }
    Ok((csv, tests))
}

/// Backtest outcome for one test period.
pub struct PeriodBacktest {
    pub summary: PeriodSummary,
    pub strategy: pricegraph::backtest::NetValueCurve,
    pub baseline: pricegraph::backtest::NetValueCurve,
}

pub fn backtest_all(cfg: &Config, tests: &[Evaluation], run: &mut RunDir) -> anyhow::Result<(String, Vec<PeriodBacktest>)> {
    let mode = cfg.mode()?;
    let mut csv = format!("{SUMMARY_HEADER}\n");
    let mut out = Vec::new();
    for (k, e) in tests.iter().enumerate() {
        let name = period_name(k);
        if e.predictions.is_empty() {
            log::warn!("{name}: no test windows; skipped");
            continue;
        }
        let signals = SignalTable::from_predictions(&e.predictions, mode)?;
        let strategy = simulate(&signals)?;
        let baseline = market_baseline(&signals)?;
        run.write(&format!("nv_{name}.csv"), &strategy.to_csv())?;
        run.write(&format!("baseline_{name}.csv"), &baseline.to_csv())?;
        let summary = PeriodSummary {
            period: name,
            days: signals.n_days(),
            cumulative_return: strategy.cumulative_return(),
            baseline_return: baseline.cumulative_return(),
            accuracy: e.metrics.accuracy,
            flat_days: strategy.flat_days.len(),
        };
        writeln!(csv, "{}", summary.csv_row())?;
        out.push(PeriodBacktest { summary, strategy, baseline });
    }
    Ok((csv, out))
}
