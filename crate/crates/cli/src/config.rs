//! Pipeline configuration: a TOML file of `key = value` pairs under section
//! headers. Unknown keys are rejected; every numeric field has bounds.
//!
//! ```toml
//! seed = 7                       # root seed, >= 0
//! cache_dir = "cache"
//! output_dir = "runs"
//!
//! [data]
//! path = "ohlcv.csv"             # resolved relative to the config file
//! lookback = 20                  # T, 2..=512
//! max_gap_days = 10              # 1..=366, or 0 to disable the gap check
//!
//! [split]
//! train_val_end = "2011-09-30"
//! test_periods = [["2011-10-03", "2012-01-31"]]
//! val_fraction = 0.3             # (0, 1)
//!
//! [graph]
//! ci_radius = 2                  # l, 1..=16
//! ci_mode = "normalized"         # normalized | raw
//!
//! [struc2vec]
//! layer_cap = 5                  # 0..=32
//! walks_per_node = 20            # 1..=1000
//! walk_length = 10               # 2..=1000
//! window = 5                     # 1..=100
//! dim = 64                       # E, 2..=1024
//! epochs = 5                     # 1..=1000
//! lr = 0.025                     # (0, 10]
//! stay_prob = 0.3                # [0, 1]
//!
//! [model]
//! hidden = 64                    # m, 1..=1024
//! decoder_hidden = 64            # p, 1..=1024
//! batch_size = 32                # I, 1..=4096
//!
//! [train]
//! epochs = 30                    # 1..=10000
//! lr = 0.001                     # (0, 10]
//! patience = 5                   # 0 disables early stopping
//!
//! [backtest]
//! mode = "long-short"            # long-short | long-only
//!
//! [synth]                        # used by the `synth` command only
//! tickers = 50                   # 1..=10000
//! days = 600                     # 3..=100000
//! signal = 0.85                  # [0, 1]
//! volatility = 0.015             # (0, 1]
//! start = "2010-01-04"
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use pricegraph::backtest::Mode;
use pricegraph::data::{SynthParams, DATE_FORMAT};
use pricegraph::embed::{CiMode, EmbedConfig};
use pricegraph::model::ModelConfig;
use pricegraph::struc2vec::Struc2VecConfig;
use pricegraph::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub split: SplitSection,
    pub graph: GraphSection,
    pub struc2vec: Struc2VecSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub backtest: BacktestSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: PathBuf,
    pub lookback: usize,
    pub max_gap_days: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_val_end: Option<String>,
    pub test_periods: Vec<(String, String)>,
    pub val_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub ci_radius: usize,
    pub ci_mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Struc2VecSection {
    pub layer_cap: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub stay_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestSection {
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub tickers: usize,
    pub days: usize,
    pub signal: f64,
    pub volatility: f64,
    pub start: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            cache_dir: "cache".into(),
            output_dir: "runs".into(),
            data: DataSection::default(),
            split: SplitSection::default(),
            graph: GraphSection::default(),
            struc2vec: Struc2VecSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            backtest: BacktestSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { path: "ohlcv.csv".into(), lookback: 20, max_gap_days: 10 }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_val_end: None, test_periods: Vec::new(), val_fraction: 0.3 }
    }
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection { ci_radius: 2, ci_mode: "normalized".into() }
    }
}

impl Default for Struc2VecSection {
    fn default() -> Self {
        let d = Struc2VecConfig::default();
        Struc2VecSection {
            layer_cap: d.layer_cap,
            walks_per_node: d.walks_per_node,
            walk_length: d.walk_length,
            window: d.window,
            dim: d.dim,
            epochs: d.epochs,
            lr: d.lr,
            stay_prob: d.stay_prob,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { hidden: 64, decoder_hidden: 64, batch_size: 32 }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection { epochs: d.epochs, lr: d.lr, patience: d.patience }
    }
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection { mode: "long-short".into() }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthParams::default();
        SynthSection {
            tickers: d.n_tickers,
            days: d.n_days,
            signal: d.signal,
            volatility: d.volatility,
            start: d.start.format(DATE_FORMAT).to_string(),
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Display>(key: &str, v: T, lo: T, hi: T) -> Result<(), ConfigError> {
    if v < lo || v > hi {
        return Err(ConfigError::Invalid(format!("{key} = {v} is outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn parse_date(key: &str, s: &str) -> Result<NaiveDate, ConfigError> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| ConfigError::Invalid(format!("{key}: {s:?} is not a YYYY-MM-DD date")))
}

fn check_open_unit(key: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(ConfigError::Invalid(format!("{key} = {v} must lie strictly between 0 and 1")));
    }
    Ok(())
}

fn check_lr(key: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v <= 10.0) {
        return Err(ConfigError::Invalid(format!("{key} = {v} must be in (0, 10]")));
    }
    Ok(())
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string() })
    }

    /// Reads, parses and validates; relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut cfg = Config::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.data.path, &mut self.cache_dir, &mut self.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Bounds and cross-field checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_range("data.lookback", self.data.lookback, 2, 512)?;
        check_range("data.max_gap_days", self.data.max_gap_days, 0, 366)?;
        check_open_unit("split.val_fraction", self.split.val_fraction)?;
        if let Some(end) = self.train_val_end()? {
            let mut prev = end;
            for (s, e) in self.test_periods()? {
                if s > e {
                    return Err(ConfigError::Invalid(format!("split.test_periods: {s} is after {e}")));
                }
                if s <= prev {
                    return Err(ConfigError::Invalid(format!(
                        "split.test_periods must be disjoint, in order and after train_val_end ({s} <= {prev})"
                    )));
                }
                prev = e;
            }
        } else if !self.split.test_periods.is_empty() {
            return Err(ConfigError::Invalid("split.test_periods given without split.train_val_end".into()));
        }
        check_range("graph.ci_radius", self.graph.ci_radius, 1, 16)?;
        self.ci_mode()?;
        let s = &self.struc2vec;
        check_range("struc2vec.layer_cap", s.layer_cap, 0, 32)?;
        check_range("struc2vec.walks_per_node", s.walks_per_node, 1, 1000)?;
        check_range("struc2vec.walk_length", s.walk_length, 2, 1000)?;
        check_range("struc2vec.window", s.window, 1, 100)?;
        check_range("struc2vec.dim", s.dim, 2, 1024)?;
        check_range("struc2vec.epochs", s.epochs, 1, 1000)?;
        check_lr("struc2vec.lr", s.lr)?;
        check_range("struc2vec.stay_prob", s.stay_prob, 0.0, 1.0)?;
        check_range("model.hidden", self.model.hidden, 1, 1024)?;
        check_range("model.decoder_hidden", self.model.decoder_hidden, 1, 1024)?;
        check_range("model.batch_size", self.model.batch_size, 1, 4096)?;
        check_range("train.epochs", self.train.epochs, 1, 10000)?;
        check_lr("train.lr", self.train.lr)?;
        check_range("train.patience", self.train.patience, 0, 10000)?;
        self.mode()?;
        parse_date("synth.start", &self.synth.start)?;
        check_range("synth.tickers", self.synth.tickers, 1, 10000)?;
        check_range("synth.days", self.synth.days, 3, 100000)?;
        check_range("synth.signal", self.synth.signal, 0.0, 1.0)?;
        if !(self.synth.volatility > 0.0 && self.synth.volatility <= 1.0) {
            return Err(ConfigError::Invalid(format!("synth.volatility = {} must be in (0, 1]", self.synth.volatility)));
        }
        Ok(())
    }

    /// Checks that the data file exists.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        if !self.data.path.is_file() {
            return Err(ConfigError::Invalid(format!("data.path {} does not exist", self.data.path.display())));
        }
        Ok(())
    }

    pub fn train_val_end(&self) -> Result<Option<NaiveDate>, ConfigError> {
        self.split.train_val_end.as_deref().map(|d| parse_date("split.train_val_end", d)).transpose()
    }

    pub fn test_periods(&self) -> Result<Vec<(NaiveDate, NaiveDate)>, ConfigError> {
        self.split
            .test_periods
            .iter()
            .map(|(s, e)| Ok((parse_date("split.test_periods", s)?, parse_date("split.test_periods", e)?)))
            .collect()
    }

    pub fn ci_mode(&self) -> Result<CiMode, ConfigError> {
        self.graph.ci_mode.parse().map_err(|e: pricegraph::Error| ConfigError::Invalid(format!("graph.ci_mode: {e}")))
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        self.backtest.mode.parse().map_err(|e: pricegraph::Error| ConfigError::Invalid(format!("backtest.mode: {e}")))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_root(self.seed)
    }

    pub fn embed_config(&self) -> EmbedConfig {
        let s = &self.struc2vec;
        EmbedConfig {
            struc2vec: Struc2VecConfig {
                layer_cap: s.layer_cap,
                walks_per_node: s.walks_per_node,
                walk_length: s.walk_length,
                window: s.window,
                dim: s.dim,
                epochs: s.epochs,
                lr: s.lr,
                stay_prob: s.stay_prob,
                seed: self.seeds().struc2vec,
            },
            ci_radius: self.graph.ci_radius,
            ci_mode: self.ci_mode().unwrap_or(CiMode::Normalized),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lookback: self.data.lookback,
            embed_dim: self.struc2vec.dim,
            hidden: self.model.hidden,
            decoder_hidden: self.model.decoder_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr: self.train.lr,
            batch_size: self.model.batch_size,
            patience: self.train.patience,
            seed: self.seeds().train,
            ..TrainConfig::default()
        }
    }

    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            n_tickers: self.synth.tickers,
            n_days: self.synth.days,
            seed: self.seeds().synth,
            signal: self.synth.signal,
            lookback: self.data.lookback,
            start: parse_date("synth.start", &self.synth.start).unwrap_or(SynthParams::default().start),
            volatility: self.synth.volatility,
        }
    }

    /// Canonical TOML rendering (defaults filled in).
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical rendering without the cache and output locations, which do
    /// not affect results.
    pub fn result_echo(&self) -> String {
        let mut c = self.clone();
        c.cache_dir = PathBuf::new();
        c.output_dir = PathBuf::new();
        c.echo()
    }

    /// Hash of [`Config::result_echo`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.result_echo().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-stage seeds, each `derive(root, label)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub root: u64,
    pub synth: u64,
    pub split: u64,
    pub struc2vec: u64,
    pub init: u64,
    pub train: u64,
}

impl Seeds {
    pub const LABELS: [&'static str; 5] = ["synth", "split", "struc2vec", "init", "train"];

    pub fn from_root(root: u64) -> Self {
        let d = |l| pricegraph::seed::derive(root, l);
        Seeds { root, synth: d("synth"), split: d("split"), struc2vec: d("struc2vec"), init: d("init"), train: d("train") }
    }

    pub fn pairs(&self) -> [(&'static str, u64); 5] {
        [("synth", self.synth), ("split", self.split), ("struc2vec", self.struc2vec), ("init", self.init), ("train", self.train)]
    }
}
