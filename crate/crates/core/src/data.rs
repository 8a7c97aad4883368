//! Market tables, sliding windows, labels, date splits and a synthetic
//! corpus with a planted direction signal.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{seed, Error, Result};

/// Fixed channel order of a [`PriceWindow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Close = 0,
    Open = 1,
    High = 2,
    Low = 3,
    Amount = 4,
    Volume = 5,
}

pub const CHANNELS: [Channel; 6] = [
    Channel::Close,
    Channel::Open,
    Channel::High,
    Channel::Low,
    Channel::Amount,
    Channel::Volume,
];

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Close => "close",
            Channel::Open => "open",
            Channel::High => "high",
            Channel::Low => "low",
            Channel::Amount => "amount",
            Channel::Volume => "volume",
        }
    }
}

/// Column order of the OHLCV file.
pub const FILE_COLUMNS: [&str; 8] = ["ticker", "date", "open", "high", "low", "close", "amount", "volume"];

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub close: f64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub amount: f64,
    pub volume: f64,
}

impl Bar {
    pub fn channel(&self, c: Channel) -> f64 {
        match c {
            Channel::Close => self.close,
            Channel::Open => self.open,
            Channel::High => self.high,
            Channel::Low => self.low,
            Channel::Amount => self.amount,
            Channel::Volume => self.volume,
        }
    }
}

/// Daily bars of one ticker, strictly increasing by date.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketTable {
    pub ticker: String,
    pub rows: Vec<Bar>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Largest allowed calendar-day gap between consecutive rows of a
    /// ticker. `None` disables the check.
    pub max_gap_days: Option<i64>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { max_gap_days: Some(10) }
    }
}

pub fn load_ohlcv(path: &Path) -> Result<Vec<MarketTable>> {
    load_ohlcv_with(path, &LoadOptions::default())
}

/// Reads the comma-separated OHLCV file. Row numbers in errors are file
/// line numbers (the header is line 1).
pub fn load_ohlcv_with(path: &Path, opts: &LoadOptions) -> Result<Vec<MarketTable>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    let mut col = [0usize; 8];
    for (slot, name) in col.iter_mut().zip(FILE_COLUMNS) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: path.to_owned(),
            message: format!("missing column `{name}`"),
        })?;
    }
    let row_err = |row: usize, message: String| Error::Row { path: path.to_owned(), row, message };

    let mut by_ticker: BTreeMap<String, Vec<(usize, Bar)>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record?;
        let field = |i: usize| record.get(col[i]).unwrap_or("");
        let ticker = field(0).to_string();
        if ticker.is_empty() {
            return Err(row_err(row, "empty ticker".into()));
        }
        let date = NaiveDate::parse_from_str(field(1), DATE_FORMAT)
            .map_err(|e| row_err(row, format!("bad date {:?}: {e}", field(1))))?;
        let mut vals = [0.0; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            let raw = field(k + 2);
            *v = raw
                .parse::<f64>()
                .map_err(|_| row_err(row, format!("bad number {raw:?} in `{}`", FILE_COLUMNS[k + 2])))?;
            if !(v.is_finite() && *v > 0.0) {
                return Err(row_err(row, format!("`{}` must be positive, got {raw}", FILE_COLUMNS[k + 2])));
            }
        }
        if !seen.insert((ticker.clone(), date)) {
            return Err(row_err(row, format!("duplicate row for {ticker} on {date}")));
        }
        let [open, high, low, close, amount, volume] = vals;
        by_ticker
            .entry(ticker)
            .or_default()
            .push((row, Bar { date, close, open, high, low, amount, volume }));
    }

    let mut tables = Vec::with_capacity(by_ticker.len());
    for (ticker, mut rows) in by_ticker {
        rows.sort_by_key(|(_, b)| b.date);
        if let Some(limit) = opts.max_gap_days {
            for w in rows.windows(2) {
                let gap = (w[1].1.date - w[0].1.date).num_days();
                if gap > limit {
                    return Err(row_err(
                        w[1].0,
                        format!("{ticker}: gap of {gap} days after {} exceeds {limit}", w[0].1.date),
                    ));
                }
            }
        }
        tables.push(MarketTable { ticker, rows: rows.into_iter().map(|(_, b)| b).collect() });
    }
    Ok(tables)
}

pub fn write_ohlcv(path: &Path, tables: &[MarketTable]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", FILE_COLUMNS.join(","))?;
    for t in tables {
        for b in &t.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                t.ticker,
                b.date.format(DATE_FORMAT),
                b.open,
                b.high,
                b.low,
                b.close,
                b.amount,
                b.volume
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Six channels over `T` days ending at `end_date`, plus the next-day label.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceWindow {
    pub ticker: String,
    pub end_date: NaiveDate,
    /// Date of the bar that supplies the label.
    pub next_date: NaiveDate,
    /// Channel-major, indexed by [`Channel`] discriminant.
    pub values: [Vec<f64>; 6],
    pub label: u8,
    pub next_close: f64,
}

impl PriceWindow {
    pub fn lookback(&self) -> usize {
        self.values[0].len()
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        &self.values[c as usize]
    }

    pub fn last_close(&self) -> f64 {
        *self.values[Channel::Close as usize].last().unwrap()
    }

    /// Simple next-day return of the close.
    pub fn next_return(&self) -> f64 {
        self.next_close / self.last_close() - 1.0
    }
}

/// 1 iff the next close is strictly higher; ties label 0.
pub fn label(close_t: f64, close_next: f64) -> u8 {
    u8::from(close_next > close_t)
}

/// All windows of length `lookback` that have a next-day bar; a table with
/// `rows <= lookback` yields none.
pub fn make_windows(table: &MarketTable, lookback: usize) -> Vec<PriceWindow> {
    if lookback == 0 || table.rows.len() <= lookback {
        return Vec::new();
    }
    (lookback - 1..table.rows.len() - 1)
        .map(|i| {
            let span = &table.rows[i + 1 - lookback..=i];
            let values = CHANNELS.map(|c| span.iter().map(|b| b.channel(c)).collect());
            let next = &table.rows[i + 1];
            PriceWindow {
                ticker: table.ticker.clone(),
                end_date: table.rows[i].date,
                next_date: next.date,
                values,
                label: label(table.rows[i].close, next.close),
                next_close: next.close,
            }
        })
        .collect()
}

/// Per-channel z-score with population std. A constant channel is returned
/// as zeros and flagged.
pub fn zscore(channels: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
    channels
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let std = (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            if std > 0.0 && std.is_finite() {
                (c.iter().map(|x| (x - mean) / std).collect(), false)
            } else {
                (vec![0.0; c.len()], true)
            }
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_val_end: NaiveDate,
    pub test_periods: Vec<(NaiveDate, NaiveDate)>,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::invalid(format!("val_fraction {} not in (0,1)", self.val_fraction)));
        }
        let mut prev_end = self.train_val_end;
        for &(start, end) in &self.test_periods {
            if start > end {
                return Err(Error::invalid(format!("test period {start}..{end} is reversed")));
            }
            if start <= prev_end {
                return Err(Error::invalid(format!(
                    "test period starting {start} overlaps an earlier period or the training range"
                )));
            }
            prev_end = end;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<PriceWindow>,
    pub val: Vec<PriceWindow>,
    pub tests: Vec<Vec<PriceWindow>>,
}

/// Training pool: windows whose label date is on or before
/// `train_val_end`. A seeded uniform sample of `val_fraction` of the pool
/// becomes validation. Test windows are those ending inside each period.
pub fn split_windows(windows: &[PriceWindow], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut pool: Vec<&PriceWindow> = windows.iter().filter(|w| w.next_date <= spec.train_val_end).collect();
    pool.sort_by(|a, b| (a.end_date, &a.ticker).cmp(&(b.end_date, &b.ticker)));
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut seed::rng(spec.seed));
    let n_val = (spec.val_fraction * pool.len() as f64).round() as usize;
    let mut is_val = vec![false; pool.len()];
    for &i in &idx[..n_val] {
        is_val[i] = true;
    }
    let mut split = Split::default();
    for (w, v) in pool.into_iter().zip(is_val) {
        if v { &mut split.val } else { &mut split.train }.push(w.clone());
    }
    for &(start, end) in &spec.test_periods {
        let mut period: Vec<PriceWindow> =
            windows.iter().filter(|w| w.end_date >= start && w.end_date <= end).cloned().collect();
        period.sort_by(|a, b| (a.end_date, &a.ticker).cmp(&(b.end_date, &b.ticker)));
        split.tests.push(period);
    }
    Ok(split)
}

/// Monday-to-Friday calendar starting at `start` (rolled forward to a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_tickers: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Probability in [0, 1] that the next-day direction follows the
    /// planted rule; otherwise it is a fair coin.
    pub signal: f64,
    pub lookback: usize,
    pub start: NaiveDate,
    /// Daily log-return scale.
    pub volatility: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_tickers: 50,
            n_days: 600,
            seed: 7,
            signal: 0.85,
            lookback: 20,
            start: NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(),
            volatility: 0.015,
        }
    }
}

/// Days of close history the planted rule looks back over.
pub const PLANTED_HORIZON: usize = 3;

/// Planted rule: the close rises next day iff today's close sits below the
/// mean of the previous [`PLANTED_HORIZON`] closes (short-horizon reversal).
/// `closes` ends at the decision day; `None` without enough history.
pub fn planted_direction(closes: &[f64]) -> Option<bool> {
    let n = closes.len();
    if n <= PLANTED_HORIZON {
        return None;
    }
    let mean = closes[n - 1 - PLANTED_HORIZON..n - 1].iter().sum::<f64>() / PLANTED_HORIZON as f64;
    Some(closes[n - 1] < mean)
}

/// Geometric random walks whose next-day direction follows
/// [`planted_direction`] with probability `signal`.
pub fn synth_corpus(p: &SynthParams) -> Result<Vec<MarketTable>> {
    if p.n_days < p.lookback + 2 {
        return Err(Error::invalid(format!("n_days {} < lookback + 2 = {}", p.n_days, p.lookback + 2)));
    }
    if !(0.0..=1.0).contains(&p.signal) {
        return Err(Error::invalid(format!("signal {} not in [0,1]", p.signal)));
    }
    let dates = business_days(p.start, p.n_days);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rng = seed::stage_rng(p.seed, "synth");
    let width = p.n_tickers.max(1).to_string().len();
    let mut tables = Vec::with_capacity(p.n_tickers);
    for k in 0..p.n_tickers {
        let mut closes = Vec::with_capacity(p.n_days);
        closes.push(rng.random_range(20.0..80.0));
        for _ in 1..p.n_days {
            let up = match planted_direction(&closes) {
                Some(rule) if rng.random::<f64>() < p.signal => rule,
                _ => rng.random::<bool>(),
            };
            let mag = (p.volatility * noise.sample(&mut rng)).abs().max(1e-4);
            let last = *closes.last().unwrap();
            closes.push(last * if up { mag.exp() } else { (-mag).exp() });
        }
        let base_volume: f64 = rng.random_range(1e5..1e6);
        let mut rows = Vec::with_capacity(p.n_days);
        for (t, &close) in closes.iter().enumerate() {
            let prev = if t == 0 { close } else { closes[t - 1] };
            let open = prev * (0.3 * p.volatility * noise.sample(&mut rng)).exp();
            let high = open.max(close) * (0.5 * p.volatility * noise.sample(&mut rng)).abs().exp();
            let low = open.min(close) * (-(0.5 * p.volatility * noise.sample(&mut rng)).abs()).exp();
            let move_size = (close / prev).ln().abs();
            let volume = base_volume * (1.0 + 20.0 * move_size) * (0.3 * noise.sample(&mut rng)).exp();
            let amount = volume * (open + close) / 2.0;
            rows.push(Bar { date: dates[t], close, open, high, low, amount, volume });
        }
        tables.push(MarketTable { ticker: format!("S{k:0width$}"), rows });
    }
    Ok(tables)
}
