//! Daily-rebalanced equal-weight trading simulation and the market baseline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::train::Prediction;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Long,
    Short,
    /// No position (predicted fall in long-only mode).
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    LongShort,
    LongOnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long-short" => Ok(Mode::LongShort),
            "long-only" => Ok(Mode::LongOnly),
            _ => Err(Error::invalid(format!("unknown backtest mode {s:?} (long-short | long-only)"))),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LongShort => "long-short",
            Mode::LongOnly => "long-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub date: NaiveDate,
    /// When `ret` is realized (the next trading day).
    pub realized: NaiveDate,
    pub ticker: String,
    pub direction: Direction,
    /// `p_{t+1} / p_t - 1`.
    pub ret: f64,
}

/// Signals grouped by decision date, in date order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalTable {
    days: BTreeMap<NaiveDate, Vec<Signal>>,
}

impl SignalTable {
    pub fn new(signals: impl IntoIterator<Item = Signal>) -> Result<Self> {
        let mut days: BTreeMap<NaiveDate, Vec<Signal>> = BTreeMap::new();
        for s in signals {
            if !s.ret.is_finite() || s.ret <= -1.0 {
                return Err(Error::invalid(format!("{} {}: return {} is not a valid simple return", s.ticker, s.date, s.ret)));
            }
            if s.realized <= s.date {
                return Err(Error::invalid(format!("{} {}: realized date must follow the decision date", s.ticker, s.date)));
            }
            days.entry(s.date).or_default().push(s);
        }
        Ok(SignalTable { days })
    }

    /// `prob >= 0.5` is a predicted rise.
    pub fn from_predictions(preds: &[Prediction], mode: Mode) -> Result<Self> {
        SignalTable::new(preds.iter().map(|p| Signal {
            date: p.date,
            realized: p.next_date,
            ticker: p.ticker.clone(),
            direction: match (p.prob >= 0.5, mode) {
                (true, _) => Direction::Long,
                (false, Mode::LongShort) => Direction::Short,
                (false, Mode::LongOnly) => Direction::Flat,
            },
            ret: p.next_return,
        }))
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn days(&self) -> impl Iterator<Item = (&NaiveDate, &Vec<Signal>)> {
        self.days.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetValueCurve {
    /// `dates[0]` is the first decision date; `dates[k]` is when day `k`'s
    /// return is realized.
    pub dates: Vec<NaiveDate>,
    /// `values[0] = 1`.
    pub values: Vec<f64>,
    /// Decision dates on which nothing was traded.
    pub flat_days: Vec<NaiveDate>,
}

impl NetValueCurve {
    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn cumulative_return(&self) -> f64 {
        self.final_value() - 1.0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("date,net_value\n");
        for (d, v) in self.dates.iter().zip(&self.values) {
            s.push_str(&format!("{d},{v}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn compound(table: &SignalTable, daily: impl Fn(&[Signal]) -> Option<f64>) -> Result<NetValueCurve> {
    let mut it = table.days.iter().peekable();
    let Some((&first, _)) = it.peek() else {
        return Err(Error::invalid("no trading days to simulate"));
    };
    let mut dates = vec![first];
    let mut values = vec![1.0];
    let mut flat_days = Vec::new();
    let mut traded = false;
    for (&date, signals) in table.days.iter() {
        let nv = *values.last().unwrap();
        let next = match daily(signals) {
            Some(r) => {
                traded = true;
                nv * (1.0 + r)
            }
            None => {
                flat_days.push(date);
                nv
            }
        };
        dates.push(signals.iter().map(|s| s.realized).max().unwrap_or(date));
        values.push(next);
    }
    if !traded {
        return Err(Error::invalid("no date carries a tradable signal"));
    }
    Ok(NetValueCurve { dates, values, flat_days })
}

/// Equal-weight signed mean of next-day returns, compounded daily. A date
/// without long or short signals carries the net value flat and is listed
/// in `flat_days`.
pub fn simulate(table: &SignalTable) -> Result<NetValueCurve> {
    compound(table, |signals| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for s in signals {
            match s.direction {
                Direction::Long => sum += s.ret,
                Direction::Short => sum -= s.ret,
                Direction::Flat => continue,
            }
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    })
}

/// Holds every stock in the table equally, ignoring directions.
pub fn market_baseline(table: &SignalTable) -> Result<NetValueCurve> {
    compound(table, |signals| {
        (!signals.is_empty()).then(|| signals.iter().map(|s| s.ret).sum::<f64>() / signals.len() as f64)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSummary {
    pub period: String,
    pub days: usize,
    pub cumulative_return: f64,
    pub baseline_return: f64,
    pub accuracy: f64,
    pub flat_days: usize,
}

pub const SUMMARY_HEADER: &str = "period,days,cumulative_return,baseline_return,accuracy,flat_days";

impl PeriodSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.period, self.days, self.cumulative_return, self.baseline_return, self.accuracy, self.flat_days
        )
    }
}
