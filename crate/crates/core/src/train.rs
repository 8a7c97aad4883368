//! Mini-batch Adam training, early stopping and classification metrics.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;

use crate::model::{batch_loss, loss_and_gradient, ModelLayout, ModelParams, StockSample};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Maximum stocks per batch (`I`).
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, lr: 1e-3, batch_size: 32, patience: 5, beta1: 0.9, beta2: 0.999, eps: 1e-8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::invalid("Adam constants out of range"));
        }
        Ok(())
    }
}

/// Adam optimizer state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Groups sample indices by date, in date order.
pub fn group_by_date(samples: &[StockSample]) -> Vec<(NaiveDate, Vec<usize>)> {
    let mut by: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by.entry(s.date).or_default().push(i);
    }
    by.into_iter().collect()
}

/// Training batches for one epoch: dates in shuffled order, each date's
/// stocks shuffled and cut into chunks of at most `batch_size`.
pub fn epoch_batches(groups: &[(NaiveDate, Vec<usize>)], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);
    let mut out = Vec::new();
    for g in order {
        let mut idx = groups[g].1.clone();
        idx.shuffle(&mut rng);
        out.extend(idx.chunks(batch_size).map(<[usize]>::to_vec));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub n: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy, and precision/recall/F1 of the upward class, with `p >= 0.5` predicting up.
pub fn classification_metrics(probs: &[f64], labels: &[u8]) -> Metrics {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= 0.5, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = probs.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Metrics { n, loss: f64::NAN, accuracy: ratio(tp + tn, n), precision, recall, f1 }
}

/// One prediction per evaluated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub ticker: String,
    pub date: NaiveDate,
    pub next_date: NaiveDate,
    pub prob: f64,
    pub label: u8,
    pub next_return: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

/// Scores each date's stocks in input order, in chunks of at most
/// `batch_size` that attend to each other, and reports mean BCE plus
/// classification metrics.
pub fn evaluate(params: &ModelParams, samples: &[StockSample], batch_size: usize) -> Result<Evaluation> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut predictions = Vec::with_capacity(samples.len());
    let mut total = 0.0;
    for (date, idx) in group_by_date(samples) {
        for chunk in idx.chunks(batch_size) {
            let stocks: Vec<&StockSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, probs) = batch_loss(params, &stocks)?;
            total += loss * stocks.len() as f64;
            for (s, p) in stocks.iter().zip(probs) {
                predictions.push(Prediction { ticker: s.ticker.clone(), date, next_date: s.next_date, prob: p, label: s.label, next_return: s.next_return });
            }
        }
    }
    let probs: Vec<f64> = predictions.iter().map(|p| p.prob).collect();
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let mut metrics = classification_metrics(&probs, &labels);
    metrics.loss = if samples.is_empty() { f64::NAN } else { total / samples.len() as f64 };
    Ok(Evaluation { metrics, predictions })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.train_loss, self.train_accuracy, self.val_loss, self.val_accuracy)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last completed epoch.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Trains from `init` with Adam. Training loss and accuracy of an epoch are
/// accumulated over its batches before each update. A non-finite loss or
/// gradient aborts with [`Error::TrainingDiverged`].
pub fn train(
    init: ModelParams,
    train_set: &[StockSample],
    val_set: &[StockSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let layout: &ModelLayout = &init.layout;
    for s in train_set.iter().chain(val_set) {
        s.check(&layout.config)?;
    }
    let mut params = init;
    let mut adam = Adam::new(params.flat.len(), cfg);
    let groups = group_by_date(train_set);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(&groups, cfg.batch_size, seed::derive(cfg.seed, &format!("epoch{epoch}")));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let stocks: Vec<&StockSample> = idx.iter().map(|&i| &train_set[i]).collect();
            let res = match loss_and_gradient(&params, &stocks) {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => return Err(Error::TrainingDiverged { epoch, batch: b }),
                Err(e) => return Err(e),
            };
            if !res.loss.is_finite() || res.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            loss_sum += res.loss * stocks.len() as f64;
            correct += res.probs.iter().zip(&stocks).filter(|(p, s)| (**p >= 0.5) == (s.label == 1)).count();
            adam.step(&mut params.flat, &res.grad);
        }
        let n = train_set.len() as f64;
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let m = evaluate(&params, val_set, cfg.batch_size)?.metrics;
            (m.loss, m.accuracy)
        };
        let rec = EpochRecord { epoch, train_loss: loss_sum / n, train_accuracy: correct as f64 / n, val_loss, val_accuracy };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            rec.train_loss,
            rec.train_accuracy,
            rec.val_loss,
            rec.val_accuracy
        );
        on_epoch(&rec);
        history.push(rec);
        if cfg.patience > 0 && val_loss.is_finite() {
            if val_loss < best {
                best = val_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { params, history, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_on_known_confusion() {
        let probs = [0.9, 0.8, 0.2, 0.7, 0.1];
        let labels = [1, 0, 1, 1, 0];
        let m = classification_metrics(&probs, &labels);
        assert!((m.accuracy - 0.6).abs() < 1e-12);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        let none = classification_metrics(&[0.1, 0.2], &[1, 0]);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let cfg = TrainConfig { lr: 0.05, ..TrainConfig::default() };
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, &cfg);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn batches_stay_within_one_date() {
        let d = |k| NaiveDate::from_ymd_opt(2020, 1, k).unwrap();
        let groups = vec![(d(1), vec![0, 1, 2, 3, 4]), (d(2), vec![5, 6])];
        let b = epoch_batches(&groups, 2, 1);
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 7);
        for batch in &b {
            assert!(batch.len() <= 2);
            assert!(batch.iter().all(|&i| i < 5) || batch.iter().all(|&i| i >= 5));
        }
        assert_eq!(b, epoch_batches(&groups, 2, 1));
    }
}
