//! Two-sample Kolmogorov-Smirnov test and the CI distribution report.

use crate::data::{PriceWindow, CHANNELS};
use crate::data::Channel;
use crate::influence::{ci, normalize_ci};
use crate::visibility::vg_fast;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = sign * (a * j * j).exp();
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `sup |F_a - F_b|` and the asymptotic p-value with the effective-size
/// correction `λ = (√n_e + 0.12 + 0.11/√n_e) D`, `n_e = n m / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::invalid("KS sample contains NaN"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { statistic: d, p_value: p })
}

/// Shared-bin histogram of two groups, as densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub rise: Vec<f64>,
    pub fall: Vec<f64>,
}

pub fn histogram(rise: &[f64], fall: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let all = rise.iter().chain(fall);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let density = |xs: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in xs {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            h[k] += 1.0;
        }
        let total = xs.len().max(1) as f64 * width;
        h.iter_mut().for_each(|c| *c /= total);
        h
    };
    Histogram { edges, rise: density(rise), fall: density(fall) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub channel: Channel,
    /// Pooled normalized CI values of windows followed by a rise.
    pub rise: Vec<f64>,
    pub fall: Vec<f64>,
    pub ks: Option<KsResult>,
    pub histogram: Option<Histogram>,
    /// Why the channel was skipped, if it was.
    pub skipped: Option<String>,
}

/// Splits windows by label and compares per-channel node-weight
/// distributions. A channel is skipped when either group has fewer than two
/// windows.
pub fn ci_distribution_report(windows: &[PriceWindow], radius: usize, bins: usize) -> Result<Vec<ChannelReport>> {
    let n_rise = windows.iter().filter(|w| w.label == 1).count();
    let n_fall = windows.len() - n_rise;
    let mut out = Vec::with_capacity(CHANNELS.len());
    for &channel in &CHANNELS {
        if n_rise < 2 || n_fall < 2 {
            out.push(ChannelReport {
                channel,
                rise: Vec::new(),
                fall: Vec::new(),
                ks: None,
                histogram: None,
                skipped: Some(format!("{n_rise} rise / {n_fall} fall windows")),
            });
            continue;
        }
        let (mut rise, mut fall) = (Vec::new(), Vec::new());
        for w in windows {
            let g = vg_fast(w.channel(channel))?;
            let raw: Vec<f64> = ci(&g, radius).into_iter().map(|c| c as f64).collect();
            let target = if w.label == 1 { &mut rise } else { &mut fall };
            target.extend(normalize_ci(&raw));
        }
        let ks = ks_two_sample(&rise, &fall)?;
        let histogram = histogram(&rise, &fall, bins);
        out.push(ChannelReport { channel, rise, fall, ks: Some(ks), histogram: Some(histogram), skipped: None });
    }
    Ok(out)
}
