//! Collective influence node weights.
//!
//! `CI_l(i) = (d_i - 1) * sum over j in frontier(i, l) of (d_j - 1)`, where
//! the frontier holds the nodes at hop distance exactly `l` from `i`.

use std::collections::VecDeque;

use crate::graph::Graph;
use crate::{Error, Result};

pub const DEFAULT_RADIUS: usize = 2;

/// Raw and min-max normalized CI of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub radius: usize,
}

impl NodeWeights {
    pub fn compute(g: &Graph, radius: usize) -> Self {
        let raw: Vec<f64> = ci(g, radius).into_iter().map(|c| c as f64).collect();
        let normalized = normalize_ci(&raw);
        NodeWeights { raw, normalized, radius }
    }

    /// One decimal per line.
    pub fn raw_to_text(&self) -> String {
        self.raw.iter().map(|v| format!("{v}\n")).collect()
    }

    pub fn from_raw_text(text: &str, radius: usize) -> Result<Self> {
        let raw = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| Error::invalid(format!("bad CI value {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let normalized = normalize_ci(&raw);
        Ok(NodeWeights { raw, normalized, radius })
    }
}

/// Nodes at hop distance exactly `l` from `i`, in increasing index order.
pub fn ball_frontier(g: &Graph, i: usize, l: usize) -> Result<Vec<usize>> {
    if i >= g.n() {
        return Err(Error::invalid(format!("node {i} out of range for n={}", g.n())));
    }
    Ok(frontier(g, i, l, &mut vec![usize::MAX; g.n()]))
}

// Depth-limited BFS; `dist` is scratch space filled with usize::MAX.
fn frontier(g: &Graph, i: usize, l: usize, dist: &mut [usize]) -> Vec<usize> {
    let mut touched = vec![i];
    let mut queue = VecDeque::from([i]);
    dist[i] = 0;
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        if dist[u] == l {
            out.push(u);
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                touched.push(w);
                queue.push_back(w);
            }
        }
    }
    for v in touched {
        dist[v] = usize::MAX;
    }
    out.sort_unstable();
    out
}

/// Integer CI per node. Degree-1 nodes and empty frontiers give 0.
pub fn ci(g: &Graph, l: usize) -> Vec<u64> {
    let deg = g.degrees();
    let mut scratch = vec![usize::MAX; g.n()];
    (0..g.n())
        .map(|i| {
            let di = deg[i].saturating_sub(1) as u64;
            if di == 0 {
                return 0;
            }
            let sum: u64 = frontier(g, i, l, &mut scratch)
                .into_iter()
                .map(|j| deg[j].saturating_sub(1) as u64)
                .sum();
            di * sum
        })
        .collect()
}

/// Min-max scaling to [0, 1]; constant input maps to all zeros.
pub fn normalize_ci(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if !(span > 0.0) {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&x| (x - min) / span).collect()
}
