//! Natural visibility graphs.
//!
//! Two points `(t_i, x_i)` and `(t_j, x_j)`, `t_i < t_j`, are linked iff
//! every intermediate point lies strictly below the straight line joining
//! them. Comparisons use the division-free form
//! `(x_k - x_i)(t_j - t_i) < (x_j - x_i)(t_k - t_i)` with no epsilon, and
//! both builders route every decision through [`below_sight_line`] so they
//! agree exactly whenever the products are exact.

use crate::graph::{Graph, VisibilityGraph};
use crate::{Error, Result};

/// True iff `(tk, xk)` lies strictly below the line from `(ti, xi)` to
/// `(tj, xj)`.
#[inline]
pub fn below_sight_line(ti: f64, xi: f64, tk: f64, xk: f64, tj: f64, xj: f64) -> bool {
    (xk - xi) * (tj - ti) < (xj - xi) * (tk - ti)
}

fn validate(times: &[f64], values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::invalid(format!(
            "visibility graph needs at least 2 points, got {}",
            values.len()
        )));
    }
    if times.len() != values.len() {
        return Err(Error::Shape(format!("{} times for {} values", times.len(), values.len())));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("value {v} at index {i} is not a positive finite number")));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time coordinates must be finite and strictly increasing"));
    }
    Ok(())
}

fn index_times(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

/// Cubic-time reference builder with time coordinates `0..n`.
pub fn vg_oracle(values: &[f64]) -> Result<VisibilityGraph> {
    vg_oracle_at(&index_times(values.len()), values)
}

pub fn vg_oracle_at(times: &[f64], values: &[f64]) -> Result<VisibilityGraph> {
    validate(times, values)?;
    let n = values.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let visible = (i + 1..j).all(|k| {
                below_sight_line(times[i], values[i], times[k], values[k], times[j], values[j])
            });
            if visible {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Divide-and-conquer builder with time coordinates `0..n`.
pub fn vg_fast(values: &[f64]) -> Result<VisibilityGraph> {
    vg_fast_at(&index_times(values.len()), values)
}

/// Splits each segment at its maximum. No edge can cross the maximum, so
/// the maximum's own visibility sweeps (left and right) are the only
/// cross-boundary work; each sweep tracks the single point with the highest
/// elevation seen from the maximum, which is the only candidate blocker.
pub fn vg_fast_at(times: &[f64], values: &[f64]) -> Result<VisibilityGraph> {
    validate(times, values)?;
    let n = values.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let mut top = lo;
        for i in lo + 1..=hi {
            if values[i] > values[top] {
                top = i;
            }
        }
        let (tt, xt) = (times[top], values[top]);

        if top > lo {
            let mut blocker = top - 1;
            link(&mut adj, blocker, top);
            for i in (lo..top - 1).rev() {
                if below_sight_line(times[i], values[i], times[blocker], values[blocker], tt, xt) {
                    link(&mut adj, i, top);
                    blocker = i;
                }
            }
            stack.push((lo, top - 1));
        }
        if top < hi {
            let mut blocker = top + 1;
            link(&mut adj, top, blocker);
            for j in top + 2..=hi {
                if below_sight_line(tt, xt, times[blocker], values[blocker], times[j], values[j]) {
                    link(&mut adj, top, j);
                    blocker = j;
                }
            }
            stack.push((top + 1, hi));
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    Ok(Graph::from_sorted_adjacency(adj))
}

fn link(adj: &mut [Vec<usize>], a: usize, b: usize) {
    adj[a].push(b);
    adj[b].push(a);
}
