//! Undirected simple graphs on nodes `0..n`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Undirected simple graph with sorted adjacency lists.
///
/// Node indices of a visibility graph are the time indices of the series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

pub type VisibilityGraph = Graph;

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph { adj: vec![Vec::new(); n] }
    }

    /// Builds a graph from unordered pairs. Self-loops, duplicates and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for (v, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate edge at node {v}")));
            }
        }
        Ok(Graph { adj })
    }

    /// Builds from adjacency lists assumed sorted and symmetric.
    pub(crate) fn from_sorted_adjacency(adj: Vec<Vec<usize>>) -> Self {
        debug_assert!(adj.iter().all(|l| l.windows(2).all(|w| w[0] < w[1])));
        Graph { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n() && self.adj[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Hop distances from `src`; `usize::MAX` marks unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn all_distances(&self) -> Vec<Vec<usize>> {
        (0..self.n()).map(|v| self.bfs(v)).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 0 || self.bfs(0).iter().all(|&d| d != usize::MAX)
    }

    /// Largest finite hop distance between any two nodes.
    pub fn diameter(&self) -> usize {
        (0..self.n())
            .flat_map(|v| self.bfs(v).into_iter().filter(|&d| d != usize::MAX))
            .max()
            .unwrap_or(0)
    }

    /// Applies `perm` to node labels: node `v` becomes `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n() {
            return Err(Error::Shape(format!("permutation of length {} for n={}", perm.len(), self.n())));
        }
        Graph::from_edges(self.n(), self.edges().into_iter().map(|(a, b)| (perm[a], perm[b])))
    }

    /// Edge-list text: `n` on the first line, then one `i j` pair per line
    /// with `i < j`, sorted lexicographically.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.n()).unwrap();
        for (i, j) in self.edges() {
            writeln!(s, "{i} {j}").unwrap();
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Graph> {
        let mut lines = text.lines();
        let n: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::invalid("edge list: missing node count"))?;
        let mut edges = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |p: Option<&str>| -> Result<usize> {
                p.and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("edge list line {}: malformed pair", lineno + 2)))
            };
            let (i, j) = (parse(parts.next())?, parse(parts.next())?);
            if parts.next().is_some() || i >= j || prev.is_some_and(|p| p >= (i, j)) {
                return Err(Error::invalid(format!("edge list line {}: pairs must be i<j and sorted", lineno + 2)));
            }
            prev = Some((i, j));
            edges.push((i, j));
        }
        Graph::from_edges(n, edges)
    }
}
