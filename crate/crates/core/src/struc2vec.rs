//! Structural node embeddings.
//!
//! Pipeline per graph: ordered degree rings `R_k(v)` → DTW distances
//! accumulated over hop layers → biased walks over the multilayer
//! structural graph → exact-softmax skip-gram.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Struc2VecConfig {
    /// Upper bound on the number of hop layers beyond layer 0.
    pub layer_cap: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Probability of stepping within the current layer.
    pub stay_prob: f64,
    pub seed: u64,
}

impl Default for Struc2VecConfig {
    fn default() -> Self {
        Struc2VecConfig {
            layer_cap: 5,
            walks_per_node: 20,
            walk_length: 10,
            window: 5,
            dim: 64,
            epochs: 5,
            lr: 0.025,
            stay_prob: 0.3,
            seed: 0,
        }
    }
}

/// Sorted degrees of the nodes at hop distance exactly `k` from `v`.
pub fn degree_ring(g: &Graph, v: usize, k: usize) -> Vec<usize> {
    let dist = g.bfs(v);
    ring_from_distances(g, &dist, k)
}

fn ring_from_distances(g: &Graph, dist: &[usize], k: usize) -> Vec<usize> {
    let mut ring: Vec<usize> = dist
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d == k)
        .map(|(w, _)| g.degree(w))
        .collect();
    ring.sort_unstable();
    ring
}

#[inline]
fn degree_cost(a: usize, b: usize) -> f64 {
    let (a, b) = (a.max(1) as f64, b.max(1) as f64);
    a.max(b) / a.min(b) - 1.0
}

/// DTW between two degree sequences with element cost `max/min - 1`.
/// Empty input on either side gives infinity.
pub fn dtw_cost(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = degree_cost(x, b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Per-layer pairwise structural distances, `layers[k][u * n + v]`.
/// Infinity marks pairs undefined at that layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralDistances {
    pub n: usize,
    pub k_max: usize,
    pub layers: Vec<Vec<f64>>,
}

impl StructuralDistances {
    pub fn get(&self, k: usize, u: usize, v: usize) -> f64 {
        self.layers[k][u * self.n + v]
    }
}

/// `w_k(u,v) = w_{k-1}(u,v) + dtw(R_k(u), R_k(v))` with `w_0` the layer-0
/// ring distance, for `k = 0..=min(diameter, layer_cap)`.
pub fn structural_distances(g: &Graph, layer_cap: usize) -> StructuralDistances {
    let n = g.n();
    let dist = g.all_distances();
    let k_max = dist
        .iter()
        .flat_map(|row| row.iter().copied().filter(|&d| d != usize::MAX))
        .max()
        .unwrap_or(0)
        .min(layer_cap);
    let rings: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|v| (0..=k_max).map(|k| ring_from_distances(g, &dist[v], k)).collect())
        .collect();
    let mut layers = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut w = vec![f64::INFINITY; n * n];
        for u in 0..n {
            w[u * n + u] = 0.0;
            for v in u + 1..n {
                let below = if k == 0 { 0.0 } else { layers_get(&layers, n, k - 1, u, v) };
                let d = if below.is_finite() { below + dtw_cost(&rings[u][k], &rings[v][k]) } else { below };
                w[u * n + v] = d;
                w[v * n + u] = d;
            }
        }
        layers.push(w);
    }
    StructuralDistances { n, k_max, layers }
}

fn layers_get(layers: &[Vec<f64>], n: usize, k: usize, u: usize, v: usize) -> f64 {
    layers[k][u * n + v]
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkParams {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub stay_prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<usize>>,
    pub params: WalkParams,
}

#[derive(Debug, Clone)]
struct Layer {
    /// Per node: candidate targets and their cumulative probabilities.
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
    up_prob: Vec<f64>,
}

/// Transition structure of the multilayer structural graph. Within layer
/// `k` a step from `u` to `v` has weight `exp(-w_k(u,v))`; moving up a
/// layer from `u` has weight `ln(Γ_k(u) + e)` against 1 for moving down,
/// where `Γ_k(u)` counts `u`'s edges heavier than the layer's mean weight.
#[derive(Debug, Clone)]
pub struct MultilayerGraph {
    n: usize,
    layers: Vec<Layer>,
}

impl MultilayerGraph {
    pub fn new(d: &StructuralDistances) -> Self {
        let n = d.n;
        let layers = (0..=d.k_max)
            .map(|k| {
                let mut total = 0.0;
                let mut count = 0usize;
                for u in 0..n {
                    for v in u + 1..n {
                        let w = d.get(k, u, v);
                        if w.is_finite() {
                            total += (-w).exp();
                            count += 1;
                        }
                    }
                }
                let mean = if count > 0 { total / count as f64 } else { 0.0 };
                let mut layer = Layer { targets: Vec::new(), cumulative: Vec::new(), up_prob: Vec::new() };
                for u in 0..n {
                    let (targets, weights): (Vec<usize>, Vec<f64>) = (0..n)
                        .filter(|&v| v != u && d.get(k, u, v).is_finite())
                        .map(|v| (v, (-d.get(k, u, v)).exp()))
                        .unzip();
                    let heavier = weights.iter().filter(|&&w| w > mean).count() as f64;
                    let z: f64 = weights.iter().sum();
                    let mut acc = 0.0;
                    let cumulative = weights
                        .iter()
                        .map(|w| {
                            acc += w / z;
                            acc
                        })
                        .collect();
                    let up = (heavier + std::f64::consts::E).ln();
                    layer.up_prob.push(up / (up + 1.0));
                    layer.targets.push(targets);
                    layer.cumulative.push(cumulative);
                }
                layer
            })
            .collect();
        MultilayerGraph { n, layers }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Step probabilities from `u` within `layer`, as `(target, prob)`.
    pub fn transition(&self, u: usize, layer: usize) -> Vec<(usize, f64)> {
        let l = &self.layers[layer];
        let mut prev = 0.0;
        l.targets[u]
            .iter()
            .zip(&l.cumulative[u])
            .map(|(&v, &c)| {
                let p = c - prev;
                prev = c;
                (v, p)
            })
            .collect()
    }

    fn has_targets(&self, u: usize, layer: usize) -> bool {
        !self.layers[layer].targets[u].is_empty()
    }

    /// Samples one within-layer step from `u`.
    pub fn step(&self, u: usize, layer: usize, rng: &mut impl Rng) -> usize {
        let l = &self.layers[layer];
        let cum = &l.cumulative[u];
        let r: f64 = rng.random::<f64>() * cum.last().copied().unwrap_or(1.0);
        let idx = cum.partition_point(|&c| c <= r).min(cum.len() - 1);
        l.targets[u][idx]
    }

    fn walk(&self, root: usize, length: usize, stay: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut path = Vec::with_capacity(length);
        path.push(root);
        let (mut v, mut layer) = (root, 0usize);
        while path.len() < length {
            if rng.random::<f64>() < stay {
                v = self.step(v, layer, rng);
                path.push(v);
            } else if rng.random::<f64>() > self.layers[layer].up_prob[v] {
                layer = layer.saturating_sub(1);
            } else if layer + 1 < self.layers.len() && self.has_targets(v, layer + 1) {
                layer += 1;
            }
        }
        path
    }
}

/// `walks_per_node` rounds over every root in index order.
pub fn multilayer_walks(d: &StructuralDistances, params: &WalkParams) -> Result<WalkCorpus> {
    if params.walk_length < 2 {
        return Err(Error::invalid(format!("walk_length {} < 2", params.walk_length)));
    }
    if !(params.stay_prob > 0.0 && params.stay_prob <= 1.0) {
        return Err(Error::invalid(format!("stay_prob {} not in (0,1]", params.stay_prob)));
    }
    if d.n < 2 {
        return Err(Error::invalid("multilayer walks need at least 2 nodes"));
    }
    let graph = MultilayerGraph::new(d);
    let mut rng = seed::rng(params.seed);
    let mut walks = Vec::with_capacity(params.walks_per_node * d.n);
    for _ in 0..params.walks_per_node {
        for root in 0..d.n {
            walks.push(graph.walk(root, params.walk_length, params.stay_prob, &mut rng));
        }
    }
    Ok(WalkCorpus { walks, params: params.clone() })
}

/// `n × dim` row-major embedding; row `i` belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Skip-gram with an exact softmax over the whole (small) vocabulary.
///
/// `center` rows are the embedding `g(u)`; `context` rows score candidate
/// neighbours, `Pr(v | u) = softmax_v(context_v · center_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGram {
    pub n: usize,
    pub dim: usize,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl SkipGram {
    pub fn init(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let scale = 0.5 / dim as f64;
        let center = (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect();
        SkipGram { n, dim, center, context: vec![0.0; n * dim] }
    }

    fn scores(&self, u: usize, out: &mut [f64]) {
        let g = &self.center[u * self.dim..(u + 1) * self.dim];
        for (v, s) in out.iter_mut().enumerate() {
            let c = &self.context[v * self.dim..(v + 1) * self.dim];
            *s = c.iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }

    /// `Pr(· | u)` over the vocabulary.
    pub fn probabilities(&self, u: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        self.scores(u, &mut s);
        softmax_in_place(&mut s);
        s
    }

    /// Sum of `log Pr(c | u)` over all (center, context) pairs drawn from a
    /// symmetric window over each walk.
    pub fn log_likelihood(&self, corpus: &[Vec<usize>], window: usize) -> f64 {
        let mut total = 0.0;
        let mut s = vec![0.0; self.n];
        for_each_position(corpus, window, |u, ctx| {
            self.scores(u, &mut s);
            let lse = log_sum_exp(&s);
            total += ctx.iter().map(|&c| s[c] - lse).sum::<f64>();
        });
        total
    }

    /// Gradient of [`log_likelihood`](Self::log_likelihood) w.r.t. `center`
    /// and `context`.
    pub fn log_likelihood_gradient(&self, corpus: &[Vec<usize>], window: usize) -> (Vec<f64>, Vec<f64>) {
        let mut g_center = vec![0.0; self.center.len()];
        let mut g_context = vec![0.0; self.context.len()];
        let mut scratch = PositionScratch::new(self.n, self.dim);
        for_each_position(corpus, window, |u, ctx| {
            self.position_gradient(u, ctx, &mut scratch);
            let d = self.dim;
            for k in 0..d {
                g_center[u * d + k] -= scratch.g_center[k];
            }
            for (gc, sc) in g_context.iter_mut().zip(&scratch.g_context) {
                *gc -= sc;
            }
        });
        (g_center, g_context)
    }

    /// Loss `-Σ_c log Pr(c|u)` at one position and its gradient, left in
    /// `scratch`.
    fn position_gradient(&self, u: usize, ctx: &[usize], scratch: &mut PositionScratch) -> f64 {
        let d = self.dim;
        let k = ctx.len() as f64;
        self.scores(u, &mut scratch.p);
        let lse = log_sum_exp(&scratch.p);
        let loss = ctx.iter().map(|&c| lse - scratch.p[c]).sum::<f64>();
        for p in scratch.p.iter_mut() {
            *p = (*p - lse).exp();
        }
        let g = &self.center[u * d..(u + 1) * d];
        scratch.g_center.iter_mut().for_each(|x| *x = 0.0);
        for v in 0..self.n {
            let coeff = k * scratch.p[v];
            let cv = &self.context[v * d..(v + 1) * d];
            for j in 0..d {
                scratch.g_center[j] += coeff * cv[j];
            }
            for j in 0..d {
                scratch.g_context[v * d + j] = coeff * g[j];
            }
        }
        for &c in ctx {
            let cv = &self.context[c * d..(c + 1) * d];
            for j in 0..d {
                scratch.g_center[j] -= cv[j];
                scratch.g_context[c * d + j] -= g[j];
            }
        }
        loss
    }

    pub fn embedding(&self) -> EmbeddingMatrix {
        EmbeddingMatrix { n: self.n, dim: self.dim, data: self.center.clone() }
    }
}

struct PositionScratch {
    p: Vec<f64>,
    g_center: Vec<f64>,
    g_context: Vec<f64>,
}

impl PositionScratch {
    fn new(n: usize, dim: usize) -> Self {
        PositionScratch { p: vec![0.0; n], g_center: vec![0.0; dim], g_context: vec![0.0; n * dim] }
    }
}

fn for_each_position(corpus: &[Vec<usize>], window: usize, mut f: impl FnMut(usize, &[usize])) {
    let mut ctx = Vec::with_capacity(2 * window);
    for walk in corpus {
        for (i, &u) in walk.iter().enumerate() {
            ctx.clear();
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(walk.len() - 1);
            ctx.extend((lo..=hi).filter(|&j| j != i).map(|j| walk[j]));
            if !ctx.is_empty() {
                f(u, &ctx);
            }
        }
    }
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(s: &mut [f64]) {
    let lse = log_sum_exp(s);
    for x in s.iter_mut() {
        *x = (*x - lse).exp();
    }
}

/// Result of [`train_skipgram`]: the model and the mean per-pair loss of
/// each epoch.
#[derive(Debug, Clone)]
pub struct TrainedSkipGram {
    pub model: SkipGram,
    pub epoch_losses: Vec<f64>,
}

/// Plain SGD over positions, learning rate decaying linearly to
/// `1e-4 * lr` over the whole run.
pub fn train_skipgram(corpus: &WalkCorpus, n: usize, cfg: &SkipGramConfig) -> Result<TrainedSkipGram> {
    train_skipgram_walks(&corpus.walks, n, cfg)
}

pub fn train_skipgram_walks(walks: &[Vec<usize>], n: usize, cfg: &SkipGramConfig) -> Result<TrainedSkipGram> {
    if walks.iter().all(|w| w.len() < 2) {
        return Err(Error::invalid("skip-gram corpus has no co-occurrences"));
    }
    if cfg.dim < 2 {
        return Err(Error::invalid(format!("embedding dim {} < 2", cfg.dim)));
    }
    if let Some(bad) = walks.iter().flatten().find(|&&v| v >= n) {
        return Err(Error::invalid(format!("walk visits node {bad} outside vocabulary of {n}")));
    }
    let mut model = SkipGram::init(n, cfg.dim, cfg.seed);
    let d = cfg.dim;
    let positions: usize = walks.iter().map(|w| w.len()).sum();
    let total_steps = (positions * cfg.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut scratch = PositionScratch::new(n, d);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for_each_position(walks, cfg.window, |u, ctx| {
            let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(1e-4);
            step += 1;
            loss += model.position_gradient(u, ctx, &mut scratch);
            pairs += ctx.len();
            for j in 0..d {
                model.center[u * d + j] -= lr * scratch.g_center[j];
            }
            for (c, g) in model.context.iter_mut().zip(&scratch.g_context) {
                *c -= lr * g;
            }
        });
        let mean = loss / pairs.max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainedSkipGram { model, epoch_losses })
}

/// Full per-graph embedding: distances, walks, skip-gram.
pub fn embed_graph(g: &Graph, cfg: &Struc2VecConfig) -> Result<EmbeddingMatrix> {
    let distances = structural_distances(g, cfg.layer_cap);
    let corpus = multilayer_walks(
        &distances,
        &WalkParams {
            walks_per_node: cfg.walks_per_node,
            walk_length: cfg.walk_length,
            stay_prob: cfg.stay_prob,
            seed: seed::derive(cfg.seed, "walks"),
        },
    )?;
    let trained = train_skipgram(
        &corpus,
        g.n(),
        &SkipGramConfig {
            dim: cfg.dim,
            window: cfg.window,
            epochs: cfg.epochs,
            lr: cfg.lr,
            seed: seed::derive(cfg.seed, "skipgram"),
        },
    )?;
    Ok(trained.model.embedding())
}
