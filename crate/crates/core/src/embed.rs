//! Per-window feature extraction: for every price channel, build the
//! visibility graph, score nodes by collective influence and embed the graph
//! with struc2vec.

use sha2::{Digest, Sha256};

use crate::data::{PriceWindow, CHANNELS};
use crate::graph::Graph;
use crate::influence::{ci, normalize_ci};
use crate::struc2vec::{embed_graph, EmbeddingMatrix, Struc2VecConfig};
use crate::visibility::vg_fast;
use crate::{Error, Result};

/// How node weights enter the temporal attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMode {
    /// Per-window min-max normalized to `[0, 1]`.
    Normalized,
    /// Raw integer scores as reals.
    Raw,
}

impl std::str::FromStr for CiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(CiMode::Normalized),
            "raw" => Ok(CiMode::Raw),
            _ => Err(Error::invalid(format!("unknown CI mode {s:?} (normalized | raw)"))),
        }
    }
}

impl CiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CiMode::Normalized => "normalized",
            CiMode::Raw => "raw",
        }
    }

    pub fn apply(self, raw: &[u64]) -> Vec<f64> {
        let r: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
        match self {
            CiMode::Normalized => normalize_ci(&r),
            CiMode::Raw => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub struc2vec: Struc2VecConfig,
    /// Ball radius `l` of the collective-influence score.
    pub ci_radius: usize,
    pub ci_mode: CiMode,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig { struc2vec: Struc2VecConfig::default(), ci_radius: 2, ci_mode: CiMode::Normalized }
    }
}

/// Features of one channel of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFeatures {
    pub graph: Graph,
    pub ci_raw: Vec<u64>,
    pub ci: Vec<f64>,
    pub embedding: EmbeddingMatrix,
}

pub fn graph_features(values: &[f64], ci_radius: usize) -> Result<(Graph, Vec<u64>)> {
    let g = vg_fast(values)?;
    let raw = ci(&g, ci_radius);
    Ok((g, raw))
}

pub fn embed_series(values: &[f64], cfg: &EmbedConfig) -> Result<ChannelFeatures> {
    let (graph, ci_raw) = graph_features(values, cfg.ci_radius)?;
    let embedding = embed_graph(&graph, &cfg.struc2vec)?;
    let ci = cfg.ci_mode.apply(&ci_raw);
    Ok(ChannelFeatures { graph, ci_raw, ci, embedding })
}

/// Six channel features in the fixed channel order.
pub fn embed_window(window: &PriceWindow, cfg: &EmbedConfig) -> Result<Vec<ChannelFeatures>> {
    CHANNELS.iter().map(|&c| embed_series(window.channel(c), cfg)).collect()
}

/// Content key of a raw series (for the graph cache).
pub fn series_key(values: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(b"series\0");
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Content key of an embedding: the graph plus every struc2vec setting.
/// Embeddings depend on the series only through its graph.
pub fn embedding_key(g: &Graph, cfg: &Struc2VecConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"struc2vec\0");
    h.update(g.to_edge_list().as_bytes());
    h.update(struc2vec_fingerprint(cfg).as_bytes());
    hex(&h.finalize())
}

pub fn struc2vec_fingerprint(c: &Struc2VecConfig) -> String {
    format!(
        "layer_cap={};walks={};len={};window={};dim={};epochs={};lr={:e};stay={:e};seed={}",
        c.layer_cap, c.walks_per_node, c.walk_length, c.window, c.dim, c.epochs, c.lr, c.stay_prob, c.seed
    )
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
