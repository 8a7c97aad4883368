//! Price graphs: visibility graphs built from market series, collective
//! influence node weights, struc2vec structural embeddings, and a
//! node-weight-augmented dual-attention predictor with a cross-asset
//! attention head.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: OHLCV tables, windows, labels, splits and a synthetic corpus.
//! - [`graph`] / [`visibility`]: the undirected graph type and the
//!   visibility-graph builders (a cubic oracle and a divide-and-conquer one).
//! - [`influence`]: collective influence weights.
//! - [`struc2vec`]: degree rings, DTW structural distances, multilayer walks
//!   and an exact-softmax skip-gram trainer.
//! - [`autodiff`] / [`model`] / [`train`]: a small reverse-mode tape, the
//!   DARNN + CAAN model, and Adam training with BCE loss.
//! - [`backtest`] / [`ks`]: trading simulation and the two-sample KS test.
//! - [`cache`]: content-addressed graph and embedding caches.

pub mod autodiff;
pub mod backtest;
pub mod cache;
pub mod data;
pub mod embed;
mod error;
pub mod graph;
pub mod influence;
pub mod ks;
pub mod model;
pub mod seed;
pub mod struc2vec;
pub mod train;
pub mod visibility;

pub use error::{Error, Result};
