//! Six node-weight-augmented DARNNs (one per price channel), an elementwise
//! merge, a cross-asset attention network (CAAN) and a sigmoid head.
//!
//! Per channel, the encoder runs an LSTM over the `T` node embeddings with
//! input attention across the `E` embedding dimensions; the decoder runs an
//! LSTM whose input at each step is the temporal-attention context vector,
//! with attention scores
//! `v_dᵀ tanh(W_d [h'; s'] + U_d h_i + w_ci · CI_i)`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use rand::Rng;

use crate::autodiff::{sigmoid_scalar, ParamRef, Tape, Var};
use crate::struc2vec::EmbeddingMatrix;
use crate::{seed, Error, Result};

pub const N_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Window length `T`.
    pub lookback: usize,
    /// Embedding size `E`.
    pub embed_dim: usize,
    /// Encoder hidden size `m` (also the representation size).
    pub hidden: usize,
    /// Decoder hidden size `p`.
    pub decoder_hidden: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback < 2 || self.embed_dim < 1 || self.hidden < 1 || self.decoder_hidden < 1 {
            return Err(Error::invalid(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }
}

/// Offsets of one DARNN's tensors in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DarnnLayout {
    pub enc_w_x: ParamRef,
    pub enc_w_h: ParamRef,
    pub enc_b: ParamRef,
    pub in_v: ParamRef,
    pub in_w: ParamRef,
    pub in_u: ParamRef,
    pub dec_w_x: ParamRef,
    pub dec_w_h: ParamRef,
    pub dec_b: ParamRef,
    pub tmp_v: ParamRef,
    pub tmp_w: ParamRef,
    pub tmp_u: ParamRef,
    pub tmp_w_ci: ParamRef,
    /// `m × p` bridge, present only when `p != m`.
    pub out_w: Option<ParamRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaanLayout {
    pub w_q: ParamRef,
    pub w_k: ParamRef,
    pub w_v: ParamRef,
    pub w_fc: ParamRef,
    pub b_fc: ParamRef,
    /// Rescale constant `D_k` (key dimension).
    pub d_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub config: ModelConfig,
    pub darnn: Vec<DarnnLayout>,
    pub caan: CaanLayout,
    pub total: usize,
}

struct Alloc(usize);

impl Alloc {
    fn take(&mut self, rows: usize, cols: usize) -> ParamRef {
        let p = ParamRef { offset: self.0, rows, cols };
        self.0 += rows * cols;
        p
    }
}

impl ModelLayout {
    pub fn new(config: ModelConfig) -> Result<Arc<Self>> {
        config.validate()?;
        let ModelConfig { lookback: t, embed_dim: e, hidden: m, decoder_hidden: p } = config;
        let mut a = Alloc(0);
        let darnn = (0..N_CHANNELS)
            .map(|_| DarnnLayout {
                enc_w_x: a.take(4 * m, e),
                enc_w_h: a.take(4 * m, m),
                enc_b: a.take(4 * m, 1),
                in_v: a.take(1, t),
                in_w: a.take(t, 2 * m),
                in_u: a.take(t, t),
                dec_w_x: a.take(4 * p, m),
                dec_w_h: a.take(4 * p, p),
                dec_b: a.take(4 * p, 1),
                tmp_v: a.take(1, m),
                tmp_w: a.take(m, 2 * p),
                tmp_u: a.take(m, m),
                tmp_w_ci: a.take(1, 1),
                out_w: (p != m).then(|| a.take(m, p)),
            })
            .collect();
        let caan = CaanLayout {
            w_q: a.take(m, m),
            w_k: a.take(m, m),
            w_v: a.take(m, m),
            w_fc: a.take(1, m),
            b_fc: a.take(1, 1),
            d_k: m as f64,
        };
        Ok(Arc::new(ModelLayout { config, darnn, caan, total: a.0 }))
    }

    /// Named parameter tensors, e.g. `darnn3.tmp_w_ci` or `caan.w_q`.
    pub fn groups(&self) -> Vec<(String, ParamRef)> {
        let mut out = Vec::new();
        for (c, d) in self.darnn.iter().enumerate() {
            let named = [
                ("enc_w_x", d.enc_w_x),
                ("enc_w_h", d.enc_w_h),
                ("enc_b", d.enc_b),
                ("in_v", d.in_v),
                ("in_w", d.in_w),
                ("in_u", d.in_u),
                ("dec_w_x", d.dec_w_x),
                ("dec_w_h", d.dec_w_h),
                ("dec_b", d.dec_b),
                ("tmp_v", d.tmp_v),
                ("tmp_w", d.tmp_w),
                ("tmp_u", d.tmp_u),
                ("tmp_w_ci", d.tmp_w_ci),
            ];
            out.extend(named.into_iter().map(|(n, p)| (format!("darnn{c}.{n}"), p)));
            if let Some(p) = d.out_w {
                out.push((format!("darnn{c}.out_w"), p));
            }
        }
        let c = &self.caan;
        for (n, p) in [("w_q", c.w_q), ("w_k", c.w_k), ("w_v", c.w_v), ("w_fc", c.w_fc), ("b_fc", c.b_fc)] {
            out.push((format!("caan.{n}"), p));
        }
        out
    }
}

/// Dense row-major matrix used by the typed parameter views.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Typed copy of one DARNN's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DarnnParams {
    pub enc_w_x: Matrix,
    pub enc_w_h: Matrix,
    pub enc_b: Matrix,
    /// Input attention `v_c` (len T), `W_c` (T×2m), `U_c` (T×T).
    pub in_v: Matrix,
    pub in_w: Matrix,
    pub in_u: Matrix,
    pub dec_w_x: Matrix,
    pub dec_w_h: Matrix,
    pub dec_b: Matrix,
    /// Temporal attention `v_d` (len m), `W_d` (m×2p), `U_d` (m×m).
    pub tmp_v: Matrix,
    pub tmp_w: Matrix,
    pub tmp_u: Matrix,
    /// Scalar weight of the CI term.
    pub w_ci: f64,
    pub out_w: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaanParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_fc: Matrix,
    pub b_fc: f64,
    pub d_k: f64,
}

/// All learnable weights as one flat vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layout: Arc<ModelLayout>,
    pub flat: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(layout: Arc<ModelLayout>) -> Self {
        let flat = vec![0.0; layout.total];
        ModelParams { layout, flat }
    }

    /// Xavier-uniform weights, zero biases, forget-gate bias 1, `w_ci = 0`.
    pub fn init(layout: Arc<ModelLayout>, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut p = ModelParams::zeros(layout.clone());
        for (name, r) in layout.groups() {
            let leaf = name.rsplit('.').next().unwrap();
            match leaf {
                "enc_b" | "dec_b" => {
                    let h = r.rows / 4;
                    p.flat[r.offset + h..r.offset + 2 * h].iter_mut().for_each(|x| *x = 1.0);
                }
                "b_fc" | "tmp_w_ci" => {}
                _ => {
                    let bound = (6.0 / (r.rows + r.cols) as f64).sqrt();
                    for x in &mut p.flat[r.range()] {
                        *x = rng.random_range(-bound..bound);
                    }
                }
            }
        }
        p
    }

    /// Every entry uniform in `[-scale, scale]`; used by gradient checks.
    pub fn random(layout: Arc<ModelLayout>, seed: u64, scale: f64) -> Self {
        let mut rng = seed::rng(seed);
        let flat = (0..layout.total).map(|_| rng.random_range(-scale..scale)).collect();
        ModelParams { layout, flat }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.flat.clone()
    }

    pub fn unflatten(layout: Arc<ModelLayout>, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != layout.total {
            return Err(Error::Shape(format!("{} parameters for a layout of {}", flat.len(), layout.total)));
        }
        Ok(ModelParams { layout, flat })
    }

    fn get(&self, r: ParamRef) -> Matrix {
        Matrix { rows: r.rows, cols: r.cols, data: self.flat[r.range()].to_vec() }
    }

    fn put(&mut self, r: ParamRef, m: &Matrix) -> Result<()> {
        if (m.rows, m.cols) != (r.rows, r.cols) || m.data.len() != r.len() {
            return Err(Error::Shape(format!("{}x{} into {}x{}", m.rows, m.cols, r.rows, r.cols)));
        }
        self.flat[r.range()].copy_from_slice(&m.data);
        Ok(())
    }

    pub fn darnn(&self, c: usize) -> DarnnParams {
        let d = &self.layout.darnn[c];
        DarnnParams {
            enc_w_x: self.get(d.enc_w_x),
            enc_w_h: self.get(d.enc_w_h),
            enc_b: self.get(d.enc_b),
            in_v: self.get(d.in_v),
            in_w: self.get(d.in_w),
            in_u: self.get(d.in_u),
            dec_w_x: self.get(d.dec_w_x),
            dec_w_h: self.get(d.dec_w_h),
            dec_b: self.get(d.dec_b),
            tmp_v: self.get(d.tmp_v),
            tmp_w: self.get(d.tmp_w),
            tmp_u: self.get(d.tmp_u),
            w_ci: self.flat[d.tmp_w_ci.offset],
            out_w: d.out_w.map(|r| self.get(r)),
        }
    }

    pub fn set_darnn(&mut self, c: usize, p: &DarnnParams) -> Result<()> {
        let d = self.layout.darnn[c].clone();
        self.put(d.enc_w_x, &p.enc_w_x)?;
        self.put(d.enc_w_h, &p.enc_w_h)?;
        self.put(d.enc_b, &p.enc_b)?;
        self.put(d.in_v, &p.in_v)?;
        self.put(d.in_w, &p.in_w)?;
        self.put(d.in_u, &p.in_u)?;
        self.put(d.dec_w_x, &p.dec_w_x)?;
        self.put(d.dec_w_h, &p.dec_w_h)?;
        self.put(d.dec_b, &p.dec_b)?;
        self.put(d.tmp_v, &p.tmp_v)?;
        self.put(d.tmp_w, &p.tmp_w)?;
        self.put(d.tmp_u, &p.tmp_u)?;
        self.flat[d.tmp_w_ci.offset] = p.w_ci;
        match (d.out_w, &p.out_w) {
            (Some(r), Some(m)) => self.put(r, m),
            (None, None) => Ok(()),
            _ => Err(Error::Shape("output bridge presence mismatch".into())),
        }
    }

    pub fn caan(&self) -> CaanParams {
        let c = &self.layout.caan;
        CaanParams {
            w_q: self.get(c.w_q),
            w_k: self.get(c.w_k),
            w_v: self.get(c.w_v),
            w_fc: self.get(c.w_fc),
            b_fc: self.flat[c.b_fc.offset],
            d_k: c.d_k,
        }
    }

    pub fn set_caan(&mut self, p: &CaanParams) -> Result<()> {
        let c = self.layout.caan.clone();
        self.put(c.w_q, &p.w_q)?;
        self.put(c.w_k, &p.w_k)?;
        self.put(c.w_v, &p.w_v)?;
        self.put(c.w_fc, &p.w_fc)?;
        self.flat[c.b_fc.offset] = p.b_fc;
        Ok(())
    }
}

/// Model input for one stock on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct StockSample {
    pub ticker: String,
    pub date: NaiveDate,
    /// Date on which the label and return are realized.
    pub next_date: NaiveDate,
    /// One `T × E` embedding per channel.
    pub embeddings: Vec<EmbeddingMatrix>,
    /// One length-`T` node-weight vector per channel.
    pub ci: Vec<Vec<f64>>,
    pub label: u8,
    /// Realized next-day simple return (for backtests).
    pub next_return: f64,
}

impl StockSample {
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.embeddings.len() != N_CHANNELS || self.ci.len() != N_CHANNELS {
            return Err(Error::Shape(format!("{}: expected {N_CHANNELS} channels", self.ticker)));
        }
        for (e, ci) in self.embeddings.iter().zip(&self.ci) {
            if e.n != cfg.lookback || e.dim != cfg.embed_dim || ci.len() != cfg.lookback {
                return Err(Error::Shape(format!(
                    "{} {}: embedding {}x{} / CI {} vs T={} E={}",
                    self.ticker, self.date, e.n, e.dim, ci.len(), cfg.lookback, cfg.embed_dim
                )));
            }
        }
        Ok(())
    }
}

/// Stocks sharing one date.
#[derive(Debug, Clone)]
pub struct BatchSample<'a> {
    pub date: NaiveDate,
    pub stocks: Vec<&'a StockSample>,
}

pub struct EncoderTrace {
    /// `h_1 … h_T`, each `m × 1`.
    pub states: Vec<Var>,
    /// Input-attention weights per step, each `1 × E`.
    pub alphas: Vec<Var>,
}

/// Encoder with input attention over the embedding dimensions: at step `t`
/// the score of series `k` (column `k` of `x`) is
/// `v_cᵀ tanh(W_c [h_{t-1}; s_{t-1}] + U_c x^k)`.
pub fn encoder_forward(tape: &mut Tape, p: &DarnnLayout, x: &EmbeddingMatrix) -> Result<EncoderTrace> {
    let (t_len, e) = (x.n, x.dim);
    let m = p.enc_w_h.cols;
    if p.in_u.rows != t_len || p.enc_w_x.cols != e {
        return Err(Error::Shape(format!("encoder expects {}x{}, got {t_len}x{e}", p.in_u.rows, p.enc_w_x.cols)));
    }
    let xs = tape.constant(t_len, e, x.data.clone());
    let (w_x, w_h, b) = (tape.param(p.enc_w_x), tape.param(p.enc_w_h), tape.param(p.enc_b));
    let (v, w, u) = (tape.param(p.in_v), tape.param(p.in_w), tape.param(p.in_u));
    let ux = tape.matmul(u, xs);
    let mut state = tape.constant(2 * m, 1, vec![0.0; 2 * m]);
    let mut states = Vec::with_capacity(t_len);
    let mut alphas = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let q = tape.matvec(w, state);
        let pre = tape.add_col(ux, q);
        let act = tape.tanh(pre);
        let scores = tape.matmul(v, act);
        let alpha = tape.softmax(scores);
        let row = tape.constant(1, e, x.row(t).to_vec());
        let weighted = tape.mul(alpha, row);
        let h = tape.slice(state, 0, m);
        let gates = tape.linear(w_x, weighted, w_h, h, b);
        state = tape.lstm_cell(gates, state);
        states.push(tape.slice(state, 0, m));
        alphas.push(alpha);
    }
    Ok(EncoderTrace { states, alphas })
}

pub struct DecoderTrace {
    /// Representation `S` (`m × 1`).
    pub output: Var,
    /// Temporal-attention scores per step (`1 × T`).
    pub scores: Vec<Var>,
    pub betas: Vec<Var>,
}

/// Decoder with plain temporal attention:
/// `v_dᵀ tanh(W_d [h'; s'] + U_d h_i)`.
pub fn decoder_forward(tape: &mut Tape, p: &DarnnLayout, states: &[Var]) -> Result<DecoderTrace> {
    decoder(tape, p, states, None)
}

/// Decoder with CI-augmented temporal attention. The decoder LSTM is driven
/// by the context vector alone; `S` is the final decoder hidden state
/// (through the `m × p` bridge when `p != m`).
pub fn decoder_forward_ci(tape: &mut Tape, p: &DarnnLayout, states: &[Var], ci: &[f64]) -> Result<DecoderTrace> {
    decoder(tape, p, states, Some(ci))
}

fn decoder(tape: &mut Tape, p: &DarnnLayout, states: &[Var], ci: Option<&[f64]>) -> Result<DecoderTrace> {
    let t_len = states.len();
    if let Some(ci) = ci {
        if ci.len() != t_len {
            return Err(Error::Shape(format!("{} CI values for {t_len} states", ci.len())));
        }
    }
    let dp = p.dec_w_h.cols;
    let h_mat = tape.concat_cols(states);
    let (w_x, w_h, b) = (tape.param(p.dec_w_x), tape.param(p.dec_w_h), tape.param(p.dec_b));
    let (v, w, u) = (tape.param(p.tmp_v), tape.param(p.tmp_w), tape.param(p.tmp_u));
    let uh = tape.matmul(u, h_mat);
    let ci_term = ci.map(|ci| {
        let w_ci = tape.param(p.tmp_w_ci);
        let ci_row = tape.constant(1, t_len, ci.to_vec());
        tape.scale_by(ci_row, w_ci)
    });
    let mut state = tape.constant(2 * dp, 1, vec![0.0; 2 * dp]);
    let mut scores = Vec::with_capacity(t_len);
    let mut betas = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let q = tape.matvec(w, state);
        let mut pre = tape.add_col(uh, q);
        if let Some(ci_term) = ci_term {
            pre = tape.add_row(pre, ci_term);
        }
        let act = tape.tanh(pre);
        let d = tape.matmul(v, act);
        let beta = tape.softmax(d);
        let context = tape.matvec(h_mat, beta);
        let h = tape.slice(state, 0, dp);
        let gates = tape.linear(w_x, context, w_h, h, b);
        state = tape.lstm_cell(gates, state);
        scores.push(d);
        betas.push(beta);
    }
    let h = tape.slice(state, 0, dp);
    let output = match p.out_w {
        Some(r) => {
            let bridge = tape.param(r);
            tape.matvec(bridge, h)
        }
        None => h,
    };
    Ok(DecoderTrace { output, scores, betas })
}

/// Elementwise sum of the six channel representations.
pub fn merge(reps: &[&[f64]]) -> Result<Vec<f64>> {
    let first = reps.first().ok_or_else(|| Error::invalid("merge of nothing"))?;
    if reps.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Shape("merge inputs differ in length".into()));
    }
    let mut out = vec![0.0; first.len()];
    for r in reps {
        for (o, x) in out.iter_mut().zip(r.iter()) {
            *o += x;
        }
    }
    Ok(out)
}

pub fn merge_vars(tape: &mut Tape, reps: &[Var]) -> Var {
    let mut acc = reps[0];
    for &r in &reps[1..] {
        acc = tape.add(acc, r);
    }
    acc
}

pub struct CaanTrace {
    /// `m × I`; column `i` is `a^i`.
    pub attended: Var,
    /// `I × I` row-stochastic interrelationship matrix.
    pub gamma: Var,
    /// `1 × I` pre-sigmoid scores.
    pub logits: Var,
}

/// CAAN over the stock representations (`reps[i]` is `r^i`, `m × 1`)
/// followed by the linear head: `ŷ^i = sigmoid(W_fc a^i + b_fc)`.
pub fn caan_forward(tape: &mut Tape, c: &CaanLayout, reps: &[Var]) -> CaanTrace {
    let r = tape.concat_cols(reps);
    let (wq, wk, wv) = (tape.param(c.w_q), tape.param(c.w_k), tape.param(c.w_v));
    let q = tape.matmul(wq, r);
    let k = tape.matmul(wk, r);
    let v = tape.matmul(wv, r);
    let qt = tape.transpose(q);
    let l = tape.matmul(qt, k);
    let l = tape.scale(l, 1.0 / c.d_k.sqrt());
    let gamma = tape.softmax_rows(l);
    let attended = tape.mix(v, gamma);
    let logits = predict_logits(tape, c, attended);
    CaanTrace { attended, gamma, logits }
}

fn predict_logits(tape: &mut Tape, c: &CaanLayout, attended: Var) -> Var {
    let (w, b) = (tape.param(c.w_fc), tape.param(c.b_fc));
    let z = tape.matmul(w, attended);
    tape.add_scalar(z, b)
}

/// `sigmoid(W_fc · a + b_fc)`.
pub fn predict_score(a: &[f64], p: &CaanParams) -> f64 {
    let z: f64 = p.w_fc.data.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + p.b_fc;
    sigmoid_scalar(z)
}

/// Builds the six DARNNs and the merge for one stock; returns `r`.
pub fn stock_representation(tape: &mut Tape, layout: &ModelLayout, s: &StockSample) -> Result<Var> {
    s.check(&layout.config)?;
    let mut reps = Vec::with_capacity(N_CHANNELS);
    for (c, d) in layout.darnn.iter().enumerate() {
        let enc = encoder_forward(tape, d, &s.embeddings[c])?;
        let dec = decoder_forward_ci(tape, d, &enc.states, &s.ci[c])?;
        reps.push(dec.output);
    }
    let r = merge_vars(tape, &reps);
    tape.check_finite("stock representation")?;
    Ok(r)
}

/// Forward pass of a batch: per-stock DARNNs, merge, CAAN, head.
pub fn model_forward(params: &ModelParams, batch: &BatchSample) -> Result<Vec<f64>> {
    let reps = representations(params, &batch.stocks)?;
    let (_, probs) = caan_head(params, &reps);
    Ok(probs)
}

pub(crate) fn representations(params: &ModelParams, stocks: &[&StockSample]) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    stocks
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(&params.flat);
            let r = stock_representation(&mut tape, &params.layout, s)?;
            Ok(tape.value(r).to_vec())
        })
        .collect()
}

fn caan_head(params: &ModelParams, reps: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut tape = Tape::new(&params.flat);
    let m = params.layout.config.hidden;
    let vars: Vec<Var> = reps.iter().map(|r| tape.input(m, 1, r.clone())).collect();
    let trace = caan_forward(&mut tape, &params.layout.caan, &vars);
    let logits = tape.value(trace.logits).to_vec();
    let probs = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
    (logits, probs)
}

/// Numerically stable binary cross entropy from a logit.
pub fn bce_from_logit(z: f64, y: u8) -> f64 {
    // -[y log σ(z) + (1-y) log(1-σ(z))] = softplus(z) - y z
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - f64::from(y) * z
}

pub fn bce(p: f64, y: u8) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Result of a forward/backward pass over one batch.
pub struct BatchResult {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Mean BCE over the batch and its gradient w.r.t. every parameter.
///
/// The per-stock DARNN tapes run independently; the CAAN tape supplies
/// `∂L/∂r^i`, which seeds each stock's backward sweep. Per-stock gradients
/// are summed in batch order so results do not depend on thread count.
pub fn loss_and_gradient(params: &ModelParams, stocks: &[&StockSample]) -> Result<BatchResult> {
    use rayon::prelude::*;
    if stocks.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let layout = &params.layout;
    let m = layout.config.hidden;
    let tapes: Vec<(Tape, Var)> = stocks
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(&params.flat);
            let r = stock_representation(&mut tape, layout, s)?;
            Ok((tape, r))
        })
        .collect::<Result<_>>()?;

    let mut head = Tape::new(&params.flat);
    let inputs: Vec<Var> = tapes.iter().map(|(t, r)| head.input(m, 1, t.value(*r).to_vec())).collect();
    let trace = caan_forward(&mut head, &layout.caan, &inputs);
    let logits = head.value(trace.logits).to_vec();
    let n = stocks.len() as f64;
    let loss = logits.iter().zip(stocks).map(|(&z, s)| bce_from_logit(z, s.label)).sum::<f64>() / n;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
    let d_logits: Vec<f64> = probs.iter().zip(stocks).map(|(p, s)| (p - f64::from(s.label)) / n).collect();
    let mut grad = vec![0.0; layout.total];
    let head_grads = head.backward(&[(trace.logits, &d_logits)], &mut grad);
    let d_reps: Vec<Vec<f64>> =
        inputs.iter().map(|&v| head_grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; m])).collect();

    let partials: Vec<Vec<f64>> = tapes
        .par_iter()
        .zip(d_reps.par_iter())
        .map(|((tape, r), d)| {
            let mut g = vec![0.0; layout.total];
            tape.backward(&[(*r, d)], &mut g);
            g
        })
        .collect();
    for p in partials {
        for (a, b) in grad.iter_mut().zip(&p) {
            *a += b;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    Ok(BatchResult { loss, probs, grad })
}

/// Mean BCE of a batch without gradients.
pub fn batch_loss(params: &ModelParams, stocks: &[&StockSample]) -> Result<(f64, Vec<f64>)> {
    let reps = representations(params, stocks)?;
    let (logits, probs) = caan_head(params, &reps);
    let loss = logits.iter().zip(stocks).map(|(&z, s)| bce_from_logit(z, s.label)).sum::<f64>() / stocks.len() as f64;
    Ok((loss, probs))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PGCKPT\0\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Versioned binary checkpoint: magic, version, model dims, a free-form
/// config echo, then the flat parameters as little-endian doubles.
pub fn save_checkpoint(path: &Path, params: &ModelParams, config_echo: &str) -> Result<()> {
    let c = params.layout.config;
    let mut buf = Vec::with_capacity(64 + config_echo.len() + 8 * params.flat.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [c.lookback, c.embed_dim, c.hidden, c.decoder_hidden] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(config_echo.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_echo.as_bytes());
    buf.extend_from_slice(&(params.flat.len() as u64).to_le_bytes());
    for x in &params.flat {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, String)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Format { path: path.to_owned(), message: m.to_string() };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated checkpoint"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = u32_at(take(4)?) as usize;
    }
    let echo_len = u32_at(take(4)?) as usize;
    let echo = String::from_utf8(take(echo_len)?.to_vec()).map_err(|_| bad("config echo is not UTF-8"))?;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let data = take(count.checked_mul(8).ok_or_else(|| bad("bad length"))?)?;
    let flat: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let layout = ModelLayout::new(ModelConfig {
        lookback: dims[0],
        embed_dim: dims[1],
        hidden: dims[2],
        decoder_hidden: dims[3],
    })?;
    Ok((ModelParams::unflatten(layout, flat)?, echo))
}
