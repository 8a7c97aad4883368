//! A minimal reverse-mode differentiation tape over dense row-major
//! matrices.
//!
//! Parameters are not copied onto the tape: a [`Tape`] borrows the flat
//! parameter vector and parameter leaves record their offset, so the
//! gradient of every parameter lands at the same offset of a flat gradient
//! buffer. Column vectors are `n × 1`; ops that consume a vector
//! ([`Tape::linear`], [`Tape::matvec`]) only look at its length.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Location of one parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamRef {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const,
    Input,
    Param(usize),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Linear { w1: Var, x1: Var, w2: Var, x2: Var, b: Var },
    Add(Var, Var),
    AddCol(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var, Var),
    ScaleBy(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    SoftmaxRows(Var),
    Mix(Var, Var),
    Slice(Var, usize),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    LstmCell { gates: Var, state: Var },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

fn softmax_slice(src: &[f64], dst: &mut [f64]) {
    let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (d, s) in dst.iter_mut().zip(src) {
        *d = (s - m).exp();
        z += *d;
    }
    for d in dst.iter_mut() {
        *d /= z;
    }
}

/// Sum that depends only on the multiset of terms, not their order.
fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

fn softmax_slice_order_free(src: &[f64], dst: &mut [f64]) {
    let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (d, s) in dst.iter_mut().zip(src) {
        *d = (s - m).exp();
    }
    let mut terms = dst.to_vec();
    let z = order_free_sum(&mut terms);
    for d in dst.iter_mut() {
        *d /= z;
    }
}

fn matvec_into(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape { params, nodes: Vec::with_capacity(1024) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(off) => &self.params[off..off + n.rows * n.cols],
            _ => &n.value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    fn len_of(&self, v: Var) -> usize {
        let (r, c) = self.shape(v);
        r * c
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "constant shape");
        self.push(rows, cols, value, Op::Const)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "input shape");
        self.push(rows, cols, value, Op::Input)
    }

    pub fn param(&mut self, p: ParamRef) -> Var {
        assert!(p.offset + p.len() <= self.params.len(), "parameter out of range");
        self.push(p.rows, p.cols, Vec::new(), Op::Param(p.offset))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let ((ar, ac), (br, bc)) = (self.shape(a), self.shape(b));
        assert_eq!(ac, br, "matmul {ar}x{ac} * {br}x{bc}");
        let mut out = vec![0.0; ar * bc];
        {
            let (av, bv) = (self.value(a), self.value(b));
            for i in 0..ar {
                let orow = &mut out[i * bc..(i + 1) * bc];
                for k in 0..ac {
                    let x = av[i * ac + k];
                    if x == 0.0 {
                        continue;
                    }
                    let brow = &bv[k * bc..(k + 1) * bc];
                    for (o, y) in orow.iter_mut().zip(brow) {
                        *o += x * y;
                    }
                }
            }
        }
        self.push(ar, bc, out, Op::MatMul(a, b))
    }

    /// `W x` treating `x` as a flat vector of length `W.cols`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (r, c) = self.shape(w);
        assert_eq!(self.len_of(x), c, "matvec length");
        let mut out = vec![0.0; r];
        matvec_into(self.value(w), r, c, self.value(x), &mut out);
        self.push(r, 1, out, Op::MatVec(w, x))
    }

    /// `W1 x1 + W2 x2 + b` for flat vectors `x1`, `x2` and column `b`.
    pub fn linear(&mut self, w1: Var, x1: Var, w2: Var, x2: Var, b: Var) -> Var {
        let ((r1, c1), (r2, c2)) = (self.shape(w1), self.shape(w2));
        assert!(r1 == r2 && self.len_of(b) == r1, "linear rows");
        assert!(self.len_of(x1) == c1 && self.len_of(x2) == c2, "linear cols");
        let mut out = self.value(b).to_vec();
        matvec_into(self.value(w1), r1, c1, self.value(x1), &mut out);
        matvec_into(self.value(w2), r2, c2, self.value(x2), &mut out);
        self.push(r1, 1, out, Op::Linear { w1, x1, w2, x2, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Add(a, b))
    }

    /// `a + b 1ᵀ` for `a: r×c`, `b` of length `r`.
    pub fn add_col(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.len_of(b), r, "add_col");
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        for i in 0..r {
            for o in &mut out[i * c..(i + 1) * c] {
                *o += bv[i];
            }
        }
        self.push(r, c, out, Op::AddCol(a, b))
    }

    /// `a + 1 bᵀ` for `a: r×c`, `b` of length `c`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.len_of(b), c, "add_row");
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        for i in 0..r {
            for (o, y) in out[i * c..(i + 1) * c].iter_mut().zip(bv) {
                *o += y;
            }
        }
        self.push(r, c, out, Op::AddRow(a, b))
    }

    /// `a + s` for a 1×1 `s`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.len_of(s), 1, "add_scalar");
        let sv = self.value(s)[0];
        let out = self.value(a).iter().map(|x| x + sv).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::AddScalar(a, s))
    }

    /// `s · a` for a 1×1 `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.len_of(s), 1, "scale_by");
        let sv = self.value(s)[0];
        let out = self.value(a).iter().map(|x| sv * x).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::ScaleBy(a, s))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|x| k * x).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Scale(a, k))
    }

    /// Elementwise product of equal-length operands; takes `a`'s shape.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.len_of(a), self.len_of(b), "mul length");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Sigmoid(a))
    }

    /// Softmax over all entries.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = vec![0.0; self.len_of(a)];
        softmax_slice(self.value(a), &mut out);
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Softmax(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; r * c];
        let av = self.value(a);
        for i in 0..r {
            softmax_slice_order_free(&av[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        self.push(r, c, out, Op::SoftmaxRows(a))
    }

    /// `V Γᵀ` for `V: m × n`, `Γ: n × n`, with every output entry summed
    /// independently of column order, so permuting the `n` items permutes
    /// the output columns exactly.
    pub fn mix(&mut self, v: Var, gamma: Var) -> Var {
        let ((m, n), (gr, gc)) = (self.shape(v), self.shape(gamma));
        assert!(gr == n && gc == n, "mix {m}x{n} with {gr}x{gc}");
        let (vv, gv) = (self.value(v), self.value(gamma));
        let mut out = vec![0.0; m * n];
        let mut terms = vec![0.0; n];
        for r in 0..m {
            for i in 0..n {
                for j in 0..n {
                    terms[j] = vv[r * n + j] * gv[i * n + j];
                }
                out[r * n + i] = order_free_sum(&mut terms);
            }
        }
        self.push(m, n, out, Op::Mix(v, gamma))
    }

    /// Entries `start..start + len` as a column vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.len_of(a), "slice range");
        let out = self.value(a)[start..start + len].to_vec();
        self.push(len, 1, out, Op::Slice(a, start))
    }

    /// Stacks equal-length vectors as the columns of a matrix.
    pub fn concat_cols(&mut self, cols: &[Var]) -> Var {
        let r = self.len_of(cols[0]);
        assert!(cols.iter().all(|&v| self.len_of(v) == r), "concat_cols length");
        let c = cols.len();
        let mut out = vec![0.0; r * c];
        for (j, &v) in cols.iter().enumerate() {
            for (i, x) in self.value(v).iter().enumerate() {
                out[i * c + j] = *x;
            }
        }
        self.push(r, c, out, Op::ConcatCols(cols.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let av = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        self.push(c, r, out, Op::Transpose(a))
    }

    /// LSTM state update. `gates` holds pre-activations `[i; f; g; o]`
    /// (length `4p`), `state` is `[h; c]` (length `2p`); returns the new
    /// `[h; c]`.
    pub fn lstm_cell(&mut self, gates: Var, state: Var) -> Var {
        let p = self.len_of(state) / 2;
        assert_eq!(self.len_of(gates), 4 * p, "lstm gates");
        let (gv, sv) = (self.value(gates), self.value(state));
        let mut out = vec![0.0; 2 * p];
        for k in 0..p {
            let i = sigmoid(gv[k]);
            let f = sigmoid(gv[p + k]);
            let g = gv[2 * p + k].tanh();
            let o = sigmoid(gv[3 * p + k]);
            let c = f * sv[p + k] + i * g;
            out[p + k] = c;
            out[k] = o * c.tanh();
        }
        self.push(2 * p, 1, out, Op::LstmCell { gates, state })
    }

    /// Reverse sweep from the given output seeds. Parameter gradients are
    /// added into `param_grad`; the returned table holds the gradient of
    /// every node that received one (look up inputs with
    /// [`Gradients::get`]).
    pub fn backward(&self, seeds: &[(Var, &[f64])], param_grad: &mut [f64]) -> Gradients {
        assert_eq!(param_grad.len(), self.params.len(), "gradient buffer length");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for &(v, g) in seeds {
            assert_eq!(g.len(), self.len_of(v), "seed length");
            acc(&mut grads, v, self.len_of(v)).iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::Input => {
                    grads[idx] = Some(g);
                }
                &Op::Param(off) => {
                    for (a, b) in param_grad[off..off + g.len()].iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                &Op::MatMul(a, b) => {
                    let ((ar, ac), (_, bc)) = (self.shape(a), self.shape(b));
                    let (av, bv) = (self.value(a), self.value(b));
                    if self.wants(a) {
                        let ga = acc(&mut grads, a, ar * ac);
                        for i in 0..ar {
                            let grow = &g[i * bc..(i + 1) * bc];
                            for k in 0..ac {
                                let brow = &bv[k * bc..(k + 1) * bc];
                                ga[i * ac + k] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    if self.wants(b) {
                        let gb = acc(&mut grads, b, ac * bc);
                        for i in 0..ar {
                            let grow = &g[i * bc..(i + 1) * bc];
                            for k in 0..ac {
                                let x = av[i * ac + k];
                                for (o, y) in gb[k * bc..(k + 1) * bc].iter_mut().zip(grow) {
                                    *o += x * y;
                                }
                            }
                        }
                    }
                }
                &Op::MatVec(w, x) => self.back_matvec(&mut grads, &g, w, x),
                &Op::Linear { w1, x1, w2, x2, b } => {
                    self.back_matvec(&mut grads, &g, w1, x1);
                    self.back_matvec(&mut grads, &g, w2, x2);
                    self.back_add(&mut grads, b, &g);
                }
                &Op::Add(a, b) => {
                    self.back_add(&mut grads, a, &g);
                    self.back_add(&mut grads, b, &g);
                }
                &Op::AddCol(a, b) => {
                    self.back_add(&mut grads, a, &g);
                    if self.wants(b) {
                        let (r, c) = (node.rows, node.cols);
                        let gb = acc(&mut grads, b, r);
                        for i in 0..r {
                            gb[i] += g[i * c..(i + 1) * c].iter().sum::<f64>();
                        }
                    }
                }
                &Op::AddRow(a, b) => {
                    self.back_add(&mut grads, a, &g);
                    if self.wants(b) {
                        let (r, c) = (node.rows, node.cols);
                        let gb = acc(&mut grads, b, c);
                        for i in 0..r {
                            for (o, y) in gb.iter_mut().zip(&g[i * c..(i + 1) * c]) {
                                *o += y;
                            }
                        }
                    }
                }
                &Op::AddScalar(a, s) => {
                    self.back_add(&mut grads, a, &g);
                    if self.wants(s) {
                        acc(&mut grads, s, 1)[0] += g.iter().sum::<f64>();
                    }
                }
                &Op::ScaleBy(a, s) => {
                    let sv = self.value(s)[0];
                    if self.wants(a) {
                        let ga = acc(&mut grads, a, g.len());
                        for (o, y) in ga.iter_mut().zip(&g) {
                            *o += sv * y;
                        }
                    }
                    if self.wants(s) {
                        let dot: f64 = self.value(a).iter().zip(&g).map(|(x, y)| x * y).sum();
                        acc(&mut grads, s, 1)[0] += dot;
                    }
                }
                &Op::Scale(a, k) => {
                    if self.wants(a) {
                        let ga = acc(&mut grads, a, g.len());
                        for (o, y) in ga.iter_mut().zip(&g) {
                            *o += k * y;
                        }
                    }
                }
                &Op::Mul(a, b) => {
                    if self.wants(a) {
                        let bv = self.value(b);
                        let ga = acc(&mut grads, a, g.len());
                        for ((o, y), z) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += y * z;
                        }
                    }
                    if self.wants(b) {
                        let av = self.value(a);
                        let gb = acc(&mut grads, b, g.len());
                        for ((o, y), z) in gb.iter_mut().zip(&g).zip(av) {
                            *o += y * z;
                        }
                    }
                }
                &Op::Tanh(a) => {
                    if self.wants(a) {
                        let ga = acc(&mut grads, a, g.len());
                        for ((o, y), t) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *o += y * (1.0 - t * t);
                        }
                    }
                }
                &Op::Sigmoid(a) => {
                    if self.wants(a) {
                        let ga = acc(&mut grads, a, g.len());
                        for ((o, y), s) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *o += y * s * (1.0 - s);
                        }
                    }
                }
                &Op::Softmax(a) => {
                    if self.wants(a) {
                        let ga = acc(&mut grads, a, g.len());
                        back_softmax(&node.value, &g, ga);
                    }
                }
                &Op::SoftmaxRows(a) => {
                    if self.wants(a) {
                        let c = node.cols;
                        let ga = acc(&mut grads, a, g.len());
                        for i in 0..node.rows {
                            let s = i * c..(i + 1) * c;
                            back_softmax(&node.value[s.clone()], &g[s.clone()], &mut ga[s]);
                        }
                    }
                }
                &Op::Mix(v, gamma) => {
                    let n = node.cols;
                    let m = node.rows;
                    let (vv, gv) = (self.value(v), self.value(gamma));
                    if self.wants(v) {
                        let gvv = acc(&mut grads, v, m * n);
                        for r in 0..m {
                            for i in 0..n {
                                let gri = g[r * n + i];
                                for j in 0..n {
                                    gvv[r * n + j] += gri * gv[i * n + j];
                                }
                            }
                        }
                    }
                    if self.wants(gamma) {
                        let gg = acc(&mut grads, gamma, n * n);
                        for r in 0..m {
                            for i in 0..n {
                                let gri = g[r * n + i];
                                for j in 0..n {
                                    gg[i * n + j] += gri * vv[r * n + j];
                                }
                            }
                        }
                    }
                }
                &Op::Slice(a, start) => {
                    if self.wants(a) {
                        let n = self.len_of(a);
                        let ga = acc(&mut grads, a, n);
                        for (o, y) in ga[start..start + g.len()].iter_mut().zip(&g) {
                            *o += y;
                        }
                    }
                }
                Op::ConcatCols(cols) => {
                    let c = cols.len();
                    for (j, &v) in cols.iter().enumerate() {
                        if self.wants(v) {
                            let gv = acc(&mut grads, v, node.rows);
                            for (i, o) in gv.iter_mut().enumerate() {
                                *o += g[i * c + j];
                            }
                        }
                    }
                }
                &Op::Transpose(a) => {
                    if self.wants(a) {
                        let (r, c) = self.shape(a);
                        let ga = acc(&mut grads, a, r * c);
                        for i in 0..r {
                            for j in 0..c {
                                ga[i * c + j] += g[j * r + i];
                            }
                        }
                    }
                }
                &Op::LstmCell { gates, state } => {
                    let p = node.rows / 2;
                    let (gv, sv) = (self.value(gates), self.value(state));
                    let mut d_gates = vec![0.0; 4 * p];
                    let mut d_state = vec![0.0; 2 * p];
                    for k in 0..p {
                        let i = sigmoid(gv[k]);
                        let f = sigmoid(gv[p + k]);
                        let gg = gv[2 * p + k].tanh();
                        let o = sigmoid(gv[3 * p + k]);
                        let tc = node.value[p + k].tanh();
                        let dh = g[k];
                        let dc = g[p + k] + dh * o * (1.0 - tc * tc);
                        d_gates[3 * p + k] = dh * tc * o * (1.0 - o);
                        d_gates[k] = dc * gg * i * (1.0 - i);
                        d_gates[p + k] = dc * sv[p + k] * f * (1.0 - f);
                        d_gates[2 * p + k] = dc * i * (1.0 - gg * gg);
                        d_state[p + k] = dc * f;
                    }
                    self.back_add(&mut grads, gates, &d_gates);
                    self.back_add(&mut grads, state, &d_state);
                }
            }
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Const)
    }

    fn back_add(&self, grads: &mut [Option<Vec<f64>>], a: Var, g: &[f64]) {
        if self.wants(a) {
            let ga = acc(grads, a, g.len());
            for (o, y) in ga.iter_mut().zip(g) {
                *o += y;
            }
        }
    }

    fn back_matvec(&self, grads: &mut [Option<Vec<f64>>], g: &[f64], w: Var, x: Var) {
        let (r, c) = self.shape(w);
        if self.wants(w) {
            let xv = self.value(x);
            let gw = acc(grads, w, r * c);
            for i in 0..r {
                if g[i] == 0.0 {
                    continue;
                }
                for (o, y) in gw[i * c..(i + 1) * c].iter_mut().zip(xv) {
                    *o += g[i] * y;
                }
            }
        }
        if self.wants(x) {
            let wv = self.value(w);
            let gx = acc(grads, x, c);
            for i in 0..r {
                for (o, y) in gx.iter_mut().zip(&wv[i * c..(i + 1) * c]) {
                    *o += g[i] * y;
                }
            }
        }
    }

    /// Errors if any node value is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.nodes.iter().any(|n| n.value.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(())
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn back_softmax(s: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, si), gi) in out.iter_mut().zip(s).zip(g) {
        *o += si * (gi - dot);
    }
}

/// Gradients of the non-parameter leaves after [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}
