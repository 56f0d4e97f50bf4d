//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! One tape records the forward pass of a single example (or the
//! discriminator pass of a batch). Parameters are read from a borrowed
//! [`ParamStore`]; their gradients are collected into a [`GradBuf`].

use std::collections::HashMap;

use ndarray::{Array2, Axis, Zip};
use statrs::function::erf::erf;

use crate::params::{GradBuf, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Clamp used before every logarithm of a probability in the BCE terms.
pub const PROB_CLAMP: f64 = 1e-7;
/// Clamp used for edge probabilities inside logits and the KL term.
pub const EDGE_CLAMP: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Standard normal CDF.
fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

pub fn gelu(x: f64) -> f64 {
    x * phi_cdf(x)
}

/// GELU derivative given the already computed CDF value at `x`.
fn gelu_grad(x: f64, cdf: f64) -> f64 {
    cdf + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    /// Input and its normal CDF.
    Gelu(Var, Array2<f64>),
    Relu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Sub(Var, Var),
    SelectRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    MaskedMeanRows(Var, Vec<bool>),
    BroadcastRows(Var),
    TimeCos {
        w: Var,
        dt: Vec<f64>,
    },
    Concrete {
        p: Var,
        local: Array2<f64>,
    },
    MulConst(Var, Array2<f64>),
    FillRows(Var, Vec<bool>),
    WeightedBce {
        pred: Var,
        labels: Vec<f64>,
        weights: Vec<f64>,
    },
    KlBernoulli {
        p: Var,
        rate: f64,
        mask: Vec<bool>,
    },
    Sum(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(128),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf; its gradient is still reported by [`Tape::backward`].
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// `a` (n x m) plus the row vector `b` (1 x m) on every row.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::AddBias(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    /// Scales row `i` of `x` by `w[i, 0]`.
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Var {
        let value = self.value(x) * self.value(w);
        self.push(value, Op::ScaleRows(x, w))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x) * c;
        self.push(value, Op::Scale(x, c))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| 1.0 - v);
        self.push(value, Op::OneMinus(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let cdf = self.value(x).mapv(phi_cdf);
        let value = &cdf * self.value(x);
        self.push(value, Op::Gelu(x, cdf))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Row-wise layer normalization with learned gain and bias (both 1 x m).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let mut xhat = Array2::zeros((n, m));
        let mut inv_std = Vec::with_capacity(n);
        for (i, row) in xv.outer_iter().enumerate() {
            let mean = row.sum() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * inv;
            }
        }
        let value = &xhat * self.value(gain) + self.value(bias);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    /// Gathers rows `idx` of `x` (repeats allowed).
    pub fn select_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let value = self.value(x).select(Axis(0), idx);
        self.push(value, Op::SelectRows(x, idx.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    /// Mean over the rows flagged in `mask`; the zero row when none are.
    pub fn masked_mean_rows(&mut self, x: Var, mask: &[bool]) -> Var {
        let xv = self.value(x);
        let count = mask.iter().filter(|&&m| m).count();
        let mut value = Array2::zeros((1, xv.ncols()));
        if count > 0 {
            for (row, _) in xv.outer_iter().zip(mask).filter(|(_, &m)| m) {
                value.row_mut(0).scaled_add(1.0, &row);
            }
            value /= count as f64;
        }
        self.push(value, Op::MaskedMeanRows(x, mask.to_vec()))
    }

    /// Repeats the row vector `x` (1 x m) `n` times.
    pub fn broadcast_rows(&mut self, x: Var, n: usize) -> Var {
        let row = self.value(x).row(0).to_owned();
        let value = row.broadcast((n, row.len())).expect("1 x m row").to_owned();
        self.push(value, Op::BroadcastRows(x))
    }

    /// `out[i, j] = cos(w[0, j] * dt[i])`.
    pub fn time_cos(&mut self, w: Var, dt: &[f64]) -> Var {
        let wv = self.value(w);
        let value = Array2::from_shape_fn((dt.len(), wv.ncols()), |(i, j)| (wv[[0, j]] * dt[i]).cos());
        self.push(
            value,
            Op::TimeCos {
                w,
                dt: dt.to_vec(),
            },
        )
    }

    /// Binary Concrete relaxation of Bernoulli(`p`) with logistic noise `noise`.
    ///
    /// Rows outside `mask` are forced to zero. With `hard`, the forward value
    /// is thresholded at 0.5 while the backward pass uses the relaxed sample.
    pub fn concrete(&mut self, p: Var, noise: &[f64], tau: f64, mask: &[bool], hard: bool) -> Var {
        let pv = self.value(p);
        let n = pv.nrows();
        let mut value = Array2::zeros((n, 1));
        let mut local = Array2::zeros((n, 1));
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let raw = pv[[i, 0]];
            let pc = raw.clamp(EDGE_CLAMP, 1.0 - EDGE_CLAMP);
            let soft = sigmoid((logit(pc) + noise[i]) / tau);
            value[[i, 0]] = if hard { f64::from(u8::from(soft > 0.5)) } else { soft };
            if raw > EDGE_CLAMP && raw < 1.0 - EDGE_CLAMP {
                local[[i, 0]] = soft * (1.0 - soft) / tau / (pc * (1.0 - pc));
            }
        }
        self.push(value, Op::Concrete { p, local })
    }

    /// Elementwise product with a fixed matrix (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Array2<f64>) -> Var {
        let value = self.value(x) * &c;
        self.push(value, Op::MulConst(x, c))
    }

    /// Replaces rows where `keep` is false by `fill`; those rows carry no gradient.
    pub fn fill_rows(&mut self, x: Var, keep: &[bool], fill: f64) -> Var {
        let mut value = self.value(x).clone();
        for (mut row, _) in value.outer_iter_mut().zip(keep).filter(|(_, &k)| !k) {
            row.fill(fill);
        }
        self.push(value, Op::FillRows(x, keep.to_vec()))
    }

    /// `-sum_i weights[i] * [y_i ln p_i + (1 - y_i) ln(1 - p_i)]` over an n x 1 column.
    pub fn weighted_bce(&mut self, pred: Var, labels: &[f64], weights: &[f64]) -> Var {
        let pv = self.value(pred);
        let mut total = 0.0;
        for i in 0..pv.nrows() {
            total += weights[i] * bce(pv[[i, 0]], labels[i]);
        }
        self.push(
            Array2::from_elem((1, 1), total),
            Op::WeightedBce {
                pred,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
            },
        )
    }

    /// Summed Bernoulli KL `KL(Bern(p_e) || Bern(rate))` over rows in `mask`.
    pub fn kl_bernoulli(&mut self, p: Var, rate: f64, mask: &[bool]) -> Var {
        let pv = self.value(p);
        let total: f64 = (0..pv.nrows())
            .filter(|&i| mask[i])
            .map(|i| bernoulli_kl(pv[[i, 0]], rate))
            .sum();
        self.push(
            Array2::from_elem((1, 1), total),
            Op::KlBernoulli {
                p,
                rate,
                mask: mask.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(x))
    }

    /// Back-propagates the given output gradients through the whole tape.
    pub fn backward(&self, seeds: &[(Var, Array2<f64>)]) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            accumulate(&mut grads[v.0], g.clone());
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g.clone());
                }
                Op::AddBias(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[b.0], gb);
                    accumulate(&mut grads[a.0], g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::ScaleRows(x, w) => {
                    let gx = &g * self.value(*w);
                    let gw = (&g * self.value(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[w.0], gw);
                }
                Op::Scale(x, c) => accumulate(&mut grads[x.0], &g * *c),
                Op::OneMinus(x) => accumulate(&mut grads[x.0], -&g),
                Op::Gelu(x, cdf) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx)
                        .and(self.value(*x))
                        .and(cdf)
                        .for_each(|gx, &xv, &c| *gx *= gelu_grad(xv, c));
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(self.value(*x)).for_each(|gx, &xv| {
                        if xv <= 0.0 {
                            *gx = 0.0;
                        }
                    });
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(&node.value).for_each(|gx, &s| *gx *= s * (1.0 - s));
                    accumulate(&mut grads[x.0], gx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    accumulate(&mut grads[bias.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    accumulate(&mut grads[gain.0], (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * gv;
                    let m = xhat.ncols() as f64;
                    let mut gx = Array2::zeros(xhat.raw_dim());
                    for i in 0..xhat.nrows() {
                        let dr = dxhat.row(i);
                        let xr = xhat.row(i);
                        let s1 = dr.sum();
                        let s2 = dr.dot(&xr);
                        for j in 0..xhat.ncols() {
                            gx[[i, j]] = inv_std[i] / m * (m * dr[j] - s1 - xr[j] * s2);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], -&g);
                }
                Op::SelectRows(x, idx) => {
                    let mut gx = Array2::zeros(self.value(*x).raw_dim());
                    for (k, &i) in idx.iter().enumerate() {
                        let mut row = gx.row_mut(i);
                        row += &g.row(k);
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let slice = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        accumulate(&mut grads[p.0], slice);
                        start += w;
                    }
                }
                Op::MaskedMeanRows(x, mask) => {
                    let count = mask.iter().filter(|&&m| m).count();
                    let (n, m) = self.value(*x).dim();
                    let mut gx = Array2::zeros((n, m));
                    if count > 0 {
                        let scaled = g.row(0).mapv(|v| v / count as f64);
                        for (mut row, _) in gx.outer_iter_mut().zip(mask).filter(|(_, &k)| k) {
                            row.assign(&scaled);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::BroadcastRows(x) => {
                    accumulate(&mut grads[x.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::TimeCos { w, dt } => {
                    let wv = self.value(*w);
                    let mut gw = Array2::zeros(wv.raw_dim());
                    for (i, &t) in dt.iter().enumerate() {
                        for j in 0..wv.ncols() {
                            gw[[0, j]] -= g[[i, j]] * (wv[[0, j]] * t).sin() * t;
                        }
                    }
                    accumulate(&mut grads[w.0], gw);
                }
                Op::Concrete { p, local } => accumulate(&mut grads[p.0], &g * local),
                Op::MulConst(x, c) => accumulate(&mut grads[x.0], &g * c),
                Op::FillRows(x, keep) => {
                    let mut gx = g.clone();
                    for (mut row, _) in gx.outer_iter_mut().zip(keep).filter(|(_, &k)| !k) {
                        row.fill(0.0);
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::WeightedBce { pred, labels, weights } => {
                    let pv = self.value(*pred);
                    let up = g[[0, 0]];
                    let gp = Array2::from_shape_fn(pv.raw_dim(), |(i, _)| {
                        up * weights[i] * bce_grad(pv[[i, 0]], labels[i])
                    });
                    accumulate(&mut grads[pred.0], gp);
                }
                Op::KlBernoulli { p, rate, mask } => {
                    let pv = self.value(*p);
                    let up = g[[0, 0]];
                    let gp = Array2::from_shape_fn(pv.raw_dim(), |(i, _)| {
                        if mask[i] {
                            up * bernoulli_kl_grad(pv[[i, 0]], *rate)
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads[p.0], gp);
                }
                Op::Sum(x) => {
                    let gx = Array2::from_elem(self.value(*x).raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads[x.0], gx);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    /// Collects parameter gradients from a backward pass.
    pub fn param_grads(&self, grads: &Gradients) -> GradBuf {
        let mut buf = GradBuf::zeros(self.store.len());
        for (&id, &v) in &self.param_vars {
            if let Some(g) = grads.get(v) {
                buf.accumulate(id, g);
            }
        }
        buf
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }
}

/// Binary cross-entropy of a probability clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
}

fn bce_grad(p: f64, y: f64) -> f64 {
    if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        return 0.0;
    }
    -(y / p - (1.0 - y) / (1.0 - p))
}

/// `p ln(p / r) + (1 - p) ln((1 - p) / (1 - r))` with `p` clamped to `[EDGE_CLAMP, 1 - EDGE_CLAMP]`.
pub fn bernoulli_kl(p: f64, r: f64) -> f64 {
    let pc = p.clamp(EDGE_CLAMP, 1.0 - EDGE_CLAMP);
    pc * (pc / r).ln() + (1.0 - pc) * ((1.0 - pc) / (1.0 - r)).ln()
}

fn bernoulli_kl_grad(p: f64, r: f64) -> f64 {
    if p <= EDGE_CLAMP || p >= 1.0 - EDGE_CLAMP {
        return 0.0;
    }
    logit(p) - logit(r)
}
