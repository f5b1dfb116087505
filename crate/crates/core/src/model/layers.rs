//! Transformer building blocks with explicit forward caches and backward passes.
//!
//! Parameters live in one flat `&[f64]`; gradients accumulate into a flat
//! `&mut [f64]` of the same layout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Init, ParamBuilder, Slot};
use crate::tensor::{gemm, softmax_backward, softmax_in_place, Mat, View, ViewMut};

/// Dropout randomness; `None` means evaluation mode.
pub type DropoutRng<'a> = Option<&'a mut ChaCha8Rng>;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Slot,
    pub b: Slot,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = pb.add(format!("{name}.weight"), fan_in, fan_out, Init::FanIn, true);
        let b = pb.add(format!("{name}.bias"), 1, fan_out, Init::Zeros, false);
        Self { w, b }
    }

    pub fn forward(&self, p: &[f64], x: &Mat) -> Mat {
        let mut y = Mat::zeros(x.rows, self.w.cols);
        gemm(1.0, x.view(), self.w.view(p), 0.0, y.view_mut());
        let bias = self.b.slice(p);
        for r in 0..y.rows {
            y.row_mut(r).iter_mut().zip(bias).for_each(|(v, b)| *v += b);
        }
        y
    }

    /// Accumulates weight/bias gradients and returns `∂/∂x`.
    pub fn backward(&self, p: &[f64], x: &Mat, dy: &Mat, g: &mut [f64]) -> Mat {
        gemm(1.0, x.view().t(), dy.view(), 1.0, self.w.view_mut(g));
        let gb = self.b.slice_mut(g);
        for r in 0..dy.rows {
            gb.iter_mut().zip(dy.row(r)).for_each(|(a, d)| *a += d);
        }
        let mut dx = Mat::zeros(x.rows, x.cols);
        gemm(1.0, dy.view(), self.w.view(p).t(), 0.0, dx.view_mut());
        dx
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Slot,
    pub beta: Slot,
}

pub struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Self {
        let gamma = pb.add(format!("{name}.gamma"), 1, dim, Init::Ones, false);
        let beta = pb.add(format!("{name}.beta"), 1, dim, Init::Zeros, false);
        Self { gamma, beta }
    }

    pub fn forward(&self, p: &[f64], x: &Mat) -> (Mat, LnCache) {
        let (gamma, beta) = (self.gamma.slice(p), self.beta.slice(p));
        let n = x.cols as f64;
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut y = Mat::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (c, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.data[r * x.cols + c] = h;
                y.data[r * x.cols + c] = h * gamma[c] + beta[c];
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &[f64], cache: &LnCache, dy: &Mat, g: &mut [f64]) -> Mat {
        let gamma = self.gamma.slice(p);
        let cols = dy.cols;
        let n = cols as f64;
        {
            let gg = self.gamma.slice_mut(g);
            for r in 0..dy.rows {
                for c in 0..cols {
                    gg[c] += dy.at(r, c) * cache.xhat.at(r, c);
                }
            }
        }
        {
            let gb = self.beta.slice_mut(g);
            for r in 0..dy.rows {
                gb.iter_mut().zip(dy.row(r)).for_each(|(a, d)| *a += d);
            }
        }
        let mut dx = Mat::zeros(dy.rows, cols);
        let mut dxhat = vec![0.0; cols];
        for r in 0..dy.rows {
            let xh = cache.xhat.row(r);
            for c in 0..cols {
                dxhat[c] = dy.at(r, c) * gamma[c];
            }
            let sum: f64 = dxhat.iter().sum();
            let dot: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
            let is = cache.inv_std[r];
            for c in 0..cols {
                dx.data[r * cols + c] = is / n * (n * dxhat[c] - sum - xh[c] * dot);
            }
        }
        dx
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Inverted dropout in place; returns the scale mask to replay in backward.
pub fn dropout(x: &mut Mat, rate: f64, rng: &mut DropoutRng<'_>) -> Option<Vec<f64>> {
    let rng = rng.as_deref_mut()?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.data.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    x.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Some(mask)
}

pub fn dropout_backward(dy: &Mat, mask: &Option<Vec<f64>>) -> Mat {
    match mask {
        None => dy.clone(),
        Some(m) => Mat::from_vec(dy.rows, dy.cols, dy.data.iter().zip(m).map(|(d, k)| d * k).collect()),
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

pub struct FfnCache {
    x: Mat,
    pre: Mat,
    act: Mat,
}

impl FeedForward {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, hidden: usize) -> Self {
        Self { up: Linear::new(pb, &format!("{name}.up"), dim, hidden), down: Linear::new(pb, &format!("{name}.down"), hidden, dim) }
    }

    pub fn forward(&self, p: &[f64], x: &Mat) -> (Mat, FfnCache) {
        let pre = self.up.forward(p, x);
        let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&v| gelu(v)).collect());
        let y = self.down.forward(p, &act);
        (y, FfnCache { x: x.clone(), pre, act })
    }

    pub fn backward(&self, p: &[f64], cache: &FfnCache, dy: &Mat, g: &mut [f64]) -> Mat {
        let dact = self.down.backward(p, &cache.act, dy, g);
        let dpre = Mat::from_vec(
            dact.rows,
            dact.cols,
            dact.data.iter().zip(&cache.pre.data).map(|(d, &x)| d * gelu_grad(x)).collect(),
        );
        self.up.backward(p, &cache.x, &dpre, g)
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

pub struct AttnCache {
    xq: Mat,
    xkv: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    ctx: Mat,
}

impl Attention {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(pb, &format!("{name}.q"), dim, dim),
            k: Linear::new(pb, &format!("{name}.k"), dim, dim),
            v: Linear::new(pb, &format!("{name}.v"), dim, dim),
            o: Linear::new(pb, &format!("{name}.o"), dim, dim),
            heads,
        }
    }

    fn head_dim(&self) -> usize {
        self.q.w.cols / self.heads
    }

    /// Multi-head attention of `xq` over `xkv`; with `causal`, query `i` sees keys `≤ i`.
    pub fn forward(&self, p: &[f64], xq: &Mat, xkv: &Mat, causal: bool) -> (Mat, AttnCache) {
        let q = self.q.forward(p, xq);
        let k = self.k.forward(p, xkv);
        let v = self.v.forward(p, xkv);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (n, m) = (xq.rows, xkv.rows);
        let mut ctx = Mat::zeros(n, q.cols);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let mut s = Mat::zeros(n, m);
            gemm(scale, q.cols_view(h * dh, dh), k.cols_view(h * dh, dh).t(), 0.0, s.view_mut());
            for i in 0..n {
                let row = s.row_mut(i);
                if causal {
                    row[i + 1..].iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
                }
                softmax_in_place(row, None);
            }
            gemm(1.0, s.view(), v.cols_view(h * dh, dh), 0.0, ctx.cols_view_mut(h * dh, dh));
            probs.push(s);
        }
        let out = self.o.forward(p, &ctx);
        (out, AttnCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, probs, ctx })
    }

    /// Returns `(∂/∂xq, ∂/∂xkv)`.
    pub fn backward(&self, p: &[f64], c: &AttnCache, dout: &Mat, g: &mut [f64]) -> (Mat, Mat) {
        let dctx = self.o.backward(p, &c.ctx, dout, g);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (n, m) = (c.q.rows, c.k.rows);
        let mut dq = Mat::zeros(n, c.q.cols);
        let mut dk = Mat::zeros(m, c.k.cols);
        let mut dv = Mat::zeros(m, c.v.cols);
        let mut dp = Mat::zeros(n, m);
        let mut ds = Mat::zeros(n, m);
        for h in 0..self.heads {
            let pr = &c.probs[h];
            gemm(1.0, dctx.cols_view(h * dh, dh), c.v.cols_view(h * dh, dh).t(), 0.0, dp.view_mut());
            gemm(1.0, pr.view().t(), dctx.cols_view(h * dh, dh), 0.0, dv.cols_view_mut(h * dh, dh));
            for i in 0..n {
                softmax_backward(pr.row(i), dp.row(i), ds.row_mut(i));
            }
            gemm(scale, ds.view(), c.k.cols_view(h * dh, dh), 0.0, dq.cols_view_mut(h * dh, dh));
            gemm(scale, ds.view().t(), c.q.cols_view(h * dh, dh), 0.0, dk.cols_view_mut(h * dh, dh));
        }
        let dxq = self.q.backward(p, &c.xq, &dq, g);
        let mut dxkv = self.k.backward(p, &c.xkv, &dk, g);
        dxkv.add_assign(&self.v.backward(p, &c.xkv, &dv, g));
        (dxq, dxkv)
    }

    /// One query row against cached keys/values (`rows × dim`, row-major).
    pub fn attend_single(&self, q: &[f64], keys: View<'_>, values: View<'_>, out: &mut [f64]) {
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let m = keys.rows;
        let mut scores = vec![0.0; m];
        for h in 0..self.heads {
            let qh = View::new(&q[h * dh..(h + 1) * dh], 1, dh);
            let kh = sub_cols(keys, h * dh, dh);
            gemm(scale, qh, kh.t(), 0.0, ViewMut::new(&mut scores, 1, m));
            softmax_in_place(&mut scores, None);
            let vh = sub_cols(values, h * dh, dh);
            gemm(1.0, View::new(&scores, 1, m), vh, 0.0, ViewMut::new(&mut out[h * dh..(h + 1) * dh], 1, dh));
        }
    }
}

fn sub_cols(v: View<'_>, start: usize, width: usize) -> View<'_> {
    v.cols(start, width)
}

pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

pub struct EncoderCache {
    ln1: LnCache,
    attn: AttnCache,
    drop_attn: Option<Vec<f64>>,
    ln2: LnCache,
    ffn: FfnCache,
    drop_ffn: Option<Vec<f64>>,
}

impl EncoderLayer {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize, hidden: usize) -> Self {
        Self {
            ln1: LayerNorm::new(pb, &format!("{name}.ln1"), dim),
            attn: Attention::new(pb, &format!("{name}.self_attn"), dim, heads),
            ln2: LayerNorm::new(pb, &format!("{name}.ln2"), dim),
            ffn: FeedForward::new(pb, &format!("{name}.ffn"), dim, hidden),
        }
    }

    pub fn forward(&self, p: &[f64], x: &Mat, rate: f64, rng: &mut DropoutRng<'_>) -> (Mat, EncoderCache) {
        let (h1, ln1) = self.ln1.forward(p, x);
        let (mut a, attn) = self.attn.forward(p, &h1, &h1, false);
        let drop_attn = dropout(&mut a, rate, rng);
        let mut x2 = x.clone();
        x2.add_assign(&a);
        let (h2, ln2) = self.ln2.forward(p, &x2);
        let (mut f, ffn) = self.ffn.forward(p, &h2);
        let drop_ffn = dropout(&mut f, rate, rng);
        x2.add_assign(&f);
        (x2, EncoderCache { ln1, attn, drop_attn, ln2, ffn, drop_ffn })
    }

    pub fn backward(&self, p: &[f64], c: &EncoderCache, dy: &Mat, g: &mut [f64]) -> Mat {
        let mut dx2 = dy.clone();
        let df = dropout_backward(dy, &c.drop_ffn);
        let dh2 = self.ffn.backward(p, &c.ffn, &df, g);
        dx2.add_assign(&self.ln2.backward(p, &c.ln2, &dh2, g));
        let da = dropout_backward(&dx2, &c.drop_attn);
        let (mut dh1, dkv) = self.attn.backward(p, &c.attn, &da, g);
        dh1.add_assign(&dkv);
        let mut dx = dx2;
        dx.add_assign(&self.ln1.backward(p, &c.ln1, &dh1, g));
        dx
    }
}

pub struct DecoderLayer {
    pub ln1: LayerNorm,
    pub self_attn: Attention,
    pub ln2: LayerNorm,
    pub cross_attn: Attention,
    pub ln3: LayerNorm,
    pub ffn: FeedForward,
}

pub struct DecoderCache {
    ln1: LnCache,
    self_attn: AttnCache,
    drop_self: Option<Vec<f64>>,
    ln2: LnCache,
    cross_attn: AttnCache,
    drop_cross: Option<Vec<f64>>,
    ln3: LnCache,
    ffn: FfnCache,
    drop_ffn: Option<Vec<f64>>,
}

/// Per-layer key/value cache for incremental decoding.
pub struct LayerKv {
    pub self_k: Vec<f64>,
    pub self_v: Vec<f64>,
    pub cross_k: Mat,
    pub cross_v: Mat,
}

impl DecoderLayer {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize, hidden: usize) -> Self {
        Self {
            ln1: LayerNorm::new(pb, &format!("{name}.ln1"), dim),
            self_attn: Attention::new(pb, &format!("{name}.self_attn"), dim, heads),
            ln2: LayerNorm::new(pb, &format!("{name}.ln2"), dim),
            cross_attn: Attention::new(pb, &format!("{name}.cross_attn"), dim, heads),
            ln3: LayerNorm::new(pb, &format!("{name}.ln3"), dim),
            ffn: FeedForward::new(pb, &format!("{name}.ffn"), dim, hidden),
        }
    }

    pub fn forward(&self, p: &[f64], x: &Mat, memory: &Mat, rate: f64, rng: &mut DropoutRng<'_>) -> (Mat, DecoderCache) {
        let (h1, ln1) = self.ln1.forward(p, x);
        let (mut a, self_attn) = self.self_attn.forward(p, &h1, &h1, true);
        let drop_self = dropout(&mut a, rate, rng);
        let mut x2 = x.clone();
        x2.add_assign(&a);
        let (h2, ln2) = self.ln2.forward(p, &x2);
        let (mut c, cross_attn) = self.cross_attn.forward(p, &h2, memory, false);
        let drop_cross = dropout(&mut c, rate, rng);
        x2.add_assign(&c);
        let (h3, ln3) = self.ln3.forward(p, &x2);
        let (mut f, ffn) = self.ffn.forward(p, &h3);
        let drop_ffn = dropout(&mut f, rate, rng);
        x2.add_assign(&f);
        (x2, DecoderCache { ln1, self_attn, drop_self, ln2, cross_attn, drop_cross, ln3, ffn, drop_ffn })
    }

    /// Returns `∂/∂x` and accumulates `∂/∂memory` into `dmemory`.
    pub fn backward(&self, p: &[f64], c: &DecoderCache, dy: &Mat, g: &mut [f64], dmemory: &mut Mat) -> Mat {
        let mut dx3 = dy.clone();
        let df = dropout_backward(dy, &c.drop_ffn);
        let dh3 = self.ffn.backward(p, &c.ffn, &df, g);
        dx3.add_assign(&self.ln3.backward(p, &c.ln3, &dh3, g));
        let dc = dropout_backward(&dx3, &c.drop_cross);
        let (dh2, dmem) = self.cross_attn.backward(p, &c.cross_attn, &dc, g);
        dmemory.add_assign(&dmem);
        let mut dx2 = dx3;
        dx2.add_assign(&self.ln2.backward(p, &c.ln2, &dh2, g));
        let da = dropout_backward(&dx2, &c.drop_self);
        let (mut dh1, dkv) = self.self_attn.backward(p, &c.self_attn, &da, g);
        dh1.add_assign(&dkv);
        let mut dx = dx2;
        dx.add_assign(&self.ln1.backward(p, &c.ln1, &dh1, g));
        dx
    }

    pub fn init_kv(&self, p: &[f64], memory: &Mat) -> LayerKv {
        LayerKv {
            self_k: Vec::new(),
            self_v: Vec::new(),
            cross_k: self.cross_attn.k.forward(p, memory),
            cross_v: self.cross_attn.v.forward(p, memory),
        }
    }

    /// Advances one position; `x` is a single row.
    pub fn step(&self, p: &[f64], x: &Mat, kv: &mut LayerKv) -> Mat {
        let dim = x.cols;
        let (h1, _) = self.ln1.forward(p, x);
        let q = self.self_attn.q.forward(p, &h1);
        kv.self_k.extend_from_slice(&self.self_attn.k.forward(p, &h1).data);
        kv.self_v.extend_from_slice(&self.self_attn.v.forward(p, &h1).data);
        let rows = kv.self_k.len() / dim;
        let mut ctx = Mat::zeros(1, dim);
        self.self_attn.attend_single(
            &q.data,
            View::new(&kv.self_k, rows, dim),
            View::new(&kv.self_v, rows, dim),
            &mut ctx.data,
        );
        let mut x2 = x.clone();
        x2.add_assign(&self.self_attn.o.forward(p, &ctx));

        let (h2, _) = self.ln2.forward(p, &x2);
        let q = self.cross_attn.q.forward(p, &h2);
        let mut ctx = Mat::zeros(1, dim);
        self.cross_attn.attend_single(&q.data, kv.cross_k.view(), kv.cross_v.view(), &mut ctx.data);
        x2.add_assign(&self.cross_attn.o.forward(p, &ctx));

        let (h3, _) = self.ln3.forward(p, &x2);
        let (f, _) = self.ffn.forward(p, &h3);
        x2.add_assign(&f);
        x2
    }
}
