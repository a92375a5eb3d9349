//! Transformer building blocks with explicit backward passes.
//!
//! Every `forward` returns the activations its `backward` needs; `backward`
//! accumulates parameter gradients into [`Grads`] and returns the gradient
//! with respect to its inputs.

use super::params::{Builder, Grads, Init, ModelParams, Pid};
use crate::tensor::{c, gelu, gelu_grad, gemm_nn, gemm_nt, gemm_tn, softmax_rows, Mat, Real};

pub(crate) const INIT_STD: f64 = 0.02;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: Pid,
    pub b: Pid,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(bld: &mut Builder, name: &str, din: usize, dout: usize, std: f64) -> Self {
        bld.push(name);
        let w = bld.tensor("weight", &[din, dout], Init::TruncNormal(std));
        let b = bld.tensor("bias", &[dout], Init::Zeros);
        bld.pop();
        Self { w, b, din, dout }
    }

    pub fn forward<T: Real>(&self, p: &ModelParams<T>, x: &Mat<T>) -> Mat<T> {
        debug_assert_eq!(x.cols, self.din);
        let bias = p.get(self.b);
        let mut out = Mat::zeros(x.rows, self.dout);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(bias);
        }
        gemm_nn(x.rows, self.din, self.dout, &x.data, p.get(self.w), &mut out.data);
        out
    }

    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        x: &Mat<T>,
        dy: &Mat<T>,
    ) -> Mat<T> {
        gemm_tn(x.rows, self.din, self.dout, &x.data, &dy.data, g.get_mut(self.w));
        let gb = g.get_mut(self.b);
        for r in 0..dy.rows {
            for (acc, v) in gb.iter_mut().zip(dy.row(r)) {
                *acc += *v;
            }
        }
        let mut dx = Mat::zeros(x.rows, self.din);
        gemm_nt(dy.rows, self.dout, self.din, &dy.data, p.get(self.w), &mut dx.data);
        dx
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    pub gamma: Pid,
    pub beta: Pid,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache<T> {
    xhat: Mat<T>,
    rstd: Vec<T>,
}

impl LayerNorm {
    pub fn new(bld: &mut Builder, name: &str, dim: usize) -> Self {
        bld.push(name);
        let gamma = bld.tensor("weight", &[dim], Init::Ones);
        let beta = bld.tensor("bias", &[dim], Init::Zeros);
        bld.pop();
        Self { gamma, beta, dim }
    }

    pub fn forward<T: Real>(&self, p: &ModelParams<T>, x: &Mat<T>) -> (Mat<T>, LnCache<T>) {
        let (gamma, beta) = (p.get(self.gamma), p.get(self.beta));
        let n = c::<T>(self.dim as f64);
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut out = Mat::zeros(x.rows, x.cols);
        let mut rstd = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rs = T::ONE / (var + c(LN_EPS)).sqrt();
            rstd.push(rs);
            let xh = xhat.row_mut(r);
            for (o, &v) in xh.iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
            for (((o, &h), &gm), &bt) in out.row_mut(r).iter_mut().zip(xhat.row(r)).zip(gamma).zip(beta) {
                *o = h * gm + bt;
            }
        }
        (out, LnCache { xhat, rstd })
    }

    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        cache: &LnCache<T>,
        dy: &Mat<T>,
    ) -> Mat<T> {
        let gamma = p.get(self.gamma);
        let n = c::<T>(self.dim as f64);
        {
            let gg = g.get_mut(self.gamma);
            for r in 0..dy.rows {
                for ((acc, &d), &h) in gg.iter_mut().zip(dy.row(r)).zip(cache.xhat.row(r)) {
                    *acc += d * h;
                }
            }
        }
        {
            let gb = g.get_mut(self.beta);
            for r in 0..dy.rows {
                for (acc, &d) in gb.iter_mut().zip(dy.row(r)) {
                    *acc += d;
                }
            }
        }
        let mut dx = Mat::zeros(dy.rows, dy.cols);
        let mut dxhat = vec![T::ZERO; self.dim];
        for r in 0..dy.rows {
            let xh = cache.xhat.row(r);
            for ((o, &d), &gm) in dxhat.iter_mut().zip(dy.row(r)).zip(gamma) {
                *o = d * gm;
            }
            let mean_d = dxhat.iter().copied().sum::<T>() / n;
            let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / n;
            let rs = cache.rstd[r];
            for ((o, &d), &h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
                *o = rs * (d - mean_d - h * mean_dx);
            }
        }
        dx
    }
}

/// Multi-head scaled dot-product attention with separate query and
/// key/value inputs.
#[derive(Debug, Clone)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnCache<T> {
    qh: Vec<Mat<T>>,
    kh: Vec<Mat<T>>,
    vh: Vec<Mat<T>>,
    /// Softmax weights per head, `queries x keys`.
    pub probs: Vec<Mat<T>>,
    ctx: Mat<T>,
}

fn split_heads<T: Real>(x: &Mat<T>, heads: usize) -> Vec<Mat<T>> {
    let dh = x.cols / heads;
    (0..heads)
        .map(|h| {
            let mut m = Mat::zeros(x.rows, dh);
            for r in 0..x.rows {
                m.row_mut(r).copy_from_slice(&x.row(r)[h * dh..(h + 1) * dh]);
            }
            m
        })
        .collect()
}

fn merge_heads<T: Real>(parts: &[Mat<T>]) -> Mat<T> {
    let dh = parts[0].cols;
    let rows = parts[0].rows;
    let mut out = Mat::zeros(rows, dh * parts.len());
    for (h, m) in parts.iter().enumerate() {
        for r in 0..rows {
            out.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(m.row(r));
        }
    }
    out
}

impl Attention {
    pub fn new(bld: &mut Builder, name: &str, d: usize, heads: usize) -> Self {
        bld.push(name);
        let q = Linear::new(bld, "q", d, d, INIT_STD);
        let k = Linear::new(bld, "k", d, d, INIT_STD);
        let v = Linear::new(bld, "v", d, d, INIT_STD);
        let o = Linear::new(bld, "out", d, d, INIT_STD);
        bld.pop();
        Self { q, k, v, o, heads }
    }

    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        xq: &Mat<T>,
        xkv: &Mat<T>,
    ) -> (Mat<T>, AttnCache<T>) {
        let qh = split_heads(&self.q.forward(p, xq), self.heads);
        let kh = split_heads(&self.k.forward(p, xkv), self.heads);
        let vh = split_heads(&self.v.forward(p, xkv), self.heads);
        let dh = qh[0].cols;
        let scale = c::<T>(1.0 / (dh as f64).sqrt());
        let (lq, lk) = (xq.rows, xkv.rows);
        let mut probs = Vec::with_capacity(self.heads);
        let mut ctx_h = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let mut s = Mat::zeros(lq, lk);
            gemm_nt(lq, dh, lk, &qh[h].data, &kh[h].data, &mut s.data);
            s.data.iter_mut().for_each(|v| *v *= scale);
            softmax_rows(&mut s);
            let mut ctx = Mat::zeros(lq, dh);
            gemm_nn(lq, lk, dh, &s.data, &vh[h].data, &mut ctx.data);
            probs.push(s);
            ctx_h.push(ctx);
        }
        let ctx = merge_heads(&ctx_h);
        let out = self.o.forward(p, &ctx);
        (
            out,
            AttnCache {
                qh,
                kh,
                vh,
                probs,
                ctx,
            },
        )
    }

    /// Returns `(d xq, d xkv)`.
    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        cache: &AttnCache<T>,
        xq: &Mat<T>,
        xkv: &Mat<T>,
        dout: &Mat<T>,
    ) -> (Mat<T>, Mat<T>) {
        let dctx = split_heads(&self.o.backward(p, g, &cache.ctx, dout), self.heads);
        let dh = dctx[0].cols;
        let scale = c::<T>(1.0 / (dh as f64).sqrt());
        let (lq, lk) = (xq.rows, xkv.rows);
        let mut dq = Vec::with_capacity(self.heads);
        let mut dk = Vec::with_capacity(self.heads);
        let mut dv = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let a = &cache.probs[h];
            let mut da = Mat::zeros(lq, lk);
            gemm_nt(lq, dh, lk, &dctx[h].data, &cache.vh[h].data, &mut da.data);
            let mut dvh = Mat::zeros(lk, dh);
            gemm_tn(lq, lk, dh, &a.data, &dctx[h].data, &mut dvh.data);
            // softmax backward, folded with the score scale
            for r in 0..lq {
                let (ar, dr) = (a.row(r), da.row_mut(r));
                let inner: T = ar.iter().zip(dr.iter()).map(|(&x, &y)| x * y).sum();
                for (d, &x) in dr.iter_mut().zip(ar) {
                    *d = x * (*d - inner) * scale;
                }
            }
            let mut dqh = Mat::zeros(lq, dh);
            gemm_nn(lq, lk, dh, &da.data, &cache.kh[h].data, &mut dqh.data);
            let mut dkh = Mat::zeros(lk, dh);
            gemm_tn(lq, lk, dh, &da.data, &cache.qh[h].data, &mut dkh.data);
            dq.push(dqh);
            dk.push(dkh);
            dv.push(dvh);
        }
        let dxq = self.q.backward(p, g, xq, &merge_heads(&dq));
        let mut dxkv = self.k.backward(p, g, xkv, &merge_heads(&dk));
        dxkv.add_assign(&self.v.backward(p, g, xkv, &merge_heads(&dv)));
        (dxq, dxkv)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache<T> {
    pre: Mat<T>,
    act: Mat<T>,
}

impl Mlp {
    pub fn new(bld: &mut Builder, name: &str, d: usize, hidden: usize) -> Self {
        bld.push(name);
        let fc1 = Linear::new(bld, "fc1", d, hidden, INIT_STD);
        let fc2 = Linear::new(bld, "fc2", hidden, d, INIT_STD);
        bld.pop();
        Self { fc1, fc2 }
    }

    pub fn forward<T: Real>(&self, p: &ModelParams<T>, x: &Mat<T>) -> (Mat<T>, MlpCache<T>) {
        let pre = self.fc1.forward(p, x);
        let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&v| gelu(v)).collect());
        let out = self.fc2.forward(p, &act);
        (out, MlpCache { pre, act })
    }

    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        cache: &MlpCache<T>,
        x: &Mat<T>,
        dy: &Mat<T>,
    ) -> Mat<T> {
        let mut dact = self.fc2.backward(p, g, &cache.act, dy);
        for (d, &v) in dact.data.iter_mut().zip(&cache.pre.data) {
            *d *= gelu_grad(v);
        }
        self.fc1.backward(p, g, x, &dact)
    }
}

/// Pre-norm self-attention block: `x + Attn(LN(x))`, then `+ MLP(LN(.))`.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache<T> {
    a: Mat<T>,
    ln1: LnCache<T>,
    pub attn: AttnCache<T>,
    b: Mat<T>,
    ln2: LnCache<T>,
    mlp: MlpCache<T>,
}

impl Block {
    pub fn new(bld: &mut Builder, name: &str, d: usize, heads: usize, hidden: usize) -> Self {
        bld.push(name);
        let ln1 = LayerNorm::new(bld, "norm1", d);
        let attn = Attention::new(bld, "attn", d, heads);
        let ln2 = LayerNorm::new(bld, "norm2", d);
        let mlp = Mlp::new(bld, "mlp", d, hidden);
        bld.pop();
        Self { ln1, attn, ln2, mlp }
    }

    pub fn forward<T: Real>(&self, p: &ModelParams<T>, x: &Mat<T>) -> (Mat<T>, BlockCache<T>) {
        let (a, ln1) = self.ln1.forward(p, x);
        let (att, attn) = self.attn.forward(p, &a, &a);
        let x1 = x.add(&att);
        let (b, ln2) = self.ln2.forward(p, &x1);
        let (m, mlp) = self.mlp.forward(p, &b);
        let out = x1.add(&m);
        (
            out,
            BlockCache {
                a,
                ln1,
                attn,
                b,
                ln2,
                mlp,
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        cache: &BlockCache<T>,
        dout: &Mat<T>,
    ) -> Mat<T> {
        let db = self.mlp.backward(p, g, &cache.mlp, &cache.b, dout);
        let mut dx1 = dout.clone();
        dx1.add_assign(&self.ln2.backward(p, g, &cache.ln2, &db));
        let (mut da, dkv) = self.attn.backward(p, g, &cache.attn, &cache.a, &cache.a, &dx1);
        da.add_assign(&dkv);
        let mut dx = dx1;
        dx.add_assign(&self.ln1.backward(p, g, &cache.ln1, &da));
        dx
    }
}

/// Pre-norm cross-attention block: queries from `x`, keys and values from
/// `y`, residual on `x`, then an MLP with residual.
#[derive(Debug, Clone)]
pub(crate) struct CrossBlock {
    pub ln_q: LayerNorm,
    pub ln_kv: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub(crate) struct CrossCache<T> {
    a: Mat<T>,
    ln_q: LnCache<T>,
    kv: Mat<T>,
    ln_kv: LnCache<T>,
    pub attn: AttnCache<T>,
    b: Mat<T>,
    ln2: LnCache<T>,
    mlp: MlpCache<T>,
}

impl CrossBlock {
    pub fn new(bld: &mut Builder, name: &str, d: usize, heads: usize, hidden: usize) -> Self {
        bld.push(name);
        let ln_q = LayerNorm::new(bld, "norm_q", d);
        let ln_kv = LayerNorm::new(bld, "norm_kv", d);
        let attn = Attention::new(bld, "attn", d, heads);
        let ln2 = LayerNorm::new(bld, "norm2", d);
        let mlp = Mlp::new(bld, "mlp", d, hidden);
        bld.pop();
        Self {
            ln_q,
            ln_kv,
            attn,
            ln2,
            mlp,
        }
    }

    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        x: &Mat<T>,
        y: &Mat<T>,
    ) -> (Mat<T>, CrossCache<T>) {
        let (a, ln_q) = self.ln_q.forward(p, x);
        let (kv, ln_kv) = self.ln_kv.forward(p, y);
        let (att, attn) = self.attn.forward(p, &a, &kv);
        let x1 = x.add(&att);
        let (b, ln2) = self.ln2.forward(p, &x1);
        let (m, mlp) = self.mlp.forward(p, &b);
        let out = x1.add(&m);
        (
            out,
            CrossCache {
                a,
                ln_q,
                kv,
                ln_kv,
                attn,
                b,
                ln2,
                mlp,
            },
        )
    }

    /// Returns `(d x, d y)`.
    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        cache: &CrossCache<T>,
        dout: &Mat<T>,
    ) -> (Mat<T>, Mat<T>) {
        let db = self.mlp.backward(p, g, &cache.mlp, &cache.b, dout);
        let mut dx1 = dout.clone();
        dx1.add_assign(&self.ln2.backward(p, g, &cache.ln2, &db));
        let (da, dkv) = self.attn.backward(p, g, &cache.attn, &cache.a, &cache.kv, &dx1);
        let mut dx = dx1;
        dx.add_assign(&self.ln_q.backward(p, g, &cache.ln_q, &da));
        let dy = self.ln_kv.backward(p, g, &cache.ln_kv, &dkv);
        (dx, dy)
    }
}
