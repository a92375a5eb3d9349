//! Convolutional decoder: stride-2 transposed convolutions (kernel 2) with
//! GELU, then a 3x3 convolution to one channel and a sigmoid.
//!
//! Feature maps are stored channels-last, one row per pixel in row-major
//! pixel order, so a patch-token sequence is already a valid input.

use super::params::{Builder, Grads, Init, ModelParams, Pid};
use crate::tensor::{gelu, gelu_grad, gemm_nn, gemm_nt, gemm_tn, sigmoid, Mat, Real};

#[derive(Debug, Clone)]
pub(crate) struct UpStage {
    /// `cin x (4 * cout)`; column `(a * 2 + b) * cout + o` feeds sub-pixel
    /// `(a, b)` of output channel `o`.
    w: Pid,
    b: Pid,
    cin: usize,
    cout: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Head {
    /// `(9 * cin) x 1`, rows ordered `(ky * 3 + kx) * cin + channel`.
    w: Pid,
    b: Pid,
    cin: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Decoder {
    stages: Vec<UpStage>,
    head: Head,
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderCache<T> {
    inputs: Vec<Mat<T>>,
    sides: Vec<usize>,
    pres: Vec<Mat<T>>,
    cols: Mat<T>,
    pub out: Vec<T>,
}

fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

impl Decoder {
    pub fn new(bld: &mut Builder, d: usize, channels: &[usize]) -> Self {
        bld.push("decoder");
        let mut cin = d;
        let mut stages = Vec::with_capacity(channels.len());
        for (i, &cout) in channels.iter().enumerate() {
            bld.push(format!("up{i}"));
            let w = bld.tensor("weight", &[cin, 4 * cout], Init::TruncNormal(he_std(cin)));
            let b = bld.tensor("bias", &[cout], Init::Zeros);
            bld.pop();
            stages.push(UpStage { w, b, cin, cout });
            cin = cout;
        }
        bld.push("head");
        let w = bld.tensor("weight", &[9 * cin, 1], Init::TruncNormal(he_std(9 * cin)));
        let b = bld.tensor("bias", &[1], Init::Zeros);
        bld.pop();
        bld.pop();
        Self {
            stages,
            head: Head { w, b, cin },
        }
    }

    /// Maps a `side x side` grid of features to a `(side * 2^stages)^2`
    /// map in `[0, 1]`.
    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        x: &Mat<T>,
        side: usize,
    ) -> DecoderCache<T> {
        let mut inputs = Vec::with_capacity(self.stages.len());
        let mut pres = Vec::with_capacity(self.stages.len());
        let mut sides = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        let mut s = side;
        for st in &self.stages {
            let mut y = Mat::zeros(s * s, 4 * st.cout);
            gemm_nn(s * s, st.cin, 4 * st.cout, &cur.data, p.get(st.w), &mut y.data);
            let bias = p.get(st.b);
            let s2 = 2 * s;
            let mut pre = Mat::zeros(s2 * s2, st.cout);
            for i in 0..s {
                for j in 0..s {
                    let src = y.row(i * s + j);
                    for a in 0..2 {
                        for b in 0..2 {
                            let dst = pre.row_mut((2 * i + a) * s2 + 2 * j + b);
                            let sub = &src[(a * 2 + b) * st.cout..(a * 2 + b + 1) * st.cout];
                            for ((o, &v), &bb) in dst.iter_mut().zip(sub).zip(bias) {
                                *o = v + bb;
                            }
                        }
                    }
                }
            }
            let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&v| gelu(v)).collect());
            inputs.push(std::mem::replace(&mut cur, act));
            pres.push(pre);
            sides.push(s);
            s *= 2;
        }
        let cols = im2col(&cur, s, self.head.cin);
        let bias = p.get(self.head.b)[0];
        let mut logits = vec![bias; s * s];
        gemm_nn(s * s, 9 * self.head.cin, 1, &cols.data, p.get(self.head.w), &mut logits);
        let out = logits.into_iter().map(sigmoid).collect();
        DecoderCache {
            inputs,
            sides,
            pres,
            cols,
            out,
        }
    }

    /// Backpropagates `dout` (gradient w.r.t. the sigmoid output) and
    /// returns the gradient w.r.t. the decoder input.
    pub fn backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        cache: &DecoderCache<T>,
        dout: &[T],
    ) -> Mat<T> {
        let n = cache.out.len();
        let s = (n as f64).sqrt().round() as usize;
        let dlogit: Vec<T> = dout
            .iter()
            .zip(&cache.out)
            .map(|(&d, &y)| d * y * (T::ONE - y))
            .collect();
        let cin = self.head.cin;
        gemm_tn(n, 9 * cin, 1, &cache.cols.data, &dlogit, g.get_mut(self.head.w));
        g.get_mut(self.head.b)[0] += dlogit.iter().copied().sum::<T>();
        let mut dcols = Mat::zeros(n, 9 * cin);
        gemm_nt(n, 1, 9 * cin, &dlogit, p.get(self.head.w), &mut dcols.data);
        let mut dcur = col2im(&dcols, s, cin);

        for (k, st) in self.stages.iter().enumerate().rev() {
            let side = cache.sides[k];
            let s2 = 2 * side;
            let pre = &cache.pres[k];
            for (d, &v) in dcur.data.iter_mut().zip(&pre.data) {
                *d *= gelu_grad(v);
            }
            {
                let gb = g.get_mut(st.b);
                for r in 0..dcur.rows {
                    for (acc, &v) in gb.iter_mut().zip(dcur.row(r)) {
                        *acc += v;
                    }
                }
            }
            let mut dy = Mat::zeros(side * side, 4 * st.cout);
            for i in 0..side {
                for j in 0..side {
                    let dst = dy.row_mut(i * side + j);
                    for a in 0..2 {
                        for b in 0..2 {
                            let src = dcur.row((2 * i + a) * s2 + 2 * j + b);
                            dst[(a * 2 + b) * st.cout..(a * 2 + b + 1) * st.cout]
                                .copy_from_slice(src);
                        }
                    }
                }
            }
            let x = &cache.inputs[k];
            gemm_tn(side * side, st.cin, 4 * st.cout, &x.data, &dy.data, g.get_mut(st.w));
            let mut dx = Mat::zeros(side * side, st.cin);
            gemm_nt(side * side, 4 * st.cout, st.cin, &dy.data, p.get(st.w), &mut dx.data);
            dcur = dx;
        }
        dcur
    }
}

/// 3x3 zero-padded patches of a channels-last `side x side` image.
fn im2col<T: Real>(x: &Mat<T>, side: usize, ch: usize) -> Mat<T> {
    let mut cols = Mat::zeros(side * side, 9 * ch);
    for r in 0..side {
        for c in 0..side {
            let dst = cols.row_mut(r * side + c);
            for ky in 0..3 {
                let rr = r as isize + ky as isize - 1;
                if rr < 0 || rr >= side as isize {
                    continue;
                }
                for kx in 0..3 {
                    let cc = c as isize + kx as isize - 1;
                    if cc < 0 || cc >= side as isize {
                        continue;
                    }
                    let off = (ky * 3 + kx) * ch;
                    dst[off..off + ch].copy_from_slice(x.row(rr as usize * side + cc as usize));
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &Mat<T>, side: usize, ch: usize) -> Mat<T> {
    let mut x = Mat::zeros(side * side, ch);
    for r in 0..side {
        for c in 0..side {
            let src = cols.row(r * side + c);
            for ky in 0..3 {
                let rr = r as isize + ky as isize - 1;
                if rr < 0 || rr >= side as isize {
                    continue;
                }
                for kx in 0..3 {
                    let cc = c as isize + kx as isize - 1;
                    if cc < 0 || cc >= side as isize {
                        continue;
                    }
                    let off = (ky * 3 + kx) * ch;
                    let dst = x.row_mut(rr as usize * side + cc as usize);
                    for (d, &v) in dst.iter_mut().zip(&src[off..off + ch]) {
                        *d += v;
                    }
                }
            }
        }
    }
    x
}
