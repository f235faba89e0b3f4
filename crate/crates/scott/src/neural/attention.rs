//! Multi-head scaled dot-product self-attention.
//!
//! Heads project the full model width to `head_dim`; the concatenated head
//! outputs are projected back to the model width. Attention is bidirectional
//! — temporal causality in the encoder comes from the convolution path, not
//! from attention masking.

use ndarray::{s, Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dense::Dense;
use super::linalg::{mm_nn, mm_nt, mm_tn, softmax_rows, softmax_rows_backward};
use super::Tensor3;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    /// Per-head query/key/value projections, each (heads, model_dim, head_dim).
    pub wq: Array3<f64>,
    pub wk: Array3<f64>,
    pub wv: Array3<f64>,
    /// Output projection (heads·head_dim, model_dim).
    pub wo: Array2<f64>,
}

pub struct AttentionCache {
    x_flat: Array2<f64>,
    /// (heads, batch·time, head_dim) projections.
    q: Array3<f64>,
    k: Array3<f64>,
    v: Array3<f64>,
    /// (batch, heads, time, time) softmax-normalised attention weights.
    a: Array4<f64>,
    concat: Array2<f64>,
    b: usize,
    t: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub wq: Array3<f64>,
    pub wk: Array3<f64>,
    pub wv: Array3<f64>,
    pub wo: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(model_dim: usize, heads: usize, head_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let proj = |rng: &mut ChaCha8Rng| {
            let mut w = Array3::zeros((heads, model_dim, head_dim));
            for h in 0..heads {
                let d = Dense::new(model_dim, head_dim, rng);
                w.slice_mut(s![h, .., ..]).assign(&d.w);
            }
            w
        };
        let wq = proj(rng);
        let wk = proj(rng);
        let wv = proj(rng);
        let wo = Dense::new(heads * head_dim, model_dim, rng).w;
        MultiHeadAttention { wq, wk, wv, wo }
    }

    pub fn heads(&self) -> usize {
        self.wq.dim().0
    }

    pub fn model_dim(&self) -> usize {
        self.wq.dim().1
    }

    pub fn head_dim(&self) -> usize {
        self.wq.dim().2
    }

    pub fn forward(&self, x: &Tensor3) -> Result<(Tensor3, AttentionCache)> {
        let (b, t, d) = x.dim();
        if d != self.model_dim() {
            return Err(Error::shape(format!(
                "attention expects {} input channels, got {d}",
                self.model_dim()
            )));
        }
        let (heads, _, hd) = self.wq.dim();
        let x_flat = flatten(x);

        let mut q = Array3::zeros((heads, b * t, hd));
        let mut k = Array3::zeros((heads, b * t, hd));
        let mut v = Array3::zeros((heads, b * t, hd));
        for h in 0..heads {
            q.slice_mut(s![h, .., ..])
                .assign(&mm_nn(x_flat.view(), self.wq.slice(s![h, .., ..])));
            k.slice_mut(s![h, .., ..])
                .assign(&mm_nn(x_flat.view(), self.wk.slice(s![h, .., ..])));
            v.slice_mut(s![h, .., ..])
                .assign(&mm_nn(x_flat.view(), self.wv.slice(s![h, .., ..])));
        }

        let scale = 1.0 / (hd as f64).sqrt();
        let mut a = Array4::zeros((b, heads, t, t));
        let mut concat = Array2::zeros((b * t, heads * hd));

        // Each (batch, head) pair is independent; results are written back
        // serially into disjoint slices.
        let cells: Vec<(usize, Array2<f64>, Array2<f64>)> = (0..b * heads)
            .into_par_iter()
            .map(|idx| {
                let bi = idx / heads;
                let h = idx % heads;
                let qh = q.slice(s![h, bi * t..(bi + 1) * t, ..]);
                let kh = k.slice(s![h, bi * t..(bi + 1) * t, ..]);
                let vh = v.slice(s![h, bi * t..(bi + 1) * t, ..]);
                let mut scores = mm_nt(qh, kh);
                scores.mapv_inplace(|s| s * scale);
                softmax_rows(&mut scores);
                let head_out = mm_nn(scores.view(), vh);
                (idx, scores, head_out)
            })
            .collect();
        for (idx, scores, head_out) in cells {
            let bi = idx / heads;
            let h = idx % heads;
            a.slice_mut(s![bi, h, .., ..]).assign(&scores);
            concat
                .slice_mut(s![bi * t..(bi + 1) * t, h * hd..(h + 1) * hd])
                .assign(&head_out);
        }

        let y_flat = mm_nn(concat.view(), self.wo.view());
        let y = unflatten(y_flat, b, t, d);
        Ok((
            y,
            AttentionCache {
                x_flat,
                q,
                k,
                v,
                a,
                concat,
                b,
                t,
            },
        ))
    }

    /// Attention weights from a cache: (batch, heads, time, time).
    pub fn weights<'c>(&self, cache: &'c AttentionCache) -> &'c Array4<f64> {
        &cache.a
    }

    pub fn backward(
        &self,
        cache: &AttentionCache,
        dy: &Tensor3,
        grads: &mut AttentionGrads,
    ) -> Tensor3 {
        let (b, t) = (cache.b, cache.t);
        let (heads, d, hd) = self.wq.dim();
        let dy_flat = flatten(dy);

        grads.wo += &mm_tn(cache.concat.view(), dy_flat.view());
        let dconcat = mm_nt(dy_flat.view(), self.wo.view());

        let scale = 1.0 / (hd as f64).sqrt();
        let mut dq = Array3::zeros((heads, b * t, hd));
        let mut dk = Array3::zeros((heads, b * t, hd));
        let mut dv = Array3::zeros((heads, b * t, hd));

        let parts: Vec<(usize, Array2<f64>, Array2<f64>, Array2<f64>)> = (0..b * heads)
            .into_par_iter()
            .map(|idx| {
                let bi = idx / heads;
                let h = idx % heads;
                let qh = cache.q.slice(s![h, bi * t..(bi + 1) * t, ..]);
                let kh = cache.k.slice(s![h, bi * t..(bi + 1) * t, ..]);
                let vh = cache.v.slice(s![h, bi * t..(bi + 1) * t, ..]);
                let ah = cache.a.slice(s![bi, h, .., ..]);
                let dhead = dconcat
                    .slice(s![bi * t..(bi + 1) * t, h * hd..(h + 1) * hd])
                    .to_owned();

                let da = mm_nt(dhead.view(), vh);
                let dvh = mm_tn(ah, dhead.view());
                let mut dscores = softmax_rows_backward(&ah, &da.view());
                dscores.mapv_inplace(|v| v * scale);
                let dqh = mm_nn(dscores.view(), kh);
                let dkh = mm_tn(dscores.view(), qh);
                (idx, dqh, dkh, dvh)
            })
            .collect();
        for (idx, dqh, dkh, dvh) in parts {
            let bi = idx / heads;
            let h = idx % heads;
            dq.slice_mut(s![h, bi * t..(bi + 1) * t, ..]).assign(&dqh);
            dk.slice_mut(s![h, bi * t..(bi + 1) * t, ..]).assign(&dkh);
            dv.slice_mut(s![h, bi * t..(bi + 1) * t, ..]).assign(&dvh);
        }

        let mut dx_flat: Array2<f64> = Array2::zeros((b * t, d));
        for h in 0..heads {
            let dqh = dq.slice(s![h, .., ..]);
            let dkh = dk.slice(s![h, .., ..]);
            let dvh = dv.slice(s![h, .., ..]);
            let mut gq = grads.wq.slice_mut(s![h, .., ..]);
            gq += &mm_tn(cache.x_flat.view(), dqh);
            let mut gk = grads.wk.slice_mut(s![h, .., ..]);
            gk += &mm_tn(cache.x_flat.view(), dkh);
            let mut gv = grads.wv.slice_mut(s![h, .., ..]);
            gv += &mm_tn(cache.x_flat.view(), dvh);
            dx_flat += &mm_nt(dqh, self.wq.slice(s![h, .., ..]));
            dx_flat += &mm_nt(dkh, self.wk.slice(s![h, .., ..]));
            dx_flat += &mm_nt(dvh, self.wv.slice(s![h, .., ..]));
        }
        unflatten(dx_flat, b, t, d)
    }

    pub fn zero_grads(&self) -> AttentionGrads {
        AttentionGrads {
            wq: Array3::zeros(self.wq.raw_dim()),
            wk: Array3::zeros(self.wk.raw_dim()),
            wv: Array3::zeros(self.wv.raw_dim()),
            wo: Array2::zeros(self.wo.raw_dim()),
        }
    }
}

pub(crate) fn flatten(x: &Tensor3) -> Array2<f64> {
    let (b, t, d) = x.dim();
    x.to_owned().into_shape_with_order((b * t, d)).unwrap()
}

pub(crate) fn unflatten(x: Array2<f64>, b: usize, t: usize, d: usize) -> Tensor3 {
    x.into_shape_with_order((b, t, d)).unwrap()
}
