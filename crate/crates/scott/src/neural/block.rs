//! The temporal-transformer encoder block.
//!
//! `y = x + ConvStack(Attention(x))` — a self-attention layer followed by a
//! stack of dilated causal convolutions with ReLU between them, the whole
//! branch bypassed by a residual connection. No positional encoding and no
//! layer normalisation by default; temporal order enters through the causal
//! convolutions. An optional post-block layer norm is available for ablation.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::attention::{flatten, unflatten, AttentionCache, AttentionGrads, MultiHeadAttention};
use super::conv::{CausalConv, CausalConvCache, CausalConvGrads};
use super::dense::{Dropout, Phase};
use super::Tensor3;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub convs: Vec<CausalConv>,
    pub dropout: f64,
    pub norm: Option<LayerNorm>,
}

pub struct EncoderBlockCache {
    attn: AttentionCache,
    /// Input and rectified output of every conv layer.
    conv_caches: Vec<CausalConvCache>,
    relu_outs: Vec<Tensor3>,
    dropout_mask: Option<Array2<f64>>,
    norm_cache: Option<LayerNormCache>,
    shape: (usize, usize, usize),
}

#[derive(Debug, Clone)]
pub struct EncoderBlockGrads {
    pub attn: AttentionGrads,
    pub convs: Vec<CausalConvGrads>,
    pub norm: Option<LayerNormGrads>,
}

impl EncoderBlock {
    /// Builds a block at `model_dim` width: attention plus one conv layer per
    /// dilation, every conv with `filters` channels except the last, which
    /// returns to `model_dim` so the residual addition is well-typed.
    pub fn new(
        model_dim: usize,
        heads: usize,
        head_dim: usize,
        kernel_size: usize,
        filters: usize,
        dilations: &[usize],
        dropout: f64,
        layer_norm: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(!dilations.is_empty());
        let attn = MultiHeadAttention::new(model_dim, heads, head_dim, rng);
        let mut convs = Vec::with_capacity(dilations.len());
        let mut in_c = model_dim;
        for (i, &d) in dilations.iter().enumerate() {
            let out_c = if i + 1 == dilations.len() {
                model_dim
            } else {
                filters
            };
            convs.push(CausalConv::new(kernel_size, in_c, out_c, d, rng));
            in_c = out_c;
        }
        let norm = layer_norm.then(|| LayerNorm::new(model_dim));
        EncoderBlock {
            attn,
            convs,
            dropout,
            norm,
        }
    }

    /// Receptive field of the conv path in time steps: 1 + Σ (k-1)·d.
    pub fn conv_receptive_field(&self) -> usize {
        1 + self.convs.iter().map(|c| c.reach()).sum::<usize>()
    }

    pub fn forward(&self, x: &Tensor3, phase: &mut Phase) -> Result<(Tensor3, EncoderBlockCache)> {
        let shape = x.dim();
        let last = self
            .convs
            .last()
            .ok_or_else(|| Error::config("encoder block has no conv layers"))?;
        if last.filters() != shape.2 {
            return Err(Error::shape(format!(
                "conv stack ends with {} channels but residual needs {}",
                last.filters(),
                shape.2
            )));
        }

        let (attn_out, attn_cache) = self.attn.forward(x)?;

        let mut h = attn_out;
        let mut conv_caches = Vec::with_capacity(self.convs.len());
        let mut relu_outs = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            let (mut out, cache) = conv.forward(&h)?;
            conv_caches.push(cache);
            if i + 1 < self.convs.len() {
                out.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
                relu_outs.push(out.clone());
            }
            h = out;
        }

        let dropout_mask = if self.dropout > 0.0 && phase.is_training() {
            let (b, t, d) = h.dim();
            let mut flat = flatten(&h);
            let mask = Dropout {
                rate: self.dropout,
            }
            .forward(&mut flat, phase);
            h = unflatten(flat, b, t, d);
            mask
        } else {
            None
        };

        let mut y = x + &h;
        let norm_cache = match &self.norm {
            Some(norm) => {
                let (normed, cache) = norm.forward(&y);
                y = normed;
                Some(cache)
            }
            None => None,
        };

        Ok((
            y,
            EncoderBlockCache {
                attn: attn_cache,
                conv_caches,
                relu_outs,
                dropout_mask,
                norm_cache,
                shape,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &EncoderBlockCache,
        dy: &Tensor3,
        grads: &mut EncoderBlockGrads,
    ) -> Tensor3 {
        let (b, t, d) = cache.shape;

        let dy = match (&self.norm, &cache.norm_cache, &mut grads.norm) {
            (Some(norm), Some(nc), Some(ng)) => norm.backward(nc, dy, ng),
            _ => dy.clone(),
        };

        // Residual: gradient flows to both x and the conv branch.
        let mut dbranch = dy.clone();
        if let Some(mask) = &cache.dropout_mask {
            let flat = flatten(&dbranch);
            dbranch = unflatten(&flat * mask, b, t, d);
        }

        let mut dh = dbranch;
        for i in (0..self.convs.len()).rev() {
            if i + 1 < self.convs.len() {
                let relu_out = &cache.relu_outs[i];
                for (dv, yv) in dh.iter_mut().zip(relu_out.iter()) {
                    if *yv <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            dh = self.convs[i].backward(&cache.conv_caches[i], &dh, &mut grads.convs[i]);
        }

        let dx_attn = self.attn.backward(&cache.attn, &dh, &mut grads.attn);
        dy + &dx_attn
    }

    pub fn zero_grads(&self) -> EncoderBlockGrads {
        EncoderBlockGrads {
            attn: self.attn.zero_grads(),
            convs: self.convs.iter().map(|c| c.zero_grads()).collect(),
            norm: self.norm.as_ref().map(|n| n.zero_grads()),
        }
    }
}

/// Per-position layer normalisation over the channel axis, with learnable
/// gain and bias. Ablation-only; off by default.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

pub struct LayerNormCache {
    x_hat: Tensor3,
    inv_std: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor3) -> (Tensor3, LayerNormCache) {
        let (b, t, d) = x.dim();
        let mut y = Tensor3::zeros((b, t, d));
        let mut x_hat = Tensor3::zeros((b, t, d));
        let mut inv_std = Array2::zeros((b, t));
        for bi in 0..b {
            for ti in 0..t {
                let mut mean = 0.0;
                for di in 0..d {
                    mean += x[(bi, ti, di)];
                }
                mean /= d as f64;
                let mut var = 0.0;
                for di in 0..d {
                    let c = x[(bi, ti, di)] - mean;
                    var += c * c;
                }
                var /= d as f64;
                let istd = 1.0 / (var + self.eps).sqrt();
                inv_std[(bi, ti)] = istd;
                for di in 0..d {
                    let xh = (x[(bi, ti, di)] - mean) * istd;
                    x_hat[(bi, ti, di)] = xh;
                    y[(bi, ti, di)] = self.gamma[di] * xh + self.beta[di];
                }
            }
        }
        (y, LayerNormCache { x_hat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        dy: &Tensor3,
        grads: &mut LayerNormGrads,
    ) -> Tensor3 {
        let (b, t, d) = dy.dim();
        let mut dx = Tensor3::zeros((b, t, d));
        for bi in 0..b {
            for ti in 0..t {
                let istd = cache.inv_std[(bi, ti)];
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for di in 0..d {
                    let dxhat = dy[(bi, ti, di)] * self.gamma[di];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * cache.x_hat[(bi, ti, di)];
                    grads.gamma[di] += dy[(bi, ti, di)] * cache.x_hat[(bi, ti, di)];
                    grads.beta[di] += dy[(bi, ti, di)];
                }
                for di in 0..d {
                    let dxhat = dy[(bi, ti, di)] * self.gamma[di];
                    let xh = cache.x_hat[(bi, ti, di)];
                    dx[(bi, ti, di)] = istd
                        * (dxhat - sum_dxhat / d as f64 - xh * sum_dxhat_xhat / d as f64);
                }
            }
        }
        dx
    }

    pub fn zero_grads(&self) -> LayerNormGrads {
        LayerNormGrads {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }
}


#[cfg(test)]
mod grad_tests {
    use super::*;
    use crate::neural::gradcheck::{finite_diff_grad, max_rel_error};
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn block_gradient_matches_finite_differences() {
        let mut rng = stream_rng(42, "block-fd");
        let block = EncoderBlock::new(4, 2, 3, 2, 5, &[1, 2], 0.0, false, &mut rng);
        let (b, t, d) = (2, 6, 4);
        let x = Tensor3::from_shape_fn((b, t, d), |_| rng.gen_range(-1.0..1.0));

        let (y, cache) = block.forward(&x, &mut Phase::Eval).unwrap();
        let mut grads = block.zero_grads();
        let dy = Tensor3::ones(y.raw_dim());
        let dx = block.backward(&cache, &dy, &mut grads);

        let flat: Vec<f64> = x.iter().cloned().collect();
        let numeric = finite_diff_grad(
            &mut |p| {
                let arr = Tensor3::from_shape_vec((b, t, d), p.to_vec()).unwrap();
                block.forward(&arr, &mut Phase::Eval).unwrap().0.sum()
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = dx.iter().cloned().collect();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "block input gradient error {err}");
    }

    #[test]
    fn layer_norm_gradient_matches_finite_differences() {
        let mut rng = stream_rng(43, "ln-fd");
        let mut norm = LayerNorm::new(5);
        for v in norm.gamma.iter_mut() {
            *v = rng.gen_range(0.5..1.5);
        }
        for v in norm.beta.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let (b, t, d) = (2, 3, 5);
        let x = Tensor3::from_shape_fn((b, t, d), |_| rng.gen_range(-2.0..2.0));
        // Weighted-sum loss so no gradient component degenerates to zero.
        let weights = Tensor3::from_shape_fn((b, t, d), |_| rng.gen_range(0.2..2.0));
        let (_, cache) = norm.forward(&x);
        let mut grads = norm.zero_grads();
        let dx = norm.backward(&cache, &weights, &mut grads);

        let flat: Vec<f64> = x.iter().cloned().collect();
        let numeric = finite_diff_grad(
            &mut |p| {
                let arr = Tensor3::from_shape_vec((b, t, d), p.to_vec()).unwrap();
                (norm.forward(&arr).0 * &weights).sum()
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = dx.iter().cloned().collect();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "layer norm input gradient error {err}");

        // Gain and bias gradients.
        let flat_g: Vec<f64> = norm.gamma.to_vec();
        let numeric_g = finite_diff_grad(
            &mut |p| {
                let mut n2 = norm.clone();
                n2.gamma = ndarray::Array1::from_vec(p.to_vec());
                (n2.forward(&x).0 * &weights).sum()
            },
            &flat_g,
            1e-5,
        );
        let err_g = max_rel_error(&grads.gamma.to_vec(), &numeric_g);
        assert!(err_g < 1e-4, "gamma gradient error {err_g}");
    }
}
