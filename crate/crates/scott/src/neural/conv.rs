//! Dilated causal 1-D convolution.
//!
//! Output at time `t` reads inputs at `t, t-d, t-2d, ..., t-(k-1)d` only
//! (implicit left zero padding), so output length equals input length and no
//! future value can influence the present.

use ndarray::{s, Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::linalg::{col_sum, mm_tn};
use super::Tensor3;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CausalConv {
    /// Kernel weights (kernel_size, in_channels, filters).
    pub w: Array3<f64>,
    /// Per-filter bias.
    pub b: Array1<f64>,
    pub dilation: usize,
}

pub struct CausalConvCache {
    x: Tensor3,
}

#[derive(Debug, Clone)]
pub struct CausalConvGrads {
    pub w: Array3<f64>,
    pub b: Array1<f64>,
}

impl CausalConv {
    pub fn new(
        kernel_size: usize,
        in_channels: usize,
        filters: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(kernel_size >= 1 && dilation >= 1 && filters >= 1);
        use rand::Rng;
        let limit = (6.0 / (kernel_size * in_channels + filters) as f64).sqrt();
        let w = Array3::from_shape_fn((kernel_size, in_channels, filters), |_| {
            rng.gen_range(-limit..limit)
        });
        CausalConv {
            w,
            b: Array1::zeros(filters),
            dilation,
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.w.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().1
    }

    pub fn filters(&self) -> usize {
        self.w.dim().2
    }

    /// Past reach of a single layer: (k-1)·dilation steps.
    pub fn reach(&self) -> usize {
        (self.kernel_size() - 1) * self.dilation
    }

    pub fn forward(&self, x: &Tensor3) -> Result<(Tensor3, CausalConvCache)> {
        let (batch, t, c) = x.dim();
        if c != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let (k, _, f) = self.w.dim();
        let d = self.dilation;
        let w = self.w.as_slice().unwrap();
        let bias = self.b.as_slice().unwrap();

        let mut y = Tensor3::zeros((batch, t, f));
        let xs = x.as_slice().unwrap();
        y.as_slice_mut()
            .unwrap()
            .par_chunks_mut(t * f)
            .zip(xs.par_chunks(t * c))
            .for_each(|(yb, xb)| {
                for row in yb.chunks_mut(f) {
                    row.copy_from_slice(bias);
                }
                // Tap j reads the input (k-1-j)·d steps back, so tap k-1 is
                // "now" and tap 0 is the farthest past.
                for j in 0..k {
                    let off = (k - 1 - j) * d;
                    let wj = &w[j * c * f..(j + 1) * c * f];
                    for ti in off..t {
                        let x_row = &xb[(ti - off) * c..(ti - off + 1) * c];
                        let y_row = &mut yb[ti * f..(ti + 1) * f];
                        for (ci, &xv) in x_row.iter().enumerate() {
                            if xv != 0.0 {
                                let w_row = &wj[ci * f..(ci + 1) * f];
                                for (yv, wv) in y_row.iter_mut().zip(w_row) {
                                    *yv += xv * *wv;
                                }
                            }
                        }
                    }
                }
            });
        Ok((y, CausalConvCache { x: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &CausalConvCache,
        dy: &Tensor3,
        grads: &mut CausalConvGrads,
    ) -> Tensor3 {
        let (batch, t, c) = cache.x.dim();
        let (k, _, f) = self.w.dim();
        let d = self.dilation;
        let w = self.w.as_slice().unwrap();

        // Input gradient, one batch instance per work unit.
        let mut dx = Tensor3::zeros((batch, t, c));
        let dys = dy.as_slice().unwrap();
        dx.as_slice_mut()
            .unwrap()
            .par_chunks_mut(t * c)
            .zip(dys.par_chunks(t * f))
            .for_each(|(dxb, dyb)| {
                for j in 0..k {
                    let off = (k - 1 - j) * d;
                    let wj = &w[j * c * f..(j + 1) * c * f];
                    for ti in off..t {
                        let dy_row = &dyb[ti * f..(ti + 1) * f];
                        let dx_row = &mut dxb[(ti - off) * c..(ti - off + 1) * c];
                        for (ci, dxv) in dx_row.iter_mut().enumerate() {
                            let w_row = &wj[ci * f..(ci + 1) * f];
                            let mut acc = 0.0;
                            for (dyv, wv) in dy_row.iter().zip(w_row) {
                                acc += *dyv * *wv;
                            }
                            *dxv += acc;
                        }
                    }
                }
            });

        // Weight gradient per tap as a flat (batch·time, c)ᵀ · (batch·time, f)
        // product over the shifted input.
        let dy_flat = dy
            .to_owned()
            .into_shape_with_order((batch * t, f))
            .unwrap();
        for j in 0..k {
            let off = (k - 1 - j) * d;
            let mut x_shift = Array2::zeros((batch * t, c));
            for bi in 0..batch {
                for ti in off..t {
                    x_shift
                        .slice_mut(s![bi * t + ti, ..])
                        .assign(&cache.x.slice(s![bi, ti - off, ..]));
                }
            }
            let gw = mm_tn(x_shift.view(), dy_flat.view());
            let mut gslice = grads.w.slice_mut(s![j, .., ..]);
            gslice += &gw;
        }
        grads.b += &col_sum(&dy_flat.view());
        dx
    }

    pub fn zero_grads(&self) -> CausalConvGrads {
        CausalConvGrads {
            w: Array3::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = stream_rng(0, "conv");
        let mut conv = CausalConv::new(1, 1, 1, 1, &mut rng);
        conv.w[(0, 0, 0)] = 1.0;
        conv.b[0] = 0.0;
        let x = Tensor3::from_shape_fn((2, 6, 1), |(b, t, _)| (b * 10 + t) as f64);
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn causal_no_future_leakage() {
        let mut rng = stream_rng(1, "conv");
        let conv = CausalConv::new(4, 2, 3, 2, &mut rng);
        let x = Tensor3::from_shape_fn((1, 12, 2), |(_, t, c)| (t * 2 + c) as f64 * 0.3);
        let (y, _) = conv.forward(&x).unwrap();

        let t_perturb = 7;
        let mut x2 = x.clone();
        x2[(0, t_perturb, 0)] += 5.0;
        let (y2, _) = conv.forward(&x2).unwrap();
        for t in 0..t_perturb {
            for f in 0..3 {
                assert_eq!(y[(0, t, f)], y2[(0, t, f)], "t={t} f={f}");
            }
        }
        // And the perturbed step itself must change for a generic kernel.
        assert_ne!(y[(0, t_perturb, 0)], y2[(0, t_perturb, 0)]);
    }

    #[test]
    fn single_layer_reach() {
        // k=4, d=2: an output reads 3*2=6 steps into the past.
        let mut rng = stream_rng(2, "conv");
        let conv = CausalConv::new(4, 1, 1, 2, &mut rng);
        assert_eq!(conv.reach(), 6);
        let mut x = Tensor3::zeros((1, 20, 1));
        x[(0, 5, 0)] = 1.0;
        let (y, _) = conv.forward(&x).unwrap();
        let nonzero: Vec<usize> = (0..20)
            .filter(|&t| (y[(0, t, 0)] - conv.b[0]).abs() > 1e-12)
            .collect();
        // Impulse at 5 influences outputs at 5, 7, 9, 11.
        assert_eq!(nonzero, vec![5, 7, 9, 11]);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = stream_rng(3, "conv");
        let conv = CausalConv::new(2, 3, 1, 1, &mut rng);
        let x = Tensor3::zeros((1, 4, 2));
        assert!(conv.forward(&x).is_err());
    }
}

#[cfg(test)]
mod grad_tests {
    use super::*;
    use crate::neural::gradcheck::{finite_diff_grad, max_rel_error};
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn conv_gradient_matches_finite_differences() {
        let mut rng = stream_rng(41, "conv-fd");
        let conv = CausalConv::new(3, 2, 4, 2, &mut rng);
        let (b, t, c) = (2, 8, 2);
        let x = Tensor3::from_shape_fn((b, t, c), |_| rng.gen_range(-1.0..1.0));

        let (y, cache) = conv.forward(&x).unwrap();
        let mut grads = conv.zero_grads();
        let dy = Tensor3::ones(y.raw_dim());
        let dx = conv.backward(&cache, &dy, &mut grads);

        let flat: Vec<f64> = x.iter().cloned().collect();
        let numeric = finite_diff_grad(
            &mut |p| {
                let arr = Tensor3::from_shape_vec((b, t, c), p.to_vec()).unwrap();
                conv.forward(&arr).unwrap().0.sum()
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = dx.iter().cloned().collect();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-6, "input gradient error {err}");

        let flat: Vec<f64> = conv.w.iter().cloned().collect();
        let numeric = finite_diff_grad(
            &mut |p| {
                let mut c2 = conv.clone();
                c2.w = Array3::from_shape_vec(conv.w.raw_dim(), p.to_vec()).unwrap();
                c2.forward(&x).unwrap().0.sum()
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = grads.w.iter().cloned().collect();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-6, "weight gradient error {err}");

        let flat: Vec<f64> = conv.b.to_vec();
        let numeric = finite_diff_grad(
            &mut |p| {
                let mut c2 = conv.clone();
                c2.b = Array1::from_vec(p.to_vec());
                c2.forward(&x).unwrap().0.sum()
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = grads.b.to_vec();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-6, "bias gradient error {err}");
    }
}
