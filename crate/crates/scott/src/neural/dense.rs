//! Dense layer, ReLU and inverted dropout.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{add_bias, col_sum, mm_nn, mm_nt, mm_tn};

/// Whether a forward pass is a training step (stochastic layers active,
/// drawing from the given RNG) or inference (fully deterministic).
pub enum Phase<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl<'a> Phase<'a> {
    pub fn reborrow(&mut self) -> Phase<'_> {
        match self {
            Phase::Train(rng) => Phase::Train(rng),
            Phase::Eval => Phase::Eval,
        }
    }

    pub fn is_training(&self) -> bool {
        matches!(self, Phase::Train(_))
    }
}

/// Fully connected layer: y = x·W + b.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

pub struct DenseCache {
    x: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Glorot-uniform initialisation.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = Array2::from_shape_fn((in_dim, out_dim), |_| rng.gen_range(-limit..limit));
        Dense {
            w,
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, DenseCache) {
        let mut y = mm_nn(x, self.w.view());
        add_bias(&mut y, &self.b);
        (
            y,
            DenseCache {
                x: x.to_owned(),
            },
        )
    }

    pub fn backward(
        &self,
        cache: &DenseCache,
        dy: ArrayView2<f64>,
        grads: &mut DenseGrads,
    ) -> Array2<f64> {
        grads.w += &mm_tn(cache.x.view(), dy);
        grads.b += &col_sum(&dy);
        mm_nt(dy, self.w.view())
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

/// Elementwise max(x, 0). Returns output; the backward pass masks on the
/// output, so the gradient at exactly 0 is 0.
pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn relu_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for (d, yv) in dx.iter_mut().zip(y.iter()) {
        if *yv <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Inverted dropout: kept units are rescaled by 1/(1-rate) so inference
/// needs no correction.
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    /// Applies dropout in place when training with rate > 0; returns the mask
    /// for the backward pass (None means identity).
    pub fn forward(&self, x: &mut Array2<f64>, phase: &mut Phase) -> Option<Array2<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        match phase {
            Phase::Eval => None,
            Phase::Train(rng) => {
                let keep = 1.0 - self.rate;
                let scale = 1.0 / keep;
                let mask =
                    Array2::from_shape_fn(x.raw_dim(), |_| {
                        if rng.gen::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    });
                *x *= &mask;
                Some(mask)
            }
        }
    }

    pub fn backward(mask: &Option<Array2<f64>>, dy: &Array2<f64>) -> Array2<f64> {
        match mask {
            None => dy.clone(),
            Some(m) => dy * m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn dense_shapes_and_bias() {
        let mut rng = stream_rng(0, "dense");
        let mut layer = Dense::new(3, 2, &mut rng);
        layer.b = ndarray::array![1.0, -1.0];
        let x = Array2::zeros((4, 3));
        let (y, _) = layer.forward(x.view());
        assert_eq!(y.dim(), (4, 2));
        for row in y.rows() {
            assert_eq!(row[0], 1.0);
            assert_eq!(row[1], -1.0);
        }
    }

    #[test]
    fn dropout_eval_is_identity() {
        let d = Dropout { rate: 0.5 };
        let mut x = Array2::from_elem((2, 2), 3.0);
        let orig = x.clone();
        let mask = d.forward(&mut x, &mut Phase::Eval);
        assert!(mask.is_none());
        assert_eq!(x, orig);
    }

    #[test]
    fn dropout_train_masks_and_scales() {
        let d = Dropout { rate: 0.5 };
        let mut rng = stream_rng(3, "dropout");
        let mut x = Array2::from_elem((50, 50), 1.0);
        d.forward(&mut x, &mut Phase::Train(&mut rng));
        let kept = x.iter().filter(|v| **v != 0.0).count();
        assert!(kept > 900 && kept < 1600, "kept {kept}");
        for v in x.iter().filter(|v| **v != 0.0) {
            assert_eq!(*v, 2.0);
        }
    }
}
