//! Deterministic dense kernels.
//!
//! All matrix products are computed with a fixed per-element summation order
//! (plain `k`-major accumulation), so results are bit-identical regardless of
//! thread count, batch size or how the surrounding computation is chunked.
//! That property is load-bearing: the streaming change-point simulator must
//! reproduce batched predictions exactly, and reruns with the same seed must
//! produce byte-identical artifacts.
//!
//! Parallelism only ever splits work along independent output rows (or, for
//! transposed products, along fixed-size input chunks whose partial results
//! are reduced in a fixed order), which leaves the arithmetic untouched.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

/// Rows per parallel work unit. Fixed so chunk boundaries (and therefore
/// partial-sum grouping in [`mm_tn`]) never depend on the machine.
const ROW_CHUNK: usize = 64;

/// C = A·B for A (m,k), B (k,n).
pub fn mm_nn(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(k, kb, "mm_nn: inner dims {k} vs {kb}");
    let a = as_slice(&a);
    let b = as_slice(&b);
    let mut c = vec![0.0; m * n];
    c.par_chunks_mut(ROW_CHUNK * n)
        .zip(a.par_chunks(ROW_CHUNK * k))
        .for_each(|(c_chunk, a_chunk)| {
            let rows = c_chunk.len() / n;
            for i in 0..rows {
                let a_row = &a_chunk[i * k..(i + 1) * k];
                let c_row = &mut c_chunk[i * n..(i + 1) * n];
                for (kk, &aik) in a_row.iter().enumerate() {
                    if aik != 0.0 {
                        let b_row = &b[kk * n..(kk + 1) * n];
                        for (cv, bv) in c_row.iter_mut().zip(b_row) {
                            *cv += aik * *bv;
                        }
                    }
                }
            }
        });
    Array2::from_shape_vec((m, n), c).unwrap()
}

/// C = A·Bᵀ for A (m,k), B (n,k).
///
/// B is transposed into a scratch copy first; it is always the small operand
/// here (a weight matrix).
pub fn mm_nt(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let bt = transpose(&b);
    mm_nn(a, bt.view())
}

/// C = Aᵀ·B for A (k,m), B (k,n).
///
/// Used for parameter gradients (activationᵀ · output-gradient). The `k`
/// dimension is split into fixed-size chunks; per-chunk partial products are
/// accumulated in chunk order so the result does not depend on thread count.
pub fn mm_tn(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (k, m) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(k, kb, "mm_tn: inner dims {k} vs {kb}");
    let a = as_slice(&a);
    let b = as_slice(&b);

    const K_CHUNK: usize = 256;
    let partials: Vec<Vec<f64>> = a
        .par_chunks(K_CHUNK * m)
        .zip(b.par_chunks(K_CHUNK * n))
        .map(|(a_chunk, b_chunk)| {
            let rows = a_chunk.len() / m;
            let mut p = vec![0.0; m * n];
            for kk in 0..rows {
                let a_row = &a_chunk[kk * m..(kk + 1) * m];
                let b_row = &b_chunk[kk * n..(kk + 1) * n];
                for (i, &aki) in a_row.iter().enumerate() {
                    if aki != 0.0 {
                        let p_row = &mut p[i * n..(i + 1) * n];
                        for (pv, bv) in p_row.iter_mut().zip(b_row) {
                            *pv += aki * *bv;
                        }
                    }
                }
            }
            p
        })
        .collect();

    let mut c = vec![0.0; m * n];
    for p in &partials {
        for (cv, pv) in c.iter_mut().zip(p) {
            *cv += *pv;
        }
    }
    Array2::from_shape_vec((m, n), c).unwrap()
}

pub fn transpose(a: &ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = a.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..m {
        for j in 0..n {
            out[(j, i)] = a[(i, j)];
        }
    }
    out
}

/// y += bias broadcast over rows.
pub fn add_bias(y: &mut Array2<f64>, bias: &Array1<f64>) {
    let n = y.ncols();
    assert_eq!(n, bias.len());
    let b = bias.as_slice().unwrap();
    for mut row in y.rows_mut() {
        let r = row.as_slice_mut().unwrap();
        for (rv, bv) in r.iter_mut().zip(b) {
            *rv += *bv;
        }
    }
}

/// Column sums (bias gradient).
pub fn col_sum(a: &ArrayView2<f64>) -> Array1<f64> {
    let n = a.ncols();
    let mut out = Array1::zeros(n);
    let o = out.as_slice_mut().unwrap();
    for row in a.rows() {
        for (ov, av) in o.iter_mut().zip(row.as_slice().unwrap()) {
            *ov += *av;
        }
    }
    out
}

/// In-place row-wise softmax with max subtraction.
pub fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let r = row.as_slice_mut().unwrap();
        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in r.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row-wise softmax: given `s = softmax(x)` and `ds`,
/// returns `dx = s ⊙ (ds − rowsum(ds ⊙ s))`.
pub fn softmax_rows_backward(s: &ArrayView2<f64>, ds: &ArrayView2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(s.raw_dim());
    for ((s_row, ds_row), mut dx_row) in s.rows().into_iter().zip(ds.rows()).zip(dx.rows_mut()) {
        let dot: f64 = s_row
            .iter()
            .zip(ds_row.iter())
            .map(|(a, b)| a * b)
            .sum();
        for ((dv, sv), dsv) in dx_row.iter_mut().zip(s_row.iter()).zip(ds_row.iter()) {
            *dv = sv * (dsv - dot);
        }
    }
    dx
}

fn as_slice<'a>(a: &'a ArrayView2<f64>) -> &'a [f64] {
    a.as_slice()
        .expect("kernel inputs must be standard (row-major contiguous) layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn naive_mm(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (m, k) = a.dim();
        let n = b.ncols();
        let mut c = Array2::zeros((m, n));
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a[(i, kk)] * b[(kk, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    fn random_mat(m: usize, n: usize, seed: u64) -> Array2<f64> {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, "linalg-test");
        Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn mm_nn_matches_naive() {
        for (m, k, n, seed) in [(3, 4, 5, 1), (130, 17, 9, 2), (1, 1, 1, 3), (257, 64, 32, 4)] {
            let a = random_mat(m, k, seed);
            let b = random_mat(k, n, seed + 100);
            let c = mm_nn(a.view(), b.view());
            let expect = naive_mm(&a, &b);
            for (x, y) in c.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mm_tn_matches_naive() {
        for (k, m, n, seed) in [(4, 3, 5, 1), (600, 8, 7, 2), (257, 16, 16, 9)] {
            let a = random_mat(k, m, seed);
            let b = random_mat(k, n, seed + 50);
            let c = mm_tn(a.view(), b.view());
            let expect = naive_mm(&transpose(&a.view()), &b);
            for (x, y) in c.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mm_nt_matches_naive() {
        let a = random_mat(7, 11, 1);
        let b = random_mat(5, 11, 2);
        let c = mm_nt(a.view(), b.view());
        let expect = naive_mm(&a, &transpose(&b.view()));
        for (x, y) in c.iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    /// Row results must not depend on which rows accompany them in a batch:
    /// computing one row alone gives the same bits as computing it inside a
    /// large product.
    #[test]
    fn mm_nn_rows_independent_of_batch() {
        let a = random_mat(200, 33, 5);
        let b = random_mat(33, 21, 6);
        let full = mm_nn(a.view(), b.view());
        for i in [0usize, 1, 63, 64, 65, 199] {
            let row = a.row(i).insert_axis(ndarray::Axis(0));
            let single = mm_nn(row.view(), b.view());
            assert_eq!(single.row(0).to_vec(), full.row(i).to_vec(), "row {i}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut a = array![[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        softmax_rows(&mut a);
        for row in a.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
