//! Contrastive losses.
//!
//! Three objectives over a batch of projector embeddings:
//!
//! * [`nt_xent`] — the pairwise normalised temperature-scaled cross entropy,
//!   for batches arranged as explicit positive pairs.
//! * [`supcon_separate`] — the supervised contrastive loss written over
//!   per-view groups: the outer sum runs over instances and views, averaged
//!   by `1/n_v`, while positives and the denominator are drawn from the
//!   full multi-view pool.
//! * [`supcon_simplified`] — the flat-batch form: every view is treated as
//!   an instance of its own class label and the `1/n_v` factor is dropped.
//!
//! The two supervised forms are provably proportional:
//! `supcon_separate == supcon_simplified / n_v` (exactly, up to floating
//! point), and the same holds for their gradients. The test-suite checks the
//! identity numerically over randomized batches; the implementations are
//! deliberately independent code paths so the check is meaningful.
//!
//! Numerical conventions, applied uniformly:
//! * cosine similarity normalises inside the loss; an all-zero embedding has
//!   similarity 0 to everything, contributes no normalisation gradient and
//!   is counted in the diagnostics;
//! * per-anchor max subtraction before exponentiation (log-sum-exp);
//! * self-similarity is excluded by skipping the diagonal index, never by a
//!   large negative constant;
//! * anchors with no positive partner contribute 0 and are counted in the
//!   diagnostics (their `1/|P|` factor is undefined).

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::neural::linalg::mm_nt;

/// Similarity measure between embedding vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Cosine,
    Dot,
}

/// sim(a, b) under the chosen measure. Cosine of a zero vector is defined
/// as 0 so the loss stays finite.
pub fn similarity(a: ArrayView1<f64>, b: ArrayView1<f64>, kind: Similarity) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    match kind {
        Similarity::Dot => dot,
        Similarity::Cosine => {
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        }
    }
}

/// A flattened batch of embeddings with class labels: the unit consumed by
/// the loss functions. `n_views` records how many views each underlying
/// instance contributed (the flat row count is `bn · n_views`).
#[derive(Debug, Clone)]
pub struct SupConBatch {
    pub embeddings: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_views: usize,
    pub temperature: f64,
    pub similarity: Similarity,
}

impl SupConBatch {
    pub fn new(
        embeddings: Array2<f64>,
        labels: Vec<usize>,
        n_views: usize,
        temperature: f64,
        similarity: Similarity,
    ) -> Result<Self> {
        let n = embeddings.nrows();
        if n < 2 {
            return Err(Error::config("batch needs at least 2 rows"));
        }
        if labels.len() != n {
            return Err(Error::config(format!(
                "{} rows but {} labels",
                n,
                labels.len()
            )));
        }
        if temperature <= 0.0 {
            return Err(Error::config("temperature must be positive"));
        }
        if n_views == 0 || n % n_views != 0 {
            return Err(Error::config(format!(
                "row count {n} is not a multiple of n_views {n_views}"
            )));
        }
        Ok(SupConBatch {
            embeddings,
            labels,
            n_views,
            temperature,
            similarity,
        })
    }
}

/// Counters for the degenerate cases the loss definitions leave open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LossDiagnostics {
    /// Anchors whose positive set was empty (skipped, contributing 0).
    pub anchors_without_positives: usize,
    /// Embedding rows with zero norm under cosine similarity.
    pub zero_norm_rows: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub value: f64,
    pub diagnostics: LossDiagnostics,
}

/// Rows normalised for the similarity in use. For cosine, zero rows stay
/// zero (similarity 0 by convention); for dot, rows pass through.
fn normalized_rows(z: &Array2<f64>, sim: Similarity) -> (Array2<f64>, Array1<f64>, usize) {
    let n = z.nrows();
    let mut norms = Array1::zeros(n);
    match sim {
        Similarity::Dot => (z.clone(), norms, 0),
        Similarity::Cosine => {
            let mut u = z.clone();
            let mut zero = 0;
            for (i, mut row) in u.rows_mut().into_iter().enumerate() {
                let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                norms[i] = norm;
                if norm == 0.0 {
                    zero += 1;
                } else {
                    row.mapv_inplace(|v| v / norm);
                }
            }
            (u, norms, zero)
        }
    }
}

/// Chains a gradient w.r.t. normalised rows back to the raw embeddings:
/// `dz_i = (du_i − (u_i·du_i)·u_i) / ‖z_i‖`, with zero-norm rows receiving
/// zero gradient.
fn backprop_normalization(
    du: &Array2<f64>,
    u: &Array2<f64>,
    norms: &Array1<f64>,
    sim: Similarity,
) -> Array2<f64> {
    match sim {
        Similarity::Dot => du.clone(),
        Similarity::Cosine => {
            let mut dz = Array2::zeros(du.raw_dim());
            for i in 0..du.nrows() {
                let norm = norms[i];
                if norm == 0.0 {
                    continue;
                }
                let u_row = u.row(i);
                let du_row = du.row(i);
                let proj: f64 = u_row.iter().zip(du_row.iter()).map(|(a, b)| a * b).sum();
                for ((dzv, duv), uv) in dz
                    .row_mut(i)
                    .iter_mut()
                    .zip(du_row.iter())
                    .zip(u_row.iter())
                {
                    *dzv = (duv - proj * uv) / norm;
                }
            }
            dz
        }
    }
}

/// NT-Xent over explicit positive pairs: `pair[i]` is the index of row i's
/// partner and the map must be a perfect matching on the batch.
pub fn nt_xent(batch: &SupConBatch, pair: &[usize]) -> Result<f64> {
    Ok(nt_xent_impl(batch, pair, false)?.0.value)
}

/// NT-Xent with its gradient with respect to the raw embeddings.
pub fn nt_xent_with_grad(batch: &SupConBatch, pair: &[usize]) -> Result<(LossValue, Array2<f64>)> {
    let (value, grad) = nt_xent_impl(batch, pair, true)?;
    Ok((value, grad.expect("gradient requested")))
}

fn nt_xent_impl(
    batch: &SupConBatch,
    pair: &[usize],
    want_grad: bool,
) -> Result<(LossValue, Option<Array2<f64>>)> {
    let n = batch.embeddings.nrows();
    if pair.len() != n {
        return Err(Error::config("pair map length must equal batch size"));
    }
    if n % 2 != 0 {
        return Err(Error::config("pair batches must have even row count"));
    }
    for (i, &j) in pair.iter().enumerate() {
        if j >= n || j == i || pair[j] != i {
            return Err(Error::config(format!("row {i} is not perfectly matched")));
        }
    }

    let tau = batch.temperature;
    let (u, norms, zero_rows) = normalized_rows(&batch.embeddings, batch.similarity);
    let sims = mm_nt(u.view(), u.view());

    let mut loss = 0.0;
    let mut g = want_grad.then(|| Array2::zeros((n, n)));
    for i in 0..n {
        let row = sims.row(i);
        let mut max = f64::NEG_INFINITY;
        for k in 0..n {
            if k != i {
                max = max.max(row[k] / tau);
            }
        }
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (row[k] / tau - max).exp();
            }
        }
        let log_denom = max + denom.ln();
        loss += -(row[pair[i]] / tau - log_denom);

        if let Some(g) = g.as_mut() {
            for k in 0..n {
                if k == i {
                    continue;
                }
                let alpha = (row[k] / tau - max).exp() / denom;
                let indicator = if k == pair[i] { 1.0 } else { 0.0 };
                g[(i, k)] = (alpha - indicator) / tau;
            }
        }
    }

    let diagnostics = LossDiagnostics {
        anchors_without_positives: 0,
        zero_norm_rows: zero_rows,
    };
    let grad = g.map(|g| {
        // dL/du_r = Σ_k g[r,k]·u_k + Σ_i g[i,r]·u_i = (g + gᵀ)·u.
        let mut du = crate::neural::linalg::mm_nn(g.view(), u.view());
        du += &crate::neural::linalg::mm_tn(g.view(), u.view());
        backprop_normalization(&du, &u, &norms, batch.similarity)
    });
    Ok((
        LossValue {
            value: loss,
            diagnostics,
        },
        grad,
    ))
}

/// Supervised contrastive loss in the separate-views form: one embedding
/// matrix per view (each `bn × d`), one label per underlying instance. The
/// outer sum runs over instances and views and is averaged by `1/n_v`;
/// positives and denominators span the entire multi-view pool.
pub fn supcon_separate(
    views: &[Array2<f64>],
    labels: &[usize],
    temperature: f64,
    sim: Similarity,
) -> Result<LossValue> {
    Ok(supcon_separate_impl(views, labels, temperature, sim, false)?.0)
}

/// Separate-views loss with the gradient for every view (same shapes as the
/// inputs).
pub fn supcon_separate_with_grad(
    views: &[Array2<f64>],
    labels: &[usize],
    temperature: f64,
    sim: Similarity,
) -> Result<(LossValue, Vec<Array2<f64>>)> {
    let (value, grads) = supcon_separate_impl(views, labels, temperature, sim, true)?;
    Ok((value, grads.expect("gradient requested")))
}

fn supcon_separate_impl(
    views: &[Array2<f64>],
    labels: &[usize],
    temperature: f64,
    sim: Similarity,
    want_grad: bool,
) -> Result<(LossValue, Option<Vec<Array2<f64>>>)> {
    let n_views = views.len();
    if n_views == 0 {
        return Err(Error::config("need at least one view"));
    }
    let bn = views[0].nrows();
    let d = views[0].ncols();
    if views.iter().any(|v| v.nrows() != bn || v.ncols() != d) {
        return Err(Error::config("all views must have identical shape"));
    }
    if labels.len() != bn {
        return Err(Error::config("one label per instance required"));
    }
    if bn * n_views < 2 {
        return Err(Error::config("pooled batch needs at least 2 rows"));
    }
    if temperature <= 0.0 {
        return Err(Error::config("temperature must be positive"));
    }

    // Pool rows view-major: pooled index q·bn + i holds view q of instance i.
    let n = bn * n_views;
    let mut pooled = Array2::zeros((n, d));
    for (q, view) in views.iter().enumerate() {
        pooled
            .slice_mut(ndarray::s![q * bn..(q + 1) * bn, ..])
            .assign(view);
    }
    let (u, norms, zero_rows) = normalized_rows(&pooled, sim);
    let inv_nv = 1.0 / n_views as f64;
    let tau = temperature;

    let mut loss = 0.0;
    let mut skipped = 0usize;
    let mut du = want_grad.then(|| Array2::<f64>::zeros((n, d)));

    // Literal nested evaluation: instances outer, views inner, each anchor
    // term averaged by 1/n_v. Similarities are computed per anchor.
    let mut sims_row = vec![0.0; n];
    for inst in 0..bn {
        for q in 0..n_views {
            let a = q * bn + inst;
            let ua = u.row(a);
            for k in 0..n {
                sims_row[k] = ua
                    .iter()
                    .zip(u.row(k).iter())
                    .map(|(x, y)| x * y)
                    .sum::<f64>();
            }

            let positives: Vec<usize> = (0..n)
                .filter(|&p| p != a && labels[p % bn] == labels[inst])
                .collect();
            if positives.is_empty() {
                skipped += 1;
                continue;
            }

            let mut max = f64::NEG_INFINITY;
            for k in 0..n {
                if k != a {
                    max = max.max(sims_row[k] / tau);
                }
            }
            let mut denom = 0.0;
            for k in 0..n {
                if k != a {
                    denom += (sims_row[k] / tau - max).exp();
                }
            }
            let log_denom = max + denom.ln();

            let p_count = positives.len() as f64;
            let mut anchor_loss = 0.0;
            for &p in &positives {
                anchor_loss += -(sims_row[p] / tau - log_denom);
            }
            loss += inv_nv * anchor_loss / p_count;

            if let Some(du) = du.as_mut() {
                // dL/ds_ak = inv_nv · (alpha_ak − 1_{k∈P}/|P|) / tau.
                for k in 0..n {
                    if k == a {
                        continue;
                    }
                    let alpha = (sims_row[k] / tau - max).exp() / denom;
                    let member = if labels[k % bn] == labels[inst] { 1.0 } else { 0.0 };
                    let gak = inv_nv * (alpha - member / p_count) / tau;
                    if gak != 0.0 {
                        // dL/du_a += g·u_k ; dL/du_k += g·u_a.
                        for (dua, ukv) in du.row_mut(a).iter_mut().zip(u.row(k).iter()) {
                            *dua += gak * *ukv;
                        }
                        for (duk, uav) in du.row_mut(k).iter_mut().zip(ua.iter()) {
                            *duk += gak * *uav;
                        }
                    }
                }
            }
        }
    }

    let grads = du.map(|du| {
        let dz = backprop_normalization(&du, &u, &norms, sim);
        (0..n_views)
            .map(|q| dz.slice(ndarray::s![q * bn..(q + 1) * bn, ..]).to_owned())
            .collect()
    });
    Ok((
        LossValue {
            value: loss,
            diagnostics: LossDiagnostics {
                anchors_without_positives: skipped,
                zero_norm_rows: zero_rows,
            },
        },
        grads,
    ))
}

/// Simplified supervised contrastive loss: one flat sum over all rows as
/// anchors, positives being the same-label rows, without the `1/n_v` factor.
pub fn supcon_simplified(batch: &SupConBatch) -> Result<LossValue> {
    Ok(supcon_simplified_impl(batch, false)?.0)
}

/// Simplified loss with its gradient with respect to the raw embeddings.
pub fn supcon_simplified_with_grad(batch: &SupConBatch) -> Result<(LossValue, Array2<f64>)> {
    let (value, grad) = supcon_simplified_impl(batch, true)?;
    Ok((value, grad.expect("gradient requested")))
}

fn supcon_simplified_impl(
    batch: &SupConBatch,
    want_grad: bool,
) -> Result<(LossValue, Option<Array2<f64>>)> {
    let n = batch.embeddings.nrows();
    let d = batch.embeddings.ncols();
    let tau = batch.temperature;
    let (u, norms, zero_rows) = normalized_rows(&batch.embeddings, batch.similarity);
    // One N×N similarity pass, then a single flat sweep over anchors.
    let sims = mm_nt(u.view(), u.view());

    let mut loss = 0.0;
    let mut skipped = 0usize;
    let mut g = want_grad.then(|| Array2::<f64>::zeros((n, n)));

    for a in 0..n {
        let row = sims.row(a);
        let label = batch.labels[a];
        let mut p_count = 0usize;
        for k in 0..n {
            if k != a && batch.labels[k] == label {
                p_count += 1;
            }
        }
        if p_count == 0 {
            skipped += 1;
            continue;
        }

        let mut max = f64::NEG_INFINITY;
        for k in 0..n {
            if k != a {
                max = max.max(row[k] / tau);
            }
        }
        let mut denom = 0.0;
        for k in 0..n {
            if k != a {
                denom += (row[k] / tau - max).exp();
            }
        }
        let log_denom = max + denom.ln();

        let mut anchor_loss = 0.0;
        for k in 0..n {
            if k != a && batch.labels[k] == label {
                anchor_loss += -(row[k] / tau - log_denom);
            }
        }
        loss += anchor_loss / p_count as f64;

        if let Some(g) = g.as_mut() {
            for k in 0..n {
                if k == a {
                    continue;
                }
                let alpha = (row[k] / tau - max).exp() / denom;
                let member = if batch.labels[k] == label { 1.0 } else { 0.0 };
                g[(a, k)] = (alpha - member / p_count as f64) / tau;
            }
        }
    }

    let grad = g.map(|g| {
        let mut du = Array2::<f64>::zeros((n, d));
        // dL/du_r = Σ_k g[r,k]·u_k + Σ_i g[i,r]·u_i.
        for r in 0..n {
            for k in 0..n {
                let grk = g[(r, k)];
                if grk != 0.0 {
                    for (duv, ukv) in du.row_mut(r).iter_mut().zip(u.row(k).iter()) {
                        *duv += grk * *ukv;
                    }
                }
                let gkr = g[(k, r)];
                if gkr != 0.0 {
                    for (duv, ukv) in du.row_mut(r).iter_mut().zip(u.row(k).iter()) {
                        *duv += gkr * *ukv;
                    }
                }
            }
        }
        backprop_normalization(&du, &u, &norms, batch.similarity)
    });

    Ok((
        LossValue {
            value: loss,
            diagnostics: LossDiagnostics {
                anchors_without_positives: skipped,
                zero_norm_rows: zero_rows,
            },
        },
        grad,
    ))
}
