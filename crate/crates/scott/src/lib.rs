//! Supervised contrastive representation learning for univariate time series.
//!
//! The pipeline trains a temporal-transformer encoder (self-attention followed
//! by a stack of dilated causal convolutions with a residual bypass) under a
//! supervised contrastive loss, then fits a small MLP classifier on the frozen
//! representations. On top of the classifier sits an online change-point
//! detection harness: streams are consumed through a sliding window of length
//! `lambda` and every incoming point is classified as change / no-change the
//! moment it arrives.
//!
//! The crate is organised along the pipeline stages:
//!
//! * [`data`] — dataset ingestion (UCR tab-separated files), padding,
//!   stratified splits and a synthetic variance-change stream generator.
//! * [`augmentation`] — jitter / scale / permute / warp operators, the
//!   tail-preserving variant used for change-point windows, and
//!   augmentation-based oversampling.
//! * [`neural`] — the differentiable kernels (dense, multi-head attention,
//!   dilated causal convolution, dropout, softmax) with hand-written
//!   reverse-mode gradients and a finite-difference check harness.
//! * [`model`] — encoder, projector and classifier assembled from those
//!   kernels, plus checkpoint save/load.
//! * [`loss`] — NT-Xent, the per-view supervised contrastive loss and its
//!   simplified flat-batch form, together with their gradients.
//! * [`training`] — the two-stage training loop with plateau learning-rate
//!   halving and early stopping.
//! * [`cpd`] — sliding-window sampling, peak-drop labelling, boundary
//!   shifting for early detection and the stream-replay simulator.
//! * [`metrics`] — accuracy, AUROC, AUPRC and thresholded precision/recall.
//!
//! All randomness flows from explicit seeds; there is no wall-clock seeding
//! anywhere. With a fixed seed every public operation is bit-reproducible,
//! including the parallel code paths (see [`neural::linalg`]).
//!
//! A narrative guide with worked examples lives in the `book/` directory of
//! the repository; its code snippets are compiled and run as part of this
//! crate's doc-tests.

pub mod augmentation;
pub mod cpd;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

/// Tolerances used by the verification harnesses, defined once.
pub mod tol {
    /// Maximum relative error accepted when comparing analytic gradients to
    /// central finite differences.
    pub const GRAD_MAX_REL: f64 = 1e-4;
    /// Tolerance for the separate-views / flat-batch loss equivalence.
    pub const LOSS_EQUIV: f64 = 1e-8;
    /// Tolerance for the corresponding gradient equivalence.
    pub const GRAD_EQUIV: f64 = 1e-7;
    /// Tolerance for comparing a loss against its brute-force oracle.
    pub const ORACLE: f64 = 1e-10;
}

#[cfg(doctest)]
pub mod book {
    //! Runs every code snippet in the mdbook guide as a doc-test so the book
    //! can never drift out of sync with the library.

    #[doc = include_str!("../../../book/src/augmentation.md")]
    pub mod augmentation {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    pub mod encoder {}
    #[doc = include_str!("../../../book/src/losses.md")]
    pub mod losses {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/cpd.md")]
    pub mod cpd {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
