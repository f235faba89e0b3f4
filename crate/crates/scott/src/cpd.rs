//! Online change-point detection over sliding windows.
//!
//! A stream is consumed through a window of length `lambda` advanced one
//! step per incoming point; the window's class is the class of its final
//! point. Prepending `lambda - 1` synthetic points lets every original point
//! be the final point of some window, so a stream of length L yields exactly
//! L windows and the simulator emits one prediction per point, each a pure
//! function of the data seen so far.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augmentation::{augment_cpd_slice, oversample_with, AugmentKind};
use crate::data::{pad_series, LabeledDataset, PaddingKind, PaddingSpec, SplitTag, TimeSeries};
use crate::error::{Error, Result};
use crate::model::{batch_matrix, ScottModel, TrainStage};
use crate::rng;

/// Sliding-window geometry and the peak-drop threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    /// Window length λ.
    pub lambda: usize,
    /// Protected tail length β (never augmented).
    pub beta: usize,
    /// Relative drop from the running peak that defines a change state.
    pub threshold: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            lambda: 150,
            beta: 50,
            threshold: 0.30,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beta == 0 || self.beta >= self.lambda {
            return Err(Error::config(format!(
                "need 0 < beta < lambda, got beta={} lambda={}",
                self.beta, self.lambda
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold must be in (0,1)"));
        }
        Ok(())
    }

    /// Padding count that aligns windows with original points.
    pub fn padding_count(&self) -> usize {
        self.lambda - 1
    }
}

/// All λ-length windows of an already padded, labelled stream, each with the
/// class of its final point. A stream padded from original length L yields
/// exactly L windows.
pub fn sliding_windows(padded: &TimeSeries, spec: &WindowSpec) -> Result<Vec<(TimeSeries, u8)>> {
    spec.validate()?;
    if padded.len() < spec.lambda {
        return Err(Error::config(format!(
            "series of length {} is shorter than the window {}",
            padded.len(),
            spec.lambda
        )));
    }
    let labels = padded
        .point_labels()
        .ok_or_else(|| Error::config("windowing requires per-point labels"))?;
    let original_len = padded.len() - spec.padding_count();
    let mut out = Vec::with_capacity(original_len);
    for i in 0..original_len {
        let values = padded.values()[i..i + spec.lambda].to_vec();
        let label = labels[i + spec.lambda - 1];
        out.push((TimeSeries::new(values)?, label));
    }
    Ok(out)
}

/// Peak-relative drop labelling: `label[t] = 1` iff
/// `(peak_{<=t} - x[t]) / peak_{<=t} >= threshold` with the running maximum
/// as peak. The comparison is inclusive ("reaches the threshold"). Causal by
/// construction. Requires positive amplitudes.
pub fn label_by_drop(series: &TimeSeries, threshold: f64) -> Result<Vec<u8>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config("threshold must be in (0,1)"));
    }
    let mut labels = Vec::with_capacity(series.len());
    let mut peak = f64::NEG_INFINITY;
    for &v in series.values() {
        if v <= 0.0 {
            return Err(Error::config(format!(
                "drop labelling requires positive amplitudes, got {v}"
            )));
        }
        peak = peak.max(v);
        let drop = (peak - v) / peak;
        labels.push(u8::from(drop >= threshold));
    }
    Ok(labels)
}

/// Moves the start of every maximal run of 1s earlier by `shift` steps
/// (clamped at 0); runs closer than `shift` merge. Never decreases the
/// number of 1-labels.
pub fn shift_boundary(labels: &[u8], shift: usize) -> Vec<u8> {
    let mut out = labels.to_vec();
    let mut t = 0;
    while t < labels.len() {
        if labels[t] == 1 && (t == 0 || labels[t - 1] == 0) {
            let start = t.saturating_sub(shift);
            for v in &mut out[start..t] {
                *v = 1;
            }
        }
        t += 1;
    }
    out
}

/// The O(λ) online state: a ring buffer of the most recent λ values plus a
/// running peak tracker and step counter.
#[derive(Debug, Clone)]
pub struct StreamState {
    buffer: VecDeque<f64>,
    capacity: usize,
    peak: f64,
    step: usize,
}

impl StreamState {
    pub fn new(lambda: usize) -> Self {
        StreamState {
            buffer: VecDeque::with_capacity(lambda),
            capacity: lambda,
            peak: f64::NEG_INFINITY,
            step: 0,
        }
    }

    /// Appends an incoming value, evicting the oldest when full.
    pub fn push(&mut self, value: f64) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(value);
        self.peak = self.peak.max(value);
        self.step += 1;
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Running maximum over everything pushed so far.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// The current window contents, oldest first.
    pub fn window(&self) -> Vec<f64> {
        self.buffer.iter().cloned().collect()
    }
}

/// One per-point streaming prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamAnnotation {
    pub t: usize,
    pub value: f64,
    /// Classifier probability of the change class.
    pub probability: f64,
    /// probability >= 0.5.
    pub prediction: bool,
}

/// Replays a raw stream against a trained model: pads with λ−1 points (drawn
/// once from the padding spec under the given seed), then emits one
/// annotation per original point in stream order. The prediction at step t
/// is a pure function of the points up to t.
pub fn simulate_stream(
    model: &ScottModel,
    series: &TimeSeries,
    spec: &WindowSpec,
    padding_kind: PaddingKind,
    seed: u64,
) -> Result<Vec<StreamAnnotation>> {
    spec.validate()?;
    if model.meta.stage != TrainStage::FullyTrained {
        return Err(Error::Untrained(
            "stream simulation requires a fully trained model".into(),
        ));
    }
    if model.meta.classes != 2 {
        return Err(Error::config(
            "stream simulation requires a binary change/no-change model",
        ));
    }

    let padding = PaddingSpec {
        kind: padding_kind,
        count: spec.padding_count(),
    };
    let mut pad_rng = rng::stream_rng(seed, "stream-padding");
    let bare = TimeSeries::new(series.values().to_vec())?;
    let padded = pad_series(&bare, &padding, &mut pad_rng)?;

    let mut state = StreamState::new(spec.lambda);
    for &v in &padded.values()[..spec.padding_count()] {
        state.push(v);
    }

    let mut annotations = Vec::with_capacity(series.len());
    for (t, &v) in series.values().iter().enumerate() {
        state.push(v);
        debug_assert!(state.is_full() && state.len() == spec.lambda);
        let window = state.window();
        let mut batch = Array2::zeros((1, spec.lambda));
        for (j, w) in window.iter().enumerate() {
            batch[(0, j)] = *w;
        }
        let probs = model.predict_proba(&batch)?;
        let probability = probs[(0, 1)];
        annotations.push(StreamAnnotation {
            t,
            value: v,
            probability,
            prediction: probability >= 0.5,
        });
    }
    Ok(annotations)
}

/// Probability of the change class for a set of prepared λ-windows,
/// evaluated in fixed-size batches.
pub fn predict_windows(model: &ScottModel, windows: &LabeledDataset) -> Result<Vec<f64>> {
    if model.meta.classes != 2 {
        return Err(Error::config("window scoring requires a binary model"));
    }
    let refs: Vec<&TimeSeries> = windows.series().iter().collect();
    let mut out = Vec::with_capacity(refs.len());
    for chunk in refs.chunks(256) {
        let batch = batch_matrix(chunk)?;
        let probs = model.predict_proba(&batch)?;
        for i in 0..chunk.len() {
            out.push(probs[(i, 1)]);
        }
    }
    Ok(out)
}

/// Whether a prepared dataset is a training set (augmented/oversampled) or a
/// test set (left byte-identical to the raw windows).
#[derive(Debug, Clone)]
pub enum CpdPrep {
    Train {
        oversample: bool,
        kinds: Vec<AugmentKind>,
    },
    Test,
}

/// Pads each labelled stream with λ−1 points, samples every window, labels
/// each by its final point, and (for training sets) balances classes with
/// tail-preserving augmented copies. Test windows are never altered.
pub fn prepare_cpd_dataset(
    streams: &[TimeSeries],
    spec: &WindowSpec,
    padding_kind: PaddingKind,
    prep: CpdPrep,
    seed: u64,
) -> Result<LabeledDataset> {
    spec.validate()?;
    if streams.is_empty() {
        return Err(Error::config("no streams supplied"));
    }
    let mut slices = Vec::new();
    let mut labels = Vec::new();
    for (si, stream) in streams.iter().enumerate() {
        let padding = PaddingSpec {
            kind: padding_kind.clone(),
            count: spec.padding_count(),
        };
        let mut pad_rng = rng::indexed_rng(seed, "cpd-pad", si as u64);
        let padded = pad_series(stream, &padding, &mut pad_rng)?;
        for (window, label) in sliding_windows(&padded, spec)? {
            slices.push(window);
            labels.push(label as usize);
        }
    }

    let split = match prep {
        CpdPrep::Train { .. } => SplitTag::Train,
        CpdPrep::Test => SplitTag::Test,
    };
    let dataset = LabeledDataset::from_labeled_series(slices, labels, 2, split)?;

    match prep {
        CpdPrep::Test => Ok(dataset),
        CpdPrep::Train { oversample, kinds } => {
            if !oversample {
                return Ok(dataset);
            }
            let kinds = if kinds.is_empty() {
                vec![AugmentKind::Jitter, AugmentKind::Permute]
            } else {
                kinds
            };
            let mut rng_ = rng::stream_rng(seed, "cpd-oversample");
            let beta = spec.beta;
            let mut counter = 0usize;
            oversample_with(&dataset, &mut rng_, |src, _kind, attempt, rng_| {
                if attempt > 4 {
                    // Constant heads defeat both operators; jitter the head
                    // with a small absolute sigma, keeping the tail intact.
                    let head_len = src.len() - beta;
                    let noise = crate::augmentation::absolute_floor_noise(src);
                    let mut values = src.values().to_vec();
                    for v in &mut values[..head_len] {
                        *v += rng::normal(rng_, 0.0, noise.sigma);
                    }
                    return TimeSeries::new(values);
                }
                let kind = kinds[counter % kinds.len()];
                counter += 1;
                augment_cpd_slice(src, beta, kind, rng_)
            })
        }
    }
}
