//! Dataset ingestion, padding, splitting and synthetic stream generation.
//!
//! The on-disk container is the UCR tab-separated layout: one instance per
//! line, first field the raw class label, remaining fields the values. Raw
//! labels are remapped to contiguous integers `0..C` in ascending order of
//! the raw value; the originals are kept in [`LabeledDataset::raw_labels`].
//! Values are written back with 9 significant digits, so a save/load round
//! trip reproduces a dataset to that precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

/// A finite real-valued sequence, optionally with a binary per-point label
/// (used by the change-point pipeline).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("time series must have length >= 1"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("time series value {v}")));
        }
        Ok(TimeSeries {
            values,
            labels: None,
        })
    }

    pub fn with_labels(values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::config(format!(
                "{} values but {} labels",
                values.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::config("per-point labels must be binary"));
        }
        let mut ts = TimeSeries::new(values)?;
        ts.labels = Some(labels);
        Ok(ts)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point_labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// Per-series z-normalisation (optional experimentation path; the
    /// pipeline default feeds raw values to the encoder).
    pub fn z_normalized(&self) -> TimeSeries {
        let m = self.mean();
        let s = self.std();
        let denom = if s > 0.0 { s } else { 1.0 };
        TimeSeries {
            values: self.values.iter().map(|v| (v - m) / denom).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Which half of a dataset a split holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SplitTag {
    Train,
    Test,
}

/// Equal-length series with contiguous integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    series: Vec<TimeSeries>,
    labels: Vec<usize>,
    raw_labels: Vec<f64>,
    class_count: usize,
    split: SplitTag,
}

impl LabeledDataset {
    /// `raw_labels` maps each class index to the label value it was remapped
    /// from (identity when the data never lived in a file).
    pub fn new(
        series: Vec<TimeSeries>,
        labels: Vec<usize>,
        raw_labels: Vec<f64>,
        split: SplitTag,
    ) -> Result<Self> {
        if series.len() != labels.len() {
            return Err(Error::config(format!(
                "{} series but {} labels",
                series.len(),
                labels.len()
            )));
        }
        if series.is_empty() {
            return Err(Error::config("dataset must not be empty"));
        }
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(Error::config("all series must have equal length"));
        }
        let class_count = raw_labels.len();
        if class_count == 0 {
            return Err(Error::config("class count must be positive"));
        }
        if labels.iter().any(|&l| l >= class_count) {
            return Err(Error::config("label out of range"));
        }
        if split == SplitTag::Train {
            for c in 0..class_count {
                if !labels.contains(&c) {
                    return Err(Error::config(format!(
                        "class {c} missing from the train split"
                    )));
                }
            }
        }
        Ok(LabeledDataset {
            series,
            labels,
            raw_labels,
            class_count,
            split,
        })
    }

    pub fn from_labeled_series(
        series: Vec<TimeSeries>,
        labels: Vec<usize>,
        class_count: usize,
        split: SplitTag,
    ) -> Result<Self> {
        let raw = (0..class_count).map(|c| c as f64).collect();
        LabeledDataset::new(series, labels, raw, split)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn raw_labels(&self) -> &[f64] {
        &self.raw_labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn series_len(&self) -> usize {
        self.series[0].len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn z_normalized(&self) -> LabeledDataset {
        LabeledDataset {
            series: self.series.iter().map(|s| s.z_normalized()).collect(),
            labels: self.labels.clone(),
            raw_labels: self.raw_labels.clone(),
            class_count: self.class_count,
            split: self.split,
        }
    }

    /// Subset by instance indices, keeping the class table. Used by splits.
    fn subset(&self, idx: &[usize], split: SplitTag) -> LabeledDataset {
        LabeledDataset {
            series: idx.iter().map(|&i| self.series[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            raw_labels: self.raw_labels.clone(),
            class_count: self.class_count,
            split,
        }
    }
}

/// How to synthesise the `count` points prepended by [`pad_series`].
#[derive(Debug, Clone, PartialEq)]
pub enum PaddingKind {
    /// Strictly increasing linear ramp ending just below the first value.
    RisingTrend,
    /// I.i.d. N(mean, std²) draws.
    Gaussian { mean: f64, std: f64 },
    /// Repeats the first value.
    EdgeReplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaddingSpec {
    pub kind: PaddingKind,
    pub count: usize,
}

impl PaddingSpec {
    pub fn validate(&self) -> Result<()> {
        if let PaddingKind::Gaussian { std, .. } = self.kind {
            if std <= 0.0 {
                return Err(Error::config("gaussian padding requires std > 0"));
            }
        }
        Ok(())
    }
}

/// Loads a UCR tab-separated file: `label<TAB>v1<TAB>v2...` per line.
pub fn load_ucr_tsv(path: impl AsRef<Path>, split: SplitTag) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_ucr_tsv(&text, split)
}

pub fn parse_ucr_tsv(text: &str, split: SplitTag) -> Result<LabeledDataset> {
    let mut raw_label_per_row = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let label_field = fields.next().unwrap_or("");
        let raw_label: f64 = label_field.trim().parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad label {label_field:?}"),
        })?;
        let mut values = Vec::new();
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Format {
                line: lineno + 1,
                msg: "row has a label but no values".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Format {
                    line: lineno + 1,
                    msg: format!("ragged row: expected {w} values, found {}", values.len()),
                });
            }
            _ => {}
        }
        raw_label_per_row.push(raw_label);
        rows.push(values);
    }

    if rows.is_empty() {
        return Err(Error::Format {
            line: 0,
            msg: "empty file".into(),
        });
    }

    // Remap raw labels to 0..C in ascending raw order.
    let mut uniq: Vec<f64> = raw_label_per_row.clone();
    uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    uniq.dedup();
    let index: BTreeMap<u64, usize> = uniq
        .iter()
        .enumerate()
        .map(|(i, v)| (v.to_bits(), i))
        .collect();
    let labels: Vec<usize> = raw_label_per_row
        .iter()
        .map(|v| index[&v.to_bits()])
        .collect();

    let series = rows
        .into_iter()
        .map(TimeSeries::new)
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(series, labels, uniq, split)
}

/// Writes a dataset in the UCR layout with raw labels and 9-significant-digit
/// values.
pub fn save_ucr_tsv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (s, &l) in dataset.series.iter().zip(&dataset.labels) {
        write!(out, "{}", format_sig(dataset.raw_labels[l])).unwrap();
        for v in s.values() {
            write!(out, "\t{}", format_sig(*v)).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn format_sig(v: f64) -> String {
    format!("{v:.8e}")
}

/// Prepends `spec.count` synthetic points; the original values occupy the
/// suffix unchanged. Per-point labels, when present, are extended with 0
/// (padding is non-change by construction).
pub fn pad_series(
    series: &TimeSeries,
    spec: &PaddingSpec,
    rng_: &mut ChaCha8Rng,
) -> Result<TimeSeries> {
    spec.validate()?;
    if spec.count == 0 {
        return Ok(series.clone());
    }
    let first = series.values[0];
    let mut prefix = vec![0.0; spec.count];
    match spec.kind {
        PaddingKind::RisingTrend => {
            // Linear ramp from first - count·delta up to first - delta.
            let delta = (0.01 * first).max(1e-3);
            for (i, p) in prefix.iter_mut().enumerate() {
                *p = first - (spec.count - i) as f64 * delta;
            }
        }
        PaddingKind::Gaussian { mean, std } => {
            rng::fill_normal(rng_, mean, std, &mut prefix);
        }
        PaddingKind::EdgeReplicate => {
            prefix.fill(first);
        }
    }
    let mut values = prefix;
    values.extend_from_slice(&series.values);
    let labels = series.labels.as_ref().map(|l| {
        let mut out = vec![0u8; spec.count];
        out.extend_from_slice(l);
        out
    });
    Ok(TimeSeries {
        values,
        labels,
    })
}

/// Stratified (train, validation) index split over a label vector,
/// deterministic under a fixed seed.
///
/// The validation side receives `round(fraction · n)` indices in total:
/// `floor(fraction · n_c)` per class, the remainder distributed by largest
/// fractional part (ties broken by class index). Neither side ever drains a
/// class completely.
pub fn stratified_split_indices(
    labels: &[usize],
    class_count: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("validation fraction must be in (0,1)"));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        counts[l] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n < 2 {
            return Err(Error::Stratify(format!(
                "class {c} has {n} member(s); need >= 2 to stratify"
            )));
        }
    }

    let total_val = (fraction * labels.len() as f64).round() as usize;
    let mut quota: Vec<usize> = counts
        .iter()
        .map(|&n| (fraction * n as f64).floor() as usize)
        .collect();
    let mut remainder = total_val.saturating_sub(quota.iter().sum::<usize>());
    let mut frac_order: Vec<usize> = (0..counts.len()).collect();
    frac_order.sort_by(|&a, &b| {
        let fa = fraction * counts[a] as f64 - (fraction * counts[a] as f64).floor();
        let fb = fraction * counts[b] as f64 - (fraction * counts[b] as f64).floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in frac_order.iter().cycle().take(counts.len() * 2) {
        if remainder == 0 {
            break;
        }
        // Never drain a class completely on either side.
        if quota[c] + 1 < counts[c] {
            quota[c] += 1;
            remainder -= 1;
        }
    }

    let mut rng_ = rng::stream_rng(seed, "validation-split");
    let mut val_idx = Vec::new();
    let mut train_idx = Vec::new();
    for c in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng_);
        let (val, train) = members.split_at(quota[c].min(members.len() - 1));
        val_idx.extend_from_slice(val);
        train_idx.extend_from_slice(train);
    }
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((train_idx, val_idx))
}

/// Stratified train/validation split of a dataset, deterministic under a
/// fixed seed; the union reconstitutes the input.
pub fn split_validation(
    dataset: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_idx, val_idx) =
        stratified_split_indices(&dataset.labels, dataset.class_count, fraction, seed)?;
    Ok((
        dataset.subset(&train_idx, dataset.split),
        dataset.subset(&val_idx, dataset.split),
    ))
}

/// One segment of a synthetic change-point stream.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub length: usize,
    /// 0 = baseline state, 1 = change state.
    pub state: u8,
}

/// Configuration for the synthetic variance-change generator: both states
/// share the mean; they differ only in standard deviation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SyntheticCpdConfig {
    pub segments: Vec<Segment>,
    pub mean: f64,
    /// Baseline-state standard deviation.
    pub std_baseline: f64,
    /// Change-state standard deviation.
    pub std_change: f64,
}

impl Default for SyntheticCpdConfig {
    fn default() -> Self {
        SyntheticCpdConfig {
            segments: vec![
                Segment {
                    length: 500,
                    state: 0,
                },
                Segment {
                    length: 500,
                    state: 1,
                },
            ],
            mean: 1.0,
            std_baseline: 0.5,
            std_change: 1.5,
        }
    }
}

/// Draws a labelled stream: state-0 points from N(mean, std_baseline²),
/// state-1 points from N(mean, std_change²); labels mark state-1 points.
pub fn generate_synthetic_cpd(config: &SyntheticCpdConfig, seed: u64) -> Result<TimeSeries> {
    if config.segments.len() < 2 {
        return Err(Error::config("need at least 2 segments"));
    }
    if config.segments.iter().any(|s| s.length == 0) {
        return Err(Error::config("segment lengths must be positive"));
    }
    if config.segments.iter().any(|s| s.state > 1) {
        return Err(Error::config("segment state must be 0 or 1"));
    }
    if config.std_baseline <= 0.0 || config.std_change <= 0.0 {
        return Err(Error::config("state standard deviations must be positive"));
    }
    let mut rng_ = rng::stream_rng(seed, "synthetic-cpd");
    let total: usize = config.segments.iter().map(|s| s.length).sum();
    let mut values = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for seg in &config.segments {
        let std = if seg.state == 0 {
            config.std_baseline
        } else {
            config.std_change
        };
        for _ in 0..seg.length {
            values.push(rng::normal(&mut rng_, config.mean, std));
            labels.push(seg.state);
        }
    }
    TimeSeries::with_labels(values, labels)
}

/// Draws a set of labelled streams whose alternating-state segments have
/// lengths uniform in `[segment_min, segment_max]`; stream `i` starts in
/// state `i % 2` so the collection stays roughly class-balanced. The `tag`
/// keeps train and test collections on disjoint random streams.
pub fn generate_cpd_streams(
    count: usize,
    stream_length: usize,
    segment_min: usize,
    segment_max: usize,
    base: &SyntheticCpdConfig,
    seed: u64,
    tag: &str,
) -> Result<Vec<TimeSeries>> {
    if segment_min == 0 || segment_max < segment_min || stream_length < 2 * segment_min {
        return Err(Error::config("bad segment bounds for stream generation"));
    }
    (0..count)
        .map(|i| {
            let mut seg_rng =
                rng::indexed_rng(seed, &format!("segments-{tag}"), i as u64);
            let mut segments = Vec::new();
            let mut total = 0usize;
            let mut state = (i % 2) as u8;
            while total < stream_length {
                let len = seg_rng
                    .gen_range(segment_min..=segment_max)
                    .min(stream_length - total);
                segments.push(Segment { length: len, state });
                total += len;
                state = 1 - state;
            }
            if segments.len() < 2 {
                let last = segments.last_mut().unwrap();
                last.length -= 1;
                segments.push(Segment { length: 1, state });
            }
            let config = SyntheticCpdConfig {
                segments,
                ..base.clone()
            };
            generate_synthetic_cpd(
                &config,
                rng::derive_seed_indexed(seed, &format!("stream-{tag}"), i as u64),
            )
        })
        .collect()
}

/// Writes a labelled stream as CSV with header `t,value,label`.
pub fn save_stream_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let labels = series
        .point_labels()
        .ok_or_else(|| Error::config("stream has no point labels"))?;
    let mut out = String::from("t,value,label\n");
    for (t, (v, l)) in series.values().iter().zip(labels).enumerate() {
        writeln!(out, "{t},{},{l}", format_sig(*v)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a stream from CSV (`t,value[,label]` with optional header) or plain
/// newline-delimited values.
pub fn load_stream(text: &str) -> Result<TimeSeries> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut saw_label = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue; // header
        }
        let (value_field, label_field) = match fields.len() {
            1 => (fields[0], None),
            2 => (fields[1], None),
            _ => (fields[1], Some(fields[2])),
        };
        let v: f64 = value_field.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad value {value_field:?}"),
        })?;
        values.push(v);
        if let Some(lf) = label_field {
            let l: u8 = lf.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad label {lf:?}"),
            })?;
            labels.push(l);
            saw_label = true;
        }
    }
    if saw_label && labels.len() == values.len() {
        TimeSeries::with_labels(values, labels)
    } else {
        TimeSeries::new(values)
    }
}

/// Draws `count` i.i.d. uniform series of a given length; handy for
/// benchmarks and synthetic studies.
pub fn random_series(
    count: usize,
    length: usize,
    rng_: &mut ChaCha8Rng,
) -> Vec<TimeSeries> {
    (0..count)
        .map(|_| {
            TimeSeries::new((0..length).map(|_| rng_.gen_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect()
}

/// Configuration of the synthetic shape-classification generator: class `c`
/// is a Gaussian bump centred in the `c`-th segment of the series, with
/// randomised amplitude, centre and additive noise.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SyntheticTscConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub length: usize,
    /// Additive noise standard deviation.
    pub noise: f64,
}

impl Default for SyntheticTscConfig {
    fn default() -> Self {
        SyntheticTscConfig {
            classes: 2,
            train_per_class: 25,
            test_per_class: 75,
            length: 150,
            noise: 0.35,
        }
    }
}

/// Deterministic synthetic classification benchmark: (train, test) split.
pub fn generate_synthetic_tsc(
    config: &SyntheticTscConfig,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if config.classes < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    if config.length < 8 || config.train_per_class == 0 || config.test_per_class == 0 {
        return Err(Error::config("degenerate synthetic TSC configuration"));
    }
    let mut rng_ = rng::stream_rng(seed, "synthetic-tsc");
    let len = config.length;
    // Classes differ in local waveform shape (bump count and polarity), not
    // position: the class signal must survive translation-invariant pooling.
    let make = |class: usize, rng_: &mut ChaCha8Rng| -> TimeSeries {
        let n_bumps = class + 1;
        let sigma = len as f64 / (10.0 * n_bumps as f64);
        let center = len as f64 * (0.5 + rng_.gen_range(-0.15..0.15));
        let gap = 3.0 * sigma;
        let amplitude = 1.0 + rng_.gen_range(-0.25..0.25);
        let values: Vec<f64> = (0..len)
            .map(|i| {
                let mut v = 0.0;
                for b in 0..n_bumps {
                    let offset = (b as f64 - (n_bumps as f64 - 1.0) / 2.0) * gap;
                    let d = (i as f64 - center - offset) / sigma;
                    let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                    v += sign * amplitude * (-0.5 * d * d).exp();
                }
                v + rng::normal(rng_, 0.0, config.noise)
            })
            .collect();
        TimeSeries::new(values).unwrap()
    };
    let build = |per_class: usize, split: SplitTag, rng_: &mut ChaCha8Rng| {
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for c in 0..config.classes {
            for _ in 0..per_class {
                series.push(make(c, rng_));
                labels.push(c);
            }
        }
        LabeledDataset::from_labeled_series(series, labels, config.classes, split)
    };
    let train = build(config.train_per_class, SplitTag::Train, &mut rng_)?;
    let test = build(config.test_per_class, SplitTag::Test, &mut rng_)?;
    Ok((train, test))
}
