//! Time-series augmentation operators.
//!
//! Four elementary operators — jitter, scale, permute, warp — plus the
//! tail-preserving variant used on change-point windows and
//! augmentation-based oversampling for unbalanced datasets. All operators
//! preserve length, are deterministic under a fixed seed, and map finite
//! inputs to finite outputs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledDataset, TimeSeries};
use crate::error::{Error, Result};
use crate::rng;

/// Additive Gaussian noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
}

impl NoiseSpec {
    /// Resolves the default noise level for a series: 0.1 × its standard
    /// deviation (an absolute sigma can be passed instead).
    pub fn relative_to(series: &TimeSeries, factor: f64) -> NoiseSpec {
        NoiseSpec {
            sigma: factor * series.std(),
        }
    }
}

/// Per-point multiplicative scaling with draws in the open interval (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSpec {
    /// One draw per point (default) or a single draw shared by the series.
    pub per_point: bool,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        ScaleSpec { per_point: true }
    }
}

/// Segmentation parameters for permute and warp.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSpec {
    /// Number of contiguous segments.
    pub segments: usize,
    /// Warp distortion factor range (closed, positive).
    pub distortion: (f64, f64),
}

impl Default for SegmentationSpec {
    fn default() -> Self {
        SegmentationSpec {
            segments: 4,
            distortion: (0.5, 2.0),
        }
    }
}

impl SegmentationSpec {
    fn validate(&self, len: usize) -> Result<()> {
        if self.segments == 0 {
            return Err(Error::config("segment count must be >= 1"));
        }
        if self.segments > len {
            return Err(Error::config(format!(
                "segment count {} exceeds series length {len}",
                self.segments
            )));
        }
        if self.distortion.0 <= 0.0 || self.distortion.1 < self.distortion.0 {
            return Err(Error::config("distortion range must be positive and ordered"));
        }
        Ok(())
    }
}

/// The augmentation operators by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Jitter,
    Scale,
    Permute,
    Warp,
}

impl std::str::FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jitter" | "jittering" => Ok(AugmentKind::Jitter),
            "scale" | "scaling" => Ok(AugmentKind::Scale),
            "permute" | "permutation" => Ok(AugmentKind::Permute),
            "warp" | "warping" => Ok(AugmentKind::Warp),
            other => Err(Error::config(format!("unknown augmentation {other:?}"))),
        }
    }
}

impl std::fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AugmentKind::Jitter => "jitter",
            AugmentKind::Scale => "scale",
            AugmentKind::Permute => "permute",
            AugmentKind::Warp => "warp",
        };
        f.write_str(s)
    }
}

/// Default operator per dataset type, following the augmentation-selection
/// study: warping for image and motion data, permutation for traffic, sensor,
/// spectro and device data, jittering for ECG, simulated and audio data.
pub fn default_for_type(dataset_type: &str) -> AugmentKind {
    match dataset_type.to_ascii_lowercase().as_str() {
        "image" | "motion" => AugmentKind::Warp,
        "traffic" | "sensor" | "spectro" | "device" => AugmentKind::Permute,
        _ => AugmentKind::Jitter,
    }
}

/// x_i + e_i with e_i ~ N(0, sigma²) i.i.d.
pub fn jitter(series: &TimeSeries, spec: &NoiseSpec, rng_: &mut ChaCha8Rng) -> TimeSeries {
    if spec.sigma == 0.0 {
        return series.clone();
    }
    let values = series
        .values()
        .iter()
        .map(|v| v + rng::normal(rng_, 0.0, spec.sigma))
        .collect();
    TimeSeries::new(values).expect("jitter of finite input is finite")
}

/// s_i · x_i with s_i drawn uniformly from the open interval (0,1) — per
/// point by default, once per series in the smoothed variant.
pub fn scale(series: &TimeSeries, spec: &ScaleSpec, rng_: &mut ChaCha8Rng) -> TimeSeries {
    let shared = if spec.per_point {
        None
    } else {
        Some(open_unit(rng_))
    };
    let values = series
        .values()
        .iter()
        .map(|v| match shared {
            Some(s) => s * v,
            None => open_unit(rng_) * v,
        })
        .collect();
    TimeSeries::new(values).expect("scale of finite input is finite")
}

fn open_unit(rng_: &mut ChaCha8Rng) -> f64 {
    loop {
        let s: f64 = rng_.gen();
        if s > 0.0 && s < 1.0 {
            return s;
        }
    }
}

/// Boundaries of `h` near-equal contiguous segments; the remainder is spread
/// over the leading segments.
pub fn segment_bounds(len: usize, h: usize) -> Vec<(usize, usize)> {
    let base = len / h;
    let rem = len % h;
    let mut bounds = Vec::with_capacity(h);
    let mut start = 0;
    for i in 0..h {
        let seg_len = base + usize::from(i < rem);
        bounds.push((start, start + seg_len));
        start += seg_len;
    }
    bounds
}

/// Draws a uniform random permutation of `0..h`.
pub fn permutation_indices(h: usize, rng_: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..h).collect();
    order.shuffle(rng_);
    order
}

/// Reorders the series' segments by `order`: output segment j is input
/// segment `order[j]`.
pub fn apply_segment_permutation(series: &TimeSeries, h: usize, order: &[usize]) -> Result<TimeSeries> {
    let bounds = segment_bounds(series.len(), h);
    if order.len() != h {
        return Err(Error::config("permutation length must equal segment count"));
    }
    let mut values = Vec::with_capacity(series.len());
    for &m in order {
        let (s, e) = bounds[m];
        values.extend_from_slice(&series.values()[s..e]);
    }
    TimeSeries::new(values)
}

/// Undoes [`apply_segment_permutation`] with the same `order`.
pub fn invert_segment_permutation(
    permuted: &TimeSeries,
    h: usize,
    order: &[usize],
) -> Result<TimeSeries> {
    let bounds = segment_bounds(permuted.len(), h);
    // Segment j of the permuted series has the length of input segment
    // order[j]; recover per-output-segment extents, then place back.
    let mut out = vec![0.0; permuted.len()];
    let mut cursor = 0;
    for &m in order {
        let (s, e) = bounds[m];
        let seg_len = e - s;
        out[s..e].copy_from_slice(&permuted.values()[cursor..cursor + seg_len]);
        cursor += seg_len;
    }
    TimeSeries::new(out)
}

/// Cuts the series into `spec.segments` near-equal segments and reorders them
/// uniformly at random. The multiset of values is preserved.
pub fn permute(series: &TimeSeries, spec: &SegmentationSpec, rng_: &mut ChaCha8Rng) -> Result<TimeSeries> {
    spec.validate(series.len())?;
    let order = permutation_indices(spec.segments, rng_);
    apply_segment_permutation(series, spec.segments, &order)
}

/// Expands or shrinks one randomly chosen segment by a factor drawn from the
/// distortion range (via linear interpolation), then re-interpolates the
/// concatenation back to the original length.
pub fn warp(series: &TimeSeries, spec: &SegmentationSpec, rng_: &mut ChaCha8Rng) -> Result<TimeSeries> {
    spec.validate(series.len())?;
    if series.len() < 2 {
        return Err(Error::config("warp requires length >= 2"));
    }
    let bounds = segment_bounds(series.len(), spec.segments);
    let target = rng_.gen_range(0..spec.segments);
    let factor = if spec.distortion.0 == spec.distortion.1 {
        spec.distortion.0
    } else {
        rng_.gen_range(spec.distortion.0..=spec.distortion.1)
    };

    let mut stretched = Vec::with_capacity(series.len() + 8);
    for (i, &(s, e)) in bounds.iter().enumerate() {
        let seg = &series.values()[s..e];
        if i == target {
            let new_len = ((seg.len() as f64 * factor).round() as usize).max(1);
            stretched.extend_from_slice(&resample_linear(seg, new_len));
        } else {
            stretched.extend_from_slice(seg);
        }
    }
    let values = resample_linear(&stretched, series.len());
    TimeSeries::new(values)
}

/// Linear interpolation of `xs` onto `n` evenly spaced positions spanning the
/// same support.
pub fn resample_linear(xs: &[f64], n: usize) -> Vec<f64> {
    assert!(!xs.is_empty() && n >= 1);
    if xs.len() == 1 {
        return vec![xs[0]; n];
    }
    if n == 1 {
        return vec![xs[0]];
    }
    let scale = (xs.len() - 1) as f64 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(xs.len() - 1);
            let frac = pos - lo as f64;
            xs[lo] * (1.0 - frac) + xs[hi] * frac
        })
        .collect()
}

/// Tail-preserving augmentation for change-point windows: transforms the
/// first `len - tail` points with the chosen operator and keeps the last
/// `tail` points bit-identical.
pub fn augment_cpd_slice(
    slice: &TimeSeries,
    tail: usize,
    kind: AugmentKind,
    rng_: &mut ChaCha8Rng,
) -> Result<TimeSeries> {
    let lambda = slice.len();
    if tail == 0 || tail >= lambda {
        return Err(Error::config(format!(
            "tail length must satisfy 0 < tail < window length ({tail} vs {lambda})"
        )));
    }
    let head_len = lambda - tail;
    let head = TimeSeries::new(slice.values()[..head_len].to_vec())?;
    let transformed = match kind {
        AugmentKind::Jitter => jitter(&head, &NoiseSpec::relative_to(&head, 0.1), rng_),
        AugmentKind::Permute => {
            let h = SegmentationSpec::default().segments.min(head_len);
            permute(
                &head,
                &SegmentationSpec {
                    segments: h,
                    ..Default::default()
                },
                rng_,
            )?
        }
        AugmentKind::Scale => scale(&head, &ScaleSpec::default(), rng_),
        AugmentKind::Warp => {
            let h = SegmentationSpec::default().segments.min(head_len);
            warp(
                &head,
                &SegmentationSpec {
                    segments: h,
                    ..Default::default()
                },
                rng_,
            )?
        }
    };
    let mut values = transformed.values().to_vec();
    values.extend_from_slice(&slice.values()[head_len..]);
    match slice.point_labels() {
        Some(l) => TimeSeries::with_labels(values, l.to_vec()),
        None => TimeSeries::new(values),
    }
}

/// Balances class counts by appending augmented copies of minority-class
/// instances, alternating jitter and permutation. Synthetic instances are
/// never bit-exact duplicates of existing ones; originals are untouched.
pub fn oversample(dataset: &LabeledDataset, rng_: &mut ChaCha8Rng) -> Result<LabeledDataset> {
    if dataset.class_count() < 2 {
        return Err(Error::config("oversampling requires >= 2 classes"));
    }
    oversample_with(dataset, rng_, |src, kind, attempt, rng_| {
        if attempt > 4 {
            // Degenerate sources (constant series) defeat relative jitter and
            // permutation; force distinctness with a small absolute jitter.
            Ok(jitter(src, &absolute_floor_noise(src), rng_))
        } else {
            plain_augment(src, kind, rng_)
        }
    })
}

/// Small absolute noise level scaled to the series magnitude; the escape
/// hatch for sources whose relative augmentations degenerate to identity.
pub fn absolute_floor_noise(series: &TimeSeries) -> NoiseSpec {
    let scale = series.values().iter().map(|v| v.abs()).sum::<f64>() / series.len() as f64;
    NoiseSpec {
        sigma: 1e-3 * (1.0 + scale),
    }
}

/// Oversampling with a custom augmentation map (the change-point pipeline
/// passes a tail-preserving one). The map receives the retry attempt number
/// so it can escalate when an operator degenerates to the identity.
pub fn oversample_with(
    dataset: &LabeledDataset,
    rng_: &mut ChaCha8Rng,
    mut augment: impl FnMut(&TimeSeries, AugmentKind, usize, &mut ChaCha8Rng) -> Result<TimeSeries>,
) -> Result<LabeledDataset> {
    let counts = dataset.class_counts();
    let target = *counts.iter().max().unwrap();
    if counts.iter().all(|&c| c == target) {
        return Ok(dataset.clone());
    }

    let mut series: Vec<TimeSeries> = dataset.series().to_vec();
    let mut labels: Vec<usize> = dataset.labels().to_vec();
    let kinds = [AugmentKind::Jitter, AugmentKind::Permute];

    // Fingerprint index for duplicate detection; exact comparison resolves
    // the (astronomically rare) hash collisions.
    let mut seen: std::collections::HashMap<u64, Vec<usize>> = std::collections::HashMap::new();
    for (i, s) in series.iter().enumerate() {
        seen.entry(fingerprint(s)).or_default().push(i);
    }
    let is_duplicate = |seen: &std::collections::HashMap<u64, Vec<usize>>,
                        series: &[TimeSeries],
                        candidate: &TimeSeries| {
        seen.get(&fingerprint(candidate))
            .is_some_and(|idxs| idxs.iter().any(|&i| series[i].values() == candidate.values()))
    };

    for class in 0..dataset.class_count() {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels()[i] == class)
            .collect();
        let mut produced = 0usize;
        while counts[class] + produced < target {
            let src = &dataset.series()[members[produced % members.len()]];
            let kind = kinds[produced % kinds.len()];
            let mut candidate = augment(src, kind, 0, rng_)?;
            // A permutation can draw the identity; retry with escalating
            // attempt numbers so the map can switch strategy.
            let mut tries = 0;
            while is_duplicate(&seen, &series, &candidate) {
                tries += 1;
                let retry_kind = if tries > 4 { AugmentKind::Jitter } else { kind };
                candidate = augment(src, retry_kind, tries, rng_)?;
                if tries > 32 {
                    return Err(Error::config(
                        "could not produce a distinct augmented instance",
                    ));
                }
            }
            seen.entry(fingerprint(&candidate))
                .or_default()
                .push(series.len());
            series.push(candidate);
            labels.push(class);
            produced += 1;
        }
    }

    LabeledDataset::new(
        series,
        labels,
        dataset.raw_labels().to_vec(),
        dataset.split(),
    )
}

fn fingerprint(s: &TimeSeries) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in s.values() {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn plain_augment(src: &TimeSeries, kind: AugmentKind, rng_: &mut ChaCha8Rng) -> Result<TimeSeries> {
    match kind {
        AugmentKind::Jitter => Ok(jitter(src, &NoiseSpec::relative_to(src, 0.1), rng_)),
        AugmentKind::Scale => Ok(scale(src, &ScaleSpec::default(), rng_)),
        AugmentKind::Permute => permute(
            src,
            &SegmentationSpec {
                segments: SegmentationSpec::default().segments.min(src.len()),
                ..Default::default()
            },
            rng_,
        ),
        AugmentKind::Warp => warp(
            src,
            &SegmentationSpec {
                segments: SegmentationSpec::default().segments.min(src.len()),
                ..Default::default()
            },
            rng_,
        ),
    }
}

/// Applies `kind` with per-series default parameters (relative jitter sigma,
/// default segmentation).
pub fn augment(series: &TimeSeries, kind: AugmentKind, rng_: &mut ChaCha8Rng) -> Result<TimeSeries> {
    plain_augment(series, kind, rng_)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use crate::rng::stream_rng;

    fn ts(values: &[f64]) -> TimeSeries {
        TimeSeries::new(values.to_vec()).unwrap()
    }

    #[test]
    fn jitter_zero_sigma_is_identity() {
        let s = ts(&[1.0, -2.0, 3.0]);
        let mut r = stream_rng(0, "aug");
        let out = jitter(&s, &NoiseSpec { sigma: 0.0 }, &mut r);
        assert_eq!(out, s);
    }

    #[test]
    fn jitter_noise_std_matches_spec() {
        let n = 10_000;
        let s = ts(&vec![0.5; n]);
        let mut r = stream_rng(1, "aug");
        let out = jitter(&s, &NoiseSpec { sigma: 0.1 }, &mut r);
        let diffs: Vec<f64> = out
            .values()
            .iter()
            .zip(s.values())
            .map(|(a, b)| a - b)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let std = (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64).sqrt();
        assert!((0.095..=0.105).contains(&std), "std {std}");
    }

    #[test]
    fn scale_shrinks_magnitudes() {
        let s = ts(&[2.0, -3.0, 0.0, 5.0]);
        let mut r = stream_rng(2, "aug");
        let out = scale(&s, &ScaleSpec::default(), &mut r);
        for (o, i) in out.values().iter().zip(s.values()) {
            if *i == 0.0 {
                assert_eq!(*o, 0.0);
            } else {
                assert!(o.abs() < i.abs());
                assert_eq!(o.signum(), i.signum());
            }
        }
    }

    #[test]
    fn scale_fixed_seed_is_deterministic() {
        let s = ts(&[1.0, 2.0, 3.0]);
        let a = scale(&s, &ScaleSpec::default(), &mut stream_rng(3, "aug"));
        let b = scale(&s, &ScaleSpec::default(), &mut stream_rng(3, "aug"));
        assert_eq!(a, b);
    }

    #[test]
    fn permute_single_segment_is_identity() {
        let s = ts(&[1.0, 2.0, 3.0]);
        let mut r = stream_rng(4, "aug");
        let out = permute(
            &s,
            &SegmentationSpec {
                segments: 1,
                ..Default::default()
            },
            &mut r,
        )
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn permute_preserves_multiset() {
        let s = ts(&[5.0, 1.0, 4.0, 1.0, 3.0, 9.0, 2.0]);
        let mut r = stream_rng(5, "aug");
        let out = permute(&s, &SegmentationSpec::default(), &mut r).unwrap();
        let mut a = s.values().to_vec();
        let mut b = out.values().to_vec();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn permute_two_segments_enumerates() {
        let s = ts(&[1.0, 2.0, 3.0, 4.0]);
        for seed in 0..20 {
            let mut r = stream_rng(seed, "aug");
            let out = permute(
                &s,
                &SegmentationSpec {
                    segments: 2,
                    ..Default::default()
                },
                &mut r,
            )
            .unwrap();
            let v = out.values();
            assert!(
                v == [1.0, 2.0, 3.0, 4.0] || v == [3.0, 4.0, 1.0, 2.0],
                "unexpected permutation {v:?}"
            );
        }
    }

    #[test]
    fn permute_more_segments_than_points_errors() {
        let s = ts(&[1.0, 2.0]);
        let mut r = stream_rng(6, "aug");
        assert!(permute(
            &s,
            &SegmentationSpec {
                segments: 3,
                ..Default::default()
            },
            &mut r
        )
        .is_err());
    }

    #[test]
    fn permutation_inverse_recovers_input() {
        let s = ts(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let mut r = stream_rng(7, "aug");
        for h in 1..=7 {
            let order = permutation_indices(h, &mut r);
            let permuted = apply_segment_permutation(&s, h, &order).unwrap();
            let back = invert_segment_permutation(&permuted, h, &order).unwrap();
            assert_eq!(back, s, "h={h} order={order:?}");
        }
    }

    #[test]
    fn warp_identity_factor_is_identity() {
        let s = ts(&[0.0, 1.0, 4.0, 9.0, 16.0, 25.0, 36.0, 49.0]);
        let mut r = stream_rng(8, "aug");
        let out = warp(
            &s,
            &SegmentationSpec {
                segments: 4,
                distortion: (1.0, 1.0),
            },
            &mut r,
        )
        .unwrap();
        for (a, b) in out.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_preserves_length() {
        let s = ts(&(0..37).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        for seed in 0..30 {
            let mut r = stream_rng(seed, "warp-len");
            let out = warp(&s, &SegmentationSpec::default(), &mut r).unwrap();
            assert_eq!(out.len(), s.len());
        }
    }

    #[test]
    fn warp_constant_stays_constant() {
        let s = ts(&vec![7.5; 20]);
        let mut r = stream_rng(9, "aug");
        let out = warp(&s, &SegmentationSpec::default(), &mut r).unwrap();
        for v in out.values() {
            assert!((v - 7.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cpd_slice_tail_bit_equal() {
        let mut r = stream_rng(10, "aug");
        for trial in 0..1000 {
            let lambda = 30 + (trial % 50);
            let beta = 5 + (trial % 10);
            let values: Vec<f64> = (0..lambda).map(|_| r.gen_range(-2.0..2.0)).collect();
            let s = ts(&values);
            let kind = if trial % 2 == 0 {
                AugmentKind::Jitter
            } else {
                AugmentKind::Permute
            };
            let out = augment_cpd_slice(&s, beta, kind, &mut r).unwrap();
            assert_eq!(out.len(), s.len());
            assert_eq!(
                &out.values()[lambda - beta..],
                &s.values()[lambda - beta..],
                "trial {trial}"
            );
        }
    }

    #[test]
    fn cpd_slice_jitter_sigma_zero_identity() {
        // A constant head has zero std, so the relative sigma is 0 and
        // jitter leaves the whole slice untouched.
        let s = ts(&[1.0, 1.0, 1.0, 1.0, 2.0, 3.0]);
        let mut r = stream_rng(11, "aug");
        let out = augment_cpd_slice(&s, 2, AugmentKind::Jitter, &mut r).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn cpd_slice_permute_prefix_multiset() {
        let s = ts(&[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
        let mut r = stream_rng(12, "aug");
        let out = augment_cpd_slice(&s, 3, AugmentKind::Permute, &mut r).unwrap();
        let mut a = s.values()[..7].to_vec();
        let mut b = out.values()[..7].to_vec();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn cpd_slice_rejects_bad_tail() {
        let s = ts(&[1.0, 2.0, 3.0]);
        let mut r = stream_rng(13, "aug");
        assert!(augment_cpd_slice(&s, 3, AugmentKind::Jitter, &mut r).is_err());
        assert!(augment_cpd_slice(&s, 0, AugmentKind::Jitter, &mut r).is_err());
    }

    fn unbalanced_dataset(major: usize, minor: usize) -> LabeledDataset {
        let mut series = Vec::new();
        let mut labels = Vec::new();
        let mut r = stream_rng(100, "ds");
        for i in 0..major {
            series.push(ts(&(0..12)
                .map(|j| (i + j) as f64 + r.gen_range(-0.1..0.1))
                .collect::<Vec<_>>()));
            labels.push(0);
        }
        for i in 0..minor {
            series.push(ts(&(0..12)
                .map(|j| -((i + j) as f64) + r.gen_range(-0.1..0.1))
                .collect::<Vec<_>>()));
            labels.push(1);
        }
        LabeledDataset::from_labeled_series(series, labels, 2, SplitTag::Train).unwrap()
    }

    #[test]
    fn oversample_balances_counts() {
        let ds = unbalanced_dataset(90, 10);
        let mut r = stream_rng(14, "aug");
        let out = oversample(&ds, &mut r).unwrap();
        assert_eq!(out.class_counts(), vec![90, 90]);
    }

    #[test]
    fn oversample_balanced_input_unchanged() {
        let ds = unbalanced_dataset(10, 10);
        let mut r = stream_rng(15, "aug");
        let out = oversample(&ds, &mut r).unwrap();
        assert_eq!(out.len(), ds.len());
    }

    #[test]
    fn oversample_adds_no_duplicates_and_keeps_originals() {
        let ds = unbalanced_dataset(20, 5);
        let mut r = stream_rng(16, "aug");
        let out = oversample(&ds, &mut r).unwrap();
        // Originals untouched, in order.
        for i in 0..ds.len() {
            assert_eq!(out.series()[i], ds.series()[i]);
        }
        // Every synthetic instance differs from every other instance.
        for i in ds.len()..out.len() {
            for j in 0..out.len() {
                if i != j {
                    assert_ne!(
                        out.series()[i].values(),
                        out.series()[j].values(),
                        "duplicate at {i} vs {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn default_type_map() {
        assert_eq!(default_for_type("MOTION"), AugmentKind::Warp);
        assert_eq!(default_for_type("image"), AugmentKind::Warp);
        assert_eq!(default_for_type("traffic"), AugmentKind::Permute);
        assert_eq!(default_for_type("sensor"), AugmentKind::Permute);
        assert_eq!(default_for_type("ecg"), AugmentKind::Jitter);
        assert_eq!(default_for_type("audio"), AugmentKind::Jitter);
        assert_eq!(default_for_type("spectro"), AugmentKind::Permute);
        assert_eq!(default_for_type("device"), AugmentKind::Permute);
        assert_eq!(default_for_type("simulate"), AugmentKind::Jitter);
    }
}
