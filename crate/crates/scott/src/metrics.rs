//! Evaluation metrics: accuracy, AUROC, AUPRC, thresholded precision/recall.
//!
//! AUROC uses the rank-statistic (Mann-Whitney) definition with half credit
//! for ties. AUPRC is average precision — the step-curve area from a
//! descending-score sweep with tied scores processed as one group — not a
//! trapezoidal interpolation, which would read higher.

use crate::error::{Error, Result};

/// Scores (probability of the positive class) with binary ground truth.
#[derive(Debug, Clone)]
pub struct ScoredPredictions {
    scores: Vec<f64>,
    truths: Vec<bool>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, truths: Vec<bool>) -> Result<Self> {
        if scores.len() != truths.len() {
            return Err(Error::config(format!(
                "{} scores but {} truths",
                scores.len(),
                truths.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::config("no predictions"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("prediction score".into()));
        }
        Ok(ScoredPredictions { scores, truths })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn truths(&self) -> &[bool] {
        &self.truths
    }

    pub fn positives(&self) -> usize {
        self.truths.iter().filter(|t| **t).count()
    }
}

/// Fraction of exact matches.
pub fn accuracy(predicted: &[usize], truths: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truths.len() {
        return Err(Error::config("accuracy needs equal-length nonempty inputs"));
    }
    let hits = predicted
        .iter()
        .zip(truths)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Probability that a random positive outranks a random negative, ties
/// counted half. Computed from average ranks.
pub fn auroc(sp: &ScoredPredictions) -> Result<f64> {
    let n_pos = sp.positives();
    let n_neg = sp.truths.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::config("AUROC requires both classes present"));
    }

    let mut order: Vec<usize> = (0..sp.scores.len()).collect();
    order.sort_by(|&a, &b| sp.scores[a].partial_cmp(&sp.scores[b]).unwrap());

    // Average ranks over tie groups (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && sp.scores[order[j + 1]] == sp.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if sp.truths[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: descending-score sweep, tied scores as one threshold
/// group, AP = Σ (R_k − R_{k−1}) · P_k.
pub fn auprc(sp: &ScoredPredictions) -> Result<f64> {
    let n_pos = sp.positives();
    if n_pos == 0 {
        return Err(Error::config("AUPRC requires at least one positive"));
    }

    let mut order: Vec<usize> = (0..sp.scores.len()).collect();
    order.sort_by(|&a, &b| sp.scores[b].partial_cmp(&sp.scores[a]).unwrap());

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && sp.scores[order[j + 1]] == sp.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if sp.truths[idx] {
                tp += 1;
            }
            seen += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Confusion-matrix precision and recall with predictions `score >= threshold`.
/// Precision over zero predicted positives is defined as 1.0.
pub fn precision_recall(sp: &ScoredPredictions, threshold: f64) -> Result<(f64, f64)> {
    if sp.positives() == 0 {
        return Err(Error::config("precision/recall requires >= 1 positive"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (s, t) in sp.scores.iter().zip(&sp.truths) {
        let predicted = *s >= threshold;
        match (predicted, *t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok((precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sp(scores: &[f64], truths: &[u8]) -> ScoredPredictions {
        ScoredPredictions::new(
            scores.to_vec(),
            truths.iter().map(|t| *t == 1).collect(),
        )
        .unwrap()
    }

    // Pairwise-counting oracle: 1 per correctly ordered (pos, neg) pair,
    // 0.5 per tie.
    fn auroc_oracle(s: &ScoredPredictions) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &ti) in s.truths().iter().enumerate() {
            if !ti {
                continue;
            }
            for (j, &tj) in s.truths().iter().enumerate() {
                if tj {
                    continue;
                }
                pairs += 1.0;
                if s.scores()[i] > s.scores()[j] {
                    wins += 1.0;
                } else if s.scores()[i] == s.scores()[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    // Threshold-rescan oracle for average precision: every distinct score is
    // a threshold, evaluated by full recount.
    fn auprc_oracle(s: &ScoredPredictions) -> f64 {
        let mut thresholds: Vec<f64> = s.scores().to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let n_pos = s.positives() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let tp = s
                .scores()
                .iter()
                .zip(s.truths())
                .filter(|(sc, tr)| **sc >= t && **tr)
                .count() as f64;
            let predicted = s.scores().iter().filter(|sc| **sc >= t).count() as f64;
            let recall = tp / n_pos;
            let precision = tp / predicted;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[1, 1, 0, 1]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&sp(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(auroc(&sp(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1])).unwrap(), 0.0);
        let v = auroc(&sp(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap();
        assert!((v - 0.75).abs() < 1e-12, "{v}");
        assert!(auroc(&sp(&[0.5, 0.6], &[1, 1])).is_err());
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = crate::rng::stream_rng(3, "auroc");
        for case in 0..200 {
            let n = 2 + case % 11;
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0..=10) as f64) / 10.0)
                .collect();
            let mut truths: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            truths[0] = 1;
            truths[n - 1] = 0;
            let s = sp(&scores, &truths);
            let fast = auroc(&s).unwrap();
            let slow = auroc_oracle(&s);
            assert!((fast - slow).abs() < 1e-12, "case {case}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&sp(&[0.1, 0.9], &[0, 1])).unwrap(), 1.0);
        // Single positive ranked last among N=5: AP = 1/5.
        let v = auprc(&sp(&[0.9, 0.8, 0.7, 0.6, 0.1], &[0, 0, 0, 0, 1])).unwrap();
        assert!((v - 0.2).abs() < 1e-12, "{v}");
        assert!(auprc(&sp(&[0.5], &[0])).is_err());
    }

    #[test]
    fn auprc_matches_threshold_oracle() {
        let mut rng = crate::rng::stream_rng(4, "auprc");
        for case in 0..200 {
            let n = 2 + case % 11;
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0..=8) as f64) / 8.0)
                .collect();
            let mut truths: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            truths[0] = 1;
            let s = sp(&scores, &truths);
            let fast = auprc(&s).unwrap();
            let slow = auprc_oracle(&s);
            assert!((fast - slow).abs() < 1e-12, "case {case}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auprc_random_balanced_concentrates_near_half() {
        let mut rng = crate::rng::stream_rng(5, "auprc-mc");
        let mut total = 0.0;
        let runs = 200;
        for _ in 0..runs {
            let n = 100;
            let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let truths: Vec<u8> = (0..n).map(|i| (i % 2 == 0) as u8).collect();
            total += auprc(&sp(&scores, &truths)).unwrap();
        }
        let mean = total / runs as f64;
        assert!((0.45..0.60).contains(&mean), "mean {mean}");
    }

    #[test]
    fn precision_recall_examples() {
        let s = sp(&[0.9, 0.2], &[1, 0]);
        let (p, r) = precision_recall(&s, 0.5).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
        // Threshold 0: everything positive -> recall 1.
        let (_, r0) = precision_recall(&s, 0.0).unwrap();
        assert_eq!(r0, 1.0);
        // Threshold above max: no predicted positives -> precision 1 by
        // convention, recall 0.
        let (p1, r1) = precision_recall(&s, 2.0).unwrap();
        assert_eq!((p1, r1), (1.0, 0.0));
    }

    #[test]
    fn auroc_monotone_transform_invariance() {
        let mut rng = crate::rng::stream_rng(6, "mono");
        for _ in 0..50 {
            let n = 20;
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut truths: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            truths[0] = 1;
            truths[1] = 0;
            let base = auroc(&sp(&scores, &truths)).unwrap();
            let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 11.0).collect();
            assert!((auroc(&sp(&squashed, &truths)).unwrap() - base).abs() < 1e-12);
            assert!((auroc(&sp(&shifted, &truths)).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn auroc_flip_symmetry() {
        let mut rng = crate::rng::stream_rng(7, "flip");
        for _ in 0..50 {
            let n = 15;
            // Tie-free scores.
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
            use rand::seq::SliceRandom;
            scores.shuffle(&mut rng);
            let mut truths: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            truths[0] = 1;
            truths[1] = 0;
            let a = auroc(&sp(&scores, &truths)).unwrap();
            let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let b = auroc(&sp(&flipped, &truths)).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
