//! Action-conditional precision, recall, F1 and AP.
//!
//! For an ordered class pair `(ci | cj)` and window `τ`, only time-steps that
//! satisfy a condition on the ground truth of `cj` are counted:
//!
//! * `τ = 0`: `cj` is present at the step (co-occurrence);
//! * `τ > 0`: `cj` is absent at the step but present at some step in
//!   `[t − τ, t)` of the same video (temporal succession). The window is
//!   clamped at the start of the video.
//!
//! Within the masked steps the usual counts for `ci` are taken. Pairs with no
//! ground-truth positives of `ci` under the mask are invalid and excluded
//! from every aggregate.

use serde::{Deserialize, Serialize};

use super::ap::average_precision;
use crate::error::{Error, Result};
use crate::grid::{LabelGrid, ScoreGrid};

/// Default binarization threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalVideo {
    pub video_id: String,
    pub labels: LabelGrid,
    pub scores: ScoreGrid,
}

/// Ground truth and scores for a set of videos sharing one class count.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalInstance {
    videos: Vec<EvalVideo>,
    classes: usize,
}

impl EvalInstance {
    pub fn new(classes: usize, videos: Vec<EvalVideo>) -> Result<Self> {
        for v in &videos {
            if v.labels.classes() != classes || v.scores.classes() != classes {
                return Err(Error::mismatch(
                    "eval instance",
                    format!(
                        "video {}: labels have {} classes, scores {}, expected {classes}",
                        v.video_id,
                        v.labels.classes(),
                        v.scores.classes()
                    ),
                ));
            }
            if v.labels.steps() != v.scores.steps() {
                return Err(Error::mismatch(
                    "eval instance",
                    format!(
                        "video {}: {} label steps but {} score steps",
                        v.video_id,
                        v.labels.steps(),
                        v.scores.steps()
                    ),
                ));
            }
        }
        Ok(Self { videos, classes })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn videos(&self) -> &[EvalVideo] {
        &self.videos
    }

    /// Binarized predictions for every video.
    pub fn predictions(&self, threshold: f64) -> Result<Vec<LabelGrid>> {
        self.videos
            .iter()
            .map(|v| binarize(&v.scores, threshold))
            .collect()
    }
}

/// `ỹ = 1` iff `score > threshold`; the threshold must lie in `(0, 1)`.
pub fn binarize(scores: &ScoreGrid, threshold: f64) -> Result<LabelGrid> {
    check_threshold(threshold)?;
    Ok(scores.binarize(threshold))
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside (0, 1)"
        )))
    }
}

/// Steps of one video at which the conditioning class `cj` satisfies the
/// condition for window `tau`.
pub fn condition_mask(y: &LabelGrid, cj: usize, tau: usize) -> Result<Vec<bool>> {
    if cj >= y.classes() {
        return Err(Error::InvalidArgument(format!(
            "class {cj} out of range for {} classes",
            y.classes()
        )));
    }
    let steps = y.steps();
    if tau == 0 {
        return Ok((0..steps).map(|t| y.get(t, cj)).collect());
    }
    let mut mask = vec![false; steps];
    let mut last_seen: Option<usize> = None;
    for (t, m) in mask.iter_mut().enumerate() {
        let present = y.get(t, cj);
        *m = !present && last_seen.is_some_and(|s| t - s <= tau);
        if present {
            last_seen = Some(t);
        }
    }
    Ok(mask)
}

/// Counts behind one ordered pair's precision and recall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub ci: usize,
    pub cj: usize,
    pub tau: usize,
    pub n_correct: u64,
    pub n_predict: u64,
    pub n_gt: u64,
}

impl PairCounts {
    pub fn empty(ci: usize, cj: usize, tau: usize) -> Self {
        Self {
            ci,
            cj,
            tau,
            n_correct: 0,
            n_predict: 0,
            n_gt: 0,
        }
    }

    /// Associative combination of counts from disjoint sets of videos.
    pub fn merge(self, other: PairCounts) -> PairCounts {
        debug_assert_eq!(
            (self.ci, self.cj, self.tau),
            (other.ci, other.cj, other.tau)
        );
        PairCounts {
            n_correct: self.n_correct + other.n_correct,
            n_predict: self.n_predict + other.n_predict,
            n_gt: self.n_gt + other.n_gt,
            ..self
        }
    }

    pub fn is_valid(&self) -> bool {
        self.n_gt > 0
    }
}

fn check_pair(classes: usize, ci: usize, cj: usize) -> Result<()> {
    if ci == cj {
        return Err(Error::InvalidArgument(format!(
            "pair ({ci} | {cj}) conditions a class on itself"
        )));
    }
    if ci >= classes || cj >= classes {
        return Err(Error::InvalidArgument(format!(
            "pair ({ci} | {cj}) out of range for {classes} classes"
        )));
    }
    Ok(())
}

fn count_masked(counts: &mut PairCounts, y: &LabelGrid, pred: &LabelGrid, mask: &[bool]) {
    let ci = counts.ci;
    for (t, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let (truth, guess) = (y.get(t, ci), pred.get(t, ci));
        counts.n_gt += u64::from(truth);
        counts.n_predict += u64::from(guess);
        counts.n_correct += u64::from(truth && guess);
    }
}

/// Counts for `(ci | cj, τ)` summed over all videos. `predicted` holds the
/// binarized predictions, one grid per video.
pub fn pair_counts(
    inst: &EvalInstance,
    predicted: &[LabelGrid],
    ci: usize,
    cj: usize,
    tau: usize,
) -> Result<PairCounts> {
    check_pair(inst.classes, ci, cj)?;
    check_predictions(inst, predicted)?;
    let mut counts = PairCounts::empty(ci, cj, tau);
    for (video, pred) in inst.videos.iter().zip(predicted) {
        let mask = condition_mask(&video.labels, cj, tau)?;
        count_masked(&mut counts, &video.labels, pred, &mask);
    }
    Ok(counts)
}

fn check_predictions(inst: &EvalInstance, predicted: &[LabelGrid]) -> Result<()> {
    if predicted.len() != inst.videos.len() {
        return Err(Error::mismatch(
            "pair_counts",
            format!(
                "{} prediction grids for {} videos",
                predicted.len(),
                inst.videos.len()
            ),
        ));
    }
    for (v, p) in inst.videos.iter().zip(predicted) {
        if p.steps() != v.labels.steps() || p.classes() != inst.classes {
            return Err(Error::mismatch(
                "pair_counts",
                format!("prediction grid for {} has the wrong shape", v.video_id),
            ));
        }
    }
    Ok(())
}

/// `(P, R, F1)` of a valid pair. Precision is 0 when nothing was predicted;
/// F1 is 0 when `P + R = 0`. Returns `None` for invalid pairs (`n_gt = 0`).
pub fn pair_precision_recall_f1(counts: &PairCounts) -> Option<(f64, f64, f64)> {
    if counts.n_gt == 0 {
        return None;
    }
    let precision = if counts.n_predict == 0 {
        0.0
    } else {
        counts.n_correct as f64 / counts.n_predict as f64
    };
    let recall = counts.n_correct as f64 / counts.n_gt as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Some((precision, recall, f1))
}

fn masked_items(inst: &EvalInstance, masks: &[Vec<bool>], ci: usize) -> Vec<(f64, bool)> {
    let mut items = Vec::new();
    for (video, mask) in inst.videos.iter().zip(masks) {
        for (t, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            items.push((video.scores.get(t, ci), video.labels.get(t, ci)));
        }
    }
    items
}

/// Action-conditional average precision: all-point AP of `ci`'s scores over
/// the masked steps of every video, ties ordered by video then time.
pub fn pair_ap(inst: &EvalInstance, ci: usize, cj: usize, tau: usize) -> Result<f64> {
    check_pair(inst.classes, ci, cj)?;
    let masks = inst
        .videos
        .iter()
        .map(|v| condition_mask(&v.labels, cj, tau))
        .collect::<Result<Vec<_>>>()?;
    average_precision(masked_items(inst, &masks, ci)).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "pair ({ci} | {cj}, tau={tau}) has no ground-truth positives under its condition"
        ))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub ci: usize,
    pub cj: usize,
    pub tau: usize,
    pub n_correct: u64,
    pub n_predict: u64,
    pub n_gt: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
}

/// Means over the valid pairs at one `τ`; absent when no pair is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauAggregate {
    pub tau: usize,
    pub valid_pairs: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub map: Option<f64>,
}

/// Unconditioned per-class precision and recall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub n_correct: u64,
    pub n_predict: u64,
    pub n_gt: u64,
    /// 0 when the class was never predicted.
    pub precision: f64,
    /// Absent when the class never occurs.
    pub recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub taus: Vec<usize>,
    pub aggregates: Vec<TauAggregate>,
    pub per_class: Vec<ClassMetrics>,
    /// Every valid pair, ordered by `(tau, ci, cj)` in the order of `taus`.
    pub pairs: Vec<PairMetrics>,
}

impl MetricReport {
    pub fn aggregate(&self, tau: usize) -> Option<&TauAggregate> {
        self.aggregates.iter().find(|a| a.tau == tau)
    }

    pub fn pair(&self, ci: usize, cj: usize, tau: usize) -> Option<&PairMetrics> {
        self.pairs
            .iter()
            .find(|p| p.ci == ci && p.cj == cj && p.tau == tau)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-class counts over all steps of all videos.
pub fn per_class_metrics(
    inst: &EvalInstance,
    predicted: &[LabelGrid],
) -> Result<Vec<ClassMetrics>> {
    check_predictions(inst, predicted)?;
    let mut out: Vec<ClassMetrics> = (0..inst.classes)
        .map(|class| ClassMetrics {
            class,
            n_correct: 0,
            n_predict: 0,
            n_gt: 0,
            precision: 0.0,
            recall: None,
        })
        .collect();
    for (video, pred) in inst.videos.iter().zip(predicted) {
        for t in 0..video.labels.steps() {
            for m in out.iter_mut() {
                let (truth, guess) = (video.labels.get(t, m.class), pred.get(t, m.class));
                m.n_gt += u64::from(truth);
                m.n_predict += u64::from(guess);
                m.n_correct += u64::from(truth && guess);
            }
        }
    }
    for m in &mut out {
        if m.n_predict > 0 {
            m.precision = m.n_correct as f64 / m.n_predict as f64;
        }
        if m.n_gt > 0 {
            m.recall = Some(m.n_correct as f64 / m.n_gt as f64);
        }
    }
    Ok(out)
}

/// Full action-conditional report at a threshold and a list of windows.
pub fn aggregate(inst: &EvalInstance, threshold: f64, taus: &[usize]) -> Result<MetricReport> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one tau is required".into(),
        ));
    }
    let predicted = inst.predictions(threshold)?;
    let c = inst.classes;
    let mut aggregates = Vec::with_capacity(taus.len());
    let mut pairs = Vec::new();

    for &tau in taus {
        let mut tau_pairs = Vec::new();
        for cj in 0..c {
            let masks = inst
                .videos
                .iter()
                .map(|v| condition_mask(&v.labels, cj, tau))
                .collect::<Result<Vec<_>>>()?;
            for ci in (0..c).filter(|&ci| ci != cj) {
                let mut counts = PairCounts::empty(ci, cj, tau);
                for ((video, pred), mask) in inst.videos.iter().zip(&predicted).zip(&masks) {
                    count_masked(&mut counts, &video.labels, pred, mask);
                }
                let Some((precision, recall, f1)) = pair_precision_recall_f1(&counts) else {
                    continue;
                };
                let ap = average_precision(masked_items(inst, &masks, ci))
                    .expect("valid pair has positives");
                tau_pairs.push(PairMetrics {
                    ci,
                    cj,
                    tau,
                    n_correct: counts.n_correct,
                    n_predict: counts.n_predict,
                    n_gt: counts.n_gt,
                    precision,
                    recall,
                    f1,
                    ap,
                });
            }
        }
        tau_pairs.sort_by_key(|p| (p.ci, p.cj));
        aggregates.push(TauAggregate {
            tau,
            valid_pairs: tau_pairs.len(),
            precision: mean(tau_pairs.iter().map(|p| p.precision)),
            recall: mean(tau_pairs.iter().map(|p| p.recall)),
            f1: mean(tau_pairs.iter().map(|p| p.f1)),
            map: mean(tau_pairs.iter().map(|p| p.ap)),
        });
        pairs.extend(tau_pairs);
    }

    Ok(MetricReport {
        threshold,
        taus: taus.to_vec(),
        aggregates,
        per_class: per_class_metrics(inst, &predicted)?,
        pairs,
    })
}
