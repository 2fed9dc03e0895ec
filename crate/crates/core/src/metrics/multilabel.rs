//! Frame-level multi-label metrics: every time-step of every video is one
//! sample.

use serde::{Deserialize, Serialize};

use super::ap::average_precision;
use super::dependency::check_threshold;
use crate::error::{Error, Result};
use crate::grid::{LabelGrid, ScoreGrid};

/// Flattened per-step samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    classes: usize,
    labels: Vec<bool>,
    scores: Vec<f64>,
}

impl SampleSet {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            labels: Vec::new(),
            scores: Vec::new(),
        }
    }

    pub fn push(&mut self, labels: &[bool], scores: &[f64]) -> Result<()> {
        if labels.len() != self.classes || scores.len() != self.classes {
            return Err(Error::mismatch(
                "samples",
                format!(
                    "{} labels and {} scores for {} classes",
                    labels.len(),
                    scores.len(),
                    self.classes
                ),
            ));
        }
        self.labels.extend_from_slice(labels);
        self.scores.extend_from_slice(scores);
        Ok(())
    }

    pub fn push_video(&mut self, labels: &LabelGrid, scores: &ScoreGrid) -> Result<()> {
        if labels.steps() != scores.steps() {
            return Err(Error::mismatch(
                "samples",
                format!(
                    "{} label steps vs {} score steps",
                    labels.steps(),
                    scores.steps()
                ),
            ));
        }
        for t in 0..labels.steps() {
            self.push(labels.row(t), scores.row(t))?;
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len().checked_div(self.classes).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self, s: usize) -> &[bool] {
        &self.labels[s * self.classes..(s + 1) * self.classes]
    }

    pub fn scores(&self, s: usize) -> &[f64] {
        &self.scores[s * self.classes..(s + 1) * self.classes]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FMap {
    /// AP per class; absent for classes without positives.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes with at least one positive.
    pub mean: f64,
}

/// Per-frame mean average precision.
pub fn f_map(samples: &SampleSet) -> Result<FMap> {
    let n = samples.len();
    let per_class: Vec<Option<f64>> = (0..samples.classes)
        .map(|c| average_precision((0..n).map(|s| (samples.scores(s)[c], samples.labels(s)[c]))))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidArgument(
            "f-mAP needs at least one class with a positive sample".into(),
        ));
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(FMap { per_class, mean })
}

/// The standard multi-label suite. Ranking metrics use average ranks for
/// tied scores and skip samples where they are undefined; a ranking metric
/// with no eligible sample is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardSuite {
    pub threshold: f64,
    pub hamming_loss: f64,
    pub zero_one_loss: f64,
    pub ranking_loss: Option<f64>,
    pub coverage_error: Option<f64>,
    pub jaccard: f64,
    pub lrap: Option<f64>,
}

/// 1-based descending rank of every entry; tied entries share the mean of
/// the positions they occupy.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    scores
        .iter()
        .map(|&s| {
            let greater = scores.iter().filter(|&&o| o > s).count();
            let tied = scores.iter().filter(|&&o| o == s).count();
            greater as f64 + (tied as f64 + 1.0) / 2.0
        })
        .collect()
}

pub fn standard_suite(samples: &SampleSet, threshold: f64) -> Result<StandardSuite> {
    check_threshold(threshold)?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let c = samples.classes;

    let mut wrong_entries = 0usize;
    let mut wrong_sets = 0usize;
    let mut jaccard = 0.0;
    let (mut rl_sum, mut rl_n) = (0.0, 0usize);
    let (mut ce_sum, mut ce_n) = (0.0, 0usize);
    let (mut lr_sum, mut lr_n) = (0.0, 0usize);

    for s in 0..n {
        let y = samples.labels(s);
        let scores = samples.scores(s);
        let pred: Vec<bool> = scores.iter().map(|&v| v > threshold).collect();

        let wrong = y.iter().zip(&pred).filter(|(a, b)| a != b).count();
        wrong_entries += wrong;
        wrong_sets += usize::from(wrong > 0);
        let inter = y.iter().zip(&pred).filter(|(a, b)| **a && **b).count();
        let union = y.iter().zip(&pred).filter(|(a, b)| **a || **b).count();
        jaccard += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };

        let positives: Vec<usize> = (0..c).filter(|&k| y[k]).collect();
        if positives.is_empty() {
            continue;
        }
        let negatives: Vec<usize> = (0..c).filter(|&k| !y[k]).collect();
        let ranks = average_ranks(scores);

        if !negatives.is_empty() {
            let mut bad = 0.0;
            for &p in &positives {
                for &q in &negatives {
                    if scores[p] < scores[q] {
                        bad += 1.0;
                    } else if scores[p] == scores[q] {
                        bad += 0.5;
                    }
                }
            }
            rl_sum += bad / (positives.len() * negatives.len()) as f64;
            rl_n += 1;
        }

        ce_sum += positives.iter().map(|&p| ranks[p]).fold(f64::MIN, f64::max);
        ce_n += 1;

        // With ties, "true labels ranked at or above j" is itself an
        // average rank, taken among the true labels only. This keeps LRAP
        // at 1 exactly when no false label reaches a true label's score.
        let true_scores: Vec<f64> = positives.iter().map(|&p| scores[p]).collect();
        let true_ranks = average_ranks(&true_scores);
        let precision_sum: f64 = positives
            .iter()
            .zip(&true_ranks)
            .map(|(&j, &among_true)| among_true / ranks[j])
            .sum();
        lr_sum += precision_sum / positives.len() as f64;
        lr_n += 1;
    }

    let ratio = |sum: f64, count: usize| (count > 0).then(|| sum / count as f64);
    Ok(StandardSuite {
        threshold,
        hamming_loss: wrong_entries as f64 / (n * c) as f64,
        zero_one_loss: wrong_sets as f64 / n as f64,
        ranking_loss: ratio(rl_sum, rl_n),
        coverage_error: ratio(ce_sum, ce_n),
        jaccard: jaccard / n as f64,
        lrap: ratio(lr_sum, lr_n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(&[u8], &[f64])]) -> SampleSet {
        let classes = rows[0].0.len();
        let mut s = SampleSet::new(classes);
        for (y, p) in rows {
            let y: Vec<bool> = y.iter().map(|&v| v == 1).collect();
            s.push(&y, p).unwrap();
        }
        s
    }

    #[test]
    fn fmap_examples() {
        let s = set(&[(&[1], &[0.2]), (&[0], &[0.9])]);
        assert_eq!(f_map(&s).unwrap().mean, 0.5);

        let s = set(&[
            (&[1, 0, 1], &[1.0, 0.0, 1.0]),
            (&[0, 1, 1], &[0.0, 1.0, 1.0]),
        ]);
        assert_eq!(f_map(&s).unwrap().mean, 1.0);
    }

    #[test]
    fn fmap_skips_classes_without_positives() {
        let s = set(&[(&[1, 0], &[0.9, 0.9]), (&[0, 0], &[0.1, 0.8])]);
        let f = f_map(&s).unwrap();
        assert_eq!(f.per_class, vec![Some(1.0), None]);
        assert_eq!(f.mean, 1.0);
        let none = set(&[(&[0], &[0.3])]);
        assert!(f_map(&none).is_err());
    }

    #[test]
    fn single_sample_worked_example() {
        let s = set(&[(&[1, 0], &[0.2, 0.9])]);
        let m = standard_suite(&s, 0.5).unwrap();
        assert_eq!(m.hamming_loss, 1.0);
        assert_eq!(m.zero_one_loss, 1.0);
        assert_eq!(m.ranking_loss, Some(1.0));
        assert_eq!(m.coverage_error, Some(2.0));
        assert_eq!(m.jaccard, 0.0);
        assert_eq!(m.lrap, Some(0.5));
    }

    #[test]
    fn perfect_predictions() {
        let s = set(&[
            (&[1, 0, 1], &[0.9, 0.1, 0.8]),
            (&[0, 1, 0], &[0.2, 0.7, 0.3]),
            (&[0, 0, 0], &[0.2, 0.1, 0.3]),
        ]);
        let m = standard_suite(&s, 0.5).unwrap();
        assert_eq!(m.hamming_loss, 0.0);
        assert_eq!(m.zero_one_loss, 0.0);
        assert_eq!(m.jaccard, 1.0);
        assert_eq!(m.lrap, Some(1.0));
        assert_eq!(m.ranking_loss, Some(0.0));
        // mean true-label count over samples with positives: (2 + 1) / 2
        assert_eq!(m.coverage_error, Some(1.5));
    }

    #[test]
    fn ties_use_average_rank() {
        let s = set(&[(&[1, 0], &[0.4, 0.4])]);
        let m = standard_suite(&s, 0.5).unwrap();
        assert_eq!(m.ranking_loss, Some(0.5));
        assert_eq!(m.coverage_error, Some(1.5));
        assert!((m.lrap.unwrap() - 1.0 / 1.5).abs() < 1e-15);
        assert_eq!(m.jaccard, 0.0);
    }

    #[test]
    fn tied_true_labels_keep_lrap_at_one() {
        let s = set(&[(&[1, 1, 0], &[0.7, 0.7, 0.1])]);
        let m = standard_suite(&s, 0.5).unwrap();
        assert_eq!(m.lrap, Some(1.0));
        assert_eq!(m.coverage_error, Some(1.5));
        let s = set(&[(&[1, 1, 0], &[0.7, 0.7, 0.7])]);
        let m = standard_suite(&s, 0.5).unwrap();
        assert!((m.lrap.unwrap() - 1.5 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_set_jaccard_is_one() {
        let s = set(&[(&[0, 0], &[0.1, 0.2])]);
        let m = standard_suite(&s, 0.5).unwrap();
        assert_eq!(m.jaccard, 1.0);
        assert_eq!(m.lrap, None);
        assert_eq!(m.coverage_error, None);
        assert_eq!(m.ranking_loss, None);
    }

    #[test]
    fn threshold_must_be_open_unit() {
        let s = set(&[(&[1], &[0.3])]);
        assert!(standard_suite(&s, 0.0).is_err());
        assert!(standard_suite(&s, 1.0).is_err());
    }
}
