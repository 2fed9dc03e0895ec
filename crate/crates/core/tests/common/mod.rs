//! Brute-force reference implementations shared by the integration tests.
//!
//! Each one is written straight from the metric definitions with plain
//! loops and deliberately shares no code with the library.

#![allow(dead_code)]

use mlad::grid::{LabelGrid, ScoreGrid};
use mlad::metrics::{EvalInstance, EvalVideo};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Whether step `t` of a video satisfies the condition on class `cj`.
pub fn condition(y: &LabelGrid, t: usize, cj: usize, tau: usize) -> bool {
    if tau == 0 {
        return y.get(t, cj);
    }
    if y.get(t, cj) {
        return false;
    }
    let from = t.saturating_sub(tau);
    (from..t).any(|s| y.get(s, cj))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Counts {
    pub n_correct: u64,
    pub n_predict: u64,
    pub n_gt: u64,
}

pub fn counts(
    inst: &EvalInstance,
    predicted: &[LabelGrid],
    ci: usize,
    cj: usize,
    tau: usize,
) -> Counts {
    let mut c = Counts {
        n_correct: 0,
        n_predict: 0,
        n_gt: 0,
    };
    for (video, pred) in inst.videos().iter().zip(predicted) {
        for t in 0..video.labels.steps() {
            if !condition(&video.labels, t, cj, tau) {
                continue;
            }
            let truth = video.labels.get(t, ci);
            let guess = pred.get(t, ci);
            c.n_correct += u64::from(truth && guess);
            c.n_predict += u64::from(guess);
            c.n_gt += u64::from(truth);
        }
    }
    c
}

pub fn prf(c: Counts) -> Option<(f64, f64, f64)> {
    if c.n_gt == 0 {
        return None;
    }
    let p = if c.n_predict == 0 {
        0.0
    } else {
        c.n_correct as f64 / c.n_predict as f64
    };
    let r = c.n_correct as f64 / c.n_gt as f64;
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    Some((p, r, f))
}

/// All-point AP without sorting: the rank of an item is one plus the number
/// of items with a higher score or an equal score earlier in the list.
pub fn ap(items: &[(f64, bool)]) -> Option<f64> {
    let rank = |a: usize| {
        1 + items
            .iter()
            .enumerate()
            .filter(|&(b, item)| item.0 > items[a].0 || (item.0 == items[a].0 && b < a))
            .count()
    };
    let positives: Vec<usize> = (0..items.len()).filter(|&a| items[a].1).collect();
    if positives.is_empty() {
        return None;
    }
    let ranks: Vec<usize> = positives.iter().map(|&a| rank(a)).collect();
    let total: f64 = ranks
        .iter()
        .map(|&r| ranks.iter().filter(|&&q| q <= r).count() as f64 / r as f64)
        .sum();
    Some(total / positives.len() as f64)
}

/// Masked `(score, label)` items of class `ci` in video-then-time order.
pub fn pair_items(inst: &EvalInstance, ci: usize, cj: usize, tau: usize) -> Vec<(f64, bool)> {
    let mut items = Vec::new();
    for video in inst.videos() {
        for t in 0..video.labels.steps() {
            if condition(&video.labels, t, cj, tau) {
                items.push((video.scores.get(t, ci), video.labels.get(t, ci)));
            }
        }
    }
    items
}

pub fn binarize(scores: &ScoreGrid, threshold: f64) -> LabelGrid {
    let mut y = LabelGrid::new(scores.steps(), scores.classes());
    for t in 0..scores.steps() {
        for c in 0..scores.classes() {
            if scores.get(t, c) > threshold {
                y.set(t, c, true);
            }
        }
    }
    y
}

/// Random evaluation instance with `videos ≤ 5`, `T ≤ 20`, `C ≤ 6`.
/// Scores are drawn from a small grid so that ties occur.
pub fn random_instance(rng: &mut ChaCha8Rng) -> EvalInstance {
    let classes = rng.random_range(2..=6);
    let n_videos = rng.random_range(1..=5);
    let density = rng.random_range(0.05..0.6);
    let coarse = rng.random_bool(0.5);
    let videos = (0..n_videos)
        .map(|k| {
            let steps = rng.random_range(1..=20);
            let bools = (0..steps * classes)
                .map(|_| rng.random_bool(density))
                .collect();
            let labels = LabelGrid::from_bools(steps, classes, bools).unwrap();
            let scores = (0..steps * classes)
                .map(|_| {
                    if coarse {
                        rng.random_range(0..=10) as f64 / 10.0
                    } else {
                        rng.random_range(0.0..=1.0)
                    }
                })
                .collect();
            EvalVideo {
                video_id: format!("v{k}"),
                labels,
                scores: ScoreGrid::new(steps, classes, scores).unwrap(),
            }
        })
        .collect();
    EvalInstance::new(classes, videos).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Descending 1-based positions with ties replaced by the mean position of
/// their tie group, computed by sorting.
pub fn sorted_average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

pub struct Suite {
    pub hl: f64,
    pub zl: f64,
    pub rl: Option<f64>,
    pub ce: Option<f64>,
    pub js: f64,
    pub lrap: Option<f64>,
}

/// The six standard metrics by definitional enumeration over samples.
pub fn standard_suite(samples: &[(Vec<bool>, Vec<f64>)], threshold: f64) -> Suite {
    let n = samples.len() as f64;
    let c = samples[0].0.len();
    let (mut hl, mut zl, mut js) = (0.0, 0.0, 0.0);
    let (mut rl, mut rl_n, mut ce, mut ce_n, mut lr, mut lr_n) = (0.0, 0, 0.0, 0, 0.0, 0);
    for (y, s) in samples {
        let pred: Vec<bool> = s.iter().map(|&v| v > threshold).collect();
        let mut wrong = 0;
        let (mut inter, mut union) = (0, 0);
        for k in 0..c {
            if y[k] != pred[k] {
                wrong += 1;
            }
            if y[k] && pred[k] {
                inter += 1;
            }
            if y[k] || pred[k] {
                union += 1;
            }
        }
        hl += wrong as f64 / c as f64;
        if wrong > 0 {
            zl += 1.0;
        }
        js += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };

        let pos: Vec<usize> = (0..c).filter(|&k| y[k]).collect();
        let neg: Vec<usize> = (0..c).filter(|&k| !y[k]).collect();
        if pos.is_empty() {
            continue;
        }
        let ranks = sorted_average_ranks(s);
        if !neg.is_empty() {
            let mut bad = 0.0;
            for &p in &pos {
                for &q in &neg {
                    bad += match s[p].partial_cmp(&s[q]).unwrap() {
                        std::cmp::Ordering::Less => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Greater => 0.0,
                    };
                }
            }
            rl += bad / (pos.len() * neg.len()) as f64;
            rl_n += 1;
        }
        ce += pos.iter().map(|&p| ranks[p]).fold(0.0, f64::max);
        ce_n += 1;
        let true_scores: Vec<f64> = pos.iter().map(|&p| s[p]).collect();
        let true_ranks = sorted_average_ranks(&true_scores);
        lr += pos
            .iter()
            .zip(&true_ranks)
            .map(|(&p, &tr)| tr / ranks[p])
            .sum::<f64>()
            / pos.len() as f64;
        lr_n += 1;
    }
    let avg = |sum: f64, k: usize| (k > 0).then(|| sum / k as f64);
    Suite {
        hl: hl / n,
        zl: zl / n,
        rl: avg(rl, rl_n),
        ce: avg(ce, ce_n),
        js: js / n,
        lrap: avg(lr, lr_n),
    }
}
