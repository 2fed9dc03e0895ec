//! Synthetic multi-label sequences with planted action dependencies.
//!
//! Each class places action instances (intervals) at random. Co-occurrence
//! rules copy a trigger instance onto another class, temporal rules start an
//! instance of another class shortly after a trigger instance ends. Features
//! are the sum of class prototypes over active classes plus Gaussian noise.
//! Context-only classes lose their prototype signal for most instances, so
//! they can only be found through the rules that produce them.

use std::collections::VecDeque;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureSequence, LabelGrid};
use crate::metrics::condition_mask;
use crate::tensor::Tensor;

/// Rules applied to induced instances form a chain; chains stop after this
/// many generations so that cyclic rule sets terminate.
pub const MAX_RULE_DEPTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CooccurRule {
    pub trigger: usize,
    pub induced: usize,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalRule {
    pub trigger: usize,
    pub induced: usize,
    pub p: f64,
    /// The induced instance starts 1..=max_gap steps after the trigger's
    /// last active step.
    pub max_gap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextOnly {
    pub class: usize,
    /// Probability that an instance of this class carries no feature signal.
    pub dropout: f64,
}

fn default_sigma() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(rename = "C")]
    pub classes: usize,
    #[serde(rename = "F")]
    pub features: usize,
    pub num_videos: usize,
    /// Inclusive `[min, max]` video length.
    pub length_range: [usize; 2],
    /// Expected base instances per 100 steps, per class.
    pub rates: Vec<f64>,
    /// Inclusive `[min, max]` instance duration, per class.
    pub durations: Vec<[usize; 2]>,
    #[serde(default)]
    pub cooccur_rules: Vec<CooccurRule>,
    #[serde(default)]
    pub temporal_rules: Vec<TemporalRule>,
    #[serde(default)]
    pub context_only: Vec<ContextOnly>,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Seed for the class prototypes. Datasets generated with different
    /// seeds but the same prototype seed share their feature space, which is
    /// how separate train and test splits are made. Defaults to the
    /// generation seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype_seed: Option<u64>,
}

impl SyntheticSpec {
    /// A spec with the same rate and duration range for every class and no
    /// rules.
    pub fn uniform(
        classes: usize,
        features: usize,
        num_videos: usize,
        length_range: [usize; 2],
        rate: f64,
        duration: [usize; 2],
    ) -> Self {
        Self {
            classes,
            features,
            num_videos,
            length_range,
            rates: vec![rate; classes],
            durations: vec![duration; classes],
            cooccur_rules: Vec::new(),
            temporal_rules: Vec::new(),
            context_only: Vec::new(),
            noise_sigma: default_sigma(),
            seed: 0,
            prototype_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.classes == 0 || self.features == 0 {
            return bad("C and F must be positive".into());
        }
        let [lo, hi] = self.length_range;
        if lo == 0 || lo > hi {
            return bad(format!(
                "length_range [{lo}, {hi}] is not a valid range of positive lengths"
            ));
        }
        if self.rates.len() != self.classes || self.durations.len() != self.classes {
            return bad(format!(
                "expected {} rates and durations, got {} and {}",
                self.classes,
                self.rates.len(),
                self.durations.len()
            ));
        }
        for (c, &rate) in self.rates.iter().enumerate() {
            if !(rate.is_finite() && rate >= 0.0) {
                return bad(format!("rate of class {c} must be a non-negative number"));
            }
        }
        for (c, &[dlo, dhi]) in self.durations.iter().enumerate() {
            if dlo == 0 || dlo > dhi {
                return bad(format!(
                    "duration range of class {c} is invalid: [{dlo}, {dhi}]"
                ));
            }
        }
        let class = |c: usize, what: &str| -> Result<()> {
            if c >= self.classes {
                return Err(Error::InvalidArgument(format!(
                    "{what}: class {c} out of range"
                )));
            }
            Ok(())
        };
        let prob = |p: f64, what: &str| -> Result<()> {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{what}: probability {p} outside [0, 1]"
                )));
            }
            Ok(())
        };
        for r in &self.cooccur_rules {
            class(r.trigger, "cooccur rule")?;
            class(r.induced, "cooccur rule")?;
            prob(r.p, "cooccur rule")?;
            if r.trigger == r.induced {
                return bad(format!(
                    "cooccur rule pairs class {} with itself",
                    r.trigger
                ));
            }
        }
        for r in &self.temporal_rules {
            class(r.trigger, "temporal rule")?;
            class(r.induced, "temporal rule")?;
            prob(r.p, "temporal rule")?;
            if r.trigger == r.induced {
                return bad(format!(
                    "temporal rule pairs class {} with itself",
                    r.trigger
                ));
            }
            if r.max_gap == 0 {
                return bad("temporal rule max_gap must be at least 1".into());
            }
        }
        for c in &self.context_only {
            class(c.class, "context_only")?;
            prob(c.dropout, "context_only")?;
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be a non-negative number".into());
        }
        Ok(())
    }

    fn dropout(&self, class: usize) -> f64 {
        // The last entry wins if a class is listed twice.
        self.context_only
            .iter()
            .rev()
            .find(|c| c.class == class)
            .map_or(0.0, |c| c.dropout)
    }
}

/// One placed action instance, `[start, end)` after clipping to the video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub class: usize,
    pub start: usize,
    pub end: usize,
    /// Whether the instance contributes its prototype to the features.
    pub signal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub features: FeatureSequence,
    pub labels: LabelGrid,
    pub instances: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub seed: u64,
    /// Class prototypes, C×F.
    pub prototypes: Tensor,
    pub videos: Vec<SyntheticVideo>,
}

impl SyntheticDataset {
    pub fn labels(&self) -> Vec<&LabelGrid> {
        self.videos.iter().map(|v| &v.labels).collect()
    }
}

struct Pending {
    class: usize,
    start: usize,
    end: usize,
    depth: usize,
}

/// Generates a dataset. Prototypes come from their own generator and the
/// videos from one generator seeded with `seed`, so the same `(spec, seed)`
/// gives a bit-identical dataset.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let (c_count, f_count) = (spec.classes, spec.features);
    let mut proto_rng = ChaCha8Rng::seed_from_u64(spec.prototype_seed.unwrap_or(seed));
    let proto_dist = Normal::new(0.0, (1.0 / f_count as f64).sqrt()).expect("valid std");
    let prototypes: Vec<f64> = (0..c_count * f_count)
        .map(|_| proto_dist.sample(&mut proto_rng))
        .collect();

    // Offset so that the prototype stream and the video stream differ even
    // when both seeds are equal.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("valid std");

    let mut videos = Vec::with_capacity(spec.num_videos);
    for v in 0..spec.num_videos {
        let steps = rng.random_range(spec.length_range[0]..=spec.length_range[1]);
        let mut queue = VecDeque::new();
        for c in 0..c_count {
            let mean = spec.rates[c] * steps as f64 / 100.0;
            let count = if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize
            } else {
                0
            };
            for _ in 0..count {
                let start = rng.random_range(0..steps);
                let len = draw_duration(&mut rng, spec.durations[c]);
                queue.push_back(Pending {
                    class: c,
                    start,
                    end: (start + len).min(steps),
                    depth: 0,
                });
            }
        }

        let mut instances = Vec::new();
        while let Some(inst) = queue.pop_front() {
            if inst.depth < MAX_RULE_DEPTH {
                for rule in spec
                    .cooccur_rules
                    .iter()
                    .filter(|r| r.trigger == inst.class)
                {
                    if rng.random_bool(rule.p) {
                        queue.push_back(Pending {
                            class: rule.induced,
                            start: inst.start,
                            end: inst.end,
                            depth: inst.depth + 1,
                        });
                    }
                }
                for rule in spec
                    .temporal_rules
                    .iter()
                    .filter(|r| r.trigger == inst.class)
                {
                    if rng.random_bool(rule.p) {
                        let last = inst.end - 1;
                        let start = last + rng.random_range(1..=rule.max_gap);
                        let len = draw_duration(&mut rng, spec.durations[rule.induced]);
                        if start < steps {
                            queue.push_back(Pending {
                                class: rule.induced,
                                start,
                                end: (start + len).min(steps),
                                depth: inst.depth + 1,
                            });
                        }
                    }
                }
            }
            let q = spec.dropout(inst.class);
            let signal = !(q > 0.0 && rng.random_bool(q));
            instances.push(Instance {
                class: inst.class,
                start: inst.start,
                end: inst.end,
                signal,
            });
        }

        let mut labels = LabelGrid::new(steps, c_count);
        let mut signal = vec![false; steps * c_count];
        for inst in &instances {
            for t in inst.start..inst.end {
                labels.set(t, inst.class, true);
                signal[t * c_count + inst.class] |= inst.signal;
            }
        }
        let mut data = Vec::with_capacity(steps * f_count);
        for t in 0..steps {
            for f in 0..f_count {
                let mut x = noise.sample(&mut rng);
                for c in 0..c_count {
                    if signal[t * c_count + c] {
                        x += prototypes[c * f_count + f];
                    }
                }
                data.push(x);
            }
        }
        videos.push(SyntheticVideo {
            video_id: format!("synth_{v:05}"),
            features: FeatureSequence::new(steps, f_count, data)?,
            labels,
            instances,
        });
    }

    Ok(SyntheticDataset {
        spec: spec.clone(),
        seed,
        prototypes: Tensor::new(vec![c_count, f_count], prototypes)?,
        videos,
    })
}

fn draw_duration(rng: &mut ChaCha8Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

/// Empirical conditional rates: entry `[i][j]` is the fraction of steps
/// satisfying the condition on `j` at `tau` where `i` is active.
///
/// An off-diagonal entry is present when both `i` and `j` have at least one
/// step satisfying their condition, which keeps the support symmetric. The
/// diagonal is always absent.
pub fn empirical_dependency_matrix(
    labels: &[&LabelGrid],
    tau: usize,
) -> Result<Vec<Vec<Option<f64>>>> {
    let Some(first) = labels.first() else {
        return Err(Error::EmptyDataset);
    };
    let classes = first.classes();
    let mut masked = vec![0u64; classes];
    let mut hits = vec![vec![0u64; classes]; classes];
    for y in labels {
        if y.classes() != classes {
            return Err(Error::mismatch(
                "dependency matrix",
                format!("{} classes vs {classes}", y.classes()),
            ));
        }
        for j in 0..classes {
            let mask = condition_mask(y, j, tau)?;
            for (t, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
                masked[j] += 1;
                for i in 0..classes {
                    hits[i][j] += u64::from(y.get(t, i));
                }
            }
        }
    }
    Ok((0..classes)
        .map(|i| {
            (0..classes)
                .map(|j| {
                    (i != j && masked[i] > 0 && masked[j] > 0)
                        .then(|| hits[i][j] as f64 / masked[j] as f64)
                })
                .collect()
        })
        .collect())
}
