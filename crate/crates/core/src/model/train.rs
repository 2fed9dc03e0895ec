use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mlad, ModelConfig};
use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::grid::{FeatureSequence, LabelGrid};
use crate::metrics::multilabel::{f_map, SampleSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Crop lengths; each crop draws one uniformly.
    #[serde(default = "default_train_lengths")]
    pub train_lengths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Crops per optimizer step; `None` uses every crop of the epoch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

/// How the learning rate evolves from its initial value `lr`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero over all optimizer steps.
    Cosine,
}

impl LrSchedule {
    /// Rate for optimizer step `step` (0-based) out of `total`.
    pub fn rate(self, lr: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => {
                let progress = step as f64 / total.max(1) as f64;
                0.5 * lr * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    50
}
fn default_train_lengths() -> Vec<usize> {
    vec![32]
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            epochs: default_epochs(),
            train_lengths: default_train_lengths(),
            seed: 0,
            batch_size: None,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if self.train_lengths.is_empty() || self.train_lengths.contains(&0) {
            return Err(Error::InvalidArgument(
                "train_lengths must be a nonempty list of positive lengths".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Window used for inference after training.
    pub fn window(&self) -> usize {
        self.train_lengths.iter().copied().max().unwrap_or(1)
    }
}

/// One training video.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub features: FeatureSequence,
    pub labels: LabelGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's crops, each evaluated with the
    /// parameters in effect when its batch was processed.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_fmap: Option<f64>,
    /// Per layer, the smallest and largest merge weight seen after any step
    /// of the epoch (layers without a merge weight are omitted).
    pub alpha_min: Vec<f64>,
    pub alpha_max: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

fn check_examples(config: &ModelConfig, examples: &[TrainExample], what: &str) -> Result<()> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.features.dim() != config.features || ex.labels.classes() != config.classes {
            return Err(Error::mismatch(
                "train",
                format!(
                    "{what} video {i}: F={} C={} but config has F={} C={}",
                    ex.features.dim(),
                    ex.labels.classes(),
                    config.features,
                    config.classes
                ),
            ));
        }
        if ex.features.steps() != ex.labels.steps() {
            return Err(Error::mismatch(
                "train",
                format!(
                    "{what} video {i}: {} feature steps but {} label steps",
                    ex.features.steps(),
                    ex.labels.steps()
                ),
            ));
        }
        if ex.features.steps() == 0 {
            return Err(Error::InvalidArgument(format!("{what} video {i} is empty")));
        }
    }
    Ok(())
}

/// Trains a freshly initialized model.
pub fn train(
    dataset: &[TrainExample],
    config: &ModelConfig,
    train_config: &TrainConfig,
    validation: Option<&[TrainExample]>,
) -> Result<(Mlad, TrainHistory)> {
    let model = Mlad::new(config.clone())?;
    train_model(model, dataset, train_config, validation)
}

/// Adam on the summed dual-head loss over random crops.
///
/// Each epoch visits every video once in a shuffled order, drawing a crop
/// length from `train_lengths` and a uniformly placed window. Videos shorter
/// than the crop are zero-padded and the padded steps are masked out of the
/// loss. The gradient of a step is the mean over its batch of crops.
pub fn train_model(
    mut model: Mlad,
    dataset: &[TrainExample],
    train_config: &TrainConfig,
    validation: Option<&[TrainExample]>,
) -> Result<(Mlad, TrainHistory)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train_config.validate()?;
    check_examples(model.config(), dataset, "training")?;
    if let Some(val) = validation {
        check_examples(model.config(), val, "validation")?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut adam = AdamState::new(model.params().tensors(), AdamConfig::default());
    let batch_size = train_config.batch_size.unwrap_or(dataset.len());
    let window = train_config.window();
    model.inference_window = Some(window);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let total_steps = train_config.epochs * dataset.len().div_ceil(batch_size);
    let mut step = 0usize;

    for epoch in 0..train_config.epochs {
        order.shuffle(&mut rng);
        let mut loss_total = 0.0;
        let mut alpha_min: Vec<f64> = Vec::new();
        let mut alpha_max: Vec<f64> = Vec::new();

        for batch in order.chunks(batch_size) {
            let mut sum: Vec<Tensor> = model
                .params()
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect();
            for &i in batch {
                let ex = &dataset[i];
                let len = train_config.train_lengths
                    [rng.random_range(0..train_config.train_lengths.len())];
                let steps = ex.features.steps();
                let (start, valid) = if steps >= len {
                    (rng.random_range(0..=steps - len), len)
                } else {
                    (0, steps)
                };
                let x = ex.features.window(start, len);
                let y = ex.labels.window(start, len);
                let (loss, grads) = model.loss_and_grad(&x, &y, valid)?;
                loss_total += loss;
                for (acc, g) in sum.iter_mut().zip(&grads) {
                    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut sum {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            let mut params = model.params_mut().tensors_mut();
            let lr = train_config
                .lr_schedule
                .rate(train_config.lr, step, total_steps);
            adam.step(&mut params, &sum, lr)?;
            step += 1;

            let alphas: Vec<f64> = model.alphas().into_iter().flatten().collect();
            if alpha_min.is_empty() {
                alpha_min = alphas.clone();
                alpha_max = alphas;
            } else {
                for (k, a) in alphas.into_iter().enumerate() {
                    alpha_min[k] = alpha_min[k].min(a);
                    alpha_max[k] = alpha_max[k].max(a);
                }
            }
        }

        let val_fmap = match validation {
            Some(val) => Some(validation_fmap(&model, val, window)?),
            None => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss: loss_total / dataset.len() as f64,
            val_fmap,
            alpha_min,
            alpha_max,
        });
    }
    Ok((model, history))
}

/// Final-head f-mAP over full videos scored with windowed inference.
pub fn validation_fmap(model: &Mlad, examples: &[TrainExample], window: usize) -> Result<f64> {
    let mut samples = SampleSet::new(model.config().classes);
    for ex in examples {
        let scores = model.predict_windowed(&ex.features, window)?;
        samples.push_video(&ex.labels, &scores)?;
    }
    Ok(f_map(&samples)?.mean)
}
