//! The multi-label action dependency network.
//!
//! Class-level features are extracted per time-step, refined by a stack of
//! dependency layers (a co-occurrence branch attending across classes and a
//! temporal branch attending across time, merged by a weight `α`), and
//! classified by per-class logistic heads. One head reads the initial class
//! features and one reads the output of the last layer; training sums both
//! losses.

mod config;
mod io;
mod layers;
mod params;
mod train;

pub use config::{AlphaMode, Branches, ModelConfig};
pub use io::{deserialize_model, serialize_model, MODEL_FORMAT_VERSION};
pub use layers::{cb_branch, classify, extract_class_features, merge, tb_branch};
pub use params::{
    AttentionParams, ClassExtractorParams, ClassifierParams, MladLayerParams, ModelParams,
    Projection,
};
pub use train::{
    train, train_model, validation_fmap, EpochRecord, LrSchedule, TrainConfig, TrainExample,
    TrainHistory,
};

use layers::{cb_on, extract_on, logits_on, tb_on, BoundAttention};

use crate::error::{Error, Result};
use crate::grid::{FeatureSequence, LabelGrid, ScoreGrid};
use crate::tape::{Tape, Var};
use crate::tensor::{sigmoid, Tensor};

/// Scores and attention maps of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub y_init: ScoreGrid,
    pub y_final: ScoreGrid,
    /// One `T × C × C` tensor per layer with a co-occurrence branch.
    pub cb_maps: Vec<Tensor>,
    /// One `C × T × T` tensor per layer with a temporal branch.
    pub tb_maps: Vec<Tensor>,
}

impl ForwardOutput {
    /// Number of stored attention weights across all layers.
    pub fn attention_entries(&self) -> usize {
        self.cb_maps
            .iter()
            .chain(&self.tb_maps)
            .map(Tensor::len)
            .sum()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BoundLayer {
    cb: Option<BoundAttention>,
    tb: Option<BoundAttention>,
    /// The merge weight as used (after the sigmoid when learned).
    alpha: Option<Var>,
}

/// Model parameters recorded as tape leaves, in canonical order.
pub(crate) struct BoundModel {
    pub leaves: Vec<Var>,
    extractor: (Var, Var),
    layers: Vec<BoundLayer>,
    initial_head: (Var, Var),
    final_head: (Var, Var),
}

pub(crate) struct TapeForward {
    pub bound: BoundModel,
    pub init_logits: Var,
    pub final_logits: Var,
    pub cb_maps: Vec<Var>,
    pub tb_maps: Vec<Var>,
}

/// A configured network with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlad {
    config: ModelConfig,
    params: ModelParams,
    /// Window length used for inference on long videos, set by training.
    pub inference_window: Option<usize>,
}

impl Mlad {
    /// Freshly initialized model from the config seed.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Ok(Self {
            config,
            params,
            inference_window: None,
        })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        // Layout check: names and shapes must match a fresh init.
        let mut probe = ModelParams::init(&config);
        let lookup = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        probe.load_named(lookup)?;
        Ok(Self {
            config,
            params,
            inference_window: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Effective merge weight of each layer (`None` for single-branch layers).
    pub fn alphas(&self) -> Vec<Option<f64>> {
        self.params
            .layers
            .iter()
            .map(|layer| match (&layer.alpha_raw, self.config.branches) {
                (Some(raw), _) => Some(sigmoid(raw.item())),
                (None, Branches::Both) => Some(self.config.alpha_fixed),
                (None, _) => None,
            })
            .collect()
    }

    fn bind(&self, tape: &mut Tape) -> BoundModel {
        struct Binder<'t> {
            tape: &'t mut Tape,
            leaves: Vec<Var>,
        }
        impl Binder<'_> {
            fn leaf(&mut self, t: &Tensor) -> Var {
                let v = self.tape.leaf(t.clone());
                self.leaves.push(v);
                v
            }
            fn pair(&mut self, w: &Tensor, b: &Tensor) -> (Var, Var) {
                (self.leaf(w), self.leaf(b))
            }
            fn branch(&mut self, a: &Option<AttentionParams>) -> Option<BoundAttention> {
                a.as_ref().map(|a| {
                    let bound = BoundAttention::bind(self.tape, a);
                    self.leaves.extend(bound.leaves());
                    bound
                })
            }
        }

        let p = &self.params;
        let mut b = Binder {
            tape,
            leaves: Vec::new(),
        };
        let extractor = b.pair(&p.extractor.weight, &p.extractor.bias);
        let mut layers = Vec::with_capacity(p.layers.len());
        for layer in &p.layers {
            let cb = b.branch(&layer.cb);
            let tb = b.branch(&layer.tb);
            let alpha = match &layer.alpha_raw {
                Some(raw) => {
                    let r = b.leaf(raw);
                    Some(b.tape.sigmoid(r).expect("scalar sigmoid"))
                }
                None if cb.is_some() && tb.is_some() => {
                    Some(b.tape.leaf(Tensor::scalar(self.config.alpha_fixed)))
                }
                None => None,
            };
            layers.push(BoundLayer { cb, tb, alpha });
        }
        let initial_head = b.pair(&p.initial_head.weight, &p.initial_head.bias);
        let final_head = b.pair(&p.final_head.weight, &p.final_head.bias);
        BoundModel {
            leaves: b.leaves,
            extractor,
            layers,
            initial_head,
            final_head,
        }
    }

    fn check_input(&self, x: &FeatureSequence) -> Result<()> {
        if x.dim() != self.config.features {
            return Err(Error::mismatch(
                "forward",
                format!(
                    "input width {} but model expects F={}",
                    x.dim(),
                    self.config.features
                ),
            ));
        }
        if x.steps() == 0 {
            return Err(Error::InvalidArgument("empty feature sequence".into()));
        }
        Ok(())
    }

    pub(crate) fn forward_on(&self, tape: &mut Tape, x: &FeatureSequence) -> Result<TapeForward> {
        self.check_input(x)?;
        let bound = self.bind(tape);
        let (c, h) = (self.config.classes, self.config.hidden);
        let xv = tape.leaf(x.to_tensor());
        let f0 = extract_on(tape, xv, bound.extractor.0, bound.extractor.1, c, h)?;
        let init_logits = logits_on(tape, f0, bound.initial_head.0, bound.initial_head.1)?;

        let mut current = f0;
        let mut cb_maps = Vec::new();
        let mut tb_maps = Vec::new();
        for layer in &bound.layers {
            let cb_out = match layer.cb {
                Some(p) => {
                    let (out, maps) = cb_on(tape, current, p)?;
                    cb_maps.push(maps);
                    Some(out)
                }
                None => None,
            };
            let tb_out = match layer.tb {
                Some(p) => {
                    let (out, maps) = tb_on(tape, current, p)?;
                    tb_maps.push(maps);
                    Some(out)
                }
                None => None,
            };
            current = match (cb_out, tb_out, layer.alpha) {
                (Some(a), Some(b), Some(alpha)) => tape.mix(alpha, a, b)?,
                (Some(a), None, _) => a,
                (None, Some(b), _) => b,
                _ => unreachable!("every bound layer has at least one branch"),
            };
        }
        let final_logits = logits_on(tape, current, bound.final_head.0, bound.final_head.1)?;
        Ok(TapeForward {
            bound,
            init_logits,
            final_logits,
            cb_maps,
            tb_maps,
        })
    }

    /// Full forward pass with all attention maps captured.
    pub fn forward(&self, x: &FeatureSequence) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let fw = self.forward_on(&mut tape, x)?;
        let scores = |tape: &mut Tape, z: Var| -> Result<ScoreGrid> {
            let y = tape.sigmoid(z)?;
            let s = tape.value(y);
            ScoreGrid::new(s.shape()[0], s.shape()[1], s.data().to_vec())
        };
        Ok(ForwardOutput {
            y_init: scores(&mut tape, fw.init_logits)?,
            y_final: scores(&mut tape, fw.final_logits)?,
            cb_maps: fw.cb_maps.iter().map(|v| tape.value(*v).clone()).collect(),
            tb_maps: fw.tb_maps.iter().map(|v| tape.value(*v).clone()).collect(),
        })
    }

    /// Final-head scores.
    pub fn predict(&self, x: &FeatureSequence) -> Result<ScoreGrid> {
        Ok(self.forward(x)?.y_final)
    }

    /// Final-head scores computed over non-overlapping windows of `window`
    /// steps. A remainder shorter than the window is scored by one extra
    /// window aligned to the end of the video; only its unscored steps are
    /// kept. Videos no longer than `window` are scored in one pass.
    pub fn predict_windowed(&self, x: &FeatureSequence, window: usize) -> Result<ScoreGrid> {
        if window == 0 {
            return Err(Error::InvalidArgument(
                "window length must be positive".into(),
            ));
        }
        let steps = x.steps();
        if steps <= window {
            return self.predict(x);
        }
        let classes = self.config.classes;
        let mut data = vec![0.0; steps * classes];
        for (start, keep_from) in window_plan(steps, window) {
            let scores = self.predict(&x.window(start, window))?;
            for t in keep_from..window {
                let dst = (start + t) * classes;
                data[dst..dst + classes].copy_from_slice(scores.row(t));
            }
        }
        ScoreGrid::new(steps, classes, data)
    }

    /// Summed initial- and final-head mean BCE on one example and its
    /// gradient for every parameter (canonical order). Steps at or after
    /// `valid_steps` are excluded from the loss.
    pub fn loss_and_grad(
        &self,
        x: &FeatureSequence,
        y: &LabelGrid,
        valid_steps: usize,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let fw = self.forward_on(&mut tape, x)?;
        let loss = self.loss_on(&mut tape, &fw, y, valid_steps)?;
        let value = tape.value(loss).item();
        let grads = tape.grad(loss, &fw.bound.leaves)?;
        Ok((value, grads))
    }

    pub(crate) fn loss_on(
        &self,
        tape: &mut Tape,
        fw: &TapeForward,
        y: &LabelGrid,
        valid_steps: usize,
    ) -> Result<Var> {
        let steps = tape.value(fw.final_logits).shape()[0];
        if y.steps() != steps || y.classes() != self.config.classes {
            return Err(Error::mismatch(
                "loss",
                format!(
                    "labels {}×{} vs output {}×{}",
                    y.steps(),
                    y.classes(),
                    steps,
                    self.config.classes
                ),
            ));
        }
        let targets = y.as_f64();
        let mask: Vec<bool> = (0..steps * self.config.classes)
            .map(|i| i / self.config.classes < valid_steps)
            .collect();
        let init = tape.bce_with_logits(fw.init_logits, &targets, &mask)?;
        let fin = tape.bce_with_logits(fw.final_logits, &targets, &mask)?;
        tape.add(init, fin)
    }
}

/// `(window start, first step to keep)` pairs covering `0..steps` exactly
/// once with windows of length `window` (requires `steps > window`).
pub fn window_plan(steps: usize, window: usize) -> Vec<(usize, usize)> {
    let mut plan = Vec::new();
    let mut start = 0;
    while start + window <= steps {
        plan.push((start, 0));
        start += window;
    }
    if start < steps {
        let aligned = steps - window;
        plan.push((aligned, start - aligned));
    }
    plan
}

/// Mean binary cross-entropy of one score grid against labels.
pub fn mean_bce(scores: &ScoreGrid, y: &LabelGrid) -> Result<f64> {
    if scores.steps() != y.steps() || scores.classes() != y.classes() {
        return Err(Error::mismatch(
            "loss",
            format!(
                "scores {}×{} vs labels {}×{}",
                scores.steps(),
                scores.classes(),
                y.steps(),
                y.classes()
            ),
        ));
    }
    let n = scores.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = scores
        .data()
        .iter()
        .zip(y.data())
        .map(|(&p, &label)| if label { -p.ln() } else { -(-p).ln_1p() })
        .sum();
    Ok(total / n as f64)
}

/// Training objective on a forward output: mean BCE of the final head plus
/// mean BCE of the initial head.
pub fn loss(out: &ForwardOutput, y: &LabelGrid) -> Result<f64> {
    Ok(mean_bce(&out.y_final, y)? + mean_bce(&out.y_init, y)?)
}

#[cfg(test)]
mod tests;
