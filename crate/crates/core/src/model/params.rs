//! Learned weights and their canonical naming.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine map `x W + b` with `W: in×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Query, key and value projections of one attention branch.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub query: Projection,
    pub key: Projection,
    pub value: Projection,
}

/// Per-class feature extractors stored side by side: column block `c` of
/// `weight` (`F × C·H`) is `W_c`, and block `c` of `bias` (`C·H`) is `b_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassExtractorParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ClassExtractorParams {
    /// `W_c` as an `F × H` matrix.
    pub fn class_weight(&self, class: usize, hidden: usize) -> Tensor {
        let (f, width) = (self.weight.shape()[0], self.weight.shape()[1]);
        let mut data = Vec::with_capacity(f * hidden);
        for row in 0..f {
            let start = row * width + class * hidden;
            data.extend_from_slice(&self.weight.data()[start..start + hidden]);
        }
        Tensor::new(vec![f, hidden], data).expect("class block")
    }

    pub fn class_bias(&self, class: usize, hidden: usize) -> Tensor {
        Tensor::vector(self.bias.data()[class * hidden..(class + 1) * hidden].to_vec())
    }
}

/// One dependency layer. Branch parameters are present only when the branch
/// is enabled; `alpha_raw` only when the merge weight is learned.
#[derive(Clone, Debug, PartialEq)]
pub struct MladLayerParams {
    pub cb: Option<AttentionParams>,
    pub tb: Option<AttentionParams>,
    /// Unconstrained merge weight; the layer uses `sigmoid(alpha_raw)`.
    pub alpha_raw: Option<Tensor>,
}

/// Per-class logistic classifiers: row `c` of `weight` (`C × H`) and entry
/// `c` of `bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub extractor: ClassExtractorParams,
    pub layers: Vec<MladLayerParams>,
    pub initial_head: ClassifierParams,
    pub final_head: ClassifierParams,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("init shape")
    }

    fn projection(&mut self, hidden: usize) -> Projection {
        Projection {
            weight: self.uniform(&[hidden, hidden], hidden),
            bias: Tensor::zeros(&[hidden]),
        }
    }

    fn attention(&mut self, hidden: usize) -> AttentionParams {
        AttentionParams {
            query: self.projection(hidden),
            key: self.projection(hidden),
            value: self.projection(hidden),
        }
    }
}

impl ModelParams {
    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero,
    /// merge weights at raw 0.
    pub fn init(config: &ModelConfig) -> Self {
        let (c, f, h) = (config.classes, config.features, config.hidden);
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let extractor = ClassExtractorParams {
            weight: init.uniform(&[f, c * h], f),
            bias: Tensor::zeros(&[c * h]),
        };
        let layers = (0..config.effective_layers())
            .map(|_| MladLayerParams {
                cb: config.branches.uses_cb().then(|| init.attention(h)),
                tb: config.branches.uses_tb().then(|| init.attention(h)),
                alpha_raw: config.learns_alpha().then(|| Tensor::scalar(0.0)),
            })
            .collect();
        let initial_head = ClassifierParams {
            weight: init.uniform(&[c, h], h),
            bias: Tensor::zeros(&[c]),
        };
        let final_head = ClassifierParams {
            weight: init.uniform(&[c, h], h),
            bias: Tensor::zeros(&[c]),
        };
        Self {
            extractor,
            layers,
            initial_head,
            final_head,
        }
    }

    /// All tensors in canonical order with stable dotted names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("extractor.weight".to_string(), &self.extractor.weight),
            ("extractor.bias".to_string(), &self.extractor.bias),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (branch, params) in [("cb", &layer.cb), ("tb", &layer.tb)] {
                if let Some(p) = params {
                    for (role, proj) in [("query", &p.query), ("key", &p.key), ("value", &p.value)]
                    {
                        out.push((format!("layers.{l}.{branch}.{role}.weight"), &proj.weight));
                        out.push((format!("layers.{l}.{branch}.{role}.bias"), &proj.bias));
                    }
                }
            }
            if let Some(a) = &layer.alpha_raw {
                out.push((format!("layers.{l}.alpha_raw"), a));
            }
        }
        for (name, head) in [
            ("initial_head", &self.initial_head),
            ("final_head", &self.final_head),
        ] {
            out.push((format!("{name}.weight"), &head.weight));
            out.push((format!("{name}.bias"), &head.bias));
        }
        out
    }

    /// Mutable views in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.extractor.weight, &mut self.extractor.bias];
        for layer in &mut self.layers {
            for p in [&mut layer.cb, &mut layer.tb].into_iter().flatten() {
                for proj in [&mut p.query, &mut p.key, &mut p.value] {
                    out.push(&mut proj.weight);
                    out.push(&mut proj.bias);
                }
            }
            if let Some(a) = &mut layer.alpha_raw {
                out.push(a);
            }
        }
        for head in [&mut self.initial_head, &mut self.final_head] {
            out.push(&mut head.weight);
            out.push(&mut head.bias);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Replaces every tensor from a name → tensor lookup, checking that the
    /// set of names and every shape match this parameter layout exactly.
    pub fn load_named(
        &mut self,
        mut lookup: std::collections::BTreeMap<String, Tensor>,
    ) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let mut replacements = Vec::with_capacity(names.len());
        for (name, shape) in &names {
            let t = lookup
                .remove(name)
                .ok_or_else(|| Error::ModelFormat(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ModelFormat(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
            replacements.push(t);
        }
        if let Some(extra) = lookup.keys().next() {
            return Err(Error::ModelFormat(format!("unexpected parameter {extra}")));
        }
        for (slot, t) in self.tensors_mut().into_iter().zip(replacements) {
            *slot = t;
        }
        Ok(())
    }
}
