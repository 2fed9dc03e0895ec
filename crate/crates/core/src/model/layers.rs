//! The building blocks of the network, expressed as tape operations.
//!
//! Shapes follow the `T × C × H` layout of class-level features: time-step,
//! action class, feature channel.

use super::params::{AttentionParams, ClassExtractorParams, ClassifierParams, Projection};
use crate::error::{Error, Result};
use crate::grid::{FeatureSequence, ScoreGrid};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundProjection {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundAttention {
    pub query: BoundProjection,
    pub key: BoundProjection,
    pub value: BoundProjection,
}

impl BoundProjection {
    pub fn bind(tape: &mut Tape, p: &Projection) -> Self {
        Self {
            weight: tape.leaf(p.weight.clone()),
            bias: tape.leaf(p.bias.clone()),
        }
    }
}

impl BoundAttention {
    pub fn bind(tape: &mut Tape, p: &AttentionParams) -> Self {
        Self {
            query: BoundProjection::bind(tape, &p.query),
            key: BoundProjection::bind(tape, &p.key),
            value: BoundProjection::bind(tape, &p.value),
        }
    }

    pub fn leaves(&self) -> [Var; 6] {
        [
            self.query.weight,
            self.query.bias,
            self.key.weight,
            self.key.bias,
            self.value.weight,
            self.value.bias,
        ]
    }
}

/// `ReLU(x W + b)` for all classes at once, reshaped to `T × C × H`.
pub(crate) fn extract_on(
    tape: &mut Tape,
    x: Var,
    weight: Var,
    bias: Var,
    classes: usize,
    hidden: usize,
) -> Result<Var> {
    let steps = tape.value(x).shape()[0];
    let pre = tape.matmul(x, weight)?;
    let pre = tape.add_bias(pre, bias)?;
    let act = tape.relu(pre)?;
    tape.reshape(act, &[steps, classes, hidden])
}

fn project(tape: &mut Tape, flat: Var, p: BoundProjection, shape: &[usize]) -> Result<Var> {
    let y = tape.matmul(flat, p.weight)?;
    let y = tape.add_bias(y, p.bias)?;
    tape.reshape(y, shape)
}

/// Scaled dot-product self-attention applied independently to each of the
/// `B` groups of an input shaped `B × N × H`. Returns the refined features
/// (`B × N × H`) and the attention weights (`B × N × N`).
pub(crate) fn attention_on(tape: &mut Tape, input: Var, p: BoundAttention) -> Result<(Var, Var)> {
    let shape = tape.value(input).shape().to_vec();
    let [groups, items, hidden] = shape[..] else {
        return Err(Error::mismatch(
            "attention",
            format!("expected rank 3, got {shape:?}"),
        ));
    };
    if tape.value(p.query.weight).shape() != [hidden, hidden] {
        return Err(Error::mismatch(
            "attention",
            format!(
                "projection {:?} does not match width {hidden}",
                tape.value(p.query.weight).shape()
            ),
        ));
    }
    let flat = tape.reshape(input, &[groups * items, hidden])?;
    let q = project(tape, flat, p.query, &shape)?;
    let k = project(tape, flat, p.key, &shape)?;
    let v = project(tape, flat, p.value, &shape)?;
    let kt = tape.transpose(k)?;
    let scores = tape.batch_matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (hidden as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    let out = tape.batch_matmul(weights, v)?;
    Ok((out, weights))
}

/// Attention across classes within each time-step. Maps are `T × C × C`.
pub(crate) fn cb_on(tape: &mut Tape, f: Var, p: BoundAttention) -> Result<(Var, Var)> {
    attention_on(tape, f, p)
}

/// Attention across time within each class. Maps are `C × T × T`.
pub(crate) fn tb_on(tape: &mut Tape, f: Var, p: BoundAttention) -> Result<(Var, Var)> {
    let per_class = tape.swap_leading(f)?;
    let (out, weights) = attention_on(tape, per_class, p)?;
    let out = tape.swap_leading(out)?;
    Ok((out, weights))
}

/// Per-class logits `W_c · g[t][c] + b_c` as a `T × C` value.
pub(crate) fn logits_on(tape: &mut Tape, g: Var, weight: Var, bias: Var) -> Result<Var> {
    let weighted = tape.mul_bias(g, weight)?;
    let dots = tape.sum_last(weighted)?;
    tape.add_bias(dots, bias)
}

fn check_features(f: &Tensor) -> Result<(usize, usize, usize)> {
    match f.shape() {
        [t, c, h] => Ok((*t, *c, *h)),
        s => Err(Error::mismatch(
            "class features",
            format!("expected T×C×H, got {s:?}"),
        )),
    }
}

/// Class-level features `f[t][c] = ReLU(W_cᵀ x_t + b_c)` as `T × C × H`.
pub fn extract_class_features(
    x: &FeatureSequence,
    p: &ClassExtractorParams,
    hidden: usize,
) -> Result<Tensor> {
    let ws = p.weight.shape();
    if ws.len() != 2
        || ws[0] != x.dim()
        || hidden == 0
        || !ws[1].is_multiple_of(hidden)
        || p.bias.len() != ws[1]
    {
        return Err(Error::mismatch(
            "extract_class_features",
            format!(
                "features of width {} with weight {:?}, bias {:?}, H={hidden}",
                x.dim(),
                ws,
                p.bias.shape()
            ),
        ));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.to_tensor());
    let w = tape.leaf(p.weight.clone());
    let b = tape.leaf(p.bias.clone());
    let out = extract_on(&mut tape, xv, w, b, ws[1] / hidden, hidden)?;
    Ok(tape.value(out).clone())
}

/// Co-occurrence branch: returns refined features and the `T × C × C` maps.
pub fn cb_branch(f: &Tensor, p: &AttentionParams) -> Result<(Tensor, Tensor)> {
    check_features(f)?;
    let mut tape = Tape::new();
    let fv = tape.leaf(f.clone());
    let bound = BoundAttention::bind(&mut tape, p);
    let (out, maps) = cb_on(&mut tape, fv, bound)?;
    Ok((tape.value(out).clone(), tape.value(maps).clone()))
}

/// Temporal branch: returns refined features and the `C × T × T` maps.
pub fn tb_branch(f: &Tensor, p: &AttentionParams) -> Result<(Tensor, Tensor)> {
    check_features(f)?;
    let mut tape = Tape::new();
    let fv = tape.leaf(f.clone());
    let bound = BoundAttention::bind(&mut tape, p);
    let (out, maps) = tb_on(&mut tape, fv, bound)?;
    Ok((tape.value(out).clone(), tape.value(maps).clone()))
}

/// `α·f′ + (1 − α)·f″`.
pub fn merge(cb_out: &Tensor, tb_out: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let mut tape = Tape::new();
    let a = tape.leaf(cb_out.clone());
    let b = tape.leaf(tb_out.clone());
    let al = tape.leaf(Tensor::scalar(alpha));
    let g = tape.mix(al, a, b)?;
    Ok(tape.value(g).clone())
}

/// `ŷ[t][c] = σ(W_cᵀ g[t][c] + b_c)`.
pub fn classify(g: &Tensor, head: &ClassifierParams) -> Result<ScoreGrid> {
    let (t, c, h) = check_features(g)?;
    if head.weight.shape() != [c, h] || head.bias.shape() != [c] {
        return Err(Error::mismatch(
            "classify",
            format!(
                "features {:?} with head {:?}/{:?}",
                g.shape(),
                head.weight.shape(),
                head.bias.shape()
            ),
        ));
    }
    let mut tape = Tape::new();
    let gv = tape.leaf(g.clone());
    let w = tape.leaf(head.weight.clone());
    let b = tape.leaf(head.bias.clone());
    let z = logits_on(&mut tape, gv, w, b)?;
    let y = tape.sigmoid(z)?;
    ScoreGrid::new(t, c, tape.value(y).data().to_vec())
}
