//! Multi-label action dependency modeling for temporal action localization.
//!
//! * [`tensor`], [`tape`], [`adam`]: dense `f64` tensors, reverse-mode
//!   differentiation and the optimizer.
//! * [`model`]: the dependency network, its loss and training loop.
//! * [`metrics`]: action-conditional metrics and standard multi-label metrics.
//! * [`synth`]: synthetic sequences with planted action dependencies.
//! * [`harness`]: file formats and the commands behind the CLI.

pub mod adam;
pub mod error;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{FeatureSequence, LabelGrid, ScoreGrid};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
