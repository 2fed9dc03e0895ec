//! Per-video time × channel grids: input features, binary labels and scores.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Real-valued inputs, one `F`-vector per time-step.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    steps: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(steps: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if steps * dim != data.len() {
            return Err(Error::mismatch(
                "features",
                format!(
                    "{steps}×{dim} needs {} values, got {}",
                    steps * dim,
                    data.len()
                ),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self { steps, dim, data })
    }

    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self {
            steps,
            dim,
            data: vec![0.0; steps * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        if let Some((t, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::mismatch(
                "features",
                format!("row {t} has {} values, expected {dim}", row.len()),
            ));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Copies steps `[start, start + len)`; steps past the end are zero.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let mut data = vec![0.0; len * self.dim];
        let available = self.steps.saturating_sub(start).min(len);
        data[..available * self.dim]
            .copy_from_slice(&self.data[start * self.dim..(start + available) * self.dim]);
        Self {
            steps: len,
            dim: self.dim,
            data,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.steps, self.dim], self.data.clone()).expect("feature shape")
    }
}

/// Binary ground truth `y[t][c]`, dense in memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    steps: usize,
    classes: usize,
    data: Vec<bool>,
}

impl LabelGrid {
    pub fn new(steps: usize, classes: usize) -> Self {
        Self {
            steps,
            classes,
            data: vec![false; steps * classes],
        }
    }

    pub fn from_bools(steps: usize, classes: usize, data: Vec<bool>) -> Result<Self> {
        if steps * classes != data.len() {
            return Err(Error::mismatch(
                "labels",
                format!(
                    "{steps}×{classes} needs {} values, got {}",
                    steps * classes,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            steps,
            classes,
            data,
        })
    }

    /// Builds a grid from `[t, c]` positives, rejecting out-of-range and
    /// duplicate entries.
    pub fn from_positives(
        steps: usize,
        classes: usize,
        positives: &[(usize, usize)],
    ) -> Result<Self> {
        let mut grid = Self::new(steps, classes);
        for &(t, c) in positives {
            if t >= steps || c >= classes {
                return Err(Error::InvalidLabel(format!(
                    "[{t}, {c}] outside {steps}×{classes}"
                )));
            }
            if grid.get(t, c) {
                return Err(Error::InvalidLabel(format!("duplicate label [{t}, {c}]")));
            }
            grid.set(t, c, true);
        }
        Ok(grid)
    }

    /// Column-per-class constructor used heavily in tests: `columns[c][t]`.
    pub fn from_columns(columns: &[&[u8]]) -> Result<Self> {
        let classes = columns.len();
        let steps = columns.first().map_or(0, |c| c.len());
        let mut grid = Self::new(steps, classes);
        for (c, col) in columns.iter().enumerate() {
            if col.len() != steps {
                return Err(Error::mismatch("labels", "ragged columns"));
            }
            for (t, &v) in col.iter().enumerate() {
                match v {
                    0 => {}
                    1 => grid.set(t, c, true),
                    other => {
                        return Err(Error::InvalidLabel(format!("value {other} at [{t}, {c}]")))
                    }
                }
            }
        }
        Ok(grid)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, t: usize, c: usize) -> bool {
        self.data[t * self.classes + c]
    }

    pub fn set(&mut self, t: usize, c: usize, value: bool) {
        self.data[t * self.classes + c] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    /// Sorted `(t, c)` positives.
    pub fn positives(&self) -> Vec<(usize, usize)> {
        (0..self.steps)
            .flat_map(|t| (0..self.classes).map(move |c| (t, c)))
            .filter(|&(t, c)| self.get(t, c))
            .collect()
    }

    /// Copies steps `[start, start + len)`; steps past the end are absent.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let mut data = vec![false; len * self.classes];
        let available = self.steps.saturating_sub(start).min(len);
        data[..available * self.classes]
            .copy_from_slice(&self.data[start * self.classes..(start + available) * self.classes]);
        Self {
            steps: len,
            classes: self.classes,
            data,
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Predicted probabilities `ŷ[t][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrid {
    steps: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ScoreGrid {
    pub fn new(steps: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if steps * classes != data.len() {
            return Err(Error::mismatch(
                "scores",
                format!(
                    "{steps}×{classes} needs {} values, got {}",
                    steps * classes,
                    data.len()
                ),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "score {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            steps,
            classes,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::mismatch("scores", "ragged rows"));
        }
        Self::new(rows.len(), classes, rows.concat())
    }

    /// Scores equal to the labels (1.0 for positives, 0.0 otherwise).
    pub fn from_labels(labels: &LabelGrid) -> Self {
        Self {
            steps: labels.steps(),
            classes: labels.classes(),
            data: labels.as_f64(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.classes + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.classes.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// `ỹ = 1` iff `score > threshold`.
    pub fn binarize(&self, threshold: f64) -> LabelGrid {
        LabelGrid {
            steps: self.steps,
            classes: self.classes,
            data: self.data.iter().map(|&s| s > threshold).collect(),
        }
    }
}
