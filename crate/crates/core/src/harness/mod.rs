//! File formats, run configuration and the commands behind the `mlad` CLI.
//!
//! Every command reads its inputs completely and validates them before it
//! writes anything, and outputs are written atomically.

pub mod files;
pub mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LabelGrid;
use crate::metrics::DEFAULT_THRESHOLD;
use crate::model::{
    deserialize_model, serialize_model, train, ModelConfig, TrainConfig, TrainHistory,
};
use crate::synth::{empirical_dependency_matrix, generate, SyntheticDataset, SyntheticSpec};
use crate::tensor::Tensor;

pub use files::{
    parse_predictions, predictions_to_jsonl, read_predictions, write_atomic, Dataset, Prediction,
    VideoRecord,
};
pub use report::{
    align, evaluate, markdown_summary, pair_table_csv, parse_pair_table, EvalReport, REPORT_VERSION,
};

pub const DEFAULT_TAUS: [usize; 5] = [0, 5, 10, 20, 40];

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_taus() -> Vec<usize> {
    DEFAULT_TAUS.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_taus")]
    pub taus: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            taus: default_taus(),
        }
    }
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        config.model.validate()?;
        config.train.validate()?;
        Ok(config)
    }
}

/// Output format of `eval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Md,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "md" => Ok(Self::Md),
            _ => Err(Error::InvalidArgument(format!(
                "unknown format {s:?} (json, csv, md)"
            ))),
        }
    }
}

impl Dataset {
    pub fn from_synthetic(data: &SyntheticDataset) -> Self {
        Self {
            videos: data
                .videos
                .iter()
                .map(|v| VideoRecord {
                    video_id: v.video_id.clone(),
                    steps: v.labels.steps(),
                    dim: v.features.dim(),
                    features: Some(v.features.clone()),
                    positives: v.labels.positives(),
                })
                .collect(),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// `gen`: writes a synthetic dataset and returns a text summary with the
/// empirical dependency matrix at `τ = 0`.
pub fn cmd_gen(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<String> {
    let spec: SyntheticSpec = read_json(spec_path)?;
    spec.validate()?;
    let seed = seed.unwrap_or(spec.seed);
    let data = generate(&spec, seed)?;
    Dataset::from_synthetic(&data).write(out)?;

    let positives: usize = data.videos.iter().map(|v| v.labels.positives().len()).sum();
    let steps: usize = data.videos.iter().map(|v| v.labels.steps()).sum();
    let mut s = format!(
        "{} videos, {steps} steps, {positives} positive labels, seed {seed}\n",
        data.videos.len()
    );
    if !data.videos.is_empty() {
        s.push_str("P(row class | column class active), tau=0:\n");
        let matrix = empirical_dependency_matrix(&data.labels(), 0)?;
        s.push_str(&format_matrix(&matrix));
    }
    Ok(s)
}

fn format_matrix(matrix: &[Vec<Option<f64>>]) -> String {
    let mut s = String::from("     ");
    for j in 0..matrix.len() {
        let _ = write!(s, "{j:>6}");
    }
    s.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        let _ = write!(s, "{i:>5}");
        for v in row {
            match v {
                Some(x) => {
                    let _ = write!(s, "{x:>6.2}");
                }
                None => s.push_str("     -"),
            }
        }
        s.push('\n');
    }
    s
}

/// Where `train` writes the history next to a model file.
pub fn history_path(model_out: &Path) -> PathBuf {
    let mut p = model_out.as_os_str().to_owned();
    p.push(".history.json");
    PathBuf::from(p)
}

/// `train`: fits a model and writes it with its training history.
pub fn cmd_train(
    config_path: &Path,
    data: &Path,
    validation: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<TrainHistory> {
    let mut config = RunConfig::read(config_path)?;
    if let Some(seed) = seed {
        config.model.seed = seed;
        config.train.seed = seed;
    }
    let (c, f) = (config.model.classes, config.model.features);
    let examples = Dataset::read(data)?.examples(c, f)?;
    let val = match validation {
        Some(path) => Some(Dataset::read(path)?.examples(c, f)?),
        None => None,
    };
    let (model, history) = train(&examples, &config.model, &config.train, val.as_deref())?;
    write_atomic(out, &serialize_model(&model)?)?;
    let mut text = serde_json::to_string_pretty(&history)?;
    text.push('\n');
    write_atomic(&history_path(out), text.as_bytes())?;
    Ok(history)
}

/// `predict`: final-head scores for every video, in windows of the training
/// length.
pub fn cmd_predict(model_path: &Path, data: &Path, out: &Path) -> Result<usize> {
    let model = deserialize_model(&fs::read(model_path)?)?;
    let dataset = Dataset::read(data)?;
    let examples = dataset.examples(model.config().classes, model.config().features)?;
    let mut predictions = Vec::with_capacity(examples.len());
    for (v, ex) in dataset.videos.iter().zip(&examples) {
        let window = model.inference_window.unwrap_or(ex.features.steps());
        predictions.push(Prediction {
            video_id: v.video_id.clone(),
            scores: model.predict_windowed(&ex.features, window)?,
        });
    }
    write_atomic(out, predictions_to_jsonl(&predictions)?.as_bytes())?;
    Ok(predictions.len())
}

pub struct EvalArgs<'a> {
    pub gt: &'a Path,
    pub preds: &'a Path,
    pub config: Option<&'a Path>,
    pub threshold: Option<f64>,
    pub taus: Option<Vec<usize>>,
    pub format: ReportFormat,
    pub out: &'a Path,
}

/// `eval`: writes the report in the requested format and returns it.
pub fn cmd_eval(args: EvalArgs) -> Result<EvalReport> {
    let mut eval = match args.config {
        Some(path) => RunConfig::read(path)?.eval,
        None => EvalConfig::default(),
    };
    if let Some(t) = args.threshold {
        eval.threshold = t;
    }
    if let Some(taus) = args.taus {
        eval.taus = taus;
    }
    let gt = Dataset::read(args.gt)?;
    let preds = read_predictions(args.preds)?;
    let report = evaluate(&align(&gt, &preds)?, eval.threshold, &eval.taus)?;
    let text = match args.format {
        ReportFormat::Json => {
            let mut t = serde_json::to_string_pretty(&report)?;
            t.push('\n');
            t
        }
        ReportFormat::Csv => pair_table_csv(&report.pairs)?,
        ReportFormat::Md => markdown_summary(&report),
    };
    write_atomic(args.out, text.as_bytes())?;
    Ok(report)
}

/// Co-occurrence attention of one layer averaged over the steps where
/// `class` is active. `cb_map` is T×C×C; `None` if the class never occurs.
pub fn averaged_cb_map(cb_map: &Tensor, labels: &LabelGrid, class: usize) -> Option<Vec<Vec<f64>>> {
    let c = labels.classes();
    let steps: Vec<usize> = (0..labels.steps())
        .filter(|&t| labels.get(t, class))
        .collect();
    if steps.is_empty() {
        return None;
    }
    let mut avg = vec![vec![0.0; c]; c];
    for &t in &steps {
        for (i, row) in avg.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += cb_map.get(&[t, i, j]);
            }
        }
    }
    let n = steps.len() as f64;
    avg.iter_mut().flatten().for_each(|v| *v /= n);
    Some(avg)
}

pub const ATTN_COLUMNS: [&str; 6] = ["layer", "branch", "index", "row", "col", "value"];

/// `attn`: attention maps of one video as CSV. With `class`, also emits
/// `cb_avg` rows holding each layer's co-occurrence map averaged over the
/// steps where that class is active; `index` is then the class.
pub fn cmd_attn(
    model_path: &Path,
    data: &Path,
    video_id: &str,
    class: Option<&str>,
    out: &Path,
) -> Result<usize> {
    let model = deserialize_model(&fs::read(model_path)?)?;
    let classes = model.config().classes;
    let class = class
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&c| c < classes)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown class {s:?} (expected 0..{classes})"))
                })
        })
        .transpose()?;
    let dataset = Dataset::read(data)?;
    let video = dataset.find(video_id).ok_or_else(|| {
        Error::VideoMismatch(format!("video {video_id:?} not in {}", data.display()))
    })?;
    let single = Dataset {
        videos: vec![video.clone()],
    };
    let example = single.examples(classes, model.config().features)?.remove(0);
    let output = model.forward(&example.features)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ATTN_COLUMNS)?;
    let mut rows = 0usize;
    let mut emit =
        |w: &mut csv::Writer<Vec<u8>>, layer: usize, branch: &str, maps: &Tensor| -> Result<()> {
            let [outer, n, _] = maps.shape() else {
                unreachable!("attention maps are rank 3")
            };
            for index in 0..*outer {
                for row in 0..*n {
                    for col in 0..*n {
                        let value = maps.get(&[index, row, col]);
                        w.write_record([
                            layer.to_string(),
                            branch.to_string(),
                            index.to_string(),
                            row.to_string(),
                            col.to_string(),
                            value.to_string(),
                        ])?;
                        rows += 1;
                    }
                }
            }
            Ok(())
        };
    let layers = output.cb_maps.len().max(output.tb_maps.len());
    for layer in 0..layers {
        if let Some(maps) = output.cb_maps.get(layer) {
            emit(&mut w, layer, "cb", maps)?;
        }
        if let Some(maps) = output.tb_maps.get(layer) {
            emit(&mut w, layer, "tb", maps)?;
        }
    }
    if let Some(class) = class {
        for (layer, maps) in output.cb_maps.iter().enumerate() {
            let Some(avg) = averaged_cb_map(maps, &example.labels, class) else {
                return Err(Error::InvalidArgument(format!(
                    "class {class} is never active in video {video_id:?}"
                )));
            };
            for (row, values) in avg.iter().enumerate() {
                for (col, value) in values.iter().enumerate() {
                    w.write_record([
                        layer.to_string(),
                        "cb_avg".to_string(),
                        class.to_string(),
                        row.to_string(),
                        col.to_string(),
                        value.to_string(),
                    ])?;
                    rows += 1;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(out, &bytes)?;
    Ok(rows)
}
