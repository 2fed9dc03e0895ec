//! JSON Lines dataset and prediction files.
//!
//! Dataset line:
//!
//! ```text
//! {"video_id":"v1","T":4,"F":2,"features":[[0.1,0.2],...],"labels":[[0,3],[1,3]]}
//! ```
//!
//! `features` may be omitted in label-only files. `labels` lists the
//! `[t, c]` positions of positive entries. Prediction line:
//!
//! ```text
//! {"video_id":"v1","scores":[[0.9,0.1,...],...]}
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureSequence, LabelGrid, ScoreGrid};
use crate::model::TrainExample;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoLine {
    video_id: String,
    #[serde(rename = "T")]
    steps: usize,
    #[serde(rename = "F")]
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
    labels: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    video_id: String,
    scores: Vec<Vec<f64>>,
}

/// One video of a dataset file. Class indices are checked against a class
/// count only when one is known, see [`Dataset::check_classes`].
#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub steps: usize,
    pub dim: usize,
    pub features: Option<FeatureSequence>,
    /// Sorted `(t, c)` positives.
    pub positives: Vec<(usize, usize)>,
}

impl VideoRecord {
    pub fn labels(&self, classes: usize) -> Result<LabelGrid> {
        LabelGrid::from_positives(self.steps, classes, &self.positives)
    }

    pub fn max_class(&self) -> Option<usize> {
        self.positives.iter().map(|&(_, c)| c).max()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub videos: Vec<VideoRecord>,
}

fn parse_error(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

impl Dataset {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut videos: Vec<VideoRecord> = Vec::new();
        let mut ids = BTreeSet::new();
        let mut dim: Option<usize> = None;
        for (n, line) in lines(text) {
            let raw: VideoLine =
                serde_json::from_str(line).map_err(|e| parse_error(source, n, e.to_string()))?;
            if !ids.insert(raw.video_id.clone()) {
                return Err(parse_error(
                    source,
                    n,
                    format!("duplicate video_id {:?}", raw.video_id),
                ));
            }
            if raw.steps == 0 {
                return Err(parse_error(source, n, "T must be positive"));
            }
            let features = match raw.features {
                None => None,
                Some(rows) => {
                    if rows.len() != raw.steps {
                        return Err(parse_error(
                            source,
                            n,
                            format!("{} feature rows for T={}", rows.len(), raw.steps),
                        ));
                    }
                    if let Some(row) = rows.iter().position(|r| r.len() != raw.dim) {
                        return Err(parse_error(
                            source,
                            n,
                            format!(
                                "feature row {row} has {} values for F={}",
                                rows[row].len(),
                                raw.dim
                            ),
                        ));
                    }
                    match dim {
                        Some(d) if d != raw.dim => {
                            return Err(parse_error(
                                source,
                                n,
                                format!("F={} differs from F={d} on earlier lines", raw.dim),
                            ));
                        }
                        _ => dim = Some(raw.dim),
                    }
                    let seq = FeatureSequence::from_rows(&rows, raw.dim)
                        .map_err(|e| parse_error(source, n, e.to_string()))?;
                    Some(seq)
                }
            };
            let mut positives: Vec<(usize, usize)> =
                raw.labels.iter().map(|&[t, c]| (t, c)).collect();
            positives.sort_unstable();
            if let Some(&(t, c)) = positives.iter().find(|&&(t, _)| t >= raw.steps) {
                return Err(parse_error(
                    source,
                    n,
                    format!("label [{t}, {c}] outside T={}", raw.steps),
                ));
            }
            if let Some(w) = positives.windows(2).find(|w| w[0] == w[1]) {
                return Err(parse_error(
                    source,
                    n,
                    format!("duplicate label [{}, {}]", w[0].0, w[0].1),
                ));
            }
            videos.push(VideoRecord {
                video_id: raw.video_id,
                steps: raw.steps,
                dim: raw.dim,
                features,
                positives,
            });
        }
        Ok(Self { videos })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for v in &self.videos {
            let line = VideoLine {
                video_id: v.video_id.clone(),
                steps: v.steps,
                dim: v.dim,
                features: v
                    .features
                    .as_ref()
                    .map(|f| (0..f.steps()).map(|t| f.row(t).to_vec()).collect()),
                labels: v.positives.iter().map(|&(t, c)| [t, c]).collect(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn find(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Rejects class indices at or beyond `classes`.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        for v in &self.videos {
            if let Some(c) = v.max_class().filter(|&c| c >= classes) {
                return Err(Error::InvalidLabel(format!(
                    "video {:?} has class {c} but C={classes}",
                    v.video_id
                )));
            }
        }
        Ok(())
    }

    /// Training examples; every video needs features of width `dim`.
    pub fn examples(&self, classes: usize, dim: usize) -> Result<Vec<TrainExample>> {
        self.check_classes(classes)?;
        self.videos
            .iter()
            .map(|v| {
                let features = v.features.clone().ok_or_else(|| {
                    Error::InvalidArgument(format!("video {:?} has no features", v.video_id))
                })?;
                if features.dim() != dim {
                    return Err(Error::mismatch(
                        "dataset",
                        format!(
                            "video {:?} has F={} but the model expects F={dim}",
                            v.video_id,
                            features.dim()
                        ),
                    ));
                }
                Ok(TrainExample {
                    labels: v.labels(classes)?,
                    features,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub video_id: String,
    pub scores: ScoreGrid,
}

pub fn parse_predictions(text: &str, source: &str) -> Result<Vec<Prediction>> {
    let mut out: Vec<Prediction> = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in lines(text) {
        let raw: PredictionLine =
            serde_json::from_str(line).map_err(|e| parse_error(source, n, e.to_string()))?;
        if !ids.insert(raw.video_id.clone()) {
            return Err(parse_error(
                source,
                n,
                format!("duplicate video_id {:?}", raw.video_id),
            ));
        }
        let scores =
            ScoreGrid::from_rows(&raw.scores).map_err(|e| parse_error(source, n, e.to_string()))?;
        if let Some(first) = out.first() {
            if first.scores.classes() != scores.classes() {
                return Err(parse_error(
                    source,
                    n,
                    format!(
                        "{} classes differ from {} on earlier lines",
                        scores.classes(),
                        first.scores.classes()
                    ),
                ));
            }
        }
        out.push(Prediction {
            video_id: raw.video_id,
            scores,
        });
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path)?;
    parse_predictions(&text, &path.display().to_string())
}

pub fn predictions_to_jsonl(predictions: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in predictions {
        let line = PredictionLine {
            video_id: p.video_id.clone(),
            scores: p.scores.to_rows(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes through a temporary sibling so that a failed run never leaves a
/// half-written output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
