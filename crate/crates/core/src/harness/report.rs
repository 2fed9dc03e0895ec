//! Evaluation reports: JSON, the pair-table CSV and a markdown summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::files::{Dataset, Prediction};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, f_map, standard_suite, ClassMetrics, EvalInstance, EvalVideo, FMap, PairMetrics,
    SampleSet, StandardSuite, TauAggregate,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub report_version: u32,
    pub classes: usize,
    pub videos: usize,
    pub threshold: f64,
    pub taus: Vec<usize>,
    /// Absent when no class has a positive frame.
    pub f_map: Option<FMap>,
    pub per_class: Vec<ClassMetrics>,
    pub standard_metrics: StandardSuite,
    pub action_conditional: Vec<TauAggregate>,
    pub pairs: Vec<PairMetrics>,
}

/// Pairs ground truth with predictions by video id. Every id must appear in
/// both files.
pub fn align(gt: &Dataset, predictions: &[Prediction]) -> Result<EvalInstance> {
    let Some(first) = predictions.first() else {
        return Err(Error::EmptyDataset);
    };
    let classes = first.scores.classes();
    let by_id: BTreeMap<&str, &Prediction> = predictions
        .iter()
        .map(|p| (p.video_id.as_str(), p))
        .collect();
    let missing: Vec<&str> = gt
        .videos
        .iter()
        .map(|v| v.video_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let extra: Vec<&str> = predictions
        .iter()
        .map(|p| p.video_id.as_str())
        .filter(|id| gt.find(id).is_none())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::VideoMismatch(format!(
            "missing predictions for [{}]; predictions without ground truth for [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    gt.check_classes(classes)?;
    let videos = gt
        .videos
        .iter()
        .map(|v| {
            let scores = by_id[v.video_id.as_str()].scores.clone();
            if scores.steps() != v.steps {
                return Err(Error::mismatch(
                    "eval",
                    format!(
                        "video {:?}: {} score steps vs T={}",
                        v.video_id,
                        scores.steps(),
                        v.steps
                    ),
                ));
            }
            Ok(EvalVideo {
                video_id: v.video_id.clone(),
                labels: v.labels(classes)?,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalInstance::new(classes, videos)
}

pub fn evaluate(inst: &EvalInstance, threshold: f64, taus: &[usize]) -> Result<EvalReport> {
    let metrics = aggregate(inst, threshold, taus)?;
    let mut samples = SampleSet::new(inst.classes());
    for v in inst.videos() {
        samples.push_video(&v.labels, &v.scores)?;
    }
    let fmap = match f_map(&samples) {
        Ok(f) => Some(f),
        Err(Error::InvalidArgument(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        report_version: REPORT_VERSION,
        classes: inst.classes(),
        videos: inst.videos().len(),
        threshold,
        taus: taus.to_vec(),
        f_map: fmap,
        per_class: metrics.per_class,
        standard_metrics: standard_suite(&samples, threshold)?,
        action_conditional: metrics.aggregates,
        pairs: metrics.pairs,
    })
}

pub const PAIR_COLUMNS: [&str; 10] = [
    "ci",
    "cj",
    "tau",
    "n_correct",
    "n_predict",
    "n_gt",
    "precision",
    "recall",
    "f1",
    "ap",
];

pub fn pair_table_csv(pairs: &[PairMetrics]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in pairs {
        w.serialize(p)?;
    }
    if pairs.is_empty() {
        w.write_record(PAIR_COLUMNS)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_pair_table(text: &str) -> Result<Vec<PairMetrics>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != PAIR_COLUMNS {
        return Err(Error::InvalidArgument(format!(
            "pair table header {header:?} does not match {PAIR_COLUMNS:?}"
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

pub fn markdown_summary(report: &EvalReport) -> String {
    let mut s = String::new();
    let sm = &report.standard_metrics;
    let _ = writeln!(s, "# Evaluation\n");
    let _ = writeln!(
        s,
        "{} videos, {} classes, threshold {}\n",
        report.videos, report.classes, report.threshold
    );
    let _ = writeln!(s, "f-mAP: {}\n", opt(report.f_map.as_ref().map(|f| f.mean)));
    let _ = writeln!(s, "## Action-conditional metrics\n");
    let _ = writeln!(s, "| tau | pairs | P_AC | R_AC | F1_AC | mAP_AC |");
    let _ = writeln!(s, "|---:|---:|---:|---:|---:|---:|");
    for a in &report.action_conditional {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            a.tau,
            a.valid_pairs,
            opt(a.precision),
            opt(a.recall),
            opt(a.f1),
            opt(a.map)
        );
    }
    let _ = writeln!(s, "\n## Standard metrics\n");
    let _ = writeln!(s, "| HL | ZL | RL | CE | JS | LRAP |");
    let _ = writeln!(s, "|---:|---:|---:|---:|---:|---:|");
    let num = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let _ = writeln!(
        s,
        "| {:.4} | {:.4} | {} | {} | {:.4} | {} |",
        sm.hamming_loss,
        sm.zero_one_loss,
        num(sm.ranking_loss),
        num(sm.coverage_error),
        sm.jaccard,
        num(sm.lrap)
    );
    let _ = writeln!(s, "\n## Per class\n");
    let _ = writeln!(s, "| class | AP | P | R |");
    let _ = writeln!(s, "|---:|---:|---:|---:|");
    for c in &report.per_class {
        let ap = report.f_map.as_ref().and_then(|f| f.per_class[c.class]);
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            c.class,
            opt(ap),
            opt(Some(c.precision)),
            opt(c.recall)
        );
    }
    s
}
