//! End-to-end runs: simulate, extract, label and evaluate, optionally over
//! a parameter sweep.

use rayon::prelude::*;

use crate::classify::{evaluate, ConfusionMatrix, Dataset, EvalReport, ModelKind, ModelSpec, Protocol};
use crate::config::{Axis, RunConfig, SweepValue};
use crate::error::{Error, Result};
use crate::features::extract_all;
use crate::io::{LabelFile, ReportRow};
use crate::model::{AdvertisingPacket, LabeledExample, PipelineConfig, SnifferRole};
use crate::preprocess::{preprocess_trace, trace_epoch};
use crate::simulate::{simulate, GroundTruth, ScenarioSpec};

/// Keeps only counter-sniffer packets when `sniffer_count` is 1.
pub fn restrict_sniffers(packets: &[AdvertisingPacket], sniffer_count: usize) -> Vec<AdvertisingPacket> {
    match sniffer_count {
        1 => packets.iter().filter(|p| p.sniffer.role == SnifferRole::Counter).cloned().collect(),
        _ => packets.to_vec(),
    }
}

/// Ground-truth labels on the window grid of `packets`.
pub fn truth_labels(truth: &GroundTruth, packets: &[AdvertisingPacket], window_ms: i64) -> LabelFile {
    let epoch_ms = trace_epoch(packets).unwrap_or(truth.epoch_ms);
    LabelFile { window_ms, epoch_ms, labels: truth.window_labels_from(window_ms, epoch_ms) }
}

/// Extracts features from `packets` and attaches labels. Every extracted
/// (device, window) pair must have a label.
pub fn labeled_dataset(packets: &[AdvertisingPacket], labels: &LabelFile, pipeline: &PipelineConfig) -> Result<Dataset> {
    let window_ms = pipeline.window_ms();
    if labels.window_ms != window_ms {
        return Err(Error::Schema {
            what: "label window length".into(),
            expected: window_ms.to_string(),
            found: labels.window_ms.to_string(),
        });
    }
    if let Some(epoch) = trace_epoch(packets) {
        if epoch != labels.epoch_ms {
            return Err(Error::Schema {
                what: "label epoch".into(),
                expected: epoch.to_string(),
                found: labels.epoch_ms.to_string(),
            });
        }
    }
    let vectors = extract_all(&preprocess_trace(packets, pipeline)?, pipeline)?;
    let mut examples = Vec::with_capacity(vectors.len());
    let mut gaps = Vec::new();
    for v in vectors {
        match labels.labels.get(&(v.device.clone(), v.window)) {
            Some(&label) => examples.push(LabeledExample { features: v, label }),
            None => gaps.push(format!("{}@{}", v.device, v.window)),
        }
    }
    if !gaps.is_empty() {
        let shown: Vec<_> = gaps.iter().take(5).cloned().collect();
        return Err(Error::LabelGaps { count: gaps.len(), examples: shown.join(", ") });
    }
    Ok(Dataset::new(examples))
}

/// Simulates `scenario` and builds the labeled dataset seen by `sniffer_count` sniffers.
pub fn simulated_dataset(scenario: &ScenarioSpec, pipeline: &PipelineConfig, sniffer_count: usize) -> Result<Dataset> {
    let (packets, truth) = simulate(scenario)?;
    let packets = restrict_sniffers(&packets, sniffer_count);
    labeled_dataset(&packets, &truth_labels(&truth, &packets, pipeline.window_ms()), pipeline)
}

/// One evaluation setting: a pipeline, a sniffer count and the classifiers to score.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub pipeline: PipelineConfig,
    pub sniffer_count: usize,
    pub classifiers: Vec<ModelKind>,
    /// Swept parameter name and value.
    pub axis: Option<(String, String)>,
}

/// The settings a run covers: the base setting when nothing is swept,
/// otherwise one per value of each sweep, varying one axis at a time.
pub fn settings(cfg: &RunConfig) -> Vec<Setting> {
    let base = Setting {
        pipeline: cfg.pipeline.clone(),
        sniffer_count: cfg.evaluate.sniffer_count,
        classifiers: cfg.evaluate.classifiers.clone(),
        axis: None,
    };
    if cfg.sweep.is_empty() {
        return vec![base];
    }
    let mut out = Vec::new();
    for sweep in &cfg.sweep {
        for value in &sweep.values {
            let mut s = base.clone();
            s.axis = Some((sweep.axis.as_str().to_string(), value.to_string()));
            match (sweep.axis, value) {
                (Axis::Backtrack, SweepValue::Number(x)) => s.pipeline.backtrack = *x as usize,
                (Axis::WindowDuration, SweepValue::Number(x)) => s.pipeline.window_s = *x,
                (Axis::SnifferCount, SweepValue::Number(x)) => s.sniffer_count = *x as usize,
                (Axis::Classifier, SweepValue::Name(n)) => {
                    s.classifiers = ModelKind::parse(n).into_iter().collect();
                }
                // validated configs never get here
                _ => continue,
            }
            out.push(s);
        }
    }
    out
}

/// Scores every classifier of `setting` on one simulated trace. The model
/// seed and the fold assignment both use `seed`.
pub fn evaluate_trace(
    packets: &[AdvertisingPacket],
    truth: &GroundTruth,
    setting: &Setting,
    model: &ModelSpec,
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<(ModelKind, EvalReport)>> {
    setting.pipeline.validate()?;
    let packets = restrict_sniffers(packets, setting.sniffer_count);
    let labels = truth_labels(truth, &packets, setting.pipeline.window_ms());
    let dataset = labeled_dataset(&packets, &labels, &setting.pipeline)?;
    setting
        .classifiers
        .iter()
        .map(|&kind| {
            let spec = ModelSpec { kind, seed, ..model.clone() };
            Ok((kind, evaluate(&dataset, &spec, protocol, seed)?))
        })
        .collect()
}

/// Runs every setting over `replicates` scenarios seeded `seed`, `seed + 1`, ...
/// and pools the confusion counts per setting and classifier.
pub fn run_evaluation(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let settings = settings(cfg);
    let traces: Vec<_> = (0..cfg.evaluate.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r);
            simulate(&ScenarioSpec { seed, ..cfg.scenario.clone() }).map(|t| (seed, t))
        })
        .collect::<Result<_>>()?;
    let protocol = cfg.evaluate.protocol();
    let per_setting: Vec<Vec<ReportRow>> = settings
        .par_iter()
        .map(|s| {
            let runs: Vec<Vec<(ModelKind, EvalReport)>> = traces
                .par_iter()
                .map(|(seed, (packets, truth))| evaluate_trace(packets, truth, s, &cfg.model, protocol, *seed))
                .collect::<Result<_>>()?;
            Ok(s.classifiers
                .iter()
                .enumerate()
                .map(|(i, kind)| {
                    let mut confusion = ConfusionMatrix::default();
                    let mut degenerate = 0;
                    for run in &runs {
                        confusion.merge(&run[i].1.confusion);
                        degenerate += run[i].1.degenerate_folds;
                    }
                    let mut report = EvalReport::from_confusion(confusion, degenerate);
                    report.axis = s.axis.clone();
                    ReportRow { classifier: kind.as_str().to_string(), report }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_setting.concat())
}
