//! Text file formats: packet traces, ground-truth labels, feature tables,
//! predictions, serialized models and evaluation reports.
//!
//! Every file opens with a `# queuesense-<kind> v<N>` line. Tables are
//! tab-separated with one header row; readers accept any run of whitespace.
//! Missing values are written as `NA`. Floats use Rust's shortest
//! round-trip formatting so write/read is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{EvalReport, TrainedModel};
use crate::error::{Error, Result};
use crate::model::{AdvertisingPacket, Deployment, DeviceId, FeatureVector, Label, PipelineConfig};

pub const TRACE_VERSION: u32 = 1;
pub const LABELS_VERSION: u32 = 1;
pub const FEATURES_VERSION: u32 = 1;
pub const PREDICTIONS_VERSION: u32 = 1;
pub const MODEL_VERSION: u32 = 1;

const NA: &str = "NA";

fn magic(kind: &str, version: u32) -> String {
    format!("# queuesense-{kind} v{version}")
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), line, msg: msg.into() }
}

/// Checks the version line and returns any `key=value` pairs after it.
fn check_magic(path: &str, first: Option<&str>, kind: &str, version: u32) -> Result<BTreeMap<String, String>> {
    let expected = magic(kind, version);
    let first = first.unwrap_or("").trim();
    let mut parts = first.split_whitespace();
    let head: Vec<&str> = parts.by_ref().take(3).collect();
    let head = head.join(" ");
    if head != expected {
        return Err(Error::Schema { what: path.to_string(), expected, found: head });
    }
    let mut kv = BTreeMap::new();
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| parse_err(path, 1, format!("bad header field {p:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    Ok(kv)
}

struct Table {
    meta: BTreeMap<String, String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: BufRead>(reader: R, path: &str, kind: &str, version: u32, columns: &[&str]) -> Result<Table> {
    let mut lines = reader.lines();
    let first = lines.next().transpose()?;
    let meta = check_magic(path, first.as_deref(), kind, version)?;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = trimmed.split_whitespace().map(str::to_string).collect();
        if !saw_header {
            saw_header = true;
            if fields.iter().map(String::as_str).eq(columns.iter().copied()) {
                continue;
            }
            return Err(Error::Schema {
                what: format!("{path} columns"),
                expected: columns.join(" "),
                found: fields.join(" "),
            });
        }
        if fields.len() != columns.len() {
            return Err(parse_err(path, lineno, format!("expected {} fields, found {}", columns.len(), fields.len())));
        }
        rows.push((lineno, fields));
    }
    Ok(Table { meta, rows })
}

fn field<T: std::str::FromStr>(path: &str, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(path, line, format!("bad {name} {s:?}")))
}

fn opt_f64(path: &str, line: usize, name: &str, s: &str) -> Result<Option<f64>> {
    if s == NA {
        Ok(None)
    } else {
        field(path, line, name, s).map(Some)
    }
}

fn bit(path: &str, line: usize, name: &str, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_err(path, line, format!("bad {name} {s:?}, expected 0 or 1"))),
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn device(path: &str, line: usize, s: &str) -> Result<DeviceId> {
    DeviceId::new(s).map_err(|_| parse_err(path, line, format!("bad device id {s:?}")))
}

// ---- traces ----

const TRACE_COLUMNS: [&str; 4] = ["t_ms", "sniffer_id", "device_id", "rssi_dbm"];

pub fn write_trace<W: Write>(mut w: W, packets: &[AdvertisingPacket]) -> Result<()> {
    writeln!(w, "{}", magic("trace", TRACE_VERSION))?;
    writeln!(w, "{}", TRACE_COLUMNS.join("\t"))?;
    for p in packets {
        writeln!(w, "{}\t{}\t{}\t{}", p.t_ms, p.sniffer.id, p.device, p.rssi)?;
    }
    Ok(())
}

/// Reads packets in file order; sniffer ids are resolved through `deployment`.
pub fn read_trace<R: BufRead>(r: R, path: &str, deployment: &Deployment) -> Result<Vec<AdvertisingPacket>> {
    let table = read_table(r, path, "trace", TRACE_VERSION, &TRACE_COLUMNS)?;
    table
        .rows
        .into_iter()
        .map(|(line, f)| {
            let t: i64 = field(path, line, "timestamp", &f[0])?;
            let id: u8 = field(path, line, "sniffer id", &f[1])?;
            let sniffer = deployment
                .resolve(id)
                .ok_or_else(|| parse_err(path, line, format!("sniffer {id} is not in the deployment")))?;
            let dev = device(path, line, &f[2])?;
            let rssi: i16 = field(path, line, "rssi", &f[3])?;
            AdvertisingPacket::new(t, sniffer, dev, rssi).map_err(|e| parse_err(path, line, e.to_string()))
        })
        .collect()
}

// ---- ground-truth labels ----

const LABEL_COLUMNS: [&str; 3] = ["device", "window", "label"];

/// Per-window labels together with the grid they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub window_ms: i64,
    pub epoch_ms: i64,
    pub labels: BTreeMap<(DeviceId, usize), Label>,
}

pub fn write_labels<W: Write>(mut w: W, labels: &LabelFile) -> Result<()> {
    writeln!(
        w,
        "{} window_ms={} epoch_ms={}",
        magic("labels", LABELS_VERSION),
        labels.window_ms,
        labels.epoch_ms
    )?;
    writeln!(w, "{}", LABEL_COLUMNS.join("\t"))?;
    for ((d, k), l) in &labels.labels {
        writeln!(w, "{d}\t{k}\t{l}")?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(r: R, path: &str) -> Result<LabelFile> {
    let table = read_table(r, path, "labels", LABELS_VERSION, &LABEL_COLUMNS)?;
    let meta = |k: &str| -> Result<i64> {
        let v = table.meta.get(k).ok_or_else(|| parse_err(path, 1, format!("header lacks {k}")))?;
        field(path, 1, k, v)
    };
    let (window_ms, epoch_ms) = (meta("window_ms")?, meta("epoch_ms")?);
    let mut labels = BTreeMap::new();
    for (line, f) in table.rows {
        let dev = device(path, line, &f[0])?;
        let k: usize = field(path, line, "window", &f[1])?;
        let l = Label::parse(&f[2]).ok_or_else(|| parse_err(path, line, format!("bad label {:?}", f[2])))?;
        labels.insert((dev, k), l);
    }
    Ok(LabelFile { window_ms, epoch_ms, labels })
}

// ---- features ----

const FEATURE_COLUMNS: [&str; 13] =
    ["device", "window", "f1", "degenerate", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "label"];

/// One feature-table row; `label` is absent for unlabeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub features: FeatureVector,
    pub label: Option<Label>,
}

pub fn write_features<W: Write>(mut w: W, records: &[FeatureRecord]) -> Result<()> {
    writeln!(w, "{}", magic("features", FEATURES_VERSION))?;
    writeln!(w, "{}", FEATURE_COLUMNS.join("\t"))?;
    let b = |x: bool| if x { "1" } else { "0" };
    for r in records {
        let f = &r.features;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            f.device,
            f.window,
            f.f1,
            b(f.degenerate),
            b(f.f2),
            b(f.f3),
            opt_str(f.f4),
            opt_str(f.f5),
            opt_str(f.f6),
            f.f7,
            b(f.f8),
            opt_str(f.f9),
            r.label.map_or(NA, Label::as_str)
        )?;
    }
    Ok(())
}

pub fn read_features<R: BufRead>(r: R, path: &str) -> Result<Vec<FeatureRecord>> {
    let table = read_table(r, path, "features", FEATURES_VERSION, &FEATURE_COLUMNS)?;
    table
        .rows
        .into_iter()
        .map(|(line, f)| {
            let features = FeatureVector {
                device: device(path, line, &f[0])?,
                window: field(path, line, "window", &f[1])?,
                f1: field(path, line, "f1", &f[2])?,
                degenerate: bit(path, line, "degenerate", &f[3])?,
                f2: bit(path, line, "f2", &f[4])?,
                f3: bit(path, line, "f3", &f[5])?,
                f4: opt_f64(path, line, "f4", &f[6])?,
                f5: opt_f64(path, line, "f5", &f[7])?,
                f6: opt_f64(path, line, "f6", &f[8])?,
                f7: field(path, line, "f7", &f[9])?,
                f8: bit(path, line, "f8", &f[10])?,
                f9: opt_f64(path, line, "f9", &f[11])?,
            };
            let label = match f[12].as_str() {
                NA => None,
                s => Some(Label::parse(s).ok_or_else(|| parse_err(path, line, format!("bad label {s:?}")))?),
            };
            Ok(FeatureRecord { features, label })
        })
        .collect()
}

// ---- predictions ----

const PREDICTION_COLUMNS: [&str; 3] = ["device", "window", "predicted"];

pub fn write_predictions<W: Write>(mut w: W, predictions: &[(DeviceId, usize, Label)]) -> Result<()> {
    writeln!(w, "{}", magic("predictions", PREDICTIONS_VERSION))?;
    writeln!(w, "{}", PREDICTION_COLUMNS.join("\t"))?;
    for (d, k, l) in predictions {
        writeln!(w, "{d}\t{k}\t{l}")?;
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R, path: &str) -> Result<Vec<(DeviceId, usize, Label)>> {
    let table = read_table(r, path, "predictions", PREDICTIONS_VERSION, &PREDICTION_COLUMNS)?;
    table
        .rows
        .into_iter()
        .map(|(line, f)| {
            let l = Label::parse(&f[2]).ok_or_else(|| parse_err(path, line, format!("bad label {:?}", f[2])))?;
            Ok((device(path, line, &f[0])?, field(path, line, "window", &f[1])?, l))
        })
        .collect()
}

// ---- models ----

/// Self-describing model file: the trained model plus the pipeline
/// configuration its features were extracted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// SHA-256 over the model spec and pipeline configuration.
    pub config_hash: String,
    pub pipeline: PipelineConfig,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(model: TrainedModel, pipeline: PipelineConfig) -> Result<Self> {
        let config_hash = config_hash(&model, &pipeline)?;
        Ok(ModelFile { format: "queuesense-model".into(), version: MODEL_VERSION, config_hash, pipeline, model })
    }
}

pub fn config_hash(model: &TrainedModel, pipeline: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&model.spec)?);
    h.update(serde_json::to_vec(pipeline)?);
    let mut hex = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

pub fn write_model<W: Write>(mut w: W, file: &ModelFile) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, file)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_model<R: std::io::Read>(r: R, path: &str) -> Result<ModelFile> {
    let value: serde_json::Value = serde_json::from_reader(r)?;
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if format != "queuesense-model" || version != u64::from(MODEL_VERSION) {
        return Err(Error::Schema {
            what: path.to_string(),
            expected: format!("queuesense-model v{MODEL_VERSION}"),
            found: format!("{format} v{version}"),
        });
    }
    let file: ModelFile = serde_json::from_value(value)?;
    let expected = config_hash(&file.model, &file.pipeline)?;
    if expected != file.config_hash {
        return Err(Error::Schema { what: format!("{path} config hash"), expected, found: file.config_hash });
    }
    Ok(file)
}

// ---- reports ----

const REPORT_COLUMNS: [&str; 14] = [
    "axis",
    "value",
    "classifier",
    "accuracy",
    "precision_in_queue",
    "recall_in_queue",
    "precision_not_in_queue",
    "recall_not_in_queue",
    "true_in",
    "false_not",
    "false_in",
    "true_not",
    "examples",
    "degenerate_folds",
];

/// One sweep point's result for one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub classifier: String,
    pub report: EvalReport,
}

pub fn write_report_tsv<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(w, "{}", REPORT_COLUMNS.join("\t"))?;
    for r in rows {
        let e = &r.report;
        let (axis, value) = e.axis.clone().unwrap_or_else(|| ("none".into(), "-".into()));
        let c = e.confusion;
        writeln!(
            w,
            "{axis}\t{value}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.classifier,
            e.accuracy,
            e.precision[0],
            e.recall[0],
            e.precision[1],
            e.recall[1],
            c.true_in,
            c.false_not,
            c.false_in,
            c.true_not,
            c.total(),
            e.degenerate_folds
        )?;
    }
    Ok(())
}

/// Fixed-width accuracy table grouped by axis.
pub fn write_report_text<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    let mut last_axis = None;
    for r in rows {
        let (axis, value) = r.report.axis.clone().unwrap_or_else(|| ("none".into(), "-".into()));
        if last_axis.as_ref() != Some(&axis) {
            if last_axis.is_some() {
                writeln!(w)?;
            }
            writeln!(w, "sweep: {axis}")?;
            writeln!(w, "  {:>10}  {:<14}  {:>8}  {:>8}  {:>8}", "value", "classifier", "accuracy", "recall+", "examples")?;
            last_axis = Some(axis);
        }
        writeln!(
            w,
            "  {:>10}  {:<14}  {:>8.4}  {:>8.4}  {:>8}",
            value,
            r.classifier,
            r.report.accuracy,
            r.report.recall[0],
            r.report.confusion.total()
        )?;
    }
    Ok(())
}
