//! `queuesense` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! bad or unreadable data.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use queuesense::classify::{evaluate, train, Dataset};
use queuesense::experiment::{labeled_dataset, run_evaluation, truth_labels};
use queuesense::io::{self, FeatureRecord, ModelFile, ReportRow};
use queuesense::{extract_all, preprocess_trace, simulate, LabeledExample, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "queuesense", version, about = "Queue detection from multi-sniffer BLE RSSI traces")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the configured scenario; writes trace.tsv and labels.tsv.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract per-window features from a trace; writes features.tsv.
    Extract {
        #[arg(long)]
        trace: PathBuf,
        /// Ground-truth labels to attach to every feature row.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured classifier on labeled features; writes model.json.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label feature rows (or a raw trace) with a trained model; writes predictions.tsv.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
        features: Option<PathBuf>,
        /// Raw trace, extracted with the pipeline stored in the model.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate classifiers on a labeled feature file, or on simulated
    /// scenarios over the configured sweeps; writes report.tsv and report.txt.
    Evaluate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| c.downcast_ref::<queuesense::Error>().is_some_and(|q| q.is_config()));
            ExitCode::from(if config { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match cli.command {
        Command::Simulate { out } => cmd_simulate(&cfg, &out),
        Command::Extract { trace, labels, out } => cmd_extract(&cfg, &trace, labels.as_deref(), &out),
        Command::Train { features, out } => cmd_train(&cfg, &features, &out),
        Command::Classify { model, features, trace, out } => {
            cmd_classify(&cfg, &model, features.as_deref(), trace.as_deref(), &out)
        }
        Command::Evaluate { features, out } => cmd_evaluate(&cfg, features.as_deref(), &out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scenario = cfg.scenario();
    let (packets, truth) = simulate(&scenario)?;
    let labels = truth_labels(&truth, &packets, cfg.pipeline.window_ms());
    let mut w = create(out, "trace.tsv")?;
    io::write_trace(&mut w, &packets)?;
    finish(w)?;
    let mut w = create(out, "labels.tsv")?;
    io::write_labels(&mut w, &labels)?;
    finish(w)?;
    println!(
        "simulated {} devices for {} s: {} packets, {} labeled windows",
        scenario.devices.len(),
        scenario.duration_s,
        packets.len(),
        labels.labels.len()
    );
    Ok(())
}

fn read_trace(cfg: &RunConfig, path: &Path) -> Result<Vec<queuesense::AdvertisingPacket>> {
    Ok(io::read_trace(open(path)?, &path.display().to_string(), &cfg.scenario.deployment)?)
}

fn cmd_extract(cfg: &RunConfig, trace: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let packets = read_trace(cfg, trace)?;
    let records: Vec<FeatureRecord> = match labels {
        Some(path) => {
            let labels = io::read_labels(open(path)?, &path.display().to_string())?;
            labeled_dataset(&packets, &labels, &cfg.pipeline)?
                .examples
                .into_iter()
                .map(|e| FeatureRecord { features: e.features, label: Some(e.label) })
                .collect()
        }
        None => extract_all(&preprocess_trace(&packets, &cfg.pipeline)?, &cfg.pipeline)?
            .into_iter()
            .map(|features| FeatureRecord { features, label: None })
            .collect(),
    };
    let mut w = create(out, "features.tsv")?;
    io::write_features(&mut w, &records)?;
    finish(w)?;
    println!("extracted {} feature rows from {} packets", records.len(), packets.len());
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let name = path.display().to_string();
    let records = io::read_features(open(path)?, &name)?;
    let examples = records
        .into_iter()
        .map(|r| match r.label {
            Some(label) => Ok(LabeledExample { features: r.features, label }),
            None => Err(queuesense::Error::Schema {
                what: name.clone(),
                expected: "a label on every row".into(),
                found: format!("unlabeled row {}@{}", r.features.device, r.features.window),
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(examples))
}

fn cmd_train(cfg: &RunConfig, features: &Path, out: &Path) -> Result<()> {
    let dataset = read_dataset(features)?;
    let model = train(&dataset, &cfg.model_spec())?;
    let mut w = create(out, "model.json")?;
    io::write_model(&mut w, &ModelFile::new(model, cfg.pipeline.clone())?)?;
    finish(w)?;
    let [pos, neg] = dataset.class_counts();
    println!("trained {} on {} rows ({pos} in queue, {neg} not)", cfg.model.kind.as_str(), dataset.len());
    Ok(())
}

fn cmd_classify(cfg: &RunConfig, model: &Path, features: Option<&Path>, trace: Option<&Path>, out: &Path) -> Result<()> {
    let file = io::read_model(open(model)?, &model.display().to_string())?;
    let vectors = match (features, trace) {
        (Some(path), _) => io::read_features(open(path)?, &path.display().to_string())?
            .into_iter()
            .map(|r| r.features)
            .collect(),
        (None, Some(path)) => {
            let packets = read_trace(cfg, path)?;
            extract_all(&preprocess_trace(&packets, &file.pipeline)?, &file.pipeline)?
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let predictions: Vec<_> =
        vectors.iter().map(|v| (v.device.clone(), v.window, file.model.predict_vector(v))).collect();
    let mut w = create(out, "predictions.tsv")?;
    io::write_predictions(&mut w, &predictions)?;
    finish(w)?;
    let positive = predictions.iter().filter(|p| p.2 == queuesense::Label::InQueue).count();
    println!("classified {} rows: {positive} in queue", predictions.len());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, features: Option<&Path>, out: &Path) -> Result<()> {
    let rows = match features {
        Some(path) => {
            let dataset = read_dataset(path)?;
            cfg.evaluate
                .classifiers
                .iter()
                .map(|&kind| {
                    let spec = queuesense::ModelSpec { kind, ..cfg.model_spec() };
                    let report = evaluate(&dataset, &spec, cfg.evaluate.protocol(), cfg.seed)?;
                    Ok(ReportRow { classifier: kind.as_str().to_string(), report })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => run_evaluation(cfg)?,
    };
    let mut w = create(out, "report.tsv")?;
    io::write_report_tsv(&mut w, &rows)?;
    finish(w)?;
    let mut w = create(out, "report.txt")?;
    io::write_report_text(&mut w, &rows)?;
    finish(w)?;
    io::write_report_text(std::io::stdout().lock(), &rows)?;
    Ok(())
}
