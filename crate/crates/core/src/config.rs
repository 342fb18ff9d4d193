//! Run configuration: pipeline, model, scenario and sweep settings in one
//! TOML file. Unknown keys are rejected. Any key can be overridden through
//! an environment variable named `QUEUESENSE_` followed by the upper-cased
//! key path joined with `__`, e.g. `QUEUESENSE_PIPELINE__ALPHA=0.8` or
//! `QUEUESENSE_SEED=4`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{ModelKind, ModelSpec, Protocol};
use crate::error::{Error, Result};
use crate::model::PipelineConfig;
use crate::simulate::ScenarioSpec;

pub const ENV_PREFIX: &str = "QUEUESENSE_";

/// Parameters that `evaluate` can sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[serde(alias = "b")]
    Backtrack,
    WindowDuration,
    SnifferCount,
    Classifier,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Backtrack => "backtrack",
            Axis::WindowDuration => "window_duration",
            Axis::SnifferCount => "sniffer_count",
            Axis::Classifier => "classifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Name(String),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(x) => write!(f, "{x}"),
            SweepValue::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<SweepValue>,
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config(format!("sweep over {} has no values", self.axis.as_str())));
        }
        for v in &self.values {
            let ok = match (self.axis, v) {
                (Axis::Backtrack, SweepValue::Number(x)) => *x >= 1.0 && x.fract() == 0.0,
                (Axis::WindowDuration, SweepValue::Number(x)) => *x > 0.0,
                (Axis::SnifferCount, SweepValue::Number(x)) => *x == 1.0 || *x == 3.0,
                (Axis::Classifier, SweepValue::Name(s)) => ModelKind::parse(s).is_some(),
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!("invalid value {v} for sweep axis {}", self.axis.as_str())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    KFold,
    TrainTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub protocol: ProtocolKind,
    pub folds: usize,
    pub test_fraction: f64,
    pub classifiers: Vec<ModelKind>,
    /// Independent simulated scenarios per sweep point, seeded seed, seed+1, ...
    pub replicates: usize,
    /// 1 restricts features to the counter sniffer; 3 uses all sniffers.
    pub sniffer_count: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            protocol: ProtocolKind::KFold,
            folds: 5,
            test_fraction: 0.2,
            classifiers: ModelKind::ALL.to_vec(),
            replicates: 1,
            sniffer_count: 3,
        }
    }
}

impl EvaluateConfig {
    pub fn protocol(&self) -> Protocol {
        match self.protocol {
            ProtocolKind::KFold => Protocol::KFold { folds: self.folds },
            ProtocolKind::TrainTest => Protocol::TrainTest { test_fraction: self.test_fraction },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The one seed every random choice derives from.
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub model: ModelSpec,
    pub scenario: ScenarioSpec,
    pub evaluate: EvaluateConfig,
    pub sweep: Vec<Sweep>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            pipeline: PipelineConfig::default(),
            model: ModelSpec::default(),
            scenario: ScenarioSpec::default(),
            evaluate: EvaluateConfig::default(),
            sweep: Vec::new(),
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {} crosses a non-table", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, then applies `QUEUESENSE_*` overrides from `env`.
    pub fn from_toml<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (k, v) in overrides {
            let path: Vec<String> = k[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
            apply_override(&mut table, &path, env_value(&v))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the config file (or starts from defaults) and applies the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        RunConfig::from_toml(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.model.validate()?;
        self.scenario.validate()?;
        if self.evaluate.classifiers.is_empty() {
            return Err(Error::Config("no classifiers selected".into()));
        }
        if self.evaluate.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !matches!(self.evaluate.sniffer_count, 1 | 3) {
            return Err(Error::Config(format!("sniffer_count must be 1 or 3, got {}", self.evaluate.sniffer_count)));
        }
        for s in &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    /// The scenario with the run seed applied.
    pub fn scenario(&self) -> ScenarioSpec {
        ScenarioSpec { seed: self.seed, ..self.scenario.clone() }
    }

    /// The model spec with the run seed applied.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec { seed: self.seed, ..self.model.clone() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
