//! Python bindings: simulate scenarios, extract features, train and apply
//! classifiers, and cross-validate, all driven by a run configuration.

use std::collections::HashMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use queuesense::experiment::{labeled_dataset, run_evaluation, truth_labels};
use queuesense::io::{self, FeatureRecord, LabelFile, ModelFile, ReportRow};
use queuesense::{extract_all, preprocess_trace, AdvertisingPacket, Dataset, LabeledExample, ModelKind, RunConfig};

create_exception!(queuesense, QueueSenseError, PyException);

fn err(e: queuesense::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        QueueSenseError::new_err(e.to_string())
    }
}

/// Run configuration: pipeline, model, scenario and evaluation settings.
#[pyclass(name = "Config", module = "queuesense", from_py_object)]
#[derive(Clone)]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    /// Parses TOML text; `env` maps `QUEUESENSE_*` override keys to values.
    #[new]
    #[pyo3(signature = (toml = "", env = None))]
    fn new(toml: &str, env: Option<HashMap<String, String>>) -> PyResult<Self> {
        RunConfig::from_toml(toml, env.unwrap_or_default()).map(PyConfig).map_err(err)
    }

    /// Reads a TOML file and applies the process environment.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        RunConfig::load(Some(path.as_ref())).map(PyConfig).map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[getter]
    fn classifier(&self) -> &'static str {
        self.0.model.kind.as_str()
    }

    #[setter]
    fn set_classifier(&mut self, name: &str) -> PyResult<()> {
        self.0.model.kind =
            ModelKind::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown classifier {name:?}")))?;
        Ok(())
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string(&self.0).map_err(|e| QueueSenseError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, classifier={:?})", self.0.seed, self.0.model.kind.as_str())
    }
}

/// Packets overheard by the sniffers, with ground-truth window labels when
/// simulated.
#[pyclass(name = "Trace", module = "queuesense", from_py_object)]
#[derive(Clone)]
struct PyTrace {
    packets: Vec<AdvertisingPacket>,
    labels: Option<LabelFile>,
}

#[pymethods]
impl PyTrace {
    /// Parses trace TSV text, resolving sniffer ids with the config's deployment.
    #[staticmethod]
    #[pyo3(signature = (text, config = None, labels = None))]
    fn from_tsv(text: &str, config: Option<&PyConfig>, labels: Option<&str>) -> PyResult<Self> {
        let deployment = config.map(|c| c.0.scenario.deployment).unwrap_or_default();
        let packets = io::read_trace(text.as_bytes(), "<trace>", &deployment).map_err(err)?;
        let labels = labels.map(|l| io::read_labels(l.as_bytes(), "<labels>")).transpose().map_err(err)?;
        Ok(PyTrace { packets, labels })
    }

    fn to_tsv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        io::write_trace(&mut buf, &self.packets).map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    /// Label TSV text, or None when the trace carries no labels.
    fn labels_tsv(&self) -> PyResult<Option<String>> {
        let Some(labels) = &self.labels else { return Ok(None) };
        let mut buf = Vec::new();
        io::write_labels(&mut buf, labels).map_err(err)?;
        Ok(Some(String::from_utf8_lossy(&buf).into_owned()))
    }

    /// `(t_ms, sniffer_id, device, rssi)` tuples in trace order.
    fn packets(&self) -> Vec<(i64, u8, String, i16)> {
        self.packets.iter().map(|p| (p.t_ms, p.sniffer.id, p.device.as_str().to_string(), p.rssi)).collect()
    }

    /// `{(device, window): label}` for labeled traces.
    fn labels(&self) -> Option<HashMap<(String, usize), &'static str>> {
        self.labels.as_ref().map(|l| {
            l.labels.iter().map(|((d, w), label)| ((d.as_str().to_string(), *w), label.as_str())).collect()
        })
    }

    fn __len__(&self) -> usize {
        self.packets.len()
    }
}

/// Per-window feature rows, optionally labeled.
#[pyclass(name = "Features", module = "queuesense", from_py_object)]
#[derive(Clone)]
struct PyFeatures(Vec<FeatureRecord>);

#[pymethods]
impl PyFeatures {
    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        io::read_features(text.as_bytes(), "<features>").map(PyFeatures).map_err(err)
    }

    fn to_tsv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        io::write_features(&mut buf, &self.0).map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    /// `(device, window, [f1..f9], label)` tuples; missing values are None.
    fn rows(&self) -> Vec<(String, usize, Vec<Option<f64>>, Option<&'static str>)> {
        self.0
            .iter()
            .map(|r| {
                let f = &r.features;
                (f.device.as_str().to_string(), f.window, f.values().to_vec(), r.label.map(|l| l.as_str()))
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

impl PyFeatures {
    fn dataset(&self) -> PyResult<Dataset> {
        let examples = self
            .0
            .iter()
            .map(|r| {
                let label = r.label.ok_or_else(|| {
                    PyValueError::new_err(format!("unlabeled row {}@{}", r.features.device, r.features.window))
                })?;
                Ok(LabeledExample { features: r.features.clone(), label })
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Dataset::new(examples))
    }
}

/// A trained classifier bundled with the pipeline its features came from.
#[pyclass(name = "Model", module = "queuesense", from_py_object)]
#[derive(Clone)]
struct PyModel(ModelFile);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::read_model(text.as_bytes(), "<model>").map(PyModel).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        io::write_model(&mut buf, &self.0).map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.model.spec.kind.as_str()
    }

    /// `(device, window, label)` per feature row.
    fn predict(&self, features: &PyFeatures) -> Vec<(String, usize, &'static str)> {
        features
            .0
            .iter()
            .map(|r| {
                let f = &r.features;
                (f.device.as_str().to_string(), f.window, self.0.model.predict_vector(f).as_str())
            })
            .collect()
    }

    /// Extracts features from a raw trace with the stored pipeline and
    /// predicts each row.
    fn classify_trace(&self, trace: &PyTrace) -> PyResult<Vec<(String, usize, &'static str)>> {
        let pipeline = &self.0.pipeline;
        let vectors = extract_all(&preprocess_trace(&trace.packets, pipeline).map_err(err)?, pipeline).map_err(err)?;
        Ok(vectors
            .iter()
            .map(|v| (v.device.as_str().to_string(), v.window, self.0.model.predict_vector(v).as_str()))
            .collect())
    }
}

/// Simulates the configured scenario.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn simulate(py: Python<'_>, config: Option<PyConfig>) -> PyResult<PyTrace> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    py.detach(|| {
        let (packets, truth) = queuesense::simulate(&cfg.scenario())?;
        let labels = truth_labels(&truth, &packets, cfg.pipeline.window_ms());
        Ok(PyTrace { packets, labels: Some(labels) })
    })
    .map_err(err)
}

/// Extracts per-window features, attaching the trace's labels when present.
#[pyfunction]
#[pyo3(signature = (trace, config = None))]
fn extract(py: Python<'_>, trace: PyTrace, config: Option<PyConfig>) -> PyResult<PyFeatures> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    py.detach(|| {
        let records = match &trace.labels {
            Some(labels) => labeled_dataset(&trace.packets, labels, &cfg.pipeline)?
                .examples
                .into_iter()
                .map(|e| FeatureRecord { features: e.features, label: Some(e.label) })
                .collect(),
            None => extract_all(&preprocess_trace(&trace.packets, &cfg.pipeline)?, &cfg.pipeline)?
                .into_iter()
                .map(|features| FeatureRecord { features, label: None })
                .collect(),
        };
        Ok(PyFeatures(records))
    })
    .map_err(err)
}

/// Trains the configured classifier on labeled features.
#[pyfunction]
#[pyo3(signature = (features, config = None))]
fn train(py: Python<'_>, features: &PyFeatures, config: Option<PyConfig>) -> PyResult<PyModel> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    let dataset = features.dataset()?;
    py.detach(|| {
        let model = queuesense::train(&dataset, &cfg.model_spec())?;
        ModelFile::new(model, cfg.pipeline.clone())
    })
    .map(PyModel)
    .map_err(err)
}

fn report_dict<'py>(py: Python<'py>, row: &ReportRow) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    let r = &row.report;
    d.set_item("classifier", &row.classifier)?;
    d.set_item("axis", r.axis.clone())?;
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("precision", r.precision.to_vec())?;
    d.set_item("recall", r.recall.to_vec())?;
    let c = r.confusion;
    d.set_item("confusion", [[c.true_in, c.false_not], [c.false_in, c.true_not]])?;
    d.set_item("degenerate_folds", r.degenerate_folds)?;
    Ok(d)
}

/// Cross-validates each configured classifier on labeled features, or on
/// simulated scenarios over the configured sweeps when `features` is None.
/// Returns one dict per classifier and sweep point.
#[pyfunction]
#[pyo3(signature = (features = None, config = None))]
fn evaluate<'py>(
    py: Python<'py>,
    features: Option<&PyFeatures>,
    config: Option<PyConfig>,
) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    let dataset = features.map(PyFeatures::dataset).transpose()?;
    let rows = py
        .detach(|| match dataset {
            Some(ds) => cfg
                .evaluate
                .classifiers
                .iter()
                .map(|&kind| {
                    let spec = queuesense::ModelSpec { kind, ..cfg.model_spec() };
                    let report = queuesense::evaluate(&ds, &spec, cfg.evaluate.protocol(), cfg.seed)?;
                    Ok(ReportRow { classifier: kind.as_str().to_string(), report })
                })
                .collect::<queuesense::Result<Vec<_>>>(),
            None => run_evaluation(&cfg),
        })
        .map_err(err)?;
    rows.iter().map(|r| report_dict(py, r)).collect()
}

#[pymodule]
#[pyo3(name = "queuesense")]
fn queuesense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QueueSenseError", m.py().get_type::<QueueSenseError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
