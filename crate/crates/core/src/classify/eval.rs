use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::model::{DeviceId, Label};

/// How examples are split for evaluation. Splits are always by device:
/// every window of a device lands on the same side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    KFold { folds: usize },
    TrainTest { test_fraction: f64 },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::KFold { folds: 5 }
    }
}

/// Confusion counts with InQueue as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_in: usize,
    pub false_not: usize,
    pub false_in: usize,
    pub true_not: usize,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::InQueue, Label::InQueue) => self.true_in += 1,
            (Label::InQueue, Label::NotInQueue) => self.false_not += 1,
            (Label::NotInQueue, Label::InQueue) => self.false_in += 1,
            (Label::NotInQueue, Label::NotInQueue) => self.true_not += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.true_in += other.true_in;
        self.false_not += other.false_not;
        self.false_in += other.false_in;
        self.true_not += other.true_not;
    }

    pub fn total(&self) -> usize {
        self.true_in + self.false_not + self.false_in + self.true_not
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_in + self.true_not, self.total())
    }

    /// Indexed InQueue, NotInQueue; 0 when the class was never predicted.
    pub fn precision(&self) -> [f64; 2] {
        [ratio(self.true_in, self.true_in + self.false_in), ratio(self.true_not, self.true_not + self.false_not)]
    }

    /// Indexed InQueue, NotInQueue; 0 when the class never occurs.
    pub fn recall(&self) -> [f64; 2] {
        [ratio(self.true_in, self.true_in + self.false_not), ratio(self.true_not, self.true_not + self.false_in)]
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub confusion: ConfusionMatrix,
    /// Swept parameter name and value, when part of a sweep.
    pub axis: Option<(String, String)>,
    /// Folds whose training split held one class; they predict that class.
    pub degenerate_folds: usize,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix, degenerate_folds: usize) -> Self {
        EvalReport {
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            confusion,
            axis: None,
            degenerate_folds,
        }
    }
}

/// Device order used for splitting: devices with at least one InQueue
/// window first, then the rest, each group shuffled by `seed`.
fn stratified_devices(dataset: &Dataset, seed: u64) -> Vec<(DeviceId, Vec<usize>)> {
    let mut by_device: BTreeMap<&DeviceId, (bool, Vec<usize>)> = BTreeMap::new();
    for (i, e) in dataset.examples.iter().enumerate() {
        let entry = by_device.entry(&e.features.device).or_default();
        entry.0 |= e.label == Label::InQueue;
        entry.1.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = by_device
        .into_iter()
        .map(|(d, (p, idx))| (p, (d.clone(), idx)))
        .partition(|(p, _)| *p);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    pos.into_iter().chain(neg).map(|(_, x)| x).collect()
}

/// Example indices per fold, dealing devices round-robin so devices with
/// InQueue windows spread across folds.
pub fn grouped_folds(dataset: &Dataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let devices = stratified_devices(dataset, seed);
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > devices.len() {
        return Err(Error::FoldCount { folds, devices: devices.len() });
    }
    let mut out = vec![Vec::new(); folds];
    for (i, (_, idx)) in devices.into_iter().enumerate() {
        out[i % folds].extend(idx);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn test_sets(dataset: &Dataset, protocol: Protocol, seed: u64) -> Result<Vec<Vec<usize>>> {
    match protocol {
        Protocol::KFold { folds } => grouped_folds(dataset, folds, seed),
        Protocol::TrainTest { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
            }
            let devices = stratified_devices(dataset, seed);
            if devices.len() < 2 {
                return Err(Error::FoldCount { folds: 2, devices: devices.len() });
            }
            let n_test = ((devices.len() as f64 * test_fraction).round() as usize).clamp(1, devices.len() - 1);
            // take every k-th device so both strata reach the test side
            let step = devices.len() as f64 / n_test as f64;
            let mut test: Vec<usize> = (0..n_test)
                .flat_map(|i| devices[(i as f64 * step) as usize].1.iter().copied())
                .collect();
            test.sort_unstable();
            Ok(vec![test])
        }
    }
}

/// Trains on each split's complement and scores on the split, pooling the
/// confusion counts.
pub fn evaluate(dataset: &Dataset, spec: &ModelSpec, protocol: Protocol, seed: u64) -> Result<EvalReport> {
    spec.validate()?;
    let mut confusion = ConfusionMatrix::default();
    let mut degenerate = 0;
    for test in test_sets(dataset, protocol, seed)? {
        let mut is_test = vec![false; dataset.len()];
        for &i in &test {
            is_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..dataset.len()).filter(|&i| !is_test[i]).collect();
        let train_set = dataset.subset(&train_idx);
        match train(&train_set, spec) {
            Ok(model) => {
                for &i in &test {
                    let e = &dataset.examples[i];
                    confusion.record(e.label, model.predict_vector(&e.features));
                }
            }
            Err(Error::SingleClass(_)) => {
                degenerate += 1;
                let only = train_set.examples.first().map_or(Label::NotInQueue, |e| e.label);
                for &i in &test {
                    confusion.record(dataset.examples[i].label, only);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EvalReport::from_confusion(confusion, degenerate))
}
