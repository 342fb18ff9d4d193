//! Off-line training and in-queue classification over feature vectors.
//!
//! Three from-scratch learners are provided: Gaussian/Bernoulli naive Bayes,
//! an entropy-split decision tree, and a bagged random forest of such trees.
//! Missing features are imputed with fill values learned from the training
//! split and stored inside the model so new vectors are completed the same way.

mod eval;
mod forest;
mod naive_bayes;
mod tree;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, grouped_folds, ConfusionMatrix, EvalReport, Protocol};
pub use forest::RandomForest;
pub use naive_bayes::NaiveBayes;
pub use tree::{DecisionTree, TreeParams};

use crate::error::{Error, Result};
use crate::model::{FeatureVector, Label, LabeledExample, FEATURE_COUNT};

/// A complete (imputed) feature vector in f1..f9 order.
pub type FeatureRow = [f64; FEATURE_COUNT];

/// Indices of the binary features f2, f3 and f8.
pub const BINARY_FEATURES: [usize; 3] = [1, 2, 7];
/// Indices of the continuous features f1, f4..f7 and f9.
pub const CONTINUOUS_FEATURES: [usize; 6] = [0, 3, 4, 5, 6, 8];

/// Fill values for features that can be missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    /// Replacement for missing f4, f5, f6: the largest value seen in training.
    pub variance_fill: [f64; 3],
    /// Replacement for a missing f9.
    pub correlation_fill: f64,
}

impl Default for Imputer {
    fn default() -> Self {
        Imputer { variance_fill: [0.0; 3], correlation_fill: 0.0 }
    }
}

impl Imputer {
    pub fn fit<'a, I: IntoIterator<Item = &'a FeatureVector>>(vectors: I) -> Self {
        let mut fill: [Option<f64>; 3] = [None; 3];
        for v in vectors {
            for (slot, value) in fill.iter_mut().zip([v.f4, v.f5, v.f6]) {
                if let Some(x) = value {
                    *slot = Some(slot.map_or(x, |m| m.max(x)));
                }
            }
        }
        Imputer { variance_fill: fill.map(|f| f.unwrap_or(0.0)), correlation_fill: 0.0 }
    }

    pub fn complete(&self, v: &FeatureVector) -> FeatureRow {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            v.f1,
            b(v.f2),
            b(v.f3),
            v.f4.unwrap_or(self.variance_fill[0]),
            v.f5.unwrap_or(self.variance_fill[1]),
            v.f6.unwrap_or(self.variance_fill[2]),
            v.f7,
            b(v.f8),
            v.f9.unwrap_or(self.correlation_fill),
        ]
    }
}

/// Fits an imputer on `vectors` and completes each of them.
pub fn impute(vectors: &[FeatureVector]) -> Vec<FeatureRow> {
    let imputer = Imputer::fit(vectors);
    vectors.iter().map(|v| imputer.complete(v)).collect()
}

/// Labeled examples plus a record of which raw fields were missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub missing: Vec<[bool; FEATURE_COUNT]>,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        let missing = examples.iter().map(|e| e.features.values().map(|v| v.is_none())).collect();
        Dataset { examples, missing }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for e in &self.examples {
            c[e.label.index()] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
            missing: idx.iter().map(|&i| self.missing[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    DecisionTree,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::RandomForest, ModelKind::DecisionTree, ModelKind::NaiveBayes];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Learner choice and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub trees: usize,
    /// Bootstrap sample size as a fraction of the training set, drawn with replacement.
    pub bag_fraction: f64,
    /// Features tried per forest split; `None` means round(sqrt(9)) = 3.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::RandomForest,
            max_depth: None,
            trees: 50,
            bag_fraction: 1.0,
            features_per_split: None,
            seed: 7,
        }
    }
}

impl ModelSpec {
    pub fn with_kind(kind: ModelKind) -> Self {
        ModelSpec { kind, ..ModelSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees < 1 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::Config(format!("bag_fraction must lie in (0, 1], got {}", self.bag_fraction)));
        }
        if let Some(f) = self.features_per_split {
            if f == 0 || f > FEATURE_COUNT {
                return Err(Error::Config(format!("features_per_split must lie in 1..={FEATURE_COUNT}, got {f}")));
            }
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn features_per_split(&self) -> usize {
        self.features_per_split.unwrap_or((FEATURE_COUNT as f64).sqrt().round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    NaiveBayes(NaiveBayes),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub imputer: Imputer,
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<Label> {
        predict(self, row)
    }

    pub fn predict_vector(&self, v: &FeatureVector) -> Label {
        self.classify(&self.imputer.complete(v))
    }

    fn classify(&self, row: &FeatureRow) -> Label {
        match &self.classifier {
            Classifier::NaiveBayes(nb) => nb.predict(row),
            Classifier::DecisionTree(t) => t.predict(row),
            Classifier::RandomForest(f) => f.predict(row),
        }
    }
}

/// Fits the learner named by `spec` on the dataset. Both classes must be present.
pub fn train(dataset: &Dataset, spec: &ModelSpec) -> Result<TrainedModel> {
    spec.validate()?;
    let counts = dataset.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        let only = if counts[0] > 0 { Label::InQueue } else { Label::NotInQueue };
        return Err(Error::SingleClass(if dataset.is_empty() { "empty".into() } else { only.to_string() }));
    }
    let imputer = Imputer::fit(dataset.examples.iter().map(|e| &e.features));
    let rows: Vec<FeatureRow> = dataset.examples.iter().map(|e| imputer.complete(&e.features)).collect();
    let labels = dataset.labels();
    let classifier = match spec.kind {
        ModelKind::NaiveBayes => Classifier::NaiveBayes(NaiveBayes::fit(&rows, &labels)),
        ModelKind::DecisionTree => {
            let params = TreeParams { max_depth: spec.max_depth, features_per_split: None };
            Classifier::DecisionTree(DecisionTree::fit(&rows, &labels, &params, None))
        }
        ModelKind::RandomForest => Classifier::RandomForest(RandomForest::fit(&rows, &labels, spec)),
    };
    Ok(TrainedModel { spec: spec.clone(), imputer, classifier })
}

/// Classifies one complete feature row.
pub fn predict(model: &TrainedModel, row: &[f64]) -> Result<Label> {
    let row: &FeatureRow = row
        .try_into()
        .map_err(|_| Error::Arity { expected: FEATURE_COUNT, got: row.len() })?;
    Ok(model.classify(row))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn separable() -> Dataset {
        let mut ex = Vec::new();
        for i in 0..20 {
            let x = i as f64 - 9.5;
            let label = if x > 0.0 { Label::InQueue } else { Label::NotInQueue };
            let mut row = [0.0; FEATURE_COUNT];
            row[0] = x;
            row[6] = (i * 37 % 11) as f64;
            ex.push(example(&format!("d{}", i % 5), i, row, label));
        }
        Dataset::new(ex)
    }

    #[test]
    fn impute_rules() {
        let mut a = vector("a", 0, [0.0; 9]);
        a.f4 = Some(48.2);
        let mut b = vector("b", 0, [0.0; 9]);
        b.f4 = Some(3.0);
        let mut c = vector("c", 0, [0.0; 9]);
        c.f4 = None;
        c.f9 = None;
        let rows = impute(&[a.clone(), b, c]);
        assert_eq!(rows[2][3], 48.2);
        assert_eq!(rows[2][8], 0.0);
        assert_eq!(rows[0], Imputer::default().complete(&a));
    }

    #[test]
    fn dataset_records_missing_fields() {
        let mut v = vector("a", 0, [0.0; 9]);
        v.f5 = None;
        let ds = Dataset::new(vec![LabeledExample { features: v, label: Label::InQueue }]);
        assert_eq!(ds.missing[0], [false, false, false, false, true, false, false, false, false]);
    }

    #[test]
    fn single_class_rejected() {
        let ds = Dataset::new(vec![example("a", 0, [0.0; 9], Label::InQueue)]);
        assert!(matches!(train(&ds, &ModelSpec::default()), Err(Error::SingleClass(_))));
    }

    #[test]
    fn arity_checked() {
        let model = train(&separable(), &ModelSpec::with_kind(ModelKind::DecisionTree)).unwrap();
        assert!(matches!(predict(&model, &[0.0; 4]), Err(Error::Arity { expected: 9, got: 4 })));
    }

    #[test]
    fn every_learner_fits_separable_data() {
        let ds = separable();
        for kind in ModelKind::ALL {
            let model = train(&ds, &ModelSpec::with_kind(kind)).unwrap();
            let correct = ds
                .examples
                .iter()
                .filter(|e| model.predict_vector(&e.features) == e.label)
                .count();
            assert_eq!(correct, ds.len(), "{kind:?}");
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec { trees: 0, ..ModelSpec::default() }.validate().is_err());
        assert!(ModelSpec { bag_fraction: 0.0, ..ModelSpec::default() }.validate().is_err());
        assert!(ModelSpec { features_per_split: Some(10), ..ModelSpec::default() }.validate().is_err());
        assert_eq!(ModelSpec::default().features_per_split(), 3);
    }
}
