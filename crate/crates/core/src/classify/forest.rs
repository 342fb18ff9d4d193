use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DecisionTree, FeatureRow, ModelSpec, TreeParams};
use crate::model::Label;

/// Bagged decision trees with per-split feature subsetting and majority vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws from its own ChaCha stream `t` under `spec.seed`, so
    /// the forest is identical however the trees are scheduled.
    pub fn fit(rows: &[FeatureRow], labels: &[Label], spec: &ModelSpec) -> Self {
        let params = TreeParams { max_depth: spec.max_depth, features_per_split: Some(spec.features_per_split()) };
        let n = rows.len();
        let bag = ((n as f64 * spec.bag_fraction).round() as usize).max(1);
        let trees = (0..spec.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(t as u64);
                let idx: Vec<usize> = (0..bag).map(|_| rng.random_range(0..n)).collect();
                let r: Vec<FeatureRow> = idx.iter().map(|&i| rows[i]).collect();
                let l: Vec<Label> = idx.iter().map(|&i| labels[i]).collect();
                DecisionTree::fit(&r, &l, &params, Some(&mut rng))
            })
            .collect();
        RandomForest { trees }
    }

    /// Majority vote; ties go to NotInQueue.
    pub fn predict(&self, row: &FeatureRow) -> Label {
        let in_queue = self.trees.iter().filter(|t| t.predict(row) == Label::InQueue).count();
        if 2 * in_queue > self.trees.len() {
            Label::InQueue
        } else {
            Label::NotInQueue
        }
    }
}
