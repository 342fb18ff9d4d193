use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureRow;
use crate::model::{Label, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    /// Random feature subset size per split; `None` tries every feature.
    pub features_per_split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { label: Label, counts: [usize; 2] },
    /// Rows with `row[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Binary decision tree grown greedily by information gain. Thresholds are
/// always training values, so predictions depend only on feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn entropy(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    c.iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn majority(c: [usize; 2]) -> Label {
    if c[0] > c[1] {
        Label::InQueue
    } else {
        Label::NotInQueue
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    rows: &'a [FeatureRow],
    labels: &'a [Label],
    params: &'a TreeParams,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0; 2];
        for &i in idx {
            c[self.labels[i].index()] += 1;
        }
        c
    }

    fn best_for_feature(&self, idx: &mut [usize], feature: usize, parent: [usize; 2]) -> Option<Best> {
        let rows = self.rows;
        idx.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
        let h = entropy(parent);
        let n = idx.len() as f64;
        let mut left = [0usize; 2];
        let mut best: Option<Best> = None;
        for w in 0..idx.len() - 1 {
            left[self.labels[idx[w]].index()] += 1;
            let (lo, hi) = (rows[idx[w]][feature], rows[idx[w + 1]][feature]);
            if lo == hi {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let nl = (w + 1) as f64;
            let gain = h - (nl / n) * entropy(left) - ((n - nl) / n) * entropy(right);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Best { feature, threshold: lo, gain });
            }
        }
        best
    }

    fn find_split(&mut self, idx: &mut [usize], parent: [usize; 2]) -> Option<Best> {
        let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
        let limit = match (&mut self.rng, self.params.features_per_split) {
            (Some(rng), Some(k)) => {
                order.shuffle(rng);
                k
            }
            _ => FEATURE_COUNT,
        };
        let mut best: Option<Best> = None;
        let mut tried = 0;
        for f in order {
            if tried >= limit {
                break;
            }
            // constant features don't count toward the subset size
            if let Some(b) = self.best_for_feature(idx, f, parent) {
                tried += 1;
                if best.as_ref().is_none_or(|cur| b.gain > cur.gain) {
                    best = Some(b);
                }
            }
        }
        best
    }

    fn grow(&mut self, mut idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let pure = counts[0] == 0 || counts[1] == 0;
        let capped = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if pure || capped || idx.len() < 2 { None } else { self.find_split(&mut idx, counts) };
        let Some(split) = split else {
            self.nodes.push(Node::Leaf { label: majority(counts), counts });
            return self.nodes.len() - 1;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.rows[i][split.feature] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { label: majority(counts), counts });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        at
    }
}

impl DecisionTree {
    /// Grows a tree on `rows`. With an RNG and `features_per_split`, each
    /// split considers a random feature subset.
    pub fn fit(rows: &[FeatureRow], labels: &[Label], params: &TreeParams, rng: Option<&mut ChaCha8Rng>) -> Self {
        let mut b = Builder { rows, labels, params, rng, nodes: Vec::new() };
        b.grow((0..rows.len()).collect(), 0);
        DecisionTree { nodes: b.nodes }
    }

    pub fn predict(&self, row: &FeatureRow) -> Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label, .. } => return *label,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(vals: &[f64]) -> FeatureRow {
        let mut r = [0.0; FEATURE_COUNT];
        r[..vals.len()].copy_from_slice(vals);
        r
    }

    #[test]
    fn separable_needs_one_split() {
        let rows: Vec<_> = (-5..5).map(|x| row(&[x as f64 + 0.5, (x * x) as f64])).collect();
        let labels: Vec<_> = rows.iter().map(|r| if r[0] > 0.0 { Label::InQueue } else { Label::NotInQueue }).collect();
        let t = DecisionTree::fit(&rows, &labels, &TreeParams::default(), None);
        assert_eq!(t.splits(), 1);
        assert!(rows.iter().zip(&labels).all(|(r, l)| t.predict(r) == *l));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == -0.5));
    }

    #[test]
    fn unpruned_tree_memorizes_distinct_rows() {
        // xor on two features: no single split has positive gain
        let rows = vec![row(&[0.0, 0.0]), row(&[0.0, 1.0]), row(&[1.0, 0.0]), row(&[1.0, 1.0])];
        let labels = vec![Label::NotInQueue, Label::InQueue, Label::InQueue, Label::NotInQueue];
        let t = DecisionTree::fit(&rows, &labels, &TreeParams::default(), None);
        assert!(rows.iter().zip(&labels).all(|(r, l)| t.predict(r) == *l));
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<_> = (0..16).map(|x| row(&[x as f64])).collect();
        let labels: Vec<_> = (0..16).map(|x| if x % 2 == 0 { Label::InQueue } else { Label::NotInQueue }).collect();
        let t = DecisionTree::fit(&rows, &labels, &TreeParams { max_depth: Some(2), features_per_split: None }, None);
        assert!(t.depth() <= 2);
        let full = DecisionTree::fit(&rows, &labels, &TreeParams::default(), None);
        assert!(rows.iter().zip(&labels).all(|(r, l)| full.predict(r) == *l));
    }

    #[test]
    fn leaf_tie_goes_to_not_in_queue() {
        let rows = vec![row(&[1.0]), row(&[1.0])];
        let labels = vec![Label::InQueue, Label::NotInQueue];
        let t = DecisionTree::fit(&rows, &labels, &TreeParams::default(), None);
        assert_eq!(t.predict(&row(&[1.0])), Label::NotInQueue);
    }

    proptest! {
        #[test]
        fn monotone_transform_preserves_predictions(
            data in prop::collection::vec((prop::array::uniform9(-10.0f64..10.0), any::<bool>()), 2..40),
            probes in prop::collection::vec(prop::array::uniform9(-12.0f64..12.0), 1..20),
            feature in 0usize..FEATURE_COUNT,
        ) {
            let rows: Vec<FeatureRow> = data.iter().map(|(r, _)| *r).collect();
            let labels: Vec<Label> = data.iter().map(|(_, l)| if *l { Label::InQueue } else { Label::NotInQueue }).collect();
            let warp = |r: &FeatureRow| { let mut r = *r; r[feature] = r[feature].exp() * 3.0 - 1.0; r };
            let t = DecisionTree::fit(&rows, &labels, &TreeParams::default(), None);
            let warped: Vec<FeatureRow> = rows.iter().map(warp).collect();
            let tw = DecisionTree::fit(&warped, &labels, &TreeParams::default(), None);
            for p in &probes {
                prop_assert_eq!(t.predict(p), tw.predict(&warp(p)));
            }
        }
    }
}
