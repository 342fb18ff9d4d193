use serde::{Deserialize, Serialize};

use super::{FeatureRow, BINARY_FEATURES, CONTINUOUS_FEATURES};
use crate::model::{Label, FEATURE_COUNT};

/// Naive Bayes with Gaussian likelihoods for continuous features and
/// Laplace-smoothed Bernoulli likelihoods for binary ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// Class priors indexed InQueue, NotInQueue.
    pub priors: [f64; 2],
    pub means: [[f64; FEATURE_COUNT]; 2],
    pub variances: [[f64; FEATURE_COUNT]; 2],
    /// P(feature = 1 | class) for binary features.
    pub rates: [[f64; FEATURE_COUNT]; 2],
}

impl NaiveBayes {
    pub fn fit(rows: &[FeatureRow], labels: &[Label]) -> Self {
        let mut count = [0usize; 2];
        let mut sum = [[0.0; FEATURE_COUNT]; 2];
        let mut ones = [[0usize; FEATURE_COUNT]; 2];
        for (row, label) in rows.iter().zip(labels) {
            let c = label.index();
            count[c] += 1;
            for j in 0..FEATURE_COUNT {
                sum[c][j] += row[j];
                if row[j] > 0.5 {
                    ones[c][j] += 1;
                }
            }
        }
        let n = rows.len() as f64;
        let mut means = [[0.0; FEATURE_COUNT]; 2];
        for c in 0..2 {
            for j in 0..FEATURE_COUNT {
                means[c][j] = sum[c][j] / count[c].max(1) as f64;
            }
        }
        let mut variances = [[0.0; FEATURE_COUNT]; 2];
        for (row, label) in rows.iter().zip(labels) {
            let c = label.index();
            for j in 0..FEATURE_COUNT {
                variances[c][j] += (row[j] - means[c][j]).powi(2);
            }
        }

        // Variance floor proportional to the widest feature, so constant
        // columns contribute equally to both classes.
        let mut widest = 0.0f64;
        for &j in &CONTINUOUS_FEATURES {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n.max(1.0);
            let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n.max(1.0);
            widest = widest.max(v);
        }
        let floor = 1e-9 * widest.max(1.0);
        for c in 0..2 {
            for j in 0..FEATURE_COUNT {
                variances[c][j] = variances[c][j] / count[c].max(1) as f64 + floor;
            }
        }

        let mut rates = [[0.0; FEATURE_COUNT]; 2];
        for c in 0..2 {
            for &j in &BINARY_FEATURES {
                rates[c][j] = (ones[c][j] as f64 + 1.0) / (count[c] as f64 + 2.0);
            }
        }
        let priors = [count[0] as f64 / n, count[1] as f64 / n];
        NaiveBayes { priors, means, variances, rates }
    }

    fn log_joint(&self, row: &FeatureRow) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            let mut lp = self.priors[c].ln();
            for &j in &CONTINUOUS_FEATURES {
                let var = self.variances[c][j];
                let d = row[j] - self.means[c][j];
                lp += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
            }
            for &j in &BINARY_FEATURES {
                let p = self.rates[c][j];
                lp += if row[j] > 0.5 { p.ln() } else { (1.0 - p).ln() };
            }
            *slot = lp;
        }
        out
    }

    /// Posterior probabilities indexed InQueue, NotInQueue.
    pub fn posterior(&self, row: &FeatureRow) -> [f64; 2] {
        let lj = self.log_joint(row);
        let m = lj[0].max(lj[1]);
        let e = [(lj[0] - m).exp(), (lj[1] - m).exp()];
        let z = e[0] + e[1];
        [e[0] / z, e[1] / z]
    }

    /// Ties go to NotInQueue.
    pub fn predict(&self, row: &FeatureRow) -> Label {
        let lj = self.log_joint(row);
        if lj[0] > lj[1] {
            Label::InQueue
        } else {
            Label::NotInQueue
        }
    }
}
