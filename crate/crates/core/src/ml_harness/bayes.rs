use super::tree::bin_thresholds;
use super::{HarnessError, Learner, Model, TrainData};

pub const NB_BINS: usize = 10;

/// Categorical naive Bayes over binned features with Laplace smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    thresholds: Vec<Vec<f64>>,
    log_prior: Vec<f64>,
    /// `log_lik[f][class][bin]`.
    log_lik: Vec<Vec<Vec<f64>>>,
}

impl NaiveBayes {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, alpha: f64) -> NaiveBayes {
        let n = y.len() as f64;
        let n_features = x.first().map_or(0, Vec::len);
        let mut class_n = vec![0.0; n_classes];
        for &c in y {
            class_n[c] += 1.0;
        }
        let log_prior = class_n.iter().map(|&c| if c > 0.0 { (c / n).ln() } else { f64::NEG_INFINITY }).collect();
        let mut thresholds = Vec::with_capacity(n_features);
        let mut log_lik = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let col: Vec<f64> = x.iter().map(|r| r[f]).collect();
            let t = bin_thresholds(&col, NB_BINS);
            let nb = t.len() + 1;
            let mut counts = vec![vec![0.0; nb]; n_classes];
            for (v, &c) in col.iter().zip(y) {
                counts[c][t.partition_point(|&th| th < *v)] += 1.0;
            }
            let lik = counts
                .iter()
                .zip(&class_n)
                .map(|(row, &cn)| row.iter().map(|&k| ((k + alpha) / (cn + alpha * nb as f64)).ln()).collect())
                .collect();
            thresholds.push(t);
            log_lik.push(lik);
        }
        NaiveBayes { thresholds, log_prior, log_lik }
    }
}

impl Model for NaiveBayes {
    fn predict(&self, row: &[f64]) -> usize {
        let bins: Vec<usize> = self.thresholds.iter().zip(row).map(|(t, v)| t.partition_point(|&th| th < *v)).collect();
        let mut best: Option<(f64, usize)> = None;
        for (c, &prior) in self.log_prior.iter().enumerate() {
            if prior == f64::NEG_INFINITY {
                continue;
            }
            let score = prior + bins.iter().enumerate().map(|(f, &b)| self.log_lik[f][c][b]).sum::<f64>();
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, c));
            }
        }
        best.map_or(0, |(_, c)| c)
    }
}

pub struct NaiveBayesLearner {
    pub alphas: Vec<f64>,
}

impl Default for NaiveBayesLearner {
    fn default() -> Self {
        Self { alphas: (0..10).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 9.0)).collect() }
    }
}

impl Learner for NaiveBayesLearner {
    fn name(&self) -> &str {
        "naive_bayes"
    }

    fn grid(&self) -> Vec<String> {
        self.alphas.iter().map(|a| format!("alpha={a:.6}")).collect()
    }

    fn fit(&self, point: usize, learn: &TrainData, _valid: &TrainData, _seed: u64) -> Result<Box<dyn Model>, HarnessError> {
        learn.check()?;
        Ok(Box::new(NaiveBayes::fit(learn.x, learn.y, learn.n_classes, self.alphas[point])))
    }
}
