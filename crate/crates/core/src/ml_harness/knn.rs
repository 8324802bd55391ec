use super::{HarnessError, Learner, Model, TrainData};

/// Standardised position assigned to sentinel values.
pub const SENTINEL_Z: f64 = -4.0;

/// Per-feature standardisation that ignores sentinel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
    sentinels: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>], sentinels: &[f64]) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; n_features];
        let mut scale = vec![1.0; n_features];
        for f in 0..n_features {
            let vals: Vec<f64> = x.iter().map(|r| r[f]).filter(|v| !sentinels.contains(v)).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
            mean[f] = m;
            scale[f] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale, sentinels: sentinels.to_vec() }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(f, &v)| if self.sentinels.contains(&v) { SENTINEL_Z } else { (v - self.mean[f]) / self.scale[f] })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    k: usize,
    scaler: Standardizer,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, k: usize, sentinels: &[f64]) -> Knn {
        let scaler = Standardizer::fit(x, sentinels);
        let points = x.iter().map(|r| scaler.transform(r)).collect();
        Knn { k: k.max(1), scaler, points, labels: y.to_vec(), n_classes }
    }
}

impl Model for Knn {
    /// Majority of the k nearest points (ties in distance by training order);
    /// a tied vote goes to the class whose member is nearest.
    fn predict(&self, row: &[f64]) -> usize {
        let q = self.scaler.transform(row);
        let mut d: Vec<(f64, usize)> = self.points.iter().enumerate().map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i)).collect();
        let k = self.k.min(d.len());
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut near = d[..k].to_vec();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in &near {
            votes[self.labels[i]] += 1;
        }
        let top = *votes.iter().max().unwrap();
        near.iter().map(|&(_, i)| self.labels[i]).find(|&c| votes[c] == top).unwrap()
    }
}

pub struct KnnLearner {
    pub ks: Vec<usize>,
    pub sentinels: Vec<f64>,
}

impl KnnLearner {
    pub fn new(sentinels: Vec<f64>) -> Self {
        Self { ks: (1..=19).step_by(2).collect(), sentinels }
    }
}

impl Learner for KnnLearner {
    fn name(&self) -> &str {
        "knn"
    }

    fn grid(&self) -> Vec<String> {
        self.ks.iter().map(|k| format!("k={k}")).collect()
    }

    fn fit(&self, point: usize, learn: &TrainData, _valid: &TrainData, _seed: u64) -> Result<Box<dyn Model>, HarnessError> {
        learn.check()?;
        Ok(Box::new(Knn::fit(learn.x, learn.y, learn.n_classes, self.ks[point], &self.sentinels)))
    }
}
