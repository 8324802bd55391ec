use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub kappa: f64,
}

/// `m[true][predicted]` counts.
pub fn confusion(truth: &[usize], predicted: &[usize], n_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

/// Accuracy and Cohen's kappa. When chance agreement is total, kappa is 1
/// for perfect agreement and 0 otherwise.
pub fn scores_from_confusion(m: &[Vec<u64>]) -> Result<Scores, HarnessError> {
    let n: u64 = m.iter().flatten().sum();
    if n == 0 {
        return Err(HarnessError::EmptyEval);
    }
    let n = n as f64;
    let k = m.len();
    let p_o = (0..k).map(|i| m[i][i]).sum::<u64>() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: u64 = m[i].iter().sum();
            let col: u64 = m.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    let kappa = if (1.0 - p_e).abs() < 1e-15 {
        if p_o == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(Scores { accuracy: p_o, kappa })
}

pub fn evaluate(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Scores, HarnessError> {
    scores_from_confusion(&confusion(truth, predicted, n_classes))
}
