use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Dataset;
use super::HarnessError;

/// Splits a chronologically sorted dataset into training rows and a final
/// holdout made of the smallest suffix of whole days holding at least
/// `ceil(alpha * n)` instances.
pub fn split_holdout(ds: &Dataset, alpha: f64) -> Result<(Vec<usize>, Vec<usize>), HarnessError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HarnessError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = ds.len();
    if n == 0 {
        return Err(HarnessError::Config("no instances to split".into()));
    }
    if ds.day.windows(2).any(|w| w[0] > w[1]) {
        return Err(HarnessError::Config("instances are not in chronological order".into()));
    }
    let need = (alpha * n as f64).ceil() as usize;
    let mut start = n;
    while n - start < need {
        let day = ds.day[start - 1];
        while start > 0 && ds.day[start - 1] == day {
            start -= 1;
        }
    }
    if start == 0 {
        return Err(HarnessError::Config("holdout would take every instance; whole-day split impossible".into()));
    }
    Ok(((0..start).collect(), (start..n).collect()))
}

/// Assigns each group to one of `k` folds. Groups are shuffled under `seed`,
/// ordered by size (largest first) and placed on the fold with the fewest
/// instances so far.
pub fn grouped_kfold(groups: &[String], k: usize, seed: u64) -> Result<Vec<usize>, HarnessError> {
    if k < 3 {
        return Err(HarnessError::Config(format!("K must be at least 3, got {k}")));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        *sizes.entry(g.as_str()).or_default() += 1;
    }
    let mut distinct: Vec<&str> = sizes.keys().copied().collect();
    if distinct.len() < k {
        return Err(HarnessError::Config(format!("{} groups cannot fill {k} folds", distinct.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let mut sized: Vec<(&str, usize)> = distinct.iter().map(|g| (*g, sizes[g])).collect();
    sized.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    let mut load = vec![0usize; k];
    let mut fold_of = BTreeMap::new();
    for (g, s) in sized {
        let f = (0..k).min_by_key(|&f| (load[f], f)).unwrap();
        load[f] += s;
        fold_of.insert(g, f);
    }
    Ok(groups.iter().map(|g| fold_of[g.as_str()]).collect())
}
