use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{HarnessError, Learner, Model, TrainData};

pub const MAX_BINS: usize = 64;

/// Split thresholds for one feature: distinct values when few, quantile cuts otherwise.
pub fn bin_thresholds(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut distinct = v.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let mut out = Vec::with_capacity(max_bins);
    for q in 1..max_bins {
        let i = v.len() * q / max_bins;
        let lo = v[i - 1];
        if let Some(&hi) = v[i..].iter().find(|&&x| x > lo) {
            let t = lo + (hi - lo) / 2.0;
            if out.last().is_none_or(|&l| t > l) {
                out.push(t);
            }
        }
    }
    out
}

/// Bin of `v`: the number of thresholds strictly below it.
fn bin_of(thresholds: &[f64], v: f64) -> u8 {
    thresholds.partition_point(|&t| t < v) as u8
}

/// Column-major binned copy of a training matrix.
pub struct Binned {
    pub thresholds: Vec<Vec<f64>>,
    pub bins: Vec<Vec<u8>>,
}

impl Binned {
    pub fn new(x: &[Vec<f64>], max_bins: usize) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let (thresholds, bins): (Vec<_>, Vec<_>) = (0..n_features)
            .into_par_iter()
            .map(|f| {
                let col: Vec<f64> = x.iter().map(|r| r[f]).collect();
                let t = bin_thresholds(&col, max_bins);
                let b = col.iter().map(|&v| bin_of(&t, v)).collect();
                (t, b)
            })
            .unzip();
        Self { thresholds, bins }
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    Sqrt,
    Half,
    All,
}

impl MaxFeatures {
    fn count(self, n: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n as f64).sqrt().round() as usize).max(1),
            MaxFeatures::Half => (n / 2).max(1),
            MaxFeatures::All => n,
        }
        .min(n)
    }

    fn label(self) -> &'static str {
        match self {
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::Half => "half",
            MaxFeatures::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    feature: usize,
    threshold: f64,
    children: Option<(usize, usize)>,
    class: usize,
    /// Weighted training class counts at this node.
    counts: Vec<f64>,
}

/// Binary classification tree over numeric features; `x <= threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Grower<'a> {
    binned: &'a Binned,
    y: &'a [usize],
    weights: &'a [f64],
    n_classes: usize,
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = vec![0.0; self.n_classes];
        for &r in &rows {
            counts[self.y[r]] += self.weights[r];
        }
        let total: f64 = counts.iter().sum();
        let id = self.nodes.len();
        self.nodes.push(Node { feature: 0, threshold: 0.0, children: None, class: majority(&counts), counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let min_leaf = self.params.min_leaf.max(1) as f64;
        if pure || self.params.max_depth.is_some_and(|d| depth >= d) || total < 2.0 * min_leaf {
            return id;
        }
        let n_features = self.binned.n_features();
        let k = self.params.max_features.count(n_features);
        let features: Vec<usize> = if k >= n_features {
            (0..n_features).collect()
        } else {
            let mut f = sample(&mut self.rng, n_features, k).into_vec();
            f.sort_unstable();
            f
        };
        let parent_score: f64 = counts.iter().map(|c| c * c).sum::<f64>() / total;
        let mut best: Option<(f64, usize, usize)> = None;
        let mut hist = Vec::new();
        for &f in &features {
            let nb = self.binned.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            hist.clear();
            hist.resize(nb * self.n_classes, 0.0);
            let col = &self.binned.bins[f];
            for &r in &rows {
                hist[col[r] as usize * self.n_classes + self.y[r]] += self.weights[r];
            }
            let mut left = vec![0.0; self.n_classes];
            for b in 0..nb - 1 {
                for c in 0..self.n_classes {
                    left[c] += hist[b * self.n_classes + c];
                }
                let wl: f64 = left.iter().sum();
                let wr = total - wl;
                if wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let sl: f64 = left.iter().map(|c| c * c).sum::<f64>() / wl;
                let sr: f64 = left.iter().zip(&counts).map(|(l, t)| (t - l) * (t - l)).sum::<f64>() / wr;
                let gain = sl + sr - parent_score;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, f, b)) = best else {
            return id;
        };
        let col = &self.binned.bins[f];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&row| col[row] as usize <= b);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = f;
        node.threshold = self.binned.thresholds[f][b];
        node.children = Some((left, right));
        id
    }
}

impl Tree {
    /// Grows a tree on rows with positive weight.
    pub fn fit(binned: &Binned, y: &[usize], weights: &[f64], n_classes: usize, params: TreeParams, seed: u64) -> Tree {
        let rows: Vec<usize> = (0..y.len()).filter(|&r| weights[r] > 0.0).collect();
        let mut g = Grower { binned, y, weights, n_classes, params, rng: ChaCha8Rng::seed_from_u64(seed), nodes: Vec::new() };
        g.grow(rows, 0);
        Tree { nodes: g.nodes }
    }

    fn leaf_of(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while let Some((l, r)) = self.nodes[i].children {
            i = if row[self.nodes[i].feature] <= self.nodes[i].threshold { l } else { r };
        }
        i
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        self.nodes[self.leaf_of(row)].class
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, i: usize) -> usize {
            match t.nodes[i].children {
                Some((l, r)) => 1 + d(t, l).max(d(t, r)),
                None => 0,
            }
        }
        d(self, 0)
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter(|n| n.children.is_some()).map(|n| n.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Reduced-error pruning: bottom-up, a subtree becomes a leaf when that
    /// does not increase the number of validation errors.
    pub fn prune(&mut self, x: &[Vec<f64>], y: &[usize]) {
        let rows: Vec<usize> = (0..y.len()).collect();
        self.prune_node(0, &rows, x, y);
        self.compact();
    }

    fn prune_node(&mut self, i: usize, rows: &[usize], x: &[Vec<f64>], y: &[usize]) -> usize {
        let class = self.nodes[i].class;
        let leaf_errors = rows.iter().filter(|&&r| y[r] != class).count();
        let Some((l, r)) = self.nodes[i].children else {
            return leaf_errors;
        };
        let (f, t) = (self.nodes[i].feature, self.nodes[i].threshold);
        let (lr, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&row| x[row][f] <= t);
        let subtree_errors = self.prune_node(l, &lr, x, y) + self.prune_node(r, &rr, x, y);
        if leaf_errors <= subtree_errors {
            self.nodes[i].children = None;
            leaf_errors
        } else {
            subtree_errors
        }
    }

    fn compact(&mut self) {
        let mut out = Vec::new();
        fn copy(src: &[Node], i: usize, out: &mut Vec<Node>) -> usize {
            let id = out.len();
            out.push(Node { children: None, ..src[i].clone() });
            if let Some((l, r)) = src[i].children {
                let nl = copy(src, l, out);
                let nr = copy(src, r, out);
                out[id].children = Some((nl, nr));
            }
            id
        }
        copy(&self.nodes, 0, &mut out);
        self.nodes = out;
    }
}

impl Model for Tree {
    fn predict(&self, row: &[f64]) -> usize {
        self.predict_row(row)
    }
}

fn depth_label(d: Option<usize>) -> String {
    d.map_or("inf".to_string(), |d| d.to_string())
}

/// CART with Gini splits and reduced-error pruning on the validation set.
pub struct DecisionTreeLearner {
    pub grid: Vec<TreeParams>,
}

impl Default for DecisionTreeLearner {
    fn default() -> Self {
        let mut grid = Vec::new();
        for max_depth in [Some(3), Some(5), Some(8), Some(12), None] {
            for min_leaf in [1, 5] {
                grid.push(TreeParams { max_depth, min_leaf, max_features: MaxFeatures::All });
            }
        }
        Self { grid }
    }
}

impl Learner for DecisionTreeLearner {
    fn name(&self) -> &str {
        "decision_tree"
    }

    fn grid(&self) -> Vec<String> {
        self.grid.iter().map(|p| format!("max_depth={};min_leaf={}", depth_label(p.max_depth), p.min_leaf)).collect()
    }

    fn fit(&self, point: usize, learn: &TrainData, valid: &TrainData, seed: u64) -> Result<Box<dyn Model>, HarnessError> {
        learn.check()?;
        let binned = Binned::new(learn.x, MAX_BINS);
        let mut tree = Tree::fit(&binned, learn.y, &vec![1.0; learn.y.len()], learn.n_classes, self.grid[point], seed);
        tree.prune(valid.x, valid.y);
        Ok(Box::new(tree))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    n_classes: usize,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: ForestParams, seed: u64) -> Forest {
        let binned = Binned::new(x, MAX_BINS);
        let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: 1, max_features: params.max_features };
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = seed.wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let mut w = vec![0.0; y.len()];
                if params.bootstrap {
                    for _ in 0..y.len() {
                        w[rng.gen_range(0..y.len())] += 1.0;
                    }
                } else {
                    w.fill(1.0);
                }
                Tree::fit(&binned, y, &w, n_classes, tree_params, rng.gen())
            })
            .collect();
        Forest { trees, n_classes }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

impl Model for Forest {
    fn predict(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        best
    }
}

pub struct RandomForestLearner {
    pub grid: Vec<ForestParams>,
}

impl Default for RandomForestLearner {
    fn default() -> Self {
        let mut grid = Vec::new();
        for trees in [50, 200] {
            for max_features in [MaxFeatures::Sqrt, MaxFeatures::All] {
                for max_depth in [Some(8), None] {
                    grid.push(ForestParams { trees, max_features, max_depth, bootstrap: true });
                }
            }
        }
        for trees in [50, 200] {
            grid.push(ForestParams { trees, max_features: MaxFeatures::Half, max_depth: None, bootstrap: true });
        }
        Self { grid }
    }
}

impl Learner for RandomForestLearner {
    fn name(&self) -> &str {
        "random_forest"
    }

    fn grid(&self) -> Vec<String> {
        self.grid
            .iter()
            .map(|p| format!("trees={};max_features={};max_depth={}", p.trees, p.max_features.label(), depth_label(p.max_depth)))
            .collect()
    }

    fn fit(&self, point: usize, learn: &TrainData, _valid: &TrainData, seed: u64) -> Result<Box<dyn Model>, HarnessError> {
        learn.check()?;
        Ok(Box::new(Forest::fit(learn.x, learn.y, learn.n_classes, self.grid[point], seed)))
    }
}
