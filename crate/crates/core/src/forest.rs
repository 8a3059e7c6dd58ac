//! Random forest of CART trees with weighted Gini splits and per-bootstrap class balancing.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FOREST_FORMAT: &str = "famseq-forest-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// Every sample weighs 1.
    Uniform,
    /// Recomputed on each bootstrap: `w_c = n_boot / (K · count_c)`.
    BalancedSubsample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub class_weight: ClassWeight,
    pub bootstrap: bool,
    /// Candidate features per split; `None` means `⌈√C⌉`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 600,
            min_samples_leaf: 2,
            min_samples_split: 2,
            max_depth: None,
            class_weight: ClassWeight::BalancedSubsample,
            bootstrap: true,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Weighted class counts of the training samples reaching this leaf.
    Leaf { counts: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub seed: u64,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub n_features: usize,
    pub n_classes: usize,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

/// `w_c = n / (K · count_c)` over the classes present; absent classes get weight 0.
pub fn balanced_subsample_weights(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let present = counts.iter().filter(|&&c| c > 0).count();
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n as f64 / (present * c) as f64 })
        .collect()
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    w: Vec<f64>,
    k: usize,
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn class_totals(&self, samples: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.k];
        for &s in samples {
            c[self.y[s]] += self.w[self.y[s]];
        }
        c
    }

    /// Best threshold on one feature, or `None` if no split satisfies the leaf size.
    fn best_on_feature(&self, samples: &[usize], f: usize, parent: &[f64]) -> Option<BestSplit> {
        let mut order: Vec<usize> = samples.to_vec();
        order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
        let n = order.len();
        let total: f64 = parent.iter().sum();
        let mut left = vec![0.0; self.k];
        let mut best: Option<BestSplit> = None;
        for i in 0..n - 1 {
            let s = order[i];
            left[self.y[s]] += self.w[self.y[s]];
            let (lo, hi) = (self.x[[s, f]], self.x[[order[i + 1], f]]);
            if lo == hi {
                continue;
            }
            let (n_left, n_right) = (i + 1, n - i - 1);
            if n_left < self.cfg.min_samples_leaf || n_right < self.cfg.min_samples_leaf {
                continue;
            }
            let wl: f64 = left.iter().sum();
            let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
            let wr = total - wl;
            let score = wl * gini(&left, wl) + wr * gini(&right, wr);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(BestSplit { feature: f, threshold, score });
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_totals(&samples);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure
            || depth_capped
            || samples.len() < self.cfg.min_samples_split.max(2)
            || samples.len() < 2 * self.cfg.min_samples_leaf
        {
            return id;
        }

        let n_features = self.x.ncols();
        let mut features: Vec<usize> = (0..n_features).collect();
        features.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        for &f in &features {
            // keep scanning past mtry only while nothing valid has been found
            if visited >= self.mtry && best.is_some() {
                break;
            }
            visited += 1;
            if let Some(c) = self.best_on_feature(&samples, f, &counts) {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        c.score < b.score
                            || (c.score == b.score
                                && (c.feature, c.threshold) < (b.feature, b.threshold))
                    }
                };
                if better {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else { return id };

        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| self.x[[s, split.feature]] <= split.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn fit_tree(x: ArrayView2<'_, f64>, y: &[usize], k: usize, cfg: &ForestConfig, seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.nrows();
    let samples: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut counts = vec![0usize; k];
    for &s in &samples {
        counts[y[s]] += 1;
    }
    let w = match cfg.class_weight {
        ClassWeight::Uniform => vec![1.0; k],
        ClassWeight::BalancedSubsample => balanced_subsample_weights(&counts),
    };
    let c = x.ncols();
    let mtry = cfg
        .max_features
        .unwrap_or_else(|| (c as f64).sqrt().ceil() as usize)
        .clamp(1, c);
    let mut g = Grower { x, y, w, k, cfg, mtry, nodes: Vec::new() };
    g.grow(samples, 0, &mut rng);
    Tree { seed, nodes: g.nodes }
}

/// Fit a forest; tree `t` uses seed `cfg.seed + t`.
pub fn rf_fit(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, cfg: &ForestConfig) -> Result<ForestModel> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("forest needs at least one feature".into()));
    }
    if cfg.n_trees == 0 || cfg.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument("n_trees and min_samples_leaf must be positive".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {n_classes} classes")));
    }
    let mut seen = y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(Error::InvalidArgument("forest needs at least two classes in y".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("forest input has non-finite values".into()));
    }
    let trees = (0..cfg.n_trees)
        .map(|t| fit_tree(x, y, n_classes, cfg, cfg.seed.wrapping_add(t as u64)))
        .collect();
    Ok(ForestModel {
        format: FOREST_FORMAT.to_string(),
        n_features: x.ncols(),
        n_classes,
        config: cfg.clone(),
        trees,
    })
}

/// Labels (argmax, ties to the lowest index) and mean per-tree leaf class frequencies.
pub fn rf_predict(model: &ForestModel, x: ArrayView2<'_, f64>) -> Result<(Vec<usize>, Array2<f64>)> {
    if x.ncols() != model.n_features {
        return Err(Error::WidthMismatch {
            expected: model.n_features,
            found: x.ncols(),
            context: "forest prediction".into(),
        });
    }
    let k = model.n_classes;
    let mut proba = Array2::zeros((x.nrows(), k));
    for (r, row) in x.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let mut acc = vec![0.0; k];
        for tree in &model.trees {
            let leaf = tree.leaf_for(&row);
            let total: f64 = leaf.iter().sum();
            for (a, c) in acc.iter_mut().zip(leaf) {
                *a += c / total;
            }
        }
        for (c, a) in acc.iter().enumerate() {
            proba[[r, c]] = a / model.trees.len() as f64;
        }
    }
    let labels = proba.rows().into_iter().map(|p| argmax(p.as_slice().expect("row"))).collect();
    Ok((labels, proba))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
