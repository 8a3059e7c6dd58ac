use famseq::forest::{rf_fit, rf_predict, ClassWeight, ForestConfig, Node};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gini(counts: &[f64]) -> f64 {
    let t: f64 = counts.iter().sum();
    if t == 0.0 {
        0.0
    } else {
        1.0 - counts.iter().map(|c| (c / t).powi(2)).sum::<f64>()
    }
}

/// Weighted child impurity of sending `x[f] <= thr` left.
fn split_score(x: &Array2<f64>, y: &[usize], rows: &[usize], f: usize, thr: f64) -> f64 {
    let (mut l, mut r) = ([0.0; 2], [0.0; 2]);
    for &i in rows {
        if x[[i, f]] <= thr {
            l[y[i]] += 1.0;
        } else {
            r[y[i]] += 1.0;
        }
    }
    l.iter().sum::<f64>() * gini(&l) + r.iter().sum::<f64>() * gini(&r)
}

/// Best score over every feature and every midpoint between distinct sorted values.
fn exhaustive_best(x: &Array2<f64>, y: &[usize], rows: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for f in 0..x.ncols() {
        let mut v: Vec<f64> = rows.iter().map(|&i| x[[i, f]]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        for w in v.windows(2) {
            best = best.min(split_score(x, y, rows, f, (w[0] + w[1]) / 2.0));
        }
    }
    best
}

fn xor_data() -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sizes = [5, 6, 7, 4];
    let corners = [(0.0, 0.0, 0), (1.0, 1.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1)];
    let n: usize = sizes.iter().sum();
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    let mut r = 0;
    for (&(a, b, c), &m) in corners.iter().zip(&sizes) {
        for _ in 0..m {
            x[[r, 0]] = a + rng.random_range(-0.2..0.2);
            x[[r, 1]] = b + rng.random_range(-0.2..0.2);
            y.push(c);
            r += 1;
        }
    }
    (x, y)
}

fn exhaustive_cfg(max_depth: Option<usize>) -> ForestConfig {
    ForestConfig {
        n_trees: 1,
        min_samples_leaf: 1,
        min_samples_split: 2,
        max_depth,
        class_weight: ClassWeight::Uniform,
        bootstrap: false,
        max_features: Some(2),
        seed: 0,
    }
}

#[test]
fn every_split_is_the_exhaustive_optimum() {
    let (x, y) = xor_data();
    let model = rf_fit(x.view(), &y, 2, &exhaustive_cfg(Some(2))).unwrap();
    let tree = &model.trees[0];
    assert!(tree.depth() <= 2);
    let mut stack = vec![(0usize, (0..y.len()).collect::<Vec<_>>())];
    let mut leaves = 0;
    while let Some((id, rows)) = stack.pop() {
        match &tree.nodes[id] {
            Node::Split { feature, threshold, left, right } => {
                let got = split_score(&x, &y, &rows, *feature, *threshold);
                let best = exhaustive_best(&x, &y, &rows);
                assert!((got - best).abs() < 1e-9, "node {id}: {got} vs exhaustive {best}");
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, *feature]] <= *threshold);
                assert!(!l.is_empty() && !r.is_empty());
                stack.push((*left, l));
                stack.push((*right, r));
            }
            Node::Leaf { counts } => {
                leaves += 1;
                let mut tally = vec![0.0; 2];
                rows.iter().for_each(|&i| tally[y[i]] += 1.0);
                assert_eq!(counts, &tally);
            }
        }
    }
    assert!(leaves >= 2);
}

#[test]
fn unlimited_depth_fits_xor_exactly() {
    let (x, y) = xor_data();
    let model = rf_fit(x.view(), &y, 2, &exhaustive_cfg(None)).unwrap();
    let (pred, proba) = rf_predict(&model, x.view()).unwrap();
    assert_eq!(pred, y);
    for row in proba.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}
