use famseq::spca::{spca_fit, spca_fit_with};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let vecs = idx.iter().map(|&j| (0..n).map(|i| v[i][j]).collect()).collect();
    (idx.iter().map(|&j| vals[j]).collect(), vecs)
}

fn covariance(x: &Array2<f64>) -> Vec<Vec<f64>> {
    let (n, w) = x.dim();
    let mean: Vec<f64> = (0..w).map(|c| x.column(c).sum() / n as f64).collect();
    (0..w)
        .map(|a| (0..w).map(|b| (0..n).map(|r| (x[[r, a]] - mean[a]) * (x[[r, b]] - mean[b])).sum::<f64>() / n as f64).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[test]
fn zero_penalty_matches_eigen_pca() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..10 {
        let x = Array2::from_shape_fn((8, 5), |_| rng.random_range(-3.0..3.0));
        let fam = spca_fit_with(x.view(), 0.0, 0.0, 5, 1e-12, 2000).unwrap();
        let (vals, vecs) = jacobi_eigen(&covariance(&x));
        let total: f64 = vals.iter().sum();
        let expected: Vec<usize> = (0..5).filter(|&j| vals[j] / total >= 0.01).collect();
        assert_eq!(fam.n_components(), expected.len(), "trial {trial}");
        for (j, l) in fam.loadings.iter().enumerate() {
            let angle = dot(l, &vecs[j]).abs().min(1.0).acos();
            assert!(angle < 1e-4, "trial {trial} component {j}: angle {angle}");
            assert!((fam.variance_ratios[j] - vals[j] / total).abs() < 1e-8);
            assert!(fam.variance_ratios[j] >= 0.01);
        }
    }
}

/// Accelerated proximal gradient for `min_b (α − b)ᵀG(α − b) + λ₂‖b‖² + λ₁‖b‖₁`.
fn fista(g: &[Vec<f64>], alpha: &[f64], l1: f64, l2: f64) -> Vec<f64> {
    let p = alpha.len();
    let lip = 2.0 * ((0..p).map(|i| g[i][i]).sum::<f64>() + l2);
    let mut b = vec![0.0; p];
    let mut z = b.clone();
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..p).map(|i| 2.0 * (dot(&g[i], &z) - dot(&g[i], alpha)) + 2.0 * l2 * z[i]).collect();
        let next: Vec<f64> = (0..p)
            .map(|i| {
                let v = z[i] - grad[i] / lip;
                v.signum() * (v.abs() - l1 / lip).max(0.0)
            })
            .collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = (0..p).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - b[i])).collect();
        b = next;
        t = t_next;
    }
    b
}

#[test]
fn strong_l1_solves_elastic_net_and_separates_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 60;
    // columns 0..3 follow one latent factor, columns 3..6 another, weaker one
    let mut x = Array2::zeros((n, 6));
    for r in 0..n {
        let (z1, z2): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        for c in 0..6 {
            let latent = if c < 3 { z1 } else { z2 };
            x[[r, c]] = latent + 0.05 * rng.random_range(-1.0..1.0);
        }
    }
    let (l1, l2) = (0.5, 1e-6);
    let fam = spca_fit_with(x.view(), l1, l2, 2, 1e-12, 5000).unwrap();
    assert!(fam.converged);
    let g = covariance(&x);
    for (a, b) in fam.alpha.iter().zip(&fam.beta) {
        let oracle = fista(&g, a, l1, l2);
        for (p, q) in b.iter().zip(&oracle) {
            assert!((p - q).abs() < 1e-6, "{b:?} vs {oracle:?}");
        }
    }
    assert_eq!(fam.n_components(), 2);
    for l in &fam.loadings {
        let on_first = l[..3].iter().any(|v| v.abs() > 1e-9);
        let on_second = l[3..].iter().any(|v| v.abs() > 1e-9);
        assert!(on_first != on_second, "loading mixes blocks: {l:?}");
    }
    // the higher-variance block comes first
    assert!(fam.loadings[0][3..].iter().all(|v| *v == 0.0), "{:?}", fam.loadings);
    assert!(fam.loadings[1][..3].iter().all(|v| *v == 0.0), "{:?}", fam.loadings);
}

#[test]
fn default_entry_point_uses_default_tolerance() {
    let x = Array2::from_shape_fn((10, 3), |(r, c)| ((r * 7 + c * 3) as f64).sin());
    let a = spca_fit(x.view(), 0.1, 1e-6, 3).unwrap();
    let b = spca_fit_with(x.view(), 0.1, 1e-6, 3, 1e-6, 500).unwrap();
    assert_eq!(a, b);
}
