//! Per-family sparse PCA in the elastic-net formulation.
//!
//! For a centered block `X` with covariance `G = XᵀX / n`, alternate
//!
//! 1. `B_j = argmin_b (α_j − b)ᵀ G (α_j − b) + λ₂‖b‖² + λ₁‖b‖₁` (coordinate descent), and
//! 2. `A = U Vᵀ` from the thin SVD `G B = U D Vᵀ`,
//!
//! starting from the leading right singular vectors, until `B` moves less than `tol`.
//! Loadings are the normalized columns of `B`. Because sparse loadings are not orthogonal,
//! explained variance is the adjusted variance from a column-pivoted QR of the score matrix.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::FamilySchema;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const MIN_VARIANCE_RATIO: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpcaConfig {
    /// Candidate L1 penalties; the one with lowest train reconstruction error is kept.
    pub l1_grid: Vec<f64>,
    pub l2: f64,
    pub max_components: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpcaConfig {
    fn default() -> Self {
        SpcaConfig {
            l1_grid: vec![0.01, 0.1, 1.0],
            l2: 1e-6,
            max_components: 8,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Sparse components of one family block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpca {
    pub mean: Vec<f64>,
    /// One unit-norm loading vector per retained component, in adjusted-variance order.
    pub loadings: Vec<Vec<f64>>,
    pub variance_ratios: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    /// Final `A` and unnormalized `B` of the alternation, one column per fitted component.
    #[serde(skip)]
    pub alpha: Vec<Vec<f64>>,
    #[serde(skip)]
    pub beta: Vec<Vec<f64>>,
}

impl FamilySpca {
    pub fn n_components(&self) -> usize {
        self.loadings.len()
    }

    /// Scores of the rows of `block` (n × width) on the retained components.
    pub fn scores(&self, block: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((block.nrows(), self.loadings.len()));
        for (r, row) in block.rows().into_iter().enumerate() {
            for (j, l) in self.loadings.iter().enumerate() {
                out[[r, j]] = row
                    .iter()
                    .zip(&self.mean)
                    .zip(l)
                    .map(|((x, m), w)| (x - m) * w)
                    .sum();
            }
        }
        out
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Coordinate descent for `min_b (α − b)ᵀG(α − b) + λ₂‖b‖² + λ₁‖b‖₁`, warm-started at `b`.
pub fn elastic_net_cd(gram: &DMatrix<f64>, alpha: &[f64], l1: f64, l2: f64, b: &mut [f64]) {
    let p = alpha.len();
    let g_alpha: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|l| gram[(i, l)] * alpha[l]).sum())
        .collect();
    for _sweep in 0..10_000 {
        let mut max_delta: f64 = 0.0;
        for i in 0..p {
            let denom = gram[(i, i)] + l2;
            let new = if denom <= 0.0 {
                0.0
            } else {
                let cross: f64 = (0..p).filter(|&l| l != i).map(|l| gram[(i, l)] * b[l]).sum();
                soft_threshold(g_alpha[i] - cross, 0.5 * l1) / denom
            };
            max_delta = max_delta.max((new - b[i]).abs());
            b[i] = new;
        }
        if max_delta < 1e-13 {
            break;
        }
    }
}

/// Column-pivoted Gram–Schmidt: returns (column order, squared residual norms `R_jj²`).
/// The squared norms are non-increasing in the returned order.
pub fn pivoted_adjusted_variance(z: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut cols: Vec<nalgebra::DVector<f64>> = (0..z.ncols()).map(|j| z.column(j).into_owned()).collect();
    let mut remaining: Vec<usize> = (0..z.ncols()).collect();
    let mut order = Vec::new();
    let mut adj = Vec::new();
    while !remaining.is_empty() {
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| cols[a].norm_squared().total_cmp(&cols[b].norm_squared()).then(b.cmp(&a)))
            .expect("nonempty");
        remaining.remove(pos);
        let r2 = cols[best].norm_squared();
        order.push(best);
        adj.push(r2);
        if r2 > 0.0 {
            let q = &cols[best] / r2.sqrt();
            for &j in &remaining {
                let proj = q.dot(&cols[j]);
                cols[j] -= &q * proj;
            }
        }
    }
    (order, adj)
}

fn centered(x: ArrayView2<'_, f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, w) = x.dim();
    let mean: Vec<f64> = (0..w).map(|c| x.column(c).sum() / n as f64).collect();
    let xc = DMatrix::from_fn(n, w, |r, c| x[[r, c]] - mean[c]);
    (mean, xc)
}

/// Sparse PCA of one family block (rows = cells).
pub fn spca_fit(
    family_matrix: ArrayView2<'_, f64>,
    penalty_l1: f64,
    penalty_l2: f64,
    max_components: usize,
) -> Result<FamilySpca> {
    spca_fit_with(family_matrix, penalty_l1, penalty_l2, max_components, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn spca_fit_with(
    family_matrix: ArrayView2<'_, f64>,
    penalty_l1: f64,
    penalty_l2: f64,
    max_components: usize,
    tol: f64,
    max_iter: usize,
) -> Result<FamilySpca> {
    let (n, w) = family_matrix.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("sparse PCA needs n >= 2 rows, got {n}")));
    }
    if penalty_l1 < 0.0 || penalty_l2 < 0.0 {
        return Err(Error::InvalidArgument("penalties must be non-negative".into()));
    }
    if family_matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sparse PCA input has non-finite values".into()));
    }
    let (mean, xc) = centered(family_matrix);
    let k = max_components.min(w).max(1);
    let gram = xc.transpose() * &xc / n as f64;
    let total_var = gram.trace();

    // leading eigenvectors of the covariance as the starting A
    let eig = gram.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..w).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut alpha = DMatrix::from_fn(w, k, |r, j| eig.eigenvectors[(r, idx[j])]);
    let mut beta = alpha.clone();

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let prev = beta.clone();
        for j in 0..k {
            let a: Vec<f64> = alpha.column(j).iter().copied().collect();
            let mut b: Vec<f64> = beta.column(j).iter().copied().collect();
            elastic_net_cd(&gram, &a, penalty_l1, penalty_l2, &mut b);
            beta.set_column(j, &nalgebra::DVector::from_vec(b));
        }
        let m = &gram * &beta;
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
        alpha = u * vt;
        let delta = (&beta - &prev).abs().max();
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("sparse PCA stopped at the {max_iter}-iteration cap before reaching tol {tol}");
    }

    // normalize, drop all-zero components, fix sign so the largest-magnitude entry is positive
    let mut loadings: Vec<Vec<f64>> = Vec::new();
    for j in 0..k {
        let col: Vec<f64> = beta.column(j).iter().copied().collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            continue;
        }
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let s = if pivot < 0.0 { -1.0 } else { 1.0 };
        loadings.push(col.iter().map(|v| s * v / norm).collect());
    }

    let z = DMatrix::from_fn(n, loadings.len(), |r, j| {
        (0..w).map(|c| xc[(r, c)] * loadings[j][c]).sum::<f64>()
    });
    let (order, adj) = pivoted_adjusted_variance(&z);
    let denom = total_var * n as f64;
    let mut kept_loadings = Vec::new();
    let mut ratios = Vec::new();
    for (&j, &v) in order.iter().zip(&adj) {
        let ratio = if denom > 0.0 { v / denom } else { 0.0 };
        if ratio >= MIN_VARIANCE_RATIO {
            kept_loadings.push(loadings[j].clone());
            ratios.push(ratio);
        }
    }

    let to_cols = |m: &DMatrix<f64>| (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect();
    Ok(FamilySpca {
        mean,
        loadings: kept_loadings,
        variance_ratios: ratios,
        l1: penalty_l1,
        l2: penalty_l2,
        iterations,
        converged,
        alpha: to_cols(&alpha),
        beta: to_cols(&beta),
    })
}

/// Squared error of projecting the centered block onto the span of its scores.
fn reconstruction_error(block: ArrayView2<'_, f64>, fam: &FamilySpca) -> f64 {
    let (_, xc) = centered(block);
    if fam.loadings.is_empty() {
        return xc.norm_squared();
    }
    let w = xc.ncols();
    let v = DMatrix::from_fn(w, fam.loadings.len(), |r, j| fam.loadings[j][r]);
    let z = &xc * &v;
    let qr = z.qr();
    let q = qr.q();
    let proj = &q * (q.transpose() * &xc);
    (&xc - proj).norm_squared()
}

/// Sparse PCA for every family, concatenated into one score matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpcaModel {
    pub format: String,
    pub schema: FamilySchema,
    pub families: Vec<FamilySpca>,
}

pub const SPCA_FORMAT: &str = "famseq-spca-v1";

impl SpcaModel {
    /// Fit each family block of `x` (training rows only), choosing the L1 penalty per family.
    pub fn fit(schema: &FamilySchema, x: ArrayView2<'_, f64>, cfg: &SpcaConfig) -> Result<SpcaModel> {
        if x.ncols() != schema.total_width() {
            return Err(Error::WidthMismatch {
                expected: schema.total_width(),
                found: x.ncols(),
                context: "sparse PCA input".into(),
            });
        }
        if cfg.l1_grid.is_empty() {
            return Err(Error::InvalidArgument("empty l1 grid".into()));
        }
        let mut families = Vec::with_capacity(schema.n_families());
        for f in 0..schema.n_families() {
            let block = x.slice(ndarray::s![.., schema.range(f)]);
            let mut best: Option<(f64, FamilySpca)> = None;
            for &l1 in &cfg.l1_grid {
                let fam = spca_fit_with(block, l1, cfg.l2, cfg.max_components, cfg.tol, cfg.max_iter)?;
                let err = reconstruction_error(block, &fam);
                let better = match &best {
                    None => true,
                    // ties go to the larger (sparser) penalty
                    Some((e, b)) => err < *e - 1e-12 * e.abs().max(1.0) || (err <= *e && l1 > b.l1),
                };
                if better {
                    best = Some((err, fam));
                }
            }
            families.push(best.expect("grid nonempty").1);
        }
        Ok(SpcaModel {
            format: SPCA_FORMAT.to_string(),
            schema: schema.clone(),
            families,
        })
    }

    pub fn n_components(&self) -> usize {
        self.families.iter().map(|f| f.n_components()).sum()
    }

    /// Scores of every row, family blocks concatenated in schema order.
    pub fn transform(&self, schema: &FamilySchema, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if schema != &self.schema {
            return Err(Error::Schema("dataset schema differs from the fitted sparse PCA schema".into()));
        }
        if x.ncols() != schema.total_width() {
            return Err(Error::WidthMismatch {
                expected: schema.total_width(),
                found: x.ncols(),
                context: "sparse PCA transform".into(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.n_components()));
        let mut col = 0;
        for (f, fam) in self.families.iter().enumerate() {
            let s = fam.scores(x.slice(ndarray::s![.., schema.range(f)]));
            out.slice_mut(ndarray::s![.., col..col + s.ncols()]).assign(&s);
            col += s.ncols();
        }
        Ok(out)
    }
}

/// Concatenated family scores for every row of `ds`.
pub fn spca_transform(model: &SpcaModel, ds: &crate::dataset::Dataset) -> Result<Array2<f64>> {
    model.transform(ds.schema(), ds.x().view())
}
