//! Missingness filtering, median imputation, and the train-only log/z-score scaler.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_MISSING_FRAC: f64 = 0.5;
pub const DEFAULT_SKEW_THRESHOLD: f64 = 2.0;
pub const STD_EPS: f64 = 1e-8;

/// Keep rows whose missing fraction is at most `max_frac`, preserving order.
pub fn filter_missingness(ds: &Dataset, max_frac: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&max_frac) {
        return Err(Error::InvalidArgument(format!("max_frac {max_frac} outside [0, 1]")));
    }
    let width = ds.schema().total_width() as f64;
    let keep: Vec<usize> = ds
        .missing()
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.iter().filter(|&&b| b).count() as f64 / width <= max_frac)
        .map(|(r, _)| r)
        .collect();
    ds.select_rows(&keep)
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fill every missing entry with its column's median over the observed values.
///
/// A dataset holds one species, so medians are within species.
pub fn impute_median(ds: &Dataset) -> Result<Dataset> {
    let mut x = ds.x().clone();
    let missing = ds.missing();
    let mut buf = Vec::with_capacity(ds.n_rows());
    for c in 0..x.ncols() {
        let col_mask = missing.column(c);
        if !col_mask.iter().any(|&m| m) {
            continue;
        }
        buf.clear();
        buf.extend(
            x.column(c)
                .iter()
                .zip(col_mask)
                .filter(|(_, &m)| !m)
                .map(|(&v, _)| v),
        );
        if buf.is_empty() {
            return Err(Error::FullyMissingColumn(ds.schema().column_name(c)));
        }
        let med = median(&mut buf);
        for (v, &m) in x.column_mut(c).iter_mut().zip(col_mask) {
            if m {
                *v = med;
            }
        }
    }
    ds.with_values_and_mask(x, Array2::from_elem(missing.dim(), false))
}

/// Adjusted Fisher–Pearson sample skewness G1. Zero for n < 3 or zero variance.
pub fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 3 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), &v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / nf, m3 / nf);
    if m2 <= 0.0 {
        return 0.0;
    }
    let g1 = m3 / m2.powf(1.5);
    (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Per-column log mask, means and population standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub log_mask: Vec<bool>,
    pub columns: Vec<String>,
    pub fitted_on: Partition,
    pub n_fit_rows: usize,
}

/// Fit on `train_rows` only. Missing entries are ignored.
pub fn fit_scaler(ds: &Dataset, train_rows: &[usize], skew_threshold: f64) -> Result<Scaler> {
    if train_rows.is_empty() {
        return Err(Error::InvalidArgument("fit_scaler needs at least one training row".into()));
    }
    let width = ds.schema().total_width();
    let mut means = vec![0.0; width];
    let mut stds = vec![0.0; width];
    let mut log_mask = vec![false; width];
    let mut col = Vec::with_capacity(train_rows.len());
    for c in 0..width {
        col.clear();
        col.extend(
            train_rows
                .iter()
                .filter(|&&r| !ds.missing()[[r, c]])
                .map(|&r| ds.x()[[r, c]]),
        );
        if col.is_empty() {
            continue;
        }
        let positive = col.iter().all(|&v| v > 0.0);
        if positive && sample_skewness(&col) > skew_threshold {
            log_mask[c] = true;
            for v in col.iter_mut() {
                *v = v.ln();
            }
        }
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            means[c] = first;
            stds[c] = 0.0;
            continue;
        }
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means[c] = mean;
        stds[c] = var.sqrt();
    }
    Ok(Scaler {
        means,
        stds,
        log_mask,
        columns: ds.schema().column_names(),
        fitted_on: Partition::Train,
        n_fit_rows: train_rows.len(),
    })
}

impl Scaler {
    #[inline]
    pub fn transform_value(&self, col: usize, v: f64) -> f64 {
        let v = if self.log_mask[col] { v.ln() } else { v };
        (v - self.means[col]) / self.stds[col].max(STD_EPS)
    }
}

/// `(f(x) − mean) / max(std, ε)` per column with `f = ln` on log-masked columns.
pub fn apply_scaler(s: &Scaler, ds: &Dataset) -> Result<Dataset> {
    let width = ds.schema().total_width();
    if s.means.len() != width {
        return Err(Error::WidthMismatch {
            expected: s.means.len(),
            found: width,
            context: "scaler".into(),
        });
    }
    let mut x = ds.x().clone();
    for ((r, c), v) in x.indexed_iter_mut() {
        if ds.missing()[[r, c]] {
            continue;
        }
        if s.log_mask[c] && *v <= 0.0 {
            return Err(Error::NonPositiveLogValue {
                column: ds.schema().column_name(c),
                row: r,
                value: *v,
            });
        }
        *v = s.transform_value(c, *v);
    }
    ds.with_values(x)
}
