//! Classification metrics, multi-run aggregation and attention summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub balanced_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, macro-F1, balanced accuracy and per-class precision/recall.
///
/// A class with zero support enters the macro means only if it was predicted
/// (then with F1 = 0 and recall = 0); otherwise it is left out.
pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {k} classes")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                predicted,
            }
        })
        .collect();
    let included: Vec<&ClassMetrics> = per_class
        .iter()
        .filter(|m| m.support > 0 || m.predicted > 0)
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if included.is_empty() {
            0.0
        } else {
            included.iter().map(|m| f(m)).sum::<f64>() / included.len() as f64
        }
    };
    let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        accuracy: ratio(trace, y_true.len()),
        macro_f1: mean(|m| m.f1),
        balanced_accuracy: mean(|m| m.recall),
        per_class,
        confusion,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample (n − 1) standard deviation; std is 0 for a single value.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        assert!(n > 0);
        // sorted summation keeps the result independent of input order
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }

    pub fn display(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub n_runs: usize,
    pub accuracy: Stat,
    pub macro_f1: Stat,
    pub balanced_accuracy: Stat,
    pub runs: Vec<MetricsReport>,
}

impl RunAggregate {
    /// Element-wise sum of the per-run confusion matrices.
    pub fn pooled_confusion(&self) -> Vec<Vec<usize>> {
        let k = self.runs[0].confusion.len();
        let mut out = vec![vec![0; k]; k];
        for r in &self.runs {
            for (o, row) in out.iter_mut().zip(&r.confusion) {
                for (a, b) in o.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        out
    }
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("aggregate_runs needs at least one report".into()));
    }
    let col = |f: fn(&MetricsReport) -> f64| Stat::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(RunAggregate {
        n_runs: reports.len(),
        accuracy: col(|r| r.accuracy),
        macro_f1: col(|r| r.macro_f1),
        balanced_accuracy: col(|r| r.balanced_accuracy),
        runs: reports.to_vec(),
    })
}

/// Attention rows of one run, each tagged with its true class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTable {
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub class_names: Vec<String>,
    /// `None` for a class absent from every run.
    pub mean: Vec<Option<Vec<f64>>>,
    pub counts: Vec<usize>,
    pub n_runs: usize,
}

/// Per-class mean attention, aggregated across runs weighting each run's class mean by its
/// class sample count.
pub fn summarize_attention(tables: &[AttentionTable], class_names: &[String]) -> Result<AttentionSummary> {
    let k = class_names.len();
    let steps = tables
        .iter()
        .flat_map(|t| t.weights.first())
        .map(|w| w.len())
        .next()
        .unwrap_or(crate::schema::N_FAMILIES);
    let mut sums = vec![vec![0.0; steps]; k];
    let mut counts = vec![0usize; k];
    for t in tables {
        if t.classes.len() != t.weights.len() {
            return Err(Error::InvalidArgument("attention table tag/row count mismatch".into()));
        }
        let mut run_sum = vec![vec![0.0; steps]; k];
        let mut run_n = vec![0usize; k];
        for (&c, w) in t.classes.iter().zip(&t.weights) {
            if w.len() != steps {
                return Err(Error::WidthMismatch {
                    expected: steps,
                    found: w.len(),
                    context: "attention row".into(),
                });
            }
            if c >= k {
                return Err(Error::UnknownClassIndex {
                    index: c,
                    space: format!("{k} classes"),
                });
            }
            for (s, v) in run_sum[c].iter_mut().zip(w) {
                *s += v;
            }
            run_n[c] += 1;
        }
        for c in 0..k {
            if run_n[c] == 0 {
                continue;
            }
            // count × class mean is the run's class sum
            for (s, rs) in sums[c].iter_mut().zip(&run_sum[c]) {
                *s += rs;
            }
            counts[c] += run_n[c];
        }
    }
    let mean = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| {
            (n > 0).then(|| {
                let mut row: Vec<f64> = s.iter().map(|v| v / n as f64).collect();
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-9 && total > 0.0 {
                    row.iter_mut().for_each(|v| *v /= total);
                }
                row
            })
        })
        .collect();
    Ok(AttentionSummary {
        class_names: class_names.to_vec(),
        mean,
        counts,
        n_runs: tables.len(),
    })
}
