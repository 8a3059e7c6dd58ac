use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FOCAL_GAMMA: f64 = 2.0;
pub const CLASS_BALANCED_BETA: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Plain cross-entropy, every class weighs 1.
    Ce,
    /// Cross-entropy with `w_c = N / (K · N_c)`.
    WeightedCe,
    /// Focal loss with the `WeightedCe` weights.
    Focal,
    /// Cross-entropy with effective-number weights `(1 − β) / (1 − β^{N_c})`.
    ClassBalancedCe,
}

/// Loss kind plus the per-class weights it derives from training class counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: LossKind,
    pub weights: Vec<f64>,
    pub gamma: f64,
}

impl Objective {
    pub fn new(kind: LossKind, class_counts: &[usize]) -> Result<Self> {
        let k = class_counts.len();
        let n: usize = class_counts.iter().sum();
        if k == 0 || n == 0 {
            return Err(Error::InvalidArgument("class counts are empty".into()));
        }
        // a class absent from training never appears as a target, so its weight is moot
        let weights = match kind {
            LossKind::Ce => vec![1.0; k],
            LossKind::WeightedCe | LossKind::Focal => class_counts
                .iter()
                .map(|&c| if c == 0 { 0.0 } else { n as f64 / (k * c) as f64 })
                .collect(),
            LossKind::ClassBalancedCe => {
                let raw: Vec<f64> = class_counts
                    .iter()
                    .map(|&c| {
                        if c == 0 {
                            0.0
                        } else {
                            (1.0 - CLASS_BALANCED_BETA) / (1.0 - CLASS_BALANCED_BETA.powi(c as i32))
                        }
                    })
                    .collect();
                let present = raw.iter().filter(|&&w| w > 0.0).count() as f64;
                let total: f64 = raw.iter().sum();
                raw.iter().map(|w| w * present / total).collect()
            }
        };
        Ok(Objective { kind, weights, gamma: FOCAL_GAMMA })
    }

    pub fn unweighted(k: usize) -> Self {
        Objective { kind: LossKind::Ce, weights: vec![1.0; k], gamma: FOCAL_GAMMA }
    }

    /// Per-sample loss and its gradient with respect to the logits.
    pub fn loss_and_grad(&self, logits: &[f64], y: usize) -> (f64, Vec<f64>) {
        let p = softmax(logits);
        let w = self.weights[y];
        let py = p[y];
        let log_py = log_softmax_at(logits, y);
        match self.kind {
            LossKind::Ce | LossKind::WeightedCe | LossKind::ClassBalancedCe => {
                let g = p
                    .iter()
                    .enumerate()
                    .map(|(j, &pj)| w * (pj - if j == y { 1.0 } else { 0.0 }))
                    .collect();
                (-w * log_py, g)
            }
            LossKind::Focal => {
                let gamma = self.gamma;
                let one_m = (1.0 - py).max(0.0);
                let loss = -w * one_m.powf(gamma) * log_py;
                let factor = gamma * one_m.powf(gamma - 1.0) * py * log_py - one_m.powf(gamma);
                let g = p
                    .iter()
                    .enumerate()
                    .map(|(j, &pj)| w * ((if j == y { 1.0 } else { 0.0 }) - pj) * factor)
                    .collect();
                (loss, g)
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax_at(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z[y] - lse
}

/// Standalone loss on raw logits.
pub fn loss(logits: &[f64], y: usize, objective: &Objective) -> Result<f64> {
    if y >= logits.len() || objective.weights.len() != logits.len() {
        return Err(Error::InvalidArgument(format!(
            "class {y} with {} logits and {} weights",
            logits.len(),
            objective.weights.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(objective.loss_and_grad(logits, y).0)
}
