//! Central finite-difference check of the analytic gradients.

use crate::dataset::CellSequence;
use crate::error::Result;

use super::backward::{backward, batch_loss};
use super::loss::Objective;
use super::params::SeqNetParams;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub block: &'static str,
    pub n_params: usize,
    /// `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, or 0 when both vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

fn nudge(params: &mut SeqNetParams, block: usize, index: usize, delta: f64) {
    let mut b = 0;
    params.for_each_block_mut(|_, v| {
        if b == block {
            v[index] += delta;
        }
        b += 1;
    });
}

/// Compare analytic and numeric gradients of the mean batch loss, block by block.
pub fn gradient_check(
    params: &SeqNetParams,
    seqs: &[&CellSequence],
    ys: &[usize],
    objective: &Objective,
    delta: f64,
) -> Result<Vec<BlockCheck>> {
    let (_, grads) = backward(params, seqs, ys, objective)?;
    let mut analytic: Vec<(&'static str, Vec<f64>)> = Vec::new();
    grads.for_each_block(|n, v| analytic.push((n, v.to_vec())));

    let mut work = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (b, (name, a)) in analytic.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut n2 = 0.0;
        for i in 0..a.len() {
            nudge(&mut work, b, i, delta);
            let plus = batch_loss(&work, seqs, ys, objective)?;
            nudge(&mut work, b, i, -2.0 * delta);
            let minus = batch_loss(&work, seqs, ys, objective)?;
            nudge(&mut work, b, i, delta);
            let num = (plus - minus) / (2.0 * delta);
            diff2 += (a[i] - num).powi(2);
            n2 += num * num;
        }
        let a_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = a_norm + n2.sqrt();
        out.push(BlockCheck {
            block: name,
            n_params: a.len(),
            rel_error: if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom },
            analytic_norm: a_norm,
        });
    }
    Ok(out)
}
