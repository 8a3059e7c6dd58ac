//! Reverse-mode gradients of the mean batch loss through head, pooling and both LSTM directions.

use crate::dataset::CellSequence;
use crate::error::{Error, Result};

use super::forward::{encode, head_forward, margin_target, train_logits, DirectionTrace, EncoderTrace, HeadTrace};
use super::loss::Objective;
use super::params::{axpy, dot, EncoderParams, HeadParams, LstmParams, SeqNetParams};

fn direction_backward(p: &LstmParams, g: &mut LstmParams, seq: &CellSequence, tr: &DirectionTrace, dh_ext: &[&[f64]]) {
    let h = p.hidden();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for pos in (0..tr.order.len()).rev() {
        let t = tr.order[pos];
        let (i, f, gg, o, c) = (&tr.i[pos], &tr.f[pos], &tr.g[pos], &tr.o[pos], &tr.c[pos]);
        for j in 0..h {
            let dh = dh_ext[t][j] + dh_next[j];
            let tc = c[j].tanh();
            let dc = dc_next[j] + dh * o[j] * (1.0 - tc * tc);
            let c_prev = if pos > 0 { tr.c[pos - 1][j] } else { 0.0 };
            dz[j] = dc * gg[j] * i[j] * (1.0 - i[j]);
            dz[h + j] = dc * c_prev * f[j] * (1.0 - f[j]);
            dz[2 * h + j] = dc * i[j] * (1.0 - gg[j] * gg[j]);
            dz[3 * h + j] = dh * tc * o[j] * (1.0 - o[j]);
            dc_next[j] = dc * f[j];
        }
        let (off, x) = seq.block(t);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr != 0.0 {
                axpy(dzr, x, &mut g.w.row_mut(r)[off..off + x.len()]);
            }
        }
        if pos > 0 {
            g.u.add_outer(&dz, &tr.h[pos - 1]);
        }
        axpy(1.0, &dz, &mut g.b);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        p.u.matvec_t_add(&dz, &mut dh_next);
    }
}

/// Accumulate encoder gradients given `dL/dcontext`.
pub fn encoder_backward(enc: &EncoderParams, g: &mut EncoderParams, seq: &CellSequence, tr: &EncoderTrace, d_context: &[f64]) {
    let t_len = tr.hidden.len();
    let hd = enc.hidden();
    let mut dh: Vec<Vec<f64>> = tr.weights.iter().map(|&a| d_context.iter().map(|d| a * d).collect()).collect();
    if let (Some(a), Some(ga)) = (&enc.attention, &mut g.attention) {
        let da: Vec<f64> = tr.hidden.iter().map(|h| dot(d_context, h)).collect();
        let mean: f64 = tr.weights.iter().zip(&da).map(|(w, d)| w * d).sum();
        for t in 0..t_len {
            let de = tr.weights[t] * (da[t] - mean);
            let u = &tr.attn_hidden[t];
            axpy(de, u, &mut ga.v);
            let dpre: Vec<f64> = u.iter().zip(&a.v).map(|(ui, vi)| de * vi * (1.0 - ui * ui)).collect();
            ga.w.add_outer(&dpre, &tr.hidden[t]);
            axpy(1.0, &dpre, &mut ga.b);
            a.w.matvec_t_add(&dpre, &mut dh[t]);
        }
    }
    let fwd_ext: Vec<&[f64]> = dh.iter().map(|d| &d[..hd]).collect();
    let bwd_ext: Vec<&[f64]> = dh.iter().map(|d| &d[hd..]).collect();
    direction_backward(&enc.fwd, &mut g.fwd, seq, &tr.fwd, &fwd_ext);
    direction_backward(&enc.bwd, &mut g.bwd, seq, &tr.bwd, &bwd_ext);
}

/// Accumulate head gradients given `dL/dlogits` of the training logits; returns `dL/dcontext`.
pub fn head_backward(head: &HeadParams, g: &mut HeadParams, trace: &HeadTrace, context: &[f64], y: usize, d_logits: &[f64]) -> Vec<f64> {
    let mut d_ctx = vec![0.0; context.len()];
    match (head, g, trace) {
        (HeadParams::Softmax { w, .. }, HeadParams::Softmax { w: gw, b: gb }, HeadTrace::Softmax) => {
            gw.add_outer(d_logits, context);
            axpy(1.0, d_logits, gb);
            w.matvec_t_add(d_logits, &mut d_ctx);
        }
        (
            HeadParams::ArcFace { proj, classes, scale, margin },
            HeadParams::ArcFace { proj: gp, classes: gc, .. },
            HeadTrace::ArcFace { z_norm, z_hat, class_norms, cos },
        ) => {
            let e = z_hat.len();
            let mut d_zhat = vec![0.0; e];
            for k in 0..classes.rows {
                let dcos = if k == y {
                    scale * d_logits[k] * margin_target(cos[k], *margin).1
                } else {
                    scale * d_logits[k]
                };
                if dcos == 0.0 {
                    continue;
                }
                let wk = classes.row(k);
                let nk = class_norms[k];
                // cos = ŵ·ẑ with ŵ = w/‖w‖
                for j in 0..e {
                    let w_hat = wk[j] / nk;
                    d_zhat[j] += dcos * w_hat;
                }
                let gk = gc.row_mut(k);
                for j in 0..e {
                    let w_hat = wk[j] / nk;
                    gk[j] += dcos * (z_hat[j] - w_hat * cos[k]) / nk;
                }
            }
            let proj_d = dot(z_hat, &d_zhat);
            let dz: Vec<f64> = (0..e).map(|j| (d_zhat[j] - z_hat[j] * proj_d) / z_norm).collect();
            gp.add_outer(&dz, context);
            proj.matvec_t_add(&dz, &mut d_ctx);
        }
        _ => unreachable!("gradient buffer does not match the head"),
    }
    d_ctx
}

/// Loss of one sample and its gradients accumulated (scaled by `weight`) into `g_enc`, `g_head`.
#[allow(clippy::too_many_arguments)]
pub fn sample_backward(
    enc: &EncoderParams,
    head: &HeadParams,
    g_enc: &mut EncoderParams,
    g_head: &mut HeadParams,
    seq: &CellSequence,
    y: usize,
    objective: &Objective,
    weight: f64,
) -> Result<f64> {
    let tr = encode(enc, seq)?;
    let (ht, logits) = head_forward(head, &tr.context);
    let tl = train_logits(head, &ht, &logits, y);
    if tl.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: seq.len() });
    }
    let (l, mut dl) = objective.loss_and_grad(&tl, y);
    dl.iter_mut().for_each(|v| *v *= weight);
    let d_ctx = head_backward(head, g_head, &ht, &tr.context, y, &dl);
    encoder_backward(enc, g_enc, seq, &tr, &d_ctx);
    Ok(l)
}

/// Mean loss over the batch and the gradient of that mean. The gradient has the same shape
/// as `params`, so an inactive head has no entries.
pub fn backward(params: &SeqNetParams, seqs: &[&CellSequence], ys: &[usize], objective: &Objective) -> Result<(f64, SeqNetParams)> {
    let mut g = params.zeros_like();
    let l = accumulate(&params.encoder, &params.head, &mut g.encoder, &mut g.head, seqs, ys, objective)?;
    Ok((l, g))
}

pub(crate) fn accumulate(
    enc: &EncoderParams,
    head: &HeadParams,
    g_enc: &mut EncoderParams,
    g_head: &mut HeadParams,
    seqs: &[&CellSequence],
    ys: &[usize],
    objective: &Objective,
) -> Result<f64> {
    if seqs.is_empty() || seqs.len() != ys.len() {
        return Err(Error::InvalidArgument("batch must be nonempty with one label per sequence".into()));
    }
    let w = 1.0 / seqs.len() as f64;
    let mut total = 0.0;
    for (s, &y) in seqs.iter().zip(ys) {
        if y >= head.n_classes() {
            return Err(Error::InvalidArgument(format!("label {y} outside {} classes", head.n_classes())));
        }
        total += sample_backward(enc, head, g_enc, g_head, s, y, objective, w)?;
    }
    Ok(total * w)
}

/// Mean batch loss without gradients.
pub fn batch_loss(params: &SeqNetParams, seqs: &[&CellSequence], ys: &[usize], objective: &Objective) -> Result<f64> {
    let mut total = 0.0;
    for (s, &y) in seqs.iter().zip(ys) {
        let tr = encode(&params.encoder, s)?;
        let (ht, logits) = head_forward(&params.head, &tr.context);
        total += objective.loss_and_grad(&train_logits(&params.head, &ht, &logits, y), y).0;
    }
    Ok(total / seqs.len() as f64)
}
