use crate::dataset::CellSequence;
use crate::error::{Error, Result};

use super::params::{dot, EncoderParams, HeadParams, LstmParams, SeqNetParams};

/// Keeps `sin θ` away from zero in the angular-margin derivative.
pub(crate) const COS_CLAMP: f64 = 1.0 - 1e-7;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations and states of one direction, indexed by processing position.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionTrace {
    /// Sequence step processed at each position.
    pub order: Vec<usize>,
    pub i: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTrace {
    pub fwd: DirectionTrace,
    pub bwd: DirectionTrace,
    /// `[h_fwd_t; h_bwd_t]` per sequence step.
    pub hidden: Vec<Vec<f64>>,
    /// `tanh(W h_t + b)` per step; empty under mean pooling.
    pub attn_hidden: Vec<Vec<f64>>,
    /// Attention scores `e_t`; zeros under mean pooling.
    pub scores: Vec<f64>,
    /// Pooling weights `a_t` (softmax of the scores, or uniform).
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadTrace {
    Softmax,
    ArcFace {
        z_norm: f64,
        /// Normalized embedding.
        z_hat: Vec<f64>,
        class_norms: Vec<f64>,
        /// Cosine between the embedding and each class vector.
        cos: Vec<f64>,
    },
}

/// Full forward pass of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub encoder: EncoderTrace,
    pub head: HeadTrace,
    /// Prediction logits (no margin on the ArcFace path).
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn attention(&self) -> &[f64] {
        &self.encoder.weights
    }
}

fn run_direction(p: &LstmParams, seq: &CellSequence, order: Vec<usize>) -> Result<DirectionTrace> {
    let h = p.hidden();
    let t_len = order.len();
    let mut tr = DirectionTrace {
        order,
        i: Vec::with_capacity(t_len),
        f: Vec::with_capacity(t_len),
        g: Vec::with_capacity(t_len),
        o: Vec::with_capacity(t_len),
        c: Vec::with_capacity(t_len),
        h: Vec::with_capacity(t_len),
    };
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];
    for pos in 0..t_len {
        let t = tr.order[pos];
        let (off, x) = seq.block(t);
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = p.b[r] + dot(&p.w.row(r)[off..off + x.len()], x) + dot(p.u.row(r), &h_prev);
        }
        let ig: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
        let fg: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let gg: Vec<f64> = z[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
        let og: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|j| fg[j] * c_prev[j] + ig[j] * gg[j]).collect();
        let hv: Vec<f64> = (0..h).map(|j| og[j] * c[j].tanh()).collect();
        if hv.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
        h_prev.copy_from_slice(&hv);
        c_prev.copy_from_slice(&c);
        tr.i.push(ig);
        tr.f.push(fg);
        tr.g.push(gg);
        tr.o.push(og);
        tr.c.push(c);
        tr.h.push(hv);
    }
    Ok(tr)
}

pub fn encode(enc: &EncoderParams, seq: &CellSequence) -> Result<EncoderTrace> {
    if seq.width() != enc.input_width() {
        return Err(Error::WidthMismatch {
            expected: enc.input_width(),
            found: seq.width(),
            context: "sequence model input".into(),
        });
    }
    let t_len = seq.len();
    if t_len == 0 {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    for t in 0..t_len {
        if seq.block(t).1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
    }
    let hd = enc.hidden();
    let fwd = run_direction(&enc.fwd, seq, (0..t_len).collect())?;
    let bwd = run_direction(&enc.bwd, seq, (0..t_len).rev().collect())?;
    let mut hidden = vec![vec![0.0; 2 * hd]; t_len];
    for pos in 0..t_len {
        hidden[fwd.order[pos]][..hd].copy_from_slice(&fwd.h[pos]);
        hidden[bwd.order[pos]][hd..].copy_from_slice(&bwd.h[pos]);
    }

    let (attn_hidden, scores, weights) = match &enc.attention {
        Some(a) => {
            let mut us = Vec::with_capacity(t_len);
            let mut scores = Vec::with_capacity(t_len);
            for (t, ht) in hidden.iter().enumerate() {
                let mut u = vec![0.0; a.b.len()];
                a.w.matvec(ht, &mut u);
                u.iter_mut().zip(&a.b).for_each(|(v, b)| *v = (*v + b).tanh());
                let e = dot(&a.v, &u);
                if !e.is_finite() {
                    return Err(Error::NonFinite { step: t });
                }
                scores.push(e);
                us.push(u);
            }
            let w = super::loss::softmax(&scores);
            (us, scores, w)
        }
        None => (Vec::new(), vec![0.0; t_len], vec![1.0 / t_len as f64; t_len]),
    };
    let mut context = vec![0.0; 2 * hd];
    for (ht, &at) in hidden.iter().zip(&weights) {
        super::params::axpy(at, ht, &mut context);
    }
    Ok(EncoderTrace { fwd, bwd, hidden, attn_hidden, scores, weights, context })
}

/// Head forward on a pooled context: trace plus margin-free logits.
pub fn head_forward(head: &HeadParams, context: &[f64]) -> (HeadTrace, Vec<f64>) {
    match head {
        HeadParams::Softmax { w, b } => {
            let mut logits = vec![0.0; w.rows];
            w.matvec(context, &mut logits);
            logits.iter_mut().zip(b).for_each(|(l, bi)| *l += bi);
            (HeadTrace::Softmax, logits)
        }
        HeadParams::ArcFace { proj, classes, scale, .. } => {
            let mut z = vec![0.0; proj.rows];
            proj.matvec(context, &mut z);
            let z_norm = dot(&z, &z).sqrt().max(1e-12);
            let z_hat: Vec<f64> = z.iter().map(|v| v / z_norm).collect();
            let mut class_norms = Vec::with_capacity(classes.rows);
            let mut cos = Vec::with_capacity(classes.rows);
            for k in 0..classes.rows {
                let wk = classes.row(k);
                let n = dot(wk, wk).sqrt().max(1e-12);
                class_norms.push(n);
                cos.push(dot(wk, &z_hat) / n);
            }
            let logits = cos.iter().map(|c| scale * c).collect();
            (HeadTrace::ArcFace { z_norm, z_hat, class_norms, cos }, logits)
        }
    }
}

/// Logits used by the training loss: the ArcFace target logit carries the angular margin.
pub fn train_logits(head: &HeadParams, trace: &HeadTrace, logits: &[f64], y: usize) -> Vec<f64> {
    match (head, trace) {
        (HeadParams::ArcFace { scale, margin, .. }, HeadTrace::ArcFace { cos, .. }) => {
            let mut out = logits.to_vec();
            out[y] = scale * margin_target(cos[y], *margin).0;
            out
        }
        _ => logits.to_vec(),
    }
}

/// `cos(θ + m)` with the standard linear fallback past `θ = π − m`, and its derivative in `cos θ`.
pub(crate) fn margin_target(cos: f64, m: f64) -> (f64, f64) {
    let clamped = cos.clamp(-COS_CLAMP, COS_CLAMP);
    let inside = if cos == clamped { 1.0 } else { 0.0 };
    let threshold = (std::f64::consts::PI - m).cos();
    if clamped > threshold {
        let sin = (1.0 - clamped * clamped).sqrt();
        let phi = clamped * m.cos() - sin * m.sin();
        let dphi = m.cos() + m.sin() * clamped / sin;
        (phi, dphi * inside)
    } else {
        ((clamped - (std::f64::consts::PI - m).sin() * m), inside)
    }
}

pub fn forward(params: &SeqNetParams, seq: &CellSequence) -> Result<ForwardTrace> {
    let encoder = encode(&params.encoder, seq)?;
    let (head, logits) = head_forward(&params.head, &encoder.context);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: seq.len() });
    }
    Ok(ForwardTrace { encoder, head, logits })
}

/// Predicted class per sequence (argmax of logits, ties to the lowest index).
pub fn predict(params: &SeqNetParams, seqs: &[CellSequence]) -> Result<Vec<usize>> {
    predict_with(&params.encoder, &params.head, seqs)
}

pub fn predict_with(enc: &EncoderParams, head: &HeadParams, seqs: &[CellSequence]) -> Result<Vec<usize>> {
    seqs.iter()
        .map(|s| {
            let e = encode(enc, s)?;
            let (_, logits) = head_forward(head, &e.context);
            Ok(crate::forest::argmax(&logits))
        })
        .collect()
}

/// Pooling weights of every cell, one row per cell in input order.
pub fn extract_attention(params: &SeqNetParams, seqs: &[CellSequence]) -> Result<Vec<Vec<f64>>> {
    seqs.iter()
        .map(|s| Ok(encode(&params.encoder, s)?.weights))
        .collect()
}
