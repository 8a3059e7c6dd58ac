use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out = self · v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (o, r) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(r, v);
        }
    }

    /// `out += selfᵀ · v`.
    pub fn matvec_t_add(&self, v: &[f64], out: &mut [f64]) {
        for (r, &vr) in self.data.chunks_exact(self.cols).zip(v) {
            if vr != 0.0 {
                axpy(vr, r, out);
            }
        }
    }

    /// `self += u vᵀ`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        let cols = self.cols;
        for (r, &ur) in self.data.chunks_exact_mut(cols).zip(u) {
            if ur != 0.0 {
                axpy(ur, v, r);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One LSTM direction. Gate rows are stacked `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// 4H × D input weights.
    pub w: Mat,
    /// 4H × H recurrent weights.
    pub u: Mat,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn hidden(&self) -> usize {
        self.u.cols
    }
}

/// Additive attention `e_t = vᵀ tanh(W h_t + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// A × 2H.
    pub w: Mat,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// `None` pools hidden states by their mean.
    pub attention: Option<AttentionParams>,
}

impl EncoderParams {
    pub fn input_width(&self) -> usize {
        self.fwd.w.cols
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// Width of the pooled context vector.
    pub fn output_width(&self) -> usize {
        2 * self.hidden()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadParams {
    Softmax {
        /// K × 2H.
        w: Mat,
        b: Vec<f64>,
    },
    ArcFace {
        /// E × 2H embedding projection.
        proj: Mat,
        /// K × E class vectors, kept at unit norm.
        classes: Mat,
        scale: f64,
        margin: f64,
    },
}

impl HeadParams {
    pub fn n_classes(&self) -> usize {
        match self {
            HeadParams::Softmax { w, .. } => w.rows,
            HeadParams::ArcFace { classes, .. } => classes.rows,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            HeadParams::Softmax { w, .. } => w.cols,
            HeadParams::ArcFace { proj, .. } => proj.cols,
        }
    }

    /// Scale every class vector to unit norm.
    pub fn renormalize(&mut self) {
        if let HeadParams::ArcFace { classes, .. } = self {
            let cols = classes.cols;
            for r in classes.data.chunks_exact_mut(cols) {
                let n = dot(r, r).sqrt();
                if n > 0.0 {
                    r.iter_mut().for_each(|v| *v /= n);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Softmax,
    ArcFace { scale: f64, margin: f64, embedding: usize },
}

impl HeadKind {
    pub fn arcface_default() -> Self {
        HeadKind::ArcFace { scale: 30.0, margin: 0.2, embedding: 128 }
    }
}

/// Shapes of a sequence model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_width: usize,
    pub hidden: usize,
    /// Attention width, or `None` for mean pooling.
    pub attention: Option<usize>,
    pub n_classes: usize,
    pub head: HeadKind,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.hidden == 0 || self.n_classes < 2 {
            return Err(Error::InvalidArgument(
                "model needs positive input width, hidden size and at least two classes".into(),
            ));
        }
        if self.attention == Some(0) {
            return Err(Error::InvalidArgument("attention width must be positive".into()));
        }
        if let HeadKind::ArcFace { scale, margin, embedding } = self.head {
            if embedding == 0 || scale <= 0.0 || !(0.0..std::f64::consts::PI).contains(&margin) {
                return Err(Error::InvalidArgument(
                    "arcface needs embedding > 0, scale > 0 and margin in [0, π)".into(),
                ));
            }
        }
        Ok(())
    }
}

fn init_lstm(d: usize, h: usize, rng: &mut ChaCha8Rng) -> LstmParams {
    let w = Mat::uniform(4 * h, d, 1.0 / (d as f64).sqrt(), rng);
    let u = Mat::uniform(4 * h, h, 1.0 / (h as f64).sqrt(), rng);
    let mut b = vec![0.0; 4 * h];
    b[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
    LstmParams { w, u, b }
}

pub fn init_encoder(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> EncoderParams {
    let h = spec.hidden;
    let fwd = init_lstm(spec.input_width, h, rng);
    let bwd = init_lstm(spec.input_width, h, rng);
    let attention = spec.attention.map(|a| AttentionParams {
        w: Mat::uniform(a, 2 * h, 1.0 / ((2 * h) as f64).sqrt(), rng),
        b: vec![0.0; a],
        v: Mat::uniform(1, a, 1.0 / (a as f64).sqrt(), rng).data,
    });
    EncoderParams { fwd, bwd, attention }
}

pub fn init_head(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> HeadParams {
    let c = 2 * spec.hidden;
    let k = spec.n_classes;
    match spec.head {
        HeadKind::Softmax => HeadParams::Softmax {
            w: Mat::uniform(k, c, 1.0 / (c as f64).sqrt(), rng),
            b: vec![0.0; k],
        },
        HeadKind::ArcFace { scale, margin, embedding } => {
            let mut head = HeadParams::ArcFace {
                proj: Mat::uniform(embedding, c, 1.0 / (c as f64).sqrt(), rng),
                classes: Mat::uniform(k, embedding, 1.0 / (embedding as f64).sqrt(), rng),
                scale,
                margin,
            };
            head.renormalize();
            head
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqNetParams {
    pub encoder: EncoderParams,
    pub head: HeadParams,
}

impl SeqNetParams {
    /// Encoder then head, both drawn from one stream seeded by `seed`.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = init_encoder(spec, &mut rng);
        let head = init_head(spec, &mut rng);
        Ok(SeqNetParams { encoder, head })
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            input_width: self.encoder.input_width(),
            hidden: self.encoder.hidden(),
            attention: self.encoder.attention.as_ref().map(|a| a.b.len()),
            n_classes: self.head.n_classes(),
            head: match &self.head {
                HeadParams::Softmax { .. } => HeadKind::Softmax,
                HeadParams::ArcFace { proj, scale, margin, .. } => HeadKind::ArcFace {
                    scale: *scale,
                    margin: *margin,
                    embedding: proj.rows,
                },
            },
        }
    }

    /// Same shapes, every trainable entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_block_mut(|_, v| v.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.for_each_block(|_, v| n += v.len());
        n
    }

    pub fn for_each_block(&self, mut f: impl FnMut(&'static str, &[f64])) {
        self.visit(&mut f);
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64])) {
        self.visit_mut(&mut f);
    }

    pub fn block_names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        self.for_each_block(|n, _| names.push(n));
        names
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_block(|_, v| ok &= v.iter().all(|x| x.is_finite()));
        ok
    }
}

/// Named trainable blocks, visited in a fixed order.
pub trait Blocks {
    fn visit(&self, f: &mut dyn FnMut(&'static str, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64]));
}

impl Blocks for EncoderParams {
    fn visit(&self, f: &mut dyn FnMut(&'static str, &[f64])) {
        encoder_blocks(self, f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        encoder_blocks_mut(self, f)
    }
}

impl Blocks for HeadParams {
    fn visit(&self, f: &mut dyn FnMut(&'static str, &[f64])) {
        head_blocks(self, f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        head_blocks_mut(self, f)
    }
}

impl Blocks for SeqNetParams {
    fn visit(&self, f: &mut dyn FnMut(&'static str, &[f64])) {
        encoder_blocks(&self.encoder, f);
        head_blocks(&self.head, f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        encoder_blocks_mut(&mut self.encoder, f);
        head_blocks_mut(&mut self.head, f);
    }
}

pub(crate) fn encoder_blocks(e: &EncoderParams, f: &mut dyn FnMut(&'static str, &[f64])) {
    f("fwd.w", &e.fwd.w.data);
    f("fwd.u", &e.fwd.u.data);
    f("fwd.b", &e.fwd.b);
    f("bwd.w", &e.bwd.w.data);
    f("bwd.u", &e.bwd.u.data);
    f("bwd.b", &e.bwd.b);
    if let Some(a) = &e.attention {
        f("attn.w", &a.w.data);
        f("attn.b", &a.b);
        f("attn.v", &a.v);
    }
}

pub(crate) fn encoder_blocks_mut(e: &mut EncoderParams, f: &mut dyn FnMut(&'static str, &mut [f64])) {
    f("fwd.w", &mut e.fwd.w.data);
    f("fwd.u", &mut e.fwd.u.data);
    f("fwd.b", &mut e.fwd.b);
    f("bwd.w", &mut e.bwd.w.data);
    f("bwd.u", &mut e.bwd.u.data);
    f("bwd.b", &mut e.bwd.b);
    if let Some(a) = &mut e.attention {
        f("attn.w", &mut a.w.data);
        f("attn.b", &mut a.b);
        f("attn.v", &mut a.v);
    }
}

pub(crate) fn head_blocks(h: &HeadParams, f: &mut dyn FnMut(&'static str, &[f64])) {
    match h {
        HeadParams::Softmax { w, b } => {
            f("head.w", &w.data);
            f("head.b", b);
        }
        HeadParams::ArcFace { proj, classes, .. } => {
            f("head.proj", &proj.data);
            f("head.classes", &classes.data);
        }
    }
}

pub(crate) fn head_blocks_mut(h: &mut HeadParams, f: &mut dyn FnMut(&'static str, &mut [f64])) {
    match h {
        HeadParams::Softmax { w, b } => {
            f("head.w", &mut w.data);
            f("head.b", b);
        }
        HeadParams::ArcFace { proj, classes, .. } => {
            f("head.proj", &mut proj.data);
            f("head.classes", &mut classes.data);
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "famseq-seqnet-v1";

/// Versioned JSON container for trained parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: ModelSpec,
    pub params: SeqNetParams,
}

impl Checkpoint {
    pub fn new(params: SeqNetParams) -> Self {
        Checkpoint { format: CHECKPOINT_FORMAT.into(), spec: params.spec(), params }
    }

    pub fn into_params(self) -> Result<SeqNetParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!("unknown checkpoint format `{}`", self.format)));
        }
        if self.params.spec() != self.spec {
            return Err(Error::Schema("checkpoint shapes disagree with its spec".into()));
        }
        Ok(self.params)
    }
}
