use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::CellSequence;
use crate::error::{Error, Result};
use crate::metrics::compute_metrics;

use super::adam::{AdamConfig, AdamState};
use super::backward::{accumulate, batch_loss};
use super::forward::predict_with;
use super::loss::Objective;
use super::params::{EncoderParams, HeadParams, SeqNetParams};

/// RNG stream ids; each consumer of a run seed draws from its own stream.
pub(crate) const STREAM_SHUFFLE: u64 = 1;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { adam: AdamConfig::default(), batch: 64, max_epochs: 50, patience: 7, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0) || self.batch == 0 {
            return Err(Error::InvalidArgument("learning rate and batch size must be positive".into()));
        }
        if self.patience == 0 || (self.max_epochs > 0 && self.patience > self.max_epochs) {
            return Err(Error::InvalidArgument(format!(
                "patience {} must be in 1..=max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Sequences with class labels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabeledSeqs {
    pub seqs: Vec<CellSequence>,
    pub y: Vec<usize>,
}

impl LabeledSeqs {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Patience counter over a score that should increase.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, best_epoch: 0, since_best: 0 }
    }

    /// Record the score of `epoch`; returns true if it is a new best.
    pub fn update(&mut self, epoch: usize, score: f64) -> bool {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: SeqNetParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
}

pub fn macro_f1_of(enc: &EncoderParams, head: &HeadParams, data: &LabeledSeqs) -> Result<f64> {
    let pred = predict_with(enc, head, &data.seqs)?;
    Ok(compute_metrics(&data.y, &pred, head.n_classes())?.macro_f1)
}

/// Batches of indices for one epoch: a seeded shuffle cut into chunks, last partial chunk kept.
pub(crate) fn epoch_batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(|c| c.to_vec()).collect()
}

/// One optimizer step of encoder and head on the given rows. Returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgd_step(
    enc: &mut EncoderParams,
    head: &mut HeadParams,
    enc_state: &mut AdamState,
    head_state: &mut AdamState,
    data: &LabeledSeqs,
    rows: &[usize],
    objective: &Objective,
    adam: &AdamConfig,
    loss_weight: f64,
) -> Result<f64> {
    let seqs: Vec<&CellSequence> = rows.iter().map(|&r| &data.seqs[r]).collect();
    let ys: Vec<usize> = rows.iter().map(|&r| data.y[r]).collect();
    let mut g_enc = zeros_encoder(enc);
    let mut g_head = zeros_head(head);
    let loss = accumulate(enc, head, &mut g_enc, &mut g_head, &seqs, &ys, objective)?;
    if loss_weight != 1.0 {
        use super::params::Blocks;
        g_enc.visit_mut(&mut |_, b| b.iter_mut().for_each(|v| *v *= loss_weight));
        g_head.visit_mut(&mut |_, b| b.iter_mut().for_each(|v| *v *= loss_weight));
    }
    enc_state.step(enc, &g_enc, adam);
    head_state.step(head, &g_head, adam);
    head.renormalize();
    Ok(loss)
}

pub(crate) fn zeros_encoder(e: &EncoderParams) -> EncoderParams {
    use super::params::Blocks;
    let mut z = e.clone();
    z.visit_mut(&mut |_, b| b.iter_mut().for_each(|v| *v = 0.0));
    z
}

pub(crate) fn zeros_head(h: &HeadParams) -> HeadParams {
    use super::params::Blocks;
    let mut z = h.clone();
    z.visit_mut(&mut |_, b| b.iter_mut().for_each(|v| *v = 0.0));
    z
}

/// Train from `init`. With `eval_initial` the starting parameters compete as epoch 0.
pub fn train_from(
    init: SeqNetParams,
    train: &LabeledSeqs,
    val: &LabeledSeqs,
    objective: &Objective,
    cfg: &TrainConfig,
    eval_initial: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("train and validation sets must be nonempty".into()));
    }
    let SeqNetParams { mut encoder, mut head } = init;
    let mut enc_state = AdamState::new(&encoder);
    let mut head_state = AdamState::new(&head);
    let mut shuffle = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best = SeqNetParams { encoder: encoder.clone(), head: head.clone() };

    if eval_initial || cfg.max_epochs == 0 {
        let seqs: Vec<&CellSequence> = train.seqs.iter().collect();
        let train_loss = batch_loss(&best, &seqs, &train.y, objective)?;
        let f1 = macro_f1_of(&encoder, &head, val)?;
        stopper.update(0, f1);
        history.push(EpochRecord { epoch: 0, train_loss, val_macro_f1: f1 });
    }

    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for rows in epoch_batches(train.len(), cfg.batch, &mut shuffle) {
            let l = sgd_step(
                &mut encoder, &mut head, &mut enc_state, &mut head_state, train, &rows, objective, &cfg.adam, 1.0,
            )?;
            total += l * rows.len() as f64;
        }
        let f1 = macro_f1_of(&encoder, &head, val)?;
        history.push(EpochRecord { epoch, train_loss: total / train.len() as f64, val_macro_f1: f1 });
        if stopper.update(epoch, f1) {
            best = SeqNetParams { encoder: encoder.clone(), head: head.clone() };
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stopper.best_epoch(),
        best_val_macro_f1: stopper.best().unwrap_or(0.0),
    })
}

/// Train a freshly initialized model (seeded by `cfg.seed`).
pub fn train(
    spec: &super::params::ModelSpec,
    train_set: &LabeledSeqs,
    val: &LabeledSeqs,
    objective: &Objective,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let init = SeqNetParams::init(spec, cfg.seed)?;
    train_from(init, train_set, val, objective, cfg, false)
}

/// Write `epoch,train_loss,val_macro_f1` rows.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_macro_f1\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_macro_f1));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
