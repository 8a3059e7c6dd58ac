//! Shared-encoder two-head training on mouse and human cells, then human-only fine-tuning.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport, RunAggregate, Stat};
use crate::pipeline::{self, split_for, training_set, RunKey, SeqConfig, SplitProtocol};
use crate::preprocess::{apply_scaler, fit_scaler};
use crate::schema::LabelSpace;
use crate::seqnet::adam::{AdamConfig, AdamState};
use crate::seqnet::params::{init_head, EncoderParams, HeadParams};
use crate::seqnet::train::{epoch_batches, macro_f1_of, sgd_step, stream_rng, STREAM_SHUFFLE};
use crate::seqnet::{self, predict, EpochRecord, LabeledSeqs, ModelSpec, Objective, SeqNetParams, TrainConfig, TrainOutcome};

const STREAM_SCHEDULE: u64 = 2;
const STREAM_MOUSE_HEAD: u64 = 3;
const STREAM_MOUSE_SHUFFLE: u64 = 4;

pub const BASELINE_ROW: &str = "Baseline BiLSTM";
pub const TRANSFER_ROW: &str = "Dual pretrained transfer learning";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualModel {
    pub encoder: EncoderParams,
    pub mouse_head: HeadParams,
    pub human_head: HeadParams,
    pub alpha: f64,
}

impl DualModel {
    /// Encoder and human head from `seed` exactly as a single-species model would be drawn;
    /// the mouse head comes from a separate stream.
    pub fn init(spec: &ModelSpec, mouse_classes: usize, alpha: f64, seed: u64) -> Result<Self> {
        let SeqNetParams { encoder, head } = SeqNetParams::init(spec, seed)?;
        let mouse_spec = ModelSpec { n_classes: mouse_classes, ..*spec };
        mouse_spec.validate()?;
        let mut rng = stream_rng(seed, STREAM_MOUSE_HEAD);
        let mouse_head = init_head(&mouse_spec, &mut rng);
        Ok(DualModel { encoder, mouse_head, human_head: head, alpha })
    }

    pub fn human_model(&self) -> SeqNetParams {
        SeqNetParams { encoder: self.encoder.clone(), head: self.human_head.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSource {
    Human,
    Mouse,
}

/// Species of each batch in an epoch: drawn with probability proportional to the batches
/// each species has left.
pub fn mixed_schedule(n_human: usize, n_mouse: usize, rng: &mut impl Rng) -> Vec<BatchSource> {
    let (mut h, mut m) = (n_human, n_mouse);
    let mut out = Vec::with_capacity(h + m);
    while h + m > 0 {
        if rng.random_range(0..h + m) < h {
            out.push(BatchSource::Human);
            h -= 1;
        } else {
            out.push(BatchSource::Mouse);
            m -= 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointOutcome {
    pub model: DualModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    /// Mouse batches actually taken over the whole run.
    pub mouse_batches: usize,
}

/// Objective `L_human + α·L_mouse` on mixed batches; each batch updates the encoder and its
/// own species head. Early stopping on human validation macro-F1.
#[allow(clippy::too_many_arguments)]
pub fn joint_train(
    init: DualModel,
    mouse: &LabeledSeqs,
    human_train: &LabeledSeqs,
    human_val: &LabeledSeqs,
    mouse_objective: &Objective,
    human_objective: &Objective,
    cfg: &TrainConfig,
) -> Result<JointOutcome> {
    cfg.validate()?;
    if human_train.is_empty() || human_val.is_empty() {
        return Err(Error::InvalidArgument("human train and validation sets must be nonempty".into()));
    }
    if init.alpha < 0.0 {
        return Err(Error::InvalidArgument("alpha must be non-negative".into()));
    }
    let DualModel { mut encoder, mut mouse_head, mut human_head, alpha } = init;
    if let Some(s) = mouse.seqs.first() {
        if s.width() != encoder.input_width() {
            return Err(Error::WidthMismatch {
                expected: encoder.input_width(),
                found: s.width(),
                context: "mouse sequences".into(),
            });
        }
    }
    let mut enc_state = AdamState::new(&encoder);
    let mut human_state = AdamState::new(&human_head);
    let mut mouse_state = AdamState::new(&mouse_head);
    let mut human_shuffle = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut mouse_shuffle = stream_rng(cfg.seed, STREAM_MOUSE_SHUFFLE);
    let mut schedule_rng = stream_rng(cfg.seed, STREAM_SCHEDULE);
    // a zero-weight mouse term contributes nothing, so its batches are not scheduled
    let use_mouse = alpha > 0.0 && !mouse.is_empty();

    let mut stopper = seqnet::EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best = (encoder.clone(), mouse_head.clone(), human_head.clone());
    let mut mouse_batches = 0;
    for epoch in 1..=cfg.max_epochs {
        let hb = epoch_batches(human_train.len(), cfg.batch, &mut human_shuffle);
        let mb = if use_mouse { epoch_batches(mouse.len(), cfg.batch, &mut mouse_shuffle) } else { Vec::new() };
        let (mut hi, mut mi) = (hb.iter(), mb.iter());
        let mut total = 0.0;
        for s in mixed_schedule(hb.len(), mb.len(), &mut schedule_rng) {
            match s {
                BatchSource::Human => {
                    let rows = hi.next().expect("scheduled human batch");
                    let l = sgd_step(
                        &mut encoder, &mut human_head, &mut enc_state, &mut human_state, human_train, rows,
                        human_objective, &cfg.adam, 1.0,
                    )?;
                    total += l * rows.len() as f64;
                }
                BatchSource::Mouse => {
                    let rows = mi.next().expect("scheduled mouse batch");
                    sgd_step(
                        &mut encoder, &mut mouse_head, &mut enc_state, &mut mouse_state, mouse, rows,
                        mouse_objective, &cfg.adam, alpha,
                    )?;
                    mouse_batches += 1;
                }
            }
        }
        let f1 = macro_f1_of(&encoder, &human_head, human_val)?;
        history.push(EpochRecord { epoch, train_loss: total / human_train.len() as f64, val_macro_f1: f1 });
        if stopper.update(epoch, f1) {
            best = (encoder.clone(), mouse_head.clone(), human_head.clone());
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(JointOutcome {
        model: DualModel { encoder: best.0, mouse_head: best.1, human_head: best.2, alpha },
        history,
        best_epoch: stopper.best_epoch(),
        best_val_macro_f1: stopper.best().unwrap_or(0.0),
        mouse_batches,
    })
}

/// Continue from the dual model's encoder and human head on human data only. The starting
/// point competes as epoch 0, so the result is never worse on validation than the input.
pub fn finetune_human(
    dual: &DualModel,
    human_train: &LabeledSeqs,
    human_val: &LabeledSeqs,
    objective: &Objective,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    seqnet::train_from(dual.human_model(), human_train, human_val, objective, cfg, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub model: SeqConfig,
    pub alpha: f64,
    /// Fine-tuning learning rate as a fraction of the joint-training rate.
    pub finetune_lr_scale: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { model: SeqConfig::default(), alpha: 0.3, finetune_lr_scale: 0.1 }
    }
}

pub fn transfer_default_protocol() -> SplitProtocol {
    SplitProtocol::KFold { k: 5, n_seeds: 1, inner_val: 0.25 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub key: RunKey,
    pub baseline: MetricsReport,
    pub transfer: MetricsReport,
    pub joint_val_macro_f1: f64,
    pub finetune_val_macro_f1: f64,
}

fn as_aligned(mouse: &Dataset) -> Result<Dataset> {
    match mouse.label_space() {
        LabelSpace::Aligned4 => Ok(mouse.clone()),
        LabelSpace::Mouse5 => mouse.harmonized(),
    }
}

/// Both arms on one (seed, fold): human-only training and joint training plus fine-tuning,
/// evaluated on the same held-out human fold.
pub fn transfer_run(mouse: &Dataset, human: &Dataset, protocol: &SplitProtocol, key: &RunKey, cfg: &TransferConfig) -> Result<TransferRun> {
    if mouse.schema() != human.schema() {
        return Err(Error::Schema("mouse and human datasets use different family schemas".into()));
    }
    if human.label_space() != LabelSpace::Aligned4 {
        return Err(Error::InvalidDataset("human labels must use the aligned 4-class space".into()));
    }
    let mouse = as_aligned(mouse)?;
    let split = split_for(human.y(), protocol, key, true)?;

    // standardization is within species: human statistics from human training rows only
    let hz = apply_scaler(&fit_scaler(human, &split.train, cfg.model.skew_threshold)?, human)?;
    let all_mouse: Vec<usize> = (0..mouse.n_rows()).collect();
    let mz = apply_scaler(&fit_scaler(&mouse, &all_mouse, cfg.model.skew_threshold)?, &mouse)?;

    let (h_train, h_obj) = training_set(&hz, &split.train, &cfg.model, key.model_seed)?;
    let h_val = pipeline::sequences(&hz, &split.val);
    let h_test = pipeline::sequences(&hz, &split.test);
    let (m_train, m_obj) = training_set(&mz, &all_mouse, &cfg.model, key.model_seed)?;

    let spec = cfg.model.model_spec(human.schema().total_width(), human.n_classes());
    let tcfg = TrainConfig { seed: key.model_seed, ..cfg.model.train.clone() };

    let base = seqnet::train(&spec, &h_train, &h_val, &h_obj, &tcfg)?;
    let base_pred = predict(&base.params, &h_test.seqs)?;

    let init = DualModel::init(&spec, mouse.n_classes(), cfg.alpha, key.model_seed)?;
    let joint = joint_train(init, &m_train, &h_train, &h_val, &m_obj, &h_obj, &tcfg)?;
    let ft_cfg = TrainConfig {
        adam: AdamConfig { lr: tcfg.adam.lr * cfg.finetune_lr_scale, ..tcfg.adam },
        ..tcfg.clone()
    };
    let ft = finetune_human(&joint.model, &h_train, &h_val, &h_obj, &ft_cfg)?;
    let ft_pred = predict(&ft.params, &h_test.seqs)?;

    Ok(TransferRun {
        key: *key,
        baseline: compute_metrics(&h_test.y, &base_pred, human.n_classes())?,
        transfer: compute_metrics(&h_test.y, &ft_pred, human.n_classes())?,
        joint_val_macro_f1: joint.best_val_macro_f1,
        finetune_val_macro_f1: ft.best_val_macro_f1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub macro_f1: Stat,
    pub accuracy: Stat,
    pub n_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<TransferRun>,
}

impl ComparisonTable {
    pub fn from_runs(runs: &[TransferRun]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidArgument("no transfer runs".into()));
        }
        let mut runs = runs.to_vec();
        runs.sort_by_key(|r| r.key);
        let agg = |pick: fn(&TransferRun) -> &MetricsReport| -> Result<RunAggregate> {
            crate::metrics::aggregate_runs(&runs.iter().map(|r| pick(r).clone()).collect::<Vec<_>>())
        };
        let row = |name: &str, a: RunAggregate| ComparisonRow {
            model: name.to_string(),
            macro_f1: a.macro_f1,
            accuracy: a.accuracy,
            n_runs: a.n_runs,
        };
        let rows = vec![row(BASELINE_ROW, agg(|r| &r.baseline)?), row(TRANSFER_ROW, agg(|r| &r.transfer)?)];
        Ok(ComparisonTable { rows, runs })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,macro_f1_mean,macro_f1_std,accuracy_mean,accuracy_std,n_runs\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{:.4},{}\n",
                r.model, r.macro_f1.mean, r.macro_f1.std, r.accuracy.mean, r.accuracy.std, r.n_runs
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let csv = dir.join("comparison.csv");
        std::fs::File::create(&csv)
            .and_then(|mut f| f.write_all(self.to_csv().as_bytes()))
            .map_err(|e| Error::io(&csv, e))?;
        crate::io::write_json(&dir.join("comparison.json"), self)
    }
}

pub fn transfer_protocol(mouse: &Dataset, human: &Dataset, protocol: &SplitProtocol, seed0: u64, cfg: &TransferConfig) -> Result<ComparisonTable> {
    let runs = pipeline::run_keys(protocol, seed0)
        .iter()
        .map(|k| transfer_run(mouse, human, protocol, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    ComparisonTable::from_runs(&runs)
}
