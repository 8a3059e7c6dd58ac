//! End-to-end runs: preprocessing, splitting, model fitting and test metrics for one
//! (seed, fold) key at a time. Runs share nothing, so callers may execute them in any order
//! or concurrently and merge by key.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, CellSequence, Dataset};
use crate::error::{Error, Result};
use crate::forest::{rf_fit, rf_predict, ForestConfig};
use crate::metrics::{aggregate_runs, compute_metrics, AttentionTable, MetricsReport, RunAggregate};
use crate::preprocess::{
    apply_scaler, filter_missingness, fit_scaler, impute_median, Partition, DEFAULT_MAX_MISSING_FRAC,
    DEFAULT_SKEW_THRESHOLD,
};
use crate::sampling::{smote_oversample, stratified_holdout, stratified_kfold};
use crate::seqnet::{self, extract_attention, predict, EpochRecord, HeadKind, LabeledSeqs, LossKind, ModelSpec, Objective, TrainConfig};
use crate::spca::{SpcaConfig, SpcaModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub max_missing_frac: f64,
    pub skew_threshold: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig { max_missing_frac: DEFAULT_MAX_MISSING_FRAC, skew_threshold: DEFAULT_SKEW_THRESHOLD }
    }
}

/// Drop cells with too many missing values, then impute column medians within the dataset.
pub fn prepare(ds: &Dataset, cfg: &PrepConfig) -> Result<Dataset> {
    impute_median(&filter_missingness(ds, cfg.max_missing_frac)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitProtocol {
    /// `n_runs` independent stratified hold-out splits.
    Holdout { n_runs: usize, ratios: [f64; 3] },
    /// `n_seeds` repetitions of stratified k-fold; validation rows come from the training
    /// folds by a stratified `inner_val` split.
    KFold { k: usize, n_seeds: usize, inner_val: f64 },
}

impl SplitProtocol {
    pub fn validate(&self) -> Result<()> {
        match self {
            SplitProtocol::Holdout { n_runs, ratios } => {
                if *n_runs == 0 {
                    return Err(Error::InvalidArgument("n_runs must be positive".into()));
                }
                if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) || ratios[2] <= 0.0 {
                    return Err(Error::InvalidArgument(format!("bad hold-out ratios {ratios:?}")));
                }
            }
            SplitProtocol::KFold { k, n_seeds, inner_val } => {
                if *k < 2 || *n_seeds == 0 || !(0.0..1.0).contains(inner_val) || *inner_val == 0.0 {
                    return Err(Error::InvalidArgument("k-fold needs k >= 2, n_seeds >= 1, 0 < inner_val < 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Identifies one run. `split_seed` drives the split, `model_seed` the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub seed_index: usize,
    pub fold: usize,
    pub split_seed: u64,
    pub model_seed: u64,
}

pub fn run_keys(protocol: &SplitProtocol, seed0: u64) -> Vec<RunKey> {
    match protocol {
        SplitProtocol::Holdout { n_runs, .. } => (0..*n_runs)
            .map(|r| {
                let s = seed0.wrapping_add(r as u64);
                RunKey { seed_index: r, fold: 0, split_seed: s, model_seed: s }
            })
            .collect(),
        SplitProtocol::KFold { k, n_seeds, .. } => (0..*n_seeds)
            .flat_map(|s| {
                let split_seed = seed0.wrapping_add(s as u64);
                (0..*k).map(move |f| RunKey {
                    seed_index: s,
                    fold: f,
                    split_seed,
                    model_seed: split_seed.wrapping_mul(1_000_003).wrapping_add(f as u64),
                })
            })
            .collect(),
    }
}

/// Row indices of one run's partitions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions for `key`. With `need_val = false` the k-fold training folds are used whole.
pub fn split_for(y: &[usize], protocol: &SplitProtocol, key: &RunKey, need_val: bool) -> Result<RunSplit> {
    protocol.validate()?;
    match protocol {
        SplitProtocol::Holdout { ratios, .. } => {
            let plan = stratified_holdout(y, *ratios, key.split_seed)?;
            let split = RunSplit {
                train: plan.partition(Partition::Train),
                val: plan.partition(Partition::Val),
                test: plan.partition(Partition::Test),
            };
            if need_val && split.val.is_empty() {
                return Err(Error::InvalidArgument("this model needs a validation partition".into()));
            }
            Ok(split)
        }
        SplitProtocol::KFold { k, inner_val, .. } => {
            let plan = stratified_kfold(y, *k, key.split_seed)?;
            let (rest, test) = plan.fold(key.fold);
            if !need_val {
                return Ok(RunSplit { train: rest, val: Vec::new(), test });
            }
            let inner_y: Vec<usize> = rest.iter().map(|&r| y[r]).collect();
            let inner = stratified_holdout(&inner_y, [1.0 - inner_val, *inner_val, 0.0], key.model_seed)?;
            let pick = |p| inner.partition(p).into_iter().map(|i| rest[i]).collect::<Vec<_>>();
            Ok(RunSplit { train: pick(Partition::Train), val: pick(Partition::Val), test })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub key: RunKey,
    pub report: MetricsReport,
    /// Pooling weights of the test cells, tagged with their true class.
    pub attention: Option<AttentionTable>,
    pub history: Vec<EpochRecord>,
}

/// Mean/std summary of per-run results in key order.
pub fn aggregate(results: &[RunResult]) -> Result<RunAggregate> {
    let mut sorted: Vec<&RunResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.key);
    aggregate_runs(&sorted.iter().map(|r| r.report.clone()).collect::<Vec<_>>())
}

/// Scale using statistics of `train` rows only.
fn scaled(ds: &Dataset, train: &[usize], skew_threshold: f64) -> Result<Dataset> {
    let scaler = fit_scaler(ds, train, skew_threshold)?;
    apply_scaler(&scaler, ds)
}

fn rows_of(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), rows)
}

fn labels_of(y: &[usize], rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|&r| y[r]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub spca: SpcaConfig,
    pub forest: ForestConfig,
    pub skew_threshold: f64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig { spca: SpcaConfig::default(), forest: ForestConfig::default(), skew_threshold: DEFAULT_SKEW_THRESHOLD }
    }
}

/// Default forest protocol: 10 stratified 80/20 train/test splits.
pub fn rf_default_protocol() -> SplitProtocol {
    SplitProtocol::Holdout { n_runs: 10, ratios: [0.8, 0.0, 0.2] }
}

/// Scaler and sparse PCA fit on train rows, forest fit on train scores, metrics on test.
pub fn rf_run(ds: &Dataset, protocol: &SplitProtocol, key: &RunKey, cfg: &RfConfig) -> Result<RunResult> {
    let split = split_for(ds.y(), protocol, key, false)?;
    let train: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
    let z = scaled(ds, &train, cfg.skew_threshold)?;
    let spca = SpcaModel::fit(z.schema(), rows_of(z.x(), &train).view(), &cfg.spca)?;
    let scores = spca.transform(z.schema(), z.x().view())?;
    let forest_cfg = ForestConfig { seed: key.model_seed, ..cfg.forest.clone() };
    if spca.n_components() == 0 {
        return Err(Error::InvalidDataset("sparse PCA retained no components".into()));
    }
    let model = rf_fit(rows_of(&scores, &train).view(), &labels_of(ds.y(), &train), ds.n_classes(), &forest_cfg)?;
    let (pred, _) = rf_predict(&model, rows_of(&scores, &split.test).view())?;
    let report = compute_metrics(&labels_of(ds.y(), &split.test), &pred, ds.n_classes())?;
    Ok(RunResult { key: *key, report, attention: None, history: Vec::new() })
}

/// Forest baseline over `n_runs` hold-out splits seeded from `seed0`.
pub fn rf_protocol_mouse(ds: &Dataset, n_runs: usize, seed0: u64, cfg: &RfConfig) -> Result<RunAggregate> {
    let protocol = SplitProtocol::Holdout { n_runs, ratios: [0.8, 0.0, 0.2] };
    let results = run_keys(&protocol, seed0)
        .iter()
        .map(|k| rf_run(ds, &protocol, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub hidden: usize,
    /// Attention width; `None` pools by the mean.
    pub attention: Option<usize>,
    pub head: HeadKind,
    pub loss: LossKind,
    pub smote: bool,
    pub smote_k: usize,
    pub train: TrainConfig,
    pub skew_threshold: f64,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig {
            hidden: 128,
            attention: Some(64),
            head: HeadKind::Softmax,
            loss: LossKind::WeightedCe,
            smote: false,
            smote_k: 5,
            train: TrainConfig::default(),
            skew_threshold: DEFAULT_SKEW_THRESHOLD,
        }
    }
}

impl SeqConfig {
    pub fn model_spec(&self, input_width: usize, n_classes: usize) -> ModelSpec {
        ModelSpec { input_width, hidden: self.hidden, attention: self.attention, n_classes, head: self.head }
    }
}

/// Default sequence-model protocol: 10 stratified 60/20/20 splits.
pub fn seq_default_protocol() -> SplitProtocol {
    SplitProtocol::Holdout { n_runs: 10, ratios: [0.6, 0.2, 0.2] }
}

/// Rows of a scaled dataset as family sequences.
pub fn sequences(ds: &Dataset, rows: &[usize]) -> LabeledSeqs {
    LabeledSeqs {
        seqs: rows.iter().map(|&r| CellSequence::from_row(ds.schema(), ds.x().row(r))).collect(),
        y: labels_of(ds.y(), rows),
    }
}

/// Scaled training sequences, oversampled when `smote` is set, and the loss built from the
/// pre-oversampling class counts.
pub(crate) fn training_set(z: &Dataset, train: &[usize], cfg: &SeqConfig, seed: u64) -> Result<(LabeledSeqs, Objective)> {
    let y = labels_of(z.y(), train);
    let objective = Objective::new(cfg.loss, &class_counts(&y, z.n_classes()))?;
    if !cfg.smote {
        return Ok((sequences(z, train), objective));
    }
    let over = smote_oversample(rows_of(z.x(), train).view(), &y, cfg.smote_k, seed)?;
    debug_assert_eq!(over.partition, Partition::Train);
    let seqs = over.x.rows().into_iter().map(|r| CellSequence::from_row(z.schema(), r)).collect();
    Ok((LabeledSeqs { seqs, y: over.y }, objective))
}

pub fn seq_run(ds: &Dataset, protocol: &SplitProtocol, key: &RunKey, cfg: &SeqConfig) -> Result<RunResult> {
    let split = split_for(ds.y(), protocol, key, true)?;
    let z = scaled(ds, &split.train, cfg.skew_threshold)?;
    let (train, objective) = training_set(&z, &split.train, cfg, key.model_seed)?;
    let val = sequences(&z, &split.val);
    let test = sequences(&z, &split.test);
    let spec = cfg.model_spec(ds.schema().total_width(), ds.n_classes());
    let tcfg = TrainConfig { seed: key.model_seed, ..cfg.train.clone() };
    let out = seqnet::train(&spec, &train, &val, &objective, &tcfg)?;
    let pred = predict(&out.params, &test.seqs)?;
    let report = compute_metrics(&test.y, &pred, ds.n_classes())?;
    let attention = AttentionTable { classes: test.y.clone(), weights: extract_attention(&out.params, &test.seqs)? };
    Ok(RunResult { key: *key, report, attention: Some(attention), history: out.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FamilySchema, LabelSpace, Species};
    use crate::synth::{generate, GenSpec};

    fn data(counts: Vec<usize>) -> Dataset {
        let schema = FamilySchema::uniform(2).unwrap();
        let class_means = GenSpec::random_means(&schema, counts.len(), 2.0, None, 5);
        generate(&GenSpec {
            schema,
            species: Species::Mouse,
            label_space: LabelSpace::Mouse5,
            class_means,
            sigma: 1.0,
            family_scale: None,
            class_counts: counts,
            shift: None,
            missing_rate: 0.0,
            seed: 8,
        })
        .unwrap()
    }

    #[test]
    fn kfold_keys_and_inner_split() {
        let ds = data(vec![20, 25, 15, 30, 10]);
        let p = SplitProtocol::KFold { k: 5, n_seeds: 2, inner_val: 0.25 };
        let keys = run_keys(&p, 3);
        assert_eq!(keys.len(), 10);
        let s = split_for(ds.y(), &p, &keys[1], true).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s.test.len(), 20);
        assert_eq!(s.val.len(), 20);
    }

    #[test]
    fn single_run_aggregate_is_that_run() {
        let ds = data(vec![20, 20, 20, 20, 20]);
        let cfg = RfConfig { forest: ForestConfig { n_trees: 20, ..Default::default() }, ..Default::default() };
        let agg = rf_protocol_mouse(&ds, 1, 0, &cfg).unwrap();
        assert_eq!(agg.n_runs, 1);
        assert_eq!(agg.macro_f1.mean, agg.runs[0].macro_f1);
        assert_eq!(agg.macro_f1.std, 0.0);
    }

    #[test]
    fn smote_training_set_balanced_with_presmote_weights() {
        let ds = data(vec![30, 10, 10, 20, 10]);
        let cfg = SeqConfig { smote: true, loss: LossKind::WeightedCe, ..Default::default() };
        let rows: Vec<usize> = (0..ds.n_rows()).collect();
        let (set, obj) = training_set(&ds, &rows, &cfg, 1).unwrap();
        assert_eq!(class_counts(&set.y, 5), vec![30; 5]);
        assert_eq!(obj.weights[0], 80.0 / 150.0);
    }
}
