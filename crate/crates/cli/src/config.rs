//! Experiment configuration: preset, protocol, data source and per-module overrides.
//!
//! A config resolves in three steps: the preset picks model defaults, the protocol and seed
//! count pick the split, and `overrides` is deep-merged on top of the resulting JSON tree.
//! The resolved form is itself a valid config, so re-running its echo reproduces the run.

use std::fmt;
use std::path::{Path, PathBuf};

use famseq::io::Manifest;
use famseq::pipeline::{PrepConfig, RfConfig, SeqConfig, SplitProtocol};
use famseq::seqnet::{HeadKind, LossKind};
use famseq::synth::SynthRecipe;
use famseq::transfer::TransferConfig;
use famseq::Species;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const DEFAULT_OUT_DIR: &str = "famseq-out";
pub const DEFAULT_N_SEEDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    RfBaseline,
    Bilstm,
    BilstmAttn,
    BilstmAttnSmote,
    ArcfaceBilstmAttnSmote,
    TransferDual,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::RfBaseline,
        Preset::Bilstm,
        Preset::BilstmAttn,
        Preset::BilstmAttnSmote,
        Preset::ArcfaceBilstmAttnSmote,
        Preset::TransferDual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::RfBaseline => "rf_baseline",
            Preset::Bilstm => "bilstm",
            Preset::BilstmAttn => "bilstm_attn",
            Preset::BilstmAttnSmote => "bilstm_attn_smote",
            Preset::ArcfaceBilstmAttnSmote => "arcface_bilstm_attn_smote",
            Preset::TransferDual => "transfer_dual",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Preset::RfBaseline => "sPCA + random forest",
            Preset::Bilstm => "BiLSTM",
            Preset::BilstmAttn => "BiLSTM + attention",
            Preset::BilstmAttnSmote => "BiLSTM + attention + SMOTE",
            Preset::ArcfaceBilstmAttnSmote => "ArcFace BiLSTM + attention + SMOTE",
            Preset::TransferDual => "Dual-species transfer",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Model defaults of the preset.
    pub fn model_defaults(self) -> ModelConfig {
        let seq = |attention: Option<usize>, head: HeadKind, loss: LossKind, smote: bool| SeqConfig {
            attention,
            head,
            loss,
            smote,
            ..SeqConfig::default()
        };
        let attn = SeqConfig::default().attention;
        match self {
            Preset::RfBaseline => ModelConfig::Rf(RfConfig::default()),
            Preset::Bilstm => ModelConfig::Seq(seq(None, HeadKind::Softmax, LossKind::WeightedCe, false)),
            Preset::BilstmAttn => ModelConfig::Seq(seq(attn, HeadKind::Softmax, LossKind::WeightedCe, false)),
            // oversampled batches are already balanced, so these pair with plain cross-entropy
            Preset::BilstmAttnSmote => ModelConfig::Seq(seq(attn, HeadKind::Softmax, LossKind::Ce, true)),
            Preset::ArcfaceBilstmAttnSmote => {
                ModelConfig::Seq(seq(attn, HeadKind::arcface_default(), LossKind::Ce, true))
            }
            Preset::TransferDual => ModelConfig::Transfer(TransferConfig::default()),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// `n_seeds` independent stratified hold-out splits.
    #[serde(rename = "holdout_10x")]
    Holdout10x,
    /// `n_seeds` repetitions of stratified 5-fold cross-validation.
    Kfold5,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    /// Interchange manifests. `mouse` is the source species for `transfer_dual`.
    Files {
        dataset: PathBuf,
        #[serde(default)]
        mouse: Option<PathBuf>,
    },
    /// Generated on the fly. For `transfer_dual` the recipe needs a target, which becomes
    /// the human dataset.
    Synth { recipe: SynthRecipe },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Rf(RfConfig),
    Seq(SeqConfig),
    Transfer(TransferConfig),
}

/// What a user writes. Every field except `preset` and `data` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    #[serde(default)]
    pub protocol: Option<ProtocolKind>,
    #[serde(default)]
    pub n_seeds: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for the (seed, fold) pool; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    pub data: DataSpec,
    /// Deep-merged over the resolved `prep`, `split` and `model` sections.
    #[serde(default)]
    pub overrides: Value,
}

/// Every default materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub preset: Preset,
    pub protocol: ProtocolKind,
    pub n_seeds: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub data: DataSpec,
    pub prep: PrepConfig,
    pub split: SplitProtocol,
    pub model: ModelConfig,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: &'static str,
    pub message: String,
}

impl Diagnostic {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Diagnostic { code, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

#[derive(Serialize, Deserialize)]
struct Sections {
    prep: PrepConfig,
    split: SplitProtocol,
    model: ModelConfig,
}

/// Objects merge key by key; anything else is replaced.
pub fn deep_merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Dotted paths of `over`'s leaves that do not exist in `resolved`.
fn unknown_paths(resolved: &Value, over: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(o) = over {
        for (k, v) in o {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match resolved.get(k) {
                None => out.push(path),
                Some(r) if r.is_object() => unknown_paths(r, v, &path, out),
                Some(_) => {}
            }
        }
    }
}

fn split_for(preset: Preset, protocol: ProtocolKind, n_seeds: usize) -> SplitProtocol {
    match protocol {
        ProtocolKind::Kfold5 => SplitProtocol::KFold { k: 5, n_seeds, inner_val: 0.25 },
        ProtocolKind::Holdout10x => {
            let ratios = if preset == Preset::RfBaseline { [0.8, 0.0, 0.2] } else { [0.6, 0.2, 0.2] };
            SplitProtocol::Holdout { n_runs: n_seeds, ratios }
        }
    }
}

/// Species of the dataset the preset is evaluated on, when it can be determined cheaply.
pub fn target_species(preset: Preset, data: &DataSpec) -> Result<Species> {
    match data {
        DataSpec::Files { dataset, .. } => {
            let m: Manifest = famseq::io::read_json(dataset)?;
            Ok(m.species)
        }
        DataSpec::Synth { recipe } => Ok(match (&recipe.target, preset) {
            (Some(_), Preset::TransferDual) => match recipe.species {
                Species::Mouse => Species::Human,
                Species::Human => Species::Mouse,
            },
            _ => recipe.species,
        }),
    }
}

fn default_protocol(preset: Preset, species: Option<Species>) -> ProtocolKind {
    if preset == Preset::TransferDual || species == Some(Species::Human) {
        ProtocolKind::Kfold5
    } else {
        ProtocolKind::Holdout10x
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(famseq::io::read_json(path)?)
    }

    /// Materialize every default. Fails on malformed or unknown overrides only; semantic
    /// checks live in [`validate`].
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let species = target_species(self.preset, &self.data).ok();
        let protocol = self.protocol.unwrap_or_else(|| default_protocol(self.preset, species));
        let n_seeds = self.n_seeds.unwrap_or(DEFAULT_N_SEEDS);
        let defaults = Sections {
            prep: PrepConfig::default(),
            split: split_for(self.preset, protocol, n_seeds),
            model: self.preset.model_defaults(),
        };
        let mut tree = serde_json::to_value(&defaults).map_err(|e| CliError::Config(e.to_string()))?;
        if !self.overrides.is_null() {
            if !self.overrides.is_object() {
                return Err(CliError::Config("overrides must be a JSON object".into()));
            }
            deep_merge(&mut tree, &self.overrides);
        }
        let sections: Sections =
            serde_json::from_value(tree).map_err(|e| CliError::Config(format!("overrides: {e}")))?;
        let resolved_tree = serde_json::to_value(&sections).map_err(|e| CliError::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_paths(&resolved_tree, &self.overrides, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown override keys: {}", unknown.join(", "))));
        }
        Ok(ResolvedConfig {
            preset: self.preset,
            protocol,
            n_seeds,
            seed: self.seed,
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            threads: self.threads,
            data: self.data.clone(),
            prep: sections.prep,
            split: sections.split,
            model: sections.model,
        })
    }
}

impl ResolvedConfig {
    /// The resolved form as a config; resolving it again is the identity.
    pub fn echo(&self) -> ExperimentConfig {
        let sections = Sections { prep: self.prep.clone(), split: self.split.clone(), model: self.model.clone() };
        ExperimentConfig {
            preset: self.preset,
            protocol: Some(self.protocol),
            n_seeds: Some(self.n_seeds),
            seed: self.seed,
            out_dir: Some(self.out_dir.clone()),
            threads: self.threads,
            data: self.data.clone(),
            overrides: serde_json::to_value(sections).expect("sections serialize"),
        }
    }
}

fn check_file(path: &Path, what: &str, out: &mut Vec<Diagnostic>) -> bool {
    if path.is_file() {
        true
    } else {
        out.push(Diagnostic::new("file_not_found", format!("{what} `{}` does not exist", path.display())));
        false
    }
}

/// Every problem with `cfg`, without running anything. Empty means valid.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let transfer = cfg.preset == Preset::TransferDual;
    let mut species = None;
    match &cfg.data {
        DataSpec::Files { dataset, mouse } => {
            if check_file(dataset, "dataset", &mut out) {
                match target_species(cfg.preset, &cfg.data) {
                    Ok(s) => species = Some(s),
                    Err(e) => out.push(Diagnostic::new("invalid_manifest", e.to_string())),
                }
            }
            match (transfer, mouse) {
                (true, None) => out.push(Diagnostic::new("missing_field", "transfer_dual needs data.mouse")),
                (true, Some(m)) => {
                    check_file(m, "mouse dataset", &mut out);
                }
                (false, Some(_)) => {
                    out.push(Diagnostic::new("invalid_combination", "data.mouse is only used by transfer_dual"))
                }
                (false, None) => {}
            }
        }
        DataSpec::Synth { recipe } => {
            if let Err(e) = recipe.gen_spec() {
                out.push(Diagnostic::new("invalid_recipe", e.to_string()));
            }
            if transfer && recipe.target.is_none() {
                out.push(Diagnostic::new("missing_field", "transfer_dual needs a recipe target"));
            }
            species = target_species(cfg.preset, &cfg.data).ok();
        }
    }
    if transfer && species == Some(Species::Mouse) {
        out.push(Diagnostic::new("invalid_combination", "transfer_dual evaluates on human data"));
    }
    if cfg.n_seeds == Some(0) {
        out.push(Diagnostic::new("invalid_value", "n_seeds must be at least 1"));
    }
    let protocol = cfg.protocol.unwrap_or_else(|| default_protocol(cfg.preset, species));
    if protocol == ProtocolKind::Holdout10x && (transfer || species == Some(Species::Human)) {
        out.push(Diagnostic::new(
            "invalid_combination",
            format!("{} on human data requires the kfold5 protocol, not holdout_10x", cfg.preset),
        ));
    }
    match cfg.resolve() {
        Err(e) => out.push(Diagnostic::new("invalid_override", e.to_string())),
        Ok(r) => {
            let expected_kind = matches!(r.split, SplitProtocol::KFold { .. }) == (r.protocol == ProtocolKind::Kfold5);
            if !expected_kind {
                out.push(Diagnostic::new("invalid_override", "split override changes the protocol kind"));
            }
            if let Err(e) = r.split.validate() {
                out.push(Diagnostic::new("invalid_value", e.to_string()));
            }
            let model_ok = match &r.model {
                ModelConfig::Rf(_) => Ok(()),
                ModelConfig::Seq(s) => s.train.validate(),
                ModelConfig::Transfer(t) => t.model.train.validate(),
            };
            if let Err(e) = model_ok {
                out.push(Diagnostic::new("invalid_value", e.to_string()));
            }
            let model_matches = matches!(
                (&r.model, r.preset),
                (ModelConfig::Rf(_), Preset::RfBaseline) | (ModelConfig::Transfer(_), Preset::TransferDual)
            ) || matches!(&r.model, ModelConfig::Seq(_))
                && !matches!(r.preset, Preset::RfBaseline | Preset::TransferDual);
            if !model_matches {
                out.push(Diagnostic::new("invalid_override", "model override changes the model kind"));
            }
        }
    }
    out
}
