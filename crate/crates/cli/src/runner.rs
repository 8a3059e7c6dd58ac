//! Executes a resolved config: data, parallel runs merged by key, and report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use famseq::io::{load_dataset, read_json, save_dataset, write_json};
use famseq::metrics::{aggregate_runs, summarize_attention, RunAggregate};
use famseq::pipeline::{aggregate, prepare, rf_run, run_keys, seq_run, RunKey, RunResult};
use famseq::report::{render_reports, ReportBundle};
use famseq::synth::SynthRecipe;
use famseq::transfer::{transfer_run, ComparisonTable, TransferRun};
use famseq::Dataset;
use rayon::prelude::*;

use crate::config::{validate, DataSpec, ExperimentConfig, ModelConfig, Preset, ResolvedConfig};
use crate::error::{CliError, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

/// Evaluation dataset plus, for transfer, the source species.
pub struct Inputs {
    pub dataset: Dataset,
    pub mouse: Option<Dataset>,
}

pub fn load_inputs(cfg: &ResolvedConfig) -> Result<Inputs> {
    let transfer = cfg.preset == Preset::TransferDual;
    let (dataset, mouse) = match &cfg.data {
        DataSpec::Files { dataset, mouse } => {
            let ds = load_dataset(dataset)?;
            let m = if transfer { mouse.as_deref().map(load_dataset).transpose()? } else { None };
            (ds, m)
        }
        DataSpec::Synth { recipe } => {
            let (src, tgt) = recipe.generate()?;
            match (transfer, tgt) {
                (true, Some(t)) => (t, Some(src)),
                _ => (src, None),
            }
        }
    };
    if transfer && mouse.is_none() {
        return Err(CliError::Config("transfer_dual needs a mouse dataset".into()));
    }
    Ok(Inputs {
        dataset: prepare(&dataset, &cfg.prep)?,
        mouse: mouse.map(|m| prepare(&m, &cfg.prep)).transpose()?,
    })
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Single-model presets: the evaluated model. Transfer: the fine-tuned arm.
    pub aggregate: RunAggregate,
    pub results: Vec<RunResult>,
    pub comparison: Option<ComparisonTable>,
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

/// Run every key on the pool and return results in key order.
fn dispatch<T: Send>(threads: usize, keys: &[RunKey], f: impl Fn(&RunKey) -> famseq::Result<T> + Sync) -> Result<Vec<T>> {
    let pool = pool(threads)?;
    let mut out: Vec<(RunKey, T)> = pool.install(|| {
        keys.par_iter()
            .map(|k| {
                log::info!("run seed_index={} fold={}", k.seed_index, k.fold);
                f(k).map(|r| (*k, r))
            })
            .collect::<famseq::Result<Vec<_>>>()
    })?;
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

fn runs_csv(results: &[(RunKey, &famseq::metrics::MetricsReport)]) -> String {
    let mut s = String::from("seed_index,fold,split_seed,model_seed,accuracy,macro_f1,balanced_accuracy\n");
    for (k, r) in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            k.seed_index, k.fold, k.split_seed, k.model_seed, r.accuracy, r.macro_f1, r.balanced_accuracy
        );
    }
    s
}

fn write_text(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| famseq::Error::Io { path: path.clone(), source: e })?;
    files.push(path);
    Ok(())
}

fn names(ds: &Dataset) -> (Vec<String>, Vec<String>) {
    let classes = ds.label_space().classes().iter().map(|s| s.to_string()).collect();
    let families = ds.schema().families().iter().map(|f| f.name.clone()).collect();
    (classes, families)
}

/// Execute a resolved config without validation; outputs go under `cfg.out_dir` only.
pub fn execute(cfg: &ResolvedConfig) -> Result<RunSummary> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| famseq::Error::Io { path: out.clone(), source: e })?;
    let resolved_path = out.join(RESOLVED_CONFIG);
    write_json(&resolved_path, &cfg.echo())?;
    let mut files = vec![resolved_path];
    let keys = run_keys(&cfg.split, cfg.seed);
    let ds = &inputs.dataset;
    let (classes, families) = names(ds);

    let single = |results: Vec<RunResult>, files: &mut Vec<PathBuf>| -> Result<RunSummary> {
        let agg = aggregate(&results)?;
        let tables: Vec<_> = results.iter().filter_map(|r| r.attention.clone()).collect();
        let attention = if tables.is_empty() { None } else { Some(summarize_attention(&tables, &classes)?) };
        let bundle = ReportBundle::new(cfg.preset.title(), classes.clone(), families.clone(), agg.clone(), attention);
        files.extend(render_reports(&bundle, &out)?);
        let rows: Vec<_> = results.iter().map(|r| (r.key, &r.report)).collect();
        write_text(out.join("runs.csv"), &runs_csv(&rows), files)?;
        Ok(RunSummary { out_dir: out.clone(), files: files.clone(), aggregate: agg, results, comparison: None })
    };

    match &cfg.model {
        ModelConfig::Rf(rf) => {
            let results = dispatch(cfg.threads, &keys, |k| rf_run(ds, &cfg.split, k, rf))?;
            single(results, &mut files)
        }
        ModelConfig::Seq(seq) => {
            let results = dispatch(cfg.threads, &keys, |k| seq_run(ds, &cfg.split, k, seq))?;
            single(results, &mut files)
        }
        ModelConfig::Transfer(t) => {
            let mouse = inputs.mouse.as_ref().expect("checked in load_inputs");
            let runs: Vec<TransferRun> = dispatch(cfg.threads, &keys, |k| transfer_run(mouse, ds, &cfg.split, k, t))?;
            let table = ComparisonTable::from_runs(&runs)?;
            table.write(&out)?;
            files.push(out.join("comparison.csv"));
            files.push(out.join("comparison.json"));
            let mut transfer_agg = None;
            for (arm, title) in [("baseline", famseq::transfer::BASELINE_ROW), ("transfer", famseq::transfer::TRANSFER_ROW)] {
                let reports: Vec<_> =
                    runs.iter().map(|r| if arm == "baseline" { r.baseline.clone() } else { r.transfer.clone() }).collect();
                let agg = aggregate_runs(&reports)?;
                let bundle = ReportBundle::new(title, classes.clone(), families.clone(), agg.clone(), None);
                files.extend(render_reports(&bundle, &out.join(arm))?);
                let rows: Vec<_> = runs.iter().zip(&reports).map(|(r, m)| (r.key, m)).collect();
                write_text(out.join(arm).join("runs.csv"), &runs_csv(&rows), &mut files)?;
                transfer_agg = Some(agg);
            }
            Ok(RunSummary {
                out_dir: out.clone(),
                files,
                aggregate: transfer_agg.expect("two arms"),
                results: Vec::new(),
                comparison: Some(table),
            })
        }
    }
}

/// Validate, resolve and execute.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let diagnostics = validate(cfg);
    if !diagnostics.is_empty() {
        return Err(CliError::Invalid(diagnostics));
    }
    execute(&cfg.resolve()?)
}

/// Generate a recipe's dataset(s) into `out_dir` as `<species>.json` manifests.
pub fn gen(recipe: &SynthRecipe, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| famseq::Error::Io { path: out_dir.to_path_buf(), source: e })?;
    let (src, tgt) = recipe.generate()?;
    let mut written = Vec::new();
    for ds in std::iter::once(&src).chain(tgt.as_ref()) {
        let path = out_dir.join(format!("{}.json", ds.species()));
        save_dataset(ds, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Re-render figures from a saved `metrics.json` into `out_dir`.
pub fn rerender(metrics: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let bundle: ReportBundle = read_json(metrics)?;
    Ok(render_reports(&bundle, out_dir)?)
}
