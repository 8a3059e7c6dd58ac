use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use famseq::synth::SynthRecipe;
use famseq_cli::{CliError, ExperimentConfig, Preset};

#[derive(Parser)]
#[command(name = "famseq", version, about = "Electrophysiology feature-family subclass experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (JSON).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// List every problem with a config without running it.
    Validate(Overrides),
    /// Run a config end to end and write reports.
    Run(Overrides),
    /// Generate synthetic dataset(s) from a recipe.
    Gen {
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render figures from a saved metrics.json.
    Report {
        metrics: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_file(&o.config)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(out) = &o.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(p) = &o.preset {
        cfg.preset = Preset::parse(p).ok_or_else(|| CliError::Config(format!("unknown preset `{p}`")))?;
    }
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Validate(o) => {
            let diagnostics = famseq_cli::validate(&load(&o)?);
            for d in &diagnostics {
                println!("{d}");
            }
            Ok(if diagnostics.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Run(o) => {
            let summary = famseq_cli::run(&load(&o)?)?;
            if let Some(t) = &summary.comparison {
                print!("{}", t.to_csv());
            } else {
                let a = &summary.aggregate;
                println!(
                    "runs={} accuracy={} macro_f1={} balanced_accuracy={}",
                    a.n_runs,
                    a.accuracy.display(),
                    a.macro_f1.display(),
                    a.balanced_accuracy.display()
                );
            }
            println!("reports in {}", summary.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { recipe, out } => {
            let recipe: SynthRecipe = famseq::io::read_json(&recipe)?;
            for p in famseq_cli::gen(&recipe, &out)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { metrics, out } => {
            let out = out.unwrap_or_else(|| metrics.parent().map(PathBuf::from).unwrap_or_default());
            for p in famseq_cli::rerender(&metrics, &out)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(2)
        }
    }
}
