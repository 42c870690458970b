use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surgskill::commands;
use surgskill::config::{CorpusSource, ExperimentConfig, MethodName};
use surgskill::error::{RunError, RunResult};
use surgskill::experiment::{run_experiment, ResultsManifest};
use surgskill::report::report;

#[derive(Parser)]
#[command(name = "surgskill", version, about = "Surgical skill assessment experiments from video")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct WithMethod {
    #[command(flatten)]
    common: Common,
    /// Method name (bow, augbow, dftdct, smt, apen, kp-tcn, att, no-att).
    #[arg(long)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic phantom corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of videos (overrides the config).
        #[arg(long)]
        count: Option<usize>,
        /// Fraction of expert videos (overrides the config).
        #[arg(long)]
        expert_fraction: Option<f64>,
    },
    /// Detect and describe space-time interest points.
    Extract(Common),
    /// Fit the visual vocabularies of the grid on the whole corpus.
    Vocab(Common),
    /// Write the feature table of a classical method.
    Features(WithMethod),
    /// Train a single model at the first grid point.
    Train(WithMethod),
    /// Nested five-fold cross-validation; writes the results manifest.
    Crossval(WithMethod),
    /// Comparison tables and ROC points from results manifests.
    Report {
        /// Manifest files (or run directories holding manifest.json).
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check of the configured networks.
    Gradcheck(Common),
}

fn load_config(c: &Common) -> RunResult<ExperimentConfig> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| RunError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn method_arg(w: &WithMethod) -> RunResult<(ExperimentConfig, Option<MethodName>)> {
    let mut cfg = load_config(&w.common)?;
    let m = w.method.as_deref().map(MethodName::parse).transpose()?;
    if let Some(m) = m {
        cfg.methods = vec![m.name().to_string()];
    }
    Ok((cfg, m))
}

fn required_method(w: &WithMethod) -> RunResult<(ExperimentConfig, MethodName)> {
    let (cfg, m) = method_arg(w)?;
    match m {
        Some(m) => Ok((cfg, m)),
        None => match cfg.method_names()?.as_slice() {
            [only] => Ok((cfg.clone(), *only)),
            _ => Err(RunError::Config("--method is required when several methods are configured".into())),
        },
    }
}

fn synth(common: &Common, count: Option<usize>, fraction: Option<f64>) -> RunResult<String> {
    let base = common.config.as_ref().map(|_| load_config(common)).transpose()?;
    let (mut n, mut f) = match base.as_ref().map(|c| &c.corpus) {
        Some(CorpusSource::Synthetic { count, expert_fraction }) => (Some(*count), *expert_fraction),
        _ => (None, 0.5),
    };
    n = count.or(n);
    f = fraction.unwrap_or(f);
    let n = n.ok_or_else(|| RunError::Config("--count is required without a synthetic corpus config".into()))?;
    let seed = common
        .seed
        .or(base.as_ref().map(|c| c.seed))
        .ok_or_else(|| RunError::Config("--seed is required".into()))?;
    let out = match (&common.out, &base) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.out.join("corpus"),
        (None, None) => return Err(RunError::Config("--out is required".into())),
    };
    commands::synth(n, f, seed, &out)
}

fn run(cli: Cli) -> RunResult<String> {
    match cli.command {
        Command::Synth {
            common,
            count,
            expert_fraction,
        } => synth(&common, count, expert_fraction),
        Command::Extract(c) => commands::extract(&load_config(&c)?),
        Command::Vocab(c) => commands::vocab(&load_config(&c)?),
        Command::Features(w) => {
            let (cfg, m) = required_method(&w)?;
            commands::features(&cfg, m)
        }
        Command::Train(w) => {
            let (cfg, m) = required_method(&w)?;
            commands::train(&cfg, m)
        }
        Command::Crossval(w) => {
            let (cfg, _) = method_arg(&w)?;
            let manifest = run_experiment(&cfg)?;
            let mut lines = Vec::new();
            for r in &manifest.methods {
                let e = &r.outcome.report;
                lines.push(format!(
                    "{}: AUC {:.3} [{:.3}, {:.3}], micro acc {:.3}",
                    r.method.name(),
                    e.auc,
                    e.auc_ci.0,
                    e.auc_ci.1,
                    e.micro_accuracy
                ));
            }
            lines.push(format!("manifest: {}", cfg.out.join("manifest.json").display()));
            Ok(lines.join("\n"))
        }
        Command::Report { manifests, out } => {
            let loaded = manifests
                .iter()
                .map(|p| {
                    let p = if p.is_dir() { p.join("manifest.json") } else { p.clone() };
                    ResultsManifest::load(&p)
                })
                .collect::<RunResult<Vec<_>>>()?;
            let files = report(&loaded, &out)?;
            Ok(files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n"))
        }
        Command::Gradcheck(c) => {
            let (text, ok) = commands::gradcheck(&load_config(&c)?)?;
            if ok {
                Ok(text)
            } else {
                Err(RunError::compute(surgskill::Stage::Gradcheck, format!("tolerance exceeded\n{text}")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
