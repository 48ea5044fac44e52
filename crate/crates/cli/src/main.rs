use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iftkit::backend::BackendKind;
use iftkit::config::{Overrides, RunConfig, DEFAULT_RATIO_GRID};
use iftkit::pipeline::{self, Outcome, PipelineError};
use iftkit::simulation::StudyConfig;

#[derive(Parser)]
#[command(name = "iftkit", version, about = "Knowledge-consistency toolkit for instruction fine-tuning data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Log filter, e.g. `info` or `iftkit=debug`
    #[arg(long, default_value = "info", global = true)]
    log_level: String,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Response cache directory
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Probe confidence threshold
    #[arg(long)]
    threshold: Option<f64>,
    /// Number of in-context demonstrations
    #[arg(long)]
    shots: Option<usize>,
    /// Consistency ratios, comma separated
    #[arg(long, value_delimiter = ',')]
    ratio: Option<Vec<f64>>,
    /// Force every configured endpoint onto one backend kind
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    HttpChat,
    HttpCompletions,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Mock => BackendKind::Mock,
            Backend::HttpChat => BackendKind::HttpChat,
            Backend::HttpCompletions => BackendKind::HttpCompletions,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum Step {
    Probe,
    Build,
    Eval,
    Analyze,
    Report,
}

#[derive(Subcommand)]
enum Command {
    /// Split corpora and probe base models with in-context learning
    Probe(Common),
    /// Build per-setting and mixed fine-tuning datasets from probe records
    Build(Common),
    /// Evaluate base (in-context) and tuned (zero-shot) models
    Eval(Common),
    /// Compute consistency reports and fleet correlations
    Analyze(Common),
    /// Render summary tables from the analysis
    Report(Common),
    /// Run probe and build, then eval, analyze and report once tuned models are configured
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Resume from this step
        #[arg(long, value_enum, default_value = "probe")]
        from: Step,
    },
    /// Run the deterministic toy study
    Simulate {
        #[arg(long, default_value_t = 200)]
        n_items: usize,
        #[arg(long, default_value_t = 4)]
        n_choices: usize,
        #[arg(long, default_value_t = 4)]
        n_models: usize,
        /// Toy fine-tuning strength
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Consistency ratios, comma separated
        #[arg(long, value_delimiter = ',')]
        ratio: Option<Vec<f64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Usage and configuration problems exit with 2.
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::fmt::Debug for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for UsageError {}

fn load_config(c: &Common) -> Result<RunConfig> {
    let Some(path) = &c.config else {
        return Err(UsageError("--config is required".into()).into());
    };
    let mut cfg = RunConfig::load(path).map_err(|e| UsageError(e.to_string()))?;
    cfg.apply(&Overrides {
        seed: c.seed,
        cache_dir: c.cache_dir.clone(),
        threshold: c.threshold,
        shots: c.shots,
        ratio_grid: c.ratio.clone(),
        backend: c.backend.map(Into::into),
        output_dir: c.out.clone(),
    });
    Ok(cfg)
}

fn report(o: &Outcome) {
    println!(
        "{}: {} files, manifest {}",
        o.command,
        o.outputs.len(),
        o.manifest.display()
    );
    if let Some(r) = o.cache_hit_ratio() {
        println!(
            "{}: {} network calls, cache hit ratio {:.1}%",
            o.command,
            o.network_calls,
            r * 100.0
        );
    }
    if let Some(p) = &o.error_manifest {
        eprintln!("{}: {} items failed; see {}", o.command, o.failures, p.display());
    }
}

fn step(f: fn(&RunConfig) -> Result<Outcome, PipelineError>, cfg: &RunConfig) -> Result<bool> {
    let o = f(cfg)?;
    report(&o);
    Ok(o.is_complete())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Probe(c) => step(pipeline::cmd_probe, &load_config(&c)?),
        Command::Build(c) => step(pipeline::cmd_build, &load_config(&c)?),
        Command::Eval(c) => step(pipeline::cmd_eval, &load_config(&c)?),
        Command::Analyze(c) => step(pipeline::cmd_analyze, &load_config(&c)?),
        Command::Report(c) => step(pipeline::cmd_report, &load_config(&c)?),
        Command::Pipeline { common, from } => {
            let cfg = load_config(&common)?;
            let mut complete = true;
            if from <= Step::Probe {
                complete &= step(pipeline::cmd_probe, &cfg)?;
            }
            if from <= Step::Build {
                complete &= step(pipeline::cmd_build, &cfg)?;
            }
            if cfg.tuned.is_empty() {
                println!(
                    "datasets are in {}; train models on them, add [[tuned]] entries to the config \
                     and rerun with --from eval",
                    cfg.output_root().join("datasets").display()
                );
                return Ok(complete);
            }
            for (s, f) in [
                (Step::Eval, pipeline::cmd_eval as fn(&RunConfig) -> Result<Outcome, PipelineError>),
                (Step::Analyze, pipeline::cmd_analyze),
                (Step::Report, pipeline::cmd_report),
            ] {
                if from <= s {
                    complete &= step(f, &cfg)?;
                }
            }
            Ok(complete)
        }
        Command::Simulate {
            n_items,
            n_choices,
            n_models,
            alpha,
            seed,
            ratio,
            out,
        } => {
            if !(0.0..=1.0).contains(&alpha) {
                bail!(UsageError(format!("alpha {alpha} outside [0, 1]")));
            }
            let study = StudyConfig {
                n_choices,
                n_models,
                ..StudyConfig::new(n_items, ratio.unwrap_or_else(|| DEFAULT_RATIO_GRID.to_vec()), alpha, seed)
            };
            let o = pipeline::cmd_simulate(&study, &out).context("simulation failed")?;
            report(&o);
            Ok(true)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<PipelineError>() {
        Some(p) if p.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log_level))
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
