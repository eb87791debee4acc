use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mostdots_core::models::Family;
use mostdots_core::pipeline::{ExperimentConfig, ModelSelector, Pipeline, StageReport};
use mostdots_core::{Error, Result};

/// Dot-comparison stimuli, model training and psychophysical analysis.
#[derive(Parser, Debug)]
#[command(name = "mostdots", version)]
struct Cli {
    /// Experiment config (TOML). Defaults to the built-in settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Shrinks dataset cells and epoch caps; overrides the config.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Select {
    /// Model family.
    #[arg(long)]
    family: Option<Family>,
    /// Duration level: 7, 9, 11, 13 for cnn; 4, 8, 16, 24 for ram.
    #[arg(long)]
    duration: Option<u32>,
    /// Dataset directory (or a run directory containing `data/`).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the stimulus dataset.
    Generate {
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Train the selected models.
    Train(Select),
    /// Evaluate trained models on the test split.
    Eval(Select),
    /// Accuracy tables, Weber fits and regressions.
    Analyze,
    /// Figures from the trial and learning-curve files.
    Plot,
    /// Every stage in order.
    All,
    /// Print the effective config as TOML.
    Config,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(scale) = cli.scale {
        cfg.scale = scale;
    }
    if let Command::Generate { train, val, test } = &cli.command {
        if train.is_some() || val.is_some() || test.is_some() {
            cfg.dataset.train = train.unwrap_or(cfg.dataset.train);
            cfg.dataset.val = val.unwrap_or(cfg.dataset.val);
            cfg.dataset.test = test.unwrap_or(cfg.dataset.test);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn selector(s: &Select) -> Result<ModelSelector> {
    if let (Some(f), Some(d)) = (s.family, s.duration) {
        if !f.levels().contains(&d) {
            return Err(Error::Config(format!(
                "duration {d} is not a {f} level (expected one of {:?})",
                f.levels()
            )));
        }
    }
    Ok(ModelSelector {
        family: s.family,
        duration: s.duration,
    })
}

fn run(cli: &Cli) -> Result<Vec<StageReport>> {
    let cfg = build_config(cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(Vec::new());
    }
    let pipeline = Pipeline::new(cfg, &cli.out)?;
    let with_data = |s: &Select| match &s.data {
        Some(d) => Pipeline::new(pipeline.config().clone(), &cli.out).map(|p| p.with_data_dir(d)),
        None => Pipeline::new(pipeline.config().clone(), &cli.out),
    };
    match &cli.command {
        Command::Generate { .. } => Ok(vec![pipeline.generate()?]),
        Command::Train(s) => with_data(s)?.train(&selector(s)?),
        Command::Eval(s) => with_data(s)?.eval(&selector(s)?),
        Command::Analyze => Ok(vec![pipeline.analyze()?]),
        Command::Plot => Ok(vec![pipeline.plot()?]),
        Command::All => pipeline.all(),
        Command::Config => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(reports) => {
            for r in reports {
                let state = if r.skipped { "up to date" } else { "done" };
                println!("{:<14} {state} ({} outputs)", r.stage, r.outputs);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
