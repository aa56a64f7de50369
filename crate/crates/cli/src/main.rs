use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod exit;

use config::RunConfig;
use exit::{config_err, exit_code, CliResult};

/// Gameplay event detection and highlight generation.
#[derive(Debug, Parser)]
#[command(name = "clipreel", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Artifact directory; overrides `paths.out`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample background intervals between the annotated events of one game.
    SampleBackground(commands::SampleBackgroundArgs),
    /// Build the stratified train/test clip manifest.
    BuildManifest(commands::BuildManifestArgs),
    /// Finetune the video encoder.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint on a manifest split.
    Eval(commands::EvalArgs),
    /// Quantize a checkpoint to INT8.
    Quantize(commands::QuantizeArgs),
    /// Per-second predictions for a whole session.
    Detect(commands::DetectArgs),
    /// Sliding-window detection and a highlight cut list.
    Highlight(commands::HighlightArgs),
    /// Latency and prompt-cache check on a session.
    Bench(commands::BenchArgs),
    /// Print the rendered prompts.
    PrintPrompts(commands::PrintPromptsArgs),
}

fn resolve(global: &Global) -> CliResult<RunConfig> {
    let path = global.config.as_ref().ok_or_else(|| config_err("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = global.jobs {
        if jobs == 0 {
            return Err(config_err("--jobs must be at least 1"));
        }
        cfg.train.workers = jobs;
    }
    if let Some(out) = &global.out_dir {
        cfg.paths.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Cmd::PrintPrompts(args) = &cli.cmd {
        let cfg = match &cli.global.config {
            Some(_) => Some(resolve(&cli.global)?),
            None => None,
        };
        return commands::print_prompts(cfg.as_ref(), args);
    }
    let mut cfg = resolve(&cli.global)?;
    match &cli.cmd {
        Cmd::SampleBackground(a) => a.apply(&mut cfg),
        Cmd::Train(a) => a.apply(&mut cfg),
        _ => {}
    }
    cfg.check()?;
    let jobs = cli.global.jobs.unwrap_or(cfg.train.workers).max(1);
    // a second initialization (tests running in-process) is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    log::info!("seed {}", cfg.seed);
    log::info!("resolved config:\n{}", toml::to_string(&cfg).unwrap_or_default());
    match &cli.cmd {
        Cmd::SampleBackground(a) => commands::sample_background(&cfg, a),
        Cmd::BuildManifest(a) => commands::build_manifest(&cfg, a),
        Cmd::Train(a) => commands::train(&cfg, a),
        Cmd::Eval(a) => commands::eval(&cfg, a),
        Cmd::Quantize(a) => commands::quantize(&cfg, a),
        Cmd::Detect(a) => commands::detect(&cfg, a),
        Cmd::Highlight(a) => commands::highlight(&cfg, a),
        Cmd::Bench(a) => commands::bench(&cfg, a),
        Cmd::PrintPrompts(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
