//! `lesiontrack` command-line front end.

mod cmd;
mod config;
mod fail;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lesiontrack", version, about = "Volumetric lesion tracking toolkit")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; required by phantom, synth and prompt.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "LL_THREADS")]
    pub threads: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded phantom image and its instance mask.
    Phantom(cmd::phantom::Args),
    /// Synthesize a follow-up scan from an image/mask pair.
    Synth(cmd::synth::Args),
    /// Simulate prompts from an instance mask.
    Prompt(cmd::prompt::Args),
    /// Register a baseline and a follow-up scan.
    Register(cmd::register::Args),
    /// Track lesions through a series of scans.
    Track(cmd::track::Args),
    /// Score predicted masks against ground truth.
    Eval(cmd::eval::Args),
}

/// Settings shared by all commands after merging flags over the config.
pub struct Context {
    pub cfg: RunConfig,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Context {
    pub fn require_seed(&self, what: &str) -> anyhow::Result<u64> {
        self.seed
            .ok_or_else(|| fail::fail(fail::code::INVALID, format!("{what} requires --seed")))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(fail::fail(fail::code::INVALID, "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| fail::fail(fail::code::INVALID, format!("thread pool: {e}")))?;
    }
    let ctx = Context {
        seed: cli.seed.or(cfg.seed),
        out: cli
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".")),
        cfg,
    };
    match cli.command {
        Command::Phantom(a) => cmd::phantom::run(&ctx, a),
        Command::Synth(a) => cmd::synth::run(&ctx, a),
        Command::Prompt(a) => cmd::prompt::run(&ctx, a),
        Command::Register(a) => cmd::register::run(&ctx, a),
        Command::Track(a) => cmd::track::run(&ctx, a),
        Command::Eval(a) => cmd::eval::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(fail::exit_code(&e) as u8)
        }
    }
}
