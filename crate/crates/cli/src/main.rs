use std::path::PathBuf;
use std::process::ExitCode;

use cenas_cli::{run, Command, ExperimentConfig};
use clap::Parser;

/// Contrastive architecture embeddings: benchmark, embed, search, analyse.
#[derive(Parser)]
#[command(name = "cenas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key=value` experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, overriding `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &cli.out {
            cfg.out_dir = out.clone();
        }
        if cli.jobs == Some(0) {
            return Err(cenas_cli::CliError::Config("--jobs must be at least 1".into()));
        }
        run(cli.command, &cfg, cli.jobs)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cenas: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
