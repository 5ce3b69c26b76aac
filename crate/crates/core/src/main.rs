use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stormlens::emotion::EmotionLabel;
use stormlens::pipeline::{Pipeline, PipelineConfig, Stage};
use stormlens::Error;

/// Runs one pipeline stage (or `run-all`) from a TOML config.
#[derive(Parser, Debug)]
#[command(name = "stormlens", version)]
struct Cli {
    /// clean | emotions | vectorize | lda-sweep | lda-fit | graph | gnn-train |
    /// cluster | compare | name | report | run-all | validate
    stage: String,
    #[arg(long)]
    config: PathBuf,
    /// Limit a per-sentiment stage to one partition.
    #[arg(long)]
    sentiment: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let sentiment = cli.sentiment.as_deref().map(str::parse::<EmotionLabel>).transpose()?;
    match cli.stage.as_str() {
        "validate" => {
            println!("config ok");
            Ok(())
        }
        "run-all" => {
            let p = Pipeline::new(cfg)?;
            p.run_all()?;
            println!("report: {}", p.out_dir().join("report").join("report.md").display());
            Ok(())
        }
        name => {
            let stage: Stage = name.parse()?;
            let p = Pipeline::new(cfg)?;
            p.run_stage(stage, sentiment)?;
            p.save_manifest()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
