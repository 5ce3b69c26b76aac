//! Run every stage over the bundled mini corpus with the sample config and
//! print the resulting report.
//!
//! ```bash
//! cargo run --release -p stormlens --example full_pipeline [-- OUT_DIR]
//! ```

use std::path::{Path, PathBuf};

use stormlens::pipeline::{Pipeline, PipelineConfig};

fn main() -> stormlens::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/stormlens.toml");
    let mut cfg = PipelineConfig::load(&config)?;
    cfg.out_dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stormlens-example"));
    let pipeline = Pipeline::new(cfg)?;
    let started = std::time::Instant::now();
    pipeline.run_all()?;
    println!("finished in {:.1?}; artifacts under {}\n", started.elapsed(), pipeline.out_dir().display());

    for (stage, entry) in &pipeline.manifest().stages {
        println!("  {stage:<22} seed {:>20}  {:>3} outputs  {:>6} ms", entry.seed, entry.outputs.len(), entry.wall_clock_ms);
    }
    let report = std::fs::read_to_string(pipeline.out_dir().join("report/report.md")).map_err(|e| stormlens::Error::Io {
        path: pipeline.out_dir().join("report/report.md"),
        source: e,
    })?;
    println!("\n{report}");
    Ok(())
}
