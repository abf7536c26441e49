//! Write a synthetic bundle, run the pipeline, then compare against random picks.
//!
//! `cargo run --release --example synthetic_compare -- [trials]`

use cola::compare_selections;
use cola::pipeline::{run_pipeline, PipelineConfig};
use cola::synthetic::{write_comparison_bundle, ComparisonSpec};

fn main() -> cola::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|t| t.parse().ok())
        .unwrap_or(5);
    let dir = std::env::temp_dir().join("cola-synthetic-example");
    let paths = write_comparison_bundle(&dir, &ComparisonSpec::default())?;
    let cfg = PipelineConfig::load(&paths.config)?;

    let manifest = run_pipeline(&cfg)?;
    for stage in &manifest.stages {
        println!("{:<24} {:?}", stage.stage, stage.status);
    }

    let report = compare_selections(&cfg, trials)?;
    println!(
        "{} / {} trials won, mean error cola {:.4} vs random {:.4}",
        report.wins,
        report.trials.len(),
        report.cola_mean,
        report.random_mean
    );
    Ok(())
}
