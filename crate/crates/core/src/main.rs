use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cola::activation_selection::{
    select_representatives, KMeansConfig, ProjectionSpec, DEFAULT_K, DEFAULT_REDUCED_DIM,
};
use cola::coverage::{
    select_datasets, CoverageOptions, HashingEmbedder, KlMode, DEFAULT_ALPHA, DEFAULT_EMBEDDING_DIM,
};
use cola::data_model::{read_activations, save_dataset, CompressionScheme, SelectionResult};
use cola::harness::{evaluate_calibration, read_layer_bank};
use cola::pipeline::{
    compare_selections, load_tokenized, read_capabilities_file, run_pipeline, HarnessReport,
    PipelineConfig, DEFAULT_VOCAB_SIZE, MANIFEST_FILE,
};
use cola::processing::{
    process, FormatPolicy, ProcessingConfig, DEFAULT_MIN_LENGTH, DEFAULT_TARGET_LENGTH,
};
use cola::spectral::spectrum_reports;
use cola::synthetic::{write_comparison_bundle, ComparisonSpec};
use cola::{ColaError, FallbackTokenizer, Result};

#[derive(Parser)]
#[command(
    name = "cola",
    version,
    about = "Calibration-data curation for post-training compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KlArg {
    ExpNeg,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Passthrough,
    WrapQa,
}

#[derive(Subcommand)]
enum Command {
    /// Greedy dataset selection by capability coverage.
    SelectDatasets {
        /// Glob of JSONL datasets.
        #[arg(long)]
        pool: String,
        #[arg(long)]
        capabilities: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "exp-neg")]
        kl_mode: KlArg,
        #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, wrap, chunk and optionally mix one dataset.
    Process {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TARGET_LENGTH)]
        target_length: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_LENGTH)]
        min_length: usize,
        #[arg(long, value_enum, default_value = "passthrough")]
        format: FormatArg,
        /// Easy, medium, hard fractions, e.g. `0.2,0.5,0.3`.
        #[arg(long, value_delimiter = ',')]
        mix: Option<Vec<f64>>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
        vocab_size: usize,
    },
    /// Cluster activation signatures and keep one sample per cluster.
    SelectSamples {
        #[arg(long)]
        activations: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_REDUCED_DIM)]
        dim: usize,
        /// Seeds both the projection and k-means.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a weight bank with a selection and score it on eval activations.
    Harness {
        #[arg(long)]
        layers: PathBuf,
        #[arg(long)]
        acts: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        /// JSON file holding a compression scheme.
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weight spectra, band energies and optional compressed/original ratios.
    Spectrum {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        compressed: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured pipeline and write a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// COLA selection against random selections over several trials.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Write the synthetic comparison bundle (activations, eval set, weights, config).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| ColaError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ColaError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SelectDatasets {
            pool,
            capabilities,
            budget,
            alpha,
            kl_mode,
            vocab_size,
            out,
        } => {
            let tokenizer = FallbackTokenizer::new(vocab_size);
            let mut paths: Vec<PathBuf> = glob::glob(&pool)
                .map_err(|e| ColaError::Argument(format!("bad glob `{pool}`: {e}")))?
                .filter_map(std::result::Result::ok)
                .collect();
            paths.sort();
            let datasets = paths
                .iter()
                .map(|p| load_tokenized(p, &tokenizer))
                .collect::<Result<Vec<_>>>()?;
            let caps = read_capabilities_file(&capabilities, &tokenizer)?;
            let mut opts = CoverageOptions::new(vocab_size);
            opts.alpha = alpha;
            opts.kl_mode = match kl_mode {
                KlArg::ExpNeg => KlMode::ExpNeg,
                KlArg::Raw => KlMode::Raw,
            };
            let picks = select_datasets(
                &datasets,
                &caps,
                budget,
                &HashingEmbedder::new(DEFAULT_EMBEDDING_DIM),
                &opts,
            )
            .map_err(|e| e.in_stage("stage1:select_datasets"))?;
            write_json(&out, &picks)
        }
        Command::Process {
            input,
            out,
            target_length,
            min_length,
            format,
            mix,
            count,
            seed,
            vocab_size,
        } => {
            let difficulty_mix = match mix.as_deref() {
                None => None,
                Some(&[e, m, h]) => Some([e, m, h]),
                Some(other) => {
                    return Err(ColaError::Argument(format!(
                        "--mix takes three fractions, got {}",
                        other.len()
                    )))
                }
            };
            let tokenizer = FallbackTokenizer::new(vocab_size);
            let d = load_tokenized(&input, &tokenizer)?;
            let cfg = ProcessingConfig {
                target_length,
                min_length,
                format_policy: match format {
                    FormatArg::Passthrough => FormatPolicy::Passthrough,
                    FormatArg::WrapQa => FormatPolicy::WrapQa,
                },
                difficulty_mix,
                seed,
            };
            let processed =
                process(&d, &cfg, count, &tokenizer).map_err(|e| e.in_stage("stage2:process"))?;
            save_dataset(&processed, &out)
        }
        Command::SelectSamples {
            activations,
            k,
            dim,
            seed,
            out,
        } => {
            let selection = (|| {
                let acts = read_activations(&activations)?;
                let proj = ProjectionSpec::new(acts.dim(), dim, seed)?;
                select_representatives(&acts, &proj, &KMeansConfig::with_k(k, seed))
            })()
            .map_err(|e| e.in_stage("stage3:select_samples"))?;
            selection.save(&out)
        }
        Command::Harness {
            layers,
            acts,
            selection,
            scheme,
            eval,
            out,
        } => {
            let report = (|| {
                let scheme: CompressionScheme = read_json(&scheme)?;
                let selection = SelectionResult::load(&selection)?;
                let errors = evaluate_calibration(
                    &read_layer_bank(&layers)?,
                    &read_activations(&acts)?,
                    &selection.selected_ids,
                    &scheme,
                    &read_activations(&eval)?,
                )?;
                Ok(HarnessReport::new(
                    scheme,
                    selection.selected_ids.len(),
                    errors,
                ))
            })()
            .map_err(|e: ColaError| e.in_stage("harness"))?;
            write_json(&out, &report)
        }
        Command::Spectrum {
            original,
            compressed,
            out,
        } => {
            let reports = (|| {
                let original = read_layer_bank(&original)?;
                let compressed = compressed.as_ref().map(read_layer_bank).transpose()?;
                spectrum_reports(&original, compressed.as_deref())
            })()
            .map_err(|e: ColaError| e.in_stage("spectrum"))?;
            write_json(&out, &reports)
        }
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            run_pipeline(&cfg)?;
            eprintln!("wrote {}", cfg.out_dir().join(MANIFEST_FILE).display());
            Ok(())
        }
        Command::Compare { config, trials } => {
            let cfg = PipelineConfig::load(&config)?;
            let report = compare_selections(&cfg, trials)?;
            let out = cfg.out_dir();
            std::fs::create_dir_all(&out).map_err(|e| ColaError::io(&out, e))?;
            report.save(&out.join("compare.json"))?;
            println!(
                "trials={} wins={} win_rate={:.3} cola_mean={:.6} random_mean={:.6}",
                report.trials.len(),
                report.wins,
                report.win_rate,
                report.cola_mean,
                report.random_mean
            );
            Ok(())
        }
        Command::Synth { out_dir, seed } => {
            let mut spec = ComparisonSpec::default();
            if let Some(s) = seed {
                spec.seed = s;
            }
            let paths = write_comparison_bundle(&out_dir, &spec)?;
            eprintln!("wrote {}", paths.config.display());
            Ok(())
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("COLA_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        ColaError::Argument(format!("COLA_THREADS={value} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ColaError::Argument(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!("\n  caused by: {s}"));
                }
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
