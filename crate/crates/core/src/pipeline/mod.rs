//! End-to-end orchestration from one JSON config.
//!
//! Stages run in order: dataset selection, processing, activation-space
//! sample selection, then the optional reconstruction harness. Stage seeds
//! are derived from the master seed and the stage name. Every run writes a
//! `manifest.json` listing each stage's inputs, parameters, seed and output
//! hashes; it carries no timestamps, so identical inputs give identical bytes.

mod compare;
mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use compare::{compare_selections, ComparisonReport, LayerComparison, TrialOutcome};
pub use config::{
    load_capabilities, load_tokenized, read_capabilities_file, CapabilityRef, KMeansSettings,
    PipelineConfig, ProcessingSettings, ProjectionSettings, DEFAULT_VOCAB_SIZE,
};

use crate::activation_selection::{select_representatives, ProjectionSpec};
use crate::coverage::{select_datasets, DatasetPick, HashingEmbedder};
use crate::data_model::{read_activations, save_dataset, ActivationMatrix, Dataset};
use crate::error::{ColaError, Result};
use crate::harness::{evaluate_calibration, read_layer_bank, LayerError};
use crate::processing::{apply_mix, prepare};
use crate::rng::derive_seed;

pub const STAGE_SELECT_DATASETS: &str = "stage1:select_datasets";
pub const STAGE_PROCESS: &str = "stage2:process";
pub const STAGE_SELECT_SAMPLES: &str = "stage3:select_samples";
pub const STAGE_HARNESS: &str = "harness";

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn stage_seed(master: u64, stage: &str) -> u64 {
    derive_seed(master, stage)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub params: Value,
    pub outputs: Vec<FileDigest>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub config: Value,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn display_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Hash of an input file, recorded under its config-relative name.
fn input_digest(cfg: &PipelineConfig, p: &Path) -> Result<FileDigest> {
    let full = cfg.resolve(p);
    let bytes = fs::read(&full).map_err(|e| ColaError::io(&full, e))?;
    Ok(FileDigest {
        path: display_path(p),
        sha256: sha256_hex(&bytes),
    })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ColaError::io(path, e))
}

/// Tracks files written by a run so a failed run can remove them.
struct Outputs<'a> {
    cfg: &'a PipelineConfig,
    written: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Self {
            cfg,
            written: Vec::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir().join(name)
    }

    /// Records a file already written under `name` and returns its digest.
    fn record(&mut self, name: &str) -> Result<FileDigest> {
        let full = self.path(name);
        self.written.push(full.clone());
        let bytes = fs::read(&full).map_err(|e| ColaError::io(&full, e))?;
        Ok(FileDigest {
            path: display_path(&self.cfg.out_dir.join(name)),
            sha256: sha256_hex(&bytes),
        })
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<FileDigest> {
        write_json(&self.path(name), value)?;
        self.record(name)
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Result of the data-side stages, kept in memory.
pub(crate) struct Curated {
    pub picks: Vec<DatasetPick>,
    pub processed: Dataset,
    pub cap_inputs: Vec<PathBuf>,
}

pub(crate) fn curate(cfg: &PipelineConfig) -> Result<Curated> {
    let tokenizer = cfg.tokenizer();
    let (pool, picks, cap_inputs) = (|| {
        let pool = cfg
            .pool
            .iter()
            .map(|p| load_tokenized(&cfg.resolve(p), &tokenizer))
            .collect::<Result<Vec<_>>>()?;
        let caps = load_capabilities(&cfg.capabilities, &cfg.base_dir, &tokenizer)?;
        let embedder = HashingEmbedder::new(cfg.embedding_dim);
        let budget = cfg.budget.unwrap_or(pool.len());
        let picks = select_datasets(&pool, &caps, budget, &embedder, &cfg.coverage_options())?;
        let cap_inputs = cfg
            .capabilities
            .iter()
            .map(|c| c.reference.clone())
            .collect();
        Ok((pool, picks, cap_inputs))
    })()
    .map_err(|e: ColaError| e.in_stage(STAGE_SELECT_DATASETS))?;

    let processed = (|| {
        let seed = stage_seed(cfg.seed, STAGE_PROCESS);
        let mut parts = Vec::with_capacity(picks.len());
        for pick in &picks {
            let d = &pool[pick.index];
            let pcfg = cfg.processing.to_config(derive_seed(seed, &d.name));
            parts.push(prepare(d, &pcfg, &tokenizer)?);
        }
        let union = Dataset::union("processed", &parts);
        union.validate()?;
        apply_mix(union, &cfg.processing.to_config(seed), cfg.processing.count)
    })()
    .map_err(|e| e.in_stage(STAGE_PROCESS))?;

    Ok(Curated {
        picks,
        processed,
        cap_inputs,
    })
}

/// Activation rows that enter Stage 3, plus the number of processed samples
/// that had no activation row.
pub(crate) fn candidates(
    cfg: &PipelineConfig,
    processed: Option<&Dataset>,
) -> Result<(ActivationMatrix, usize)> {
    let path = cfg
        .activations
        .as_ref()
        .ok_or_else(|| ColaError::Argument("no activation file configured".into()))?;
    let acts = read_activations(cfg.resolve(path))?;
    let Some(processed) = processed else {
        return Ok((acts, 0));
    };
    let wanted: BTreeSet<&str> = processed.samples.iter().map(|s| s.id.as_str()).collect();
    let ids: Vec<String> = acts
        .sample_ids()
        .iter()
        .filter(|id| wanted.contains(id.as_str()))
        .cloned()
        .collect();
    let missing = wanted.len() - ids.len();
    if ids.is_empty() {
        return Err(ColaError::InsufficientData(
            "no processed sample has activations".into(),
        ));
    }
    Ok((acts.select(&ids)?, missing))
}

pub(crate) fn stage3_specs(
    cfg: &PipelineConfig,
    dim: usize,
    seed: u64,
) -> Result<(ProjectionSpec, crate::activation_selection::KMeansConfig)> {
    let proj = ProjectionSpec::new(
        dim,
        cfg.projection.reduced_dim,
        derive_seed(seed, "projection"),
    )?;
    Ok((proj, cfg.kmeans.to_config(derive_seed(seed, "kmeans"))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub scheme: crate::data_model::CompressionScheme,
    pub calibration_size: usize,
    pub layers: Vec<LayerError>,
    pub mean_error: f64,
    pub mean_relative_error: f64,
}

impl HarnessReport {
    pub fn new(
        scheme: crate::data_model::CompressionScheme,
        calibration_size: usize,
        layers: Vec<LayerError>,
    ) -> Self {
        let n = layers.len().max(1) as f64;
        let mean_error = layers.iter().map(|l| l.error).sum::<f64>() / n;
        let mean_relative_error = layers.iter().map(|l| l.relative_error).sum::<f64>() / n;
        Self {
            scheme,
            calibration_size,
            layers,
            mean_error,
            mean_relative_error,
        }
    }
}

/// Runs every configured stage and writes outputs plus `manifest.json` into
/// the output directory. On failure, files written by this run are removed
/// and the error names the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| ColaError::io(&out, e))?;
    let mut outputs = Outputs::new(cfg);
    match run_stages(cfg, &mut outputs) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            outputs.remove_all();
            Err(e)
        }
    }
}

fn run_stages(cfg: &PipelineConfig, outputs: &mut Outputs) -> Result<Manifest> {
    let mut stages = Vec::new();
    let skipped = |stage: &str, reason: &str| StageRecord {
        stage: stage.to_string(),
        status: StageStatus::Skipped,
        seed: stage_seed(cfg.seed, stage),
        inputs: vec![],
        params: Value::Null,
        outputs: vec![],
        summary: json!({ "reason": reason }),
    };

    let processed = if cfg.pool.is_empty() {
        stages.push(skipped(STAGE_SELECT_DATASETS, "empty pool"));
        stages.push(skipped(STAGE_PROCESS, "empty pool"));
        None
    } else {
        let curated = curate(cfg)?;
        let mut inputs = cfg
            .pool
            .iter()
            .chain(&curated.cap_inputs)
            .map(|p| input_digest(cfg, p))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage(STAGE_SELECT_DATASETS))?;
        inputs.dedup();
        let picks_out = outputs
            .json("selected_datasets.json", &curated.picks)
            .map_err(|e| e.in_stage(STAGE_SELECT_DATASETS))?;
        stages.push(StageRecord {
            stage: STAGE_SELECT_DATASETS.into(),
            status: StageStatus::Completed,
            seed: stage_seed(cfg.seed, STAGE_SELECT_DATASETS),
            inputs,
            params: json!({
                "budget": cfg.budget.unwrap_or(cfg.pool.len()),
                "alpha": cfg.alpha,
                "kl_mode": cfg.kl_mode,
                "emb_mode": cfg.emb_mode,
                "vocab_size": cfg.vocab_size,
                "embedding_dim": cfg.embedding_dim,
                "capabilities": cfg.capabilities,
            }),
            outputs: vec![picks_out.clone()],
            summary: json!({
                "selected": curated.picks.iter().map(|p| &p.name).collect::<Vec<_>>(),
                "objective": curated.picks.last().map(|p| p.objective),
            }),
        });

        let processed_out = (|| {
            save_dataset(&curated.processed, outputs.path("processed.jsonl"))?;
            outputs.record("processed.jsonl")
        })()
        .map_err(|e| e.in_stage(STAGE_PROCESS))?;
        stages.push(StageRecord {
            stage: STAGE_PROCESS.into(),
            status: StageStatus::Completed,
            seed: stage_seed(cfg.seed, STAGE_PROCESS),
            inputs: vec![picks_out],
            params: serde_json::to_value(&cfg.processing)?,
            outputs: vec![processed_out],
            summary: json!({
                "samples": curated.processed.len(),
                "tokens": curated.processed.total_tokens(),
            }),
        });
        Some(curated.processed)
    };

    let selection = match &cfg.activations {
        None => {
            stages.push(skipped(
                STAGE_SELECT_SAMPLES,
                "no activation file configured",
            ));
            None
        }
        Some(acts_path) => {
            let seed = stage_seed(cfg.seed, STAGE_SELECT_SAMPLES);
            let (record, selection) = (|| {
                let input = input_digest(cfg, acts_path)?;
                let (acts, missing) = candidates(cfg, processed.as_ref())?;
                let (proj, kcfg) = stage3_specs(cfg, acts.dim(), seed)?;
                let selection = select_representatives(&acts, &proj, &kcfg)?;
                let digest = outputs.json("selection.json", &selection)?;
                let record = StageRecord {
                    stage: STAGE_SELECT_SAMPLES.into(),
                    status: StageStatus::Completed,
                    seed,
                    inputs: vec![input],
                    params: json!({
                        "reduced_dim": proj.reduced_dim,
                        "projection_seed": proj.seed,
                        "kmeans": kcfg,
                    }),
                    outputs: vec![digest],
                    summary: json!({
                        "candidates": acts.rows(),
                        "missing_activations": missing,
                        "selected": selection.selected_ids.len(),
                        "inertia": selection.inertia,
                    }),
                };
                Ok((record, selection))
            })()
            .map_err(|e: ColaError| e.in_stage(STAGE_SELECT_SAMPLES))?;
            stages.push(record);
            Some(selection)
        }
    };

    match (&cfg.scheme, &selection) {
        (Some(scheme), Some(selection)) => {
            let seed = stage_seed(cfg.seed, STAGE_HARNESS);
            let record = (|| {
                let layers_path = cfg.layers.as_ref().expect("validated");
                let eval_path = cfg.eval.as_ref().expect("validated");
                let acts_path = cfg
                    .activations
                    .as_ref()
                    .expect("selection implies activations");
                let inputs = vec![
                    input_digest(cfg, layers_path)?,
                    input_digest(cfg, acts_path)?,
                    input_digest(cfg, eval_path)?,
                ];
                let layers = read_layer_bank(cfg.resolve(layers_path))?;
                let acts = read_activations(cfg.resolve(acts_path))?;
                let eval = read_activations(cfg.resolve(eval_path))?;
                let errors =
                    evaluate_calibration(&layers, &acts, &selection.selected_ids, scheme, &eval)?;
                let report =
                    HarnessReport::new(scheme.clone(), selection.selected_ids.len(), errors);
                let digest = outputs.json("report.json", &report)?;
                Ok(StageRecord {
                    stage: STAGE_HARNESS.into(),
                    status: StageStatus::Completed,
                    seed,
                    inputs,
                    params: serde_json::to_value(scheme)?,
                    outputs: vec![digest],
                    summary: json!({
                        "mean_error": report.mean_error,
                        "mean_relative_error": report.mean_relative_error,
                    }),
                })
            })()
            .map_err(|e: ColaError| e.in_stage(STAGE_HARNESS))?;
            stages.push(record);
        }
        (Some(_), None) => stages.push(skipped(STAGE_HARNESS, "no selection")),
        (None, _) => stages.push(skipped(STAGE_HARNESS, "no scheme configured")),
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        stages,
    };
    outputs.json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}
