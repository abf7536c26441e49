use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation_selection::{KMeansConfig, DEFAULT_K, DEFAULT_REDUCED_DIM};
use crate::coverage::{
    CoverageOptions, EmbSimMode, KlMode, DEFAULT_ALPHA, DEFAULT_EMBEDDING_DIM, DEFAULT_EPSILON,
};
use crate::data_model::{
    load_dataset, CapabilitySpec, CompressionScheme, Dataset, FallbackTokenizer,
};
use crate::error::{ColaError, Result};
use crate::processing::{
    FormatPolicy, ProcessingConfig, DEFAULT_MIN_LENGTH, DEFAULT_TARGET_LENGTH,
};

pub const DEFAULT_VOCAB_SIZE: usize = 32_000;

/// A capability whose reference set lives in a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRef {
    pub capability: String,
    pub weight: f64,
    pub reference: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingSettings {
    pub target_length: usize,
    pub min_length: usize,
    pub format_policy: FormatPolicy,
    pub difficulty_mix: Option<[f64; 3]>,
    /// Sample count after mixing; required with `difficulty_mix`.
    pub count: Option<usize>,
}

impl Default for ProcessingSettings {
    fn default() -> Self {
        Self {
            target_length: DEFAULT_TARGET_LENGTH,
            min_length: DEFAULT_MIN_LENGTH,
            format_policy: FormatPolicy::Passthrough,
            difficulty_mix: None,
            count: None,
        }
    }
}

impl ProcessingSettings {
    pub fn to_config(&self, seed: u64) -> ProcessingConfig {
        ProcessingConfig {
            target_length: self.target_length,
            min_length: self.min_length,
            format_policy: self.format_policy,
            difficulty_mix: self.difficulty_mix,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSettings {
    pub reduced_dim: usize,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            reduced_dim: DEFAULT_REDUCED_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansSettings {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub n_restarts: usize,
}

impl Default for KMeansSettings {
    fn default() -> Self {
        let d = KMeansConfig::default();
        Self {
            k: DEFAULT_K,
            max_iters: d.max_iters,
            tol: d.tol,
            n_restarts: d.n_restarts,
        }
    }
}

impl KMeansSettings {
    pub fn to_config(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            max_iters: self.max_iters,
            tol: self.tol,
            n_restarts: self.n_restarts,
            seed,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_vocab() -> usize {
    DEFAULT_VOCAB_SIZE
}

fn default_embedding_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

/// Declarative pipeline configuration. Relative paths resolve against
/// `base_dir`, which [`PipelineConfig::load`] sets to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(alias = "master_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, alias = "pool_paths")]
    pub pool: Vec<PathBuf>,
    #[serde(default)]
    pub capabilities: Vec<CapabilityRef>,
    /// Defaults to the pool size.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub kl_mode: KlMode,
    #[serde(default)]
    pub emb_mode: EmbSimMode,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub processing: ProcessingSettings,
    #[serde(default)]
    pub activations: Option<PathBuf>,
    #[serde(default)]
    pub projection: ProjectionSettings,
    #[serde(default)]
    pub kmeans: KMeansSettings,
    #[serde(default)]
    pub scheme: Option<CompressionScheme>,
    #[serde(default)]
    pub layers: Option<PathBuf>,
    #[serde(default)]
    pub eval: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// Minimal config with every optional part absent.
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ColaError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pool.is_empty() && self.capabilities.is_empty() {
            return Err(ColaError::Validation(
                "a dataset pool needs at least one capability".into(),
            ));
        }
        if let Some(b) = self.budget {
            if b == 0 || b > self.pool.len() {
                return Err(ColaError::Validation(format!(
                    "budget {b} must be in 1..={}",
                    self.pool.len()
                )));
            }
        }
        self.processing.to_config(0).validate()?;
        if let Some(s) = &self.scheme {
            s.validate()?;
            if self.layers.is_none() || self.eval.is_none() {
                return Err(ColaError::Validation(
                    "a scheme needs `layers` and `eval` files".into(),
                ));
            }
        }
        if self.kmeans.k == 0 {
            return Err(ColaError::Validation("k must be positive".into()));
        }
        Ok(())
    }

    pub fn coverage_options(&self) -> CoverageOptions {
        CoverageOptions {
            vocab_size: self.vocab_size,
            alpha: self.alpha,
            kl_mode: self.kl_mode,
            emb_mode: self.emb_mode,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn tokenizer(&self) -> FallbackTokenizer {
        FallbackTokenizer::new(self.vocab_size)
    }
}

/// Loads a dataset and fills in missing token ids.
pub fn load_tokenized(path: &Path, tokenizer: &FallbackTokenizer) -> Result<Dataset> {
    let mut d = load_dataset(path)?;
    d.materialize_tokens(tokenizer);
    Ok(d)
}

pub fn load_capabilities(
    refs: &[CapabilityRef],
    base: &Path,
    tokenizer: &FallbackTokenizer,
) -> Result<Vec<CapabilitySpec>> {
    refs.iter()
        .map(|r| {
            let path = if r.reference.is_absolute() {
                r.reference.clone()
            } else {
                base.join(&r.reference)
            };
            Ok(CapabilitySpec::new(
                r.capability.clone(),
                r.weight,
                load_tokenized(&path, tokenizer)?,
            ))
        })
        .collect()
}

/// Reads a capabilities file: a JSON list of `{capability, weight, reference}`
/// with reference paths relative to the file.
pub fn read_capabilities_file(
    path: &Path,
    tokenizer: &FallbackTokenizer,
) -> Result<Vec<CapabilitySpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| ColaError::io(path, e))?;
    let refs: Vec<CapabilityRef> = serde_json::from_str(&text)?;
    load_capabilities(&refs, path.parent().unwrap_or(Path::new("")), tokenizer)
}
