//! Calibration-data curation for post-training compression of language models.
//!
//! Three stages turn a pool of candidate datasets into a small calibration set:
//!
//! 1. [`coverage`]: greedy dataset selection by weighted capability coverage.
//! 2. [`processing`]: length filtering, Q&A wrapping, chunking and difficulty mixing.
//! 3. [`activation_selection`]: random projection of activation signatures,
//!    k-means, and one representative per cluster.
//!
//! [`harness`] scores calibration sets by layer-wise reconstruction error under
//! pruning and quantization, [`spectral`] inspects weight spectra, and
//! [`pipeline`] drives everything from one config file.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation_selection;
pub mod coverage;
pub mod data_model;
pub mod error;
pub mod harness;
pub mod pipeline;
pub mod processing;
pub mod rng;
pub mod spectral;
pub mod synthetic;

pub use activation_selection::{
    kmeans, project, select_representatives, KMeansConfig, Points, ProjectionSpec,
};
pub use coverage::{
    coverage, kl_divergence, select_datasets, CoverageOptions, HashingEmbedder, KlMode,
};
pub use data_model::{
    load_dataset, read_activations, save_dataset, token_distribution, write_activations,
    ActivationMatrix, CapabilitySpec, CompressionScheme, Dataset, FallbackTokenizer, Sample,
    SchemeKind, SelectionResult,
};
pub use error::{ColaError, Result};
pub use harness::{compress, reconstruction_error, CalibrationBatch, LinearLayer, Matrix};
pub use pipeline::{compare_selections, run_pipeline, PipelineConfig};
pub use processing::{process, ProcessingConfig};
