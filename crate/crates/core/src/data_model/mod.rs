//! Shared domain types and on-disk formats.

mod activations;
mod sample;
mod scheme;
mod selection;
pub mod tokenizer;

pub(crate) use activations::{
    decode_header, decode_records, encode_header, encode_record, ByteReader,
};
pub use activations::{read_activations, write_activations, ActivationMatrix};
pub use sample::{load_dataset, save_dataset, token_distribution, Dataset, Domain, Format, Sample};
pub use scheme::{BlockPattern, CompressionScheme, SchemeKind};
pub use selection::SelectionResult;
pub use tokenizer::FallbackTokenizer;

use serde::{Deserialize, Serialize};

use crate::error::{ColaError, Result};

/// A target capability with its importance weight and reference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilitySpec {
    pub capability: String,
    pub weight: f64,
    pub reference: Dataset,
}

impl CapabilitySpec {
    pub fn new(capability: impl Into<String>, weight: f64, reference: Dataset) -> Self {
        Self {
            capability: capability.into(),
            weight,
            reference,
        }
    }
}

/// Checks weights are non-negative with at least one positive.
pub fn validate_capabilities(caps: &[CapabilitySpec]) -> Result<()> {
    if let Some(c) = caps
        .iter()
        .find(|c| !(c.weight >= 0.0) || !c.weight.is_finite())
    {
        return Err(ColaError::Validation(format!(
            "capability `{}` has weight {}",
            c.capability, c.weight
        )));
    }
    if !caps.iter().any(|c| c.weight > 0.0) {
        return Err(ColaError::Argument(
            "at least one capability weight must be positive".into(),
        ));
    }
    Ok(())
}
