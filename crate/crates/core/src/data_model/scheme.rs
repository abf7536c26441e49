use serde::{Deserialize, Serialize};

use crate::error::{ColaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    MagnitudePrune,
    WandaPrune,
    ReconstructPrune,
    RtnQuant,
    ScaledQuant,
}

/// `n_zero` pruned weights in every contiguous block of `block_len` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPattern {
    pub n_zero: usize,
    pub block_len: usize,
}

impl BlockPattern {
    pub const FOUR_OF_EIGHT: BlockPattern = BlockPattern {
        n_zero: 4,
        block_len: 8,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionScheme {
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_pattern: Option<BlockPattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
}

impl CompressionScheme {
    pub fn pruning(kind: SchemeKind, sparsity: f64) -> Self {
        Self {
            kind,
            sparsity: Some(sparsity),
            block_pattern: None,
            bits: None,
            group_size: None,
        }
    }

    pub fn semi_structured(kind: SchemeKind, pattern: BlockPattern) -> Self {
        Self {
            kind,
            sparsity: None,
            block_pattern: Some(pattern),
            bits: None,
            group_size: None,
        }
    }

    pub fn quantization(kind: SchemeKind, bits: u32, group_size: usize) -> Self {
        Self {
            kind,
            sparsity: None,
            block_pattern: None,
            bits: Some(bits),
            group_size: Some(group_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ColaError::Validation(msg));
        if let Some(s) = self.sparsity {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("sparsity {s} outside [0, 1]"));
            }
        }
        if let Some(p) = self.block_pattern {
            if p.block_len == 0 || p.n_zero >= p.block_len {
                return bad(format!(
                    "block pattern {}:{} needs n_zero < block_len",
                    p.n_zero, p.block_len
                ));
            }
            if self.sparsity.is_some() {
                return bad("sparsity and block_pattern are mutually exclusive".into());
            }
        }
        if let Some(b) = self.bits {
            if b < 2 {
                return bad(format!("bits = {b}, need at least 2"));
            }
        }
        if self.group_size == Some(0) {
            return bad("group_size must be positive".into());
        }
        match self.kind {
            SchemeKind::MagnitudePrune | SchemeKind::ReconstructPrune
                if self.sparsity.is_none() && self.block_pattern.is_none() =>
            {
                bad(format!("{:?} needs a sparsity", self.kind))
            }
            SchemeKind::MagnitudePrune if self.block_pattern.is_some() => {
                bad("magnitude pruning is unstructured only".into())
            }
            SchemeKind::WandaPrune if self.sparsity.is_none() && self.block_pattern.is_none() => {
                bad("wanda pruning needs a sparsity or a block pattern".into())
            }
            SchemeKind::RtnQuant | SchemeKind::ScaledQuant if self.bits.is_none() => {
                bad(format!("{:?} needs bits", self.kind))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let s =
            CompressionScheme::semi_structured(SchemeKind::WandaPrune, BlockPattern::FOUR_OF_EIGHT);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"kind":"wanda_prune","block_pattern":{"n_zero":4,"block_len":8}}"#
        );
        let back: CompressionScheme = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation_rules() {
        CompressionScheme::pruning(SchemeKind::ReconstructPrune, 0.5)
            .validate()
            .unwrap();
        CompressionScheme::quantization(SchemeKind::RtnQuant, 4, 128)
            .validate()
            .unwrap();

        let mut both = CompressionScheme::pruning(SchemeKind::WandaPrune, 0.5);
        both.block_pattern = Some(BlockPattern::FOUR_OF_EIGHT);
        assert!(both.validate().is_err());

        let inverted = CompressionScheme::semi_structured(
            SchemeKind::WandaPrune,
            BlockPattern {
                n_zero: 8,
                block_len: 8,
            },
        );
        assert!(inverted.validate().is_err());

        assert!(CompressionScheme::quantization(SchemeKind::RtnQuant, 1, 8)
            .validate()
            .is_err());
        assert!(CompressionScheme::pruning(SchemeKind::MagnitudePrune, 1.5)
            .validate()
            .is_err());
    }
}
