//! Fallback tokenizer for text-only dataset files.
//!
//! Real pipelines ship token IDs produced by the target model's tokenizer.
//! When a sample has none, text is lowercased, split on Unicode whitespace
//! and punctuation, and each word is hashed with 64-bit FNV-1a modulo the
//! vocabulary size.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased words of `text`, split on whitespace and punctuation.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation() || is_unicode_punct(c))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn is_unicode_punct(c: char) -> bool {
    // General punctuation block plus CJK symbols and full-width forms.
    matches!(c as u32, 0x2000..=0x206F | 0x3000..=0x303F | 0xFF00..=0xFF0F | 0xFF1A..=0xFF20)
        || matches!(c, '¡' | '¿' | '«' | '»' | '·')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackTokenizer {
    pub vocab_size: usize,
}

impl FallbackTokenizer {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size > 0, "vocab_size must be positive");
        Self { vocab_size }
    }

    pub fn token_id(&self, word: &str) -> u32 {
        (fnv1a(word.as_bytes()) % self.vocab_size as u64) as u32
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        words(text).map(|w| self.token_id(&w)).collect()
    }
}
