//! Compositional shaping of selected datasets: minimum-length filtering,
//! Q&A wrapping, fixed-length chunking and difficulty-stratified mixing.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{Dataset, FallbackTokenizer, Format, Sample};
use crate::error::{ColaError, Result};
use crate::rng::seeded_rng;

pub const DEFAULT_TARGET_LENGTH: usize = 2048;
pub const DEFAULT_MIN_LENGTH: usize = 256;
/// Joins token streams during chunking.
pub const DELIMITER_TOKEN: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatPolicy {
    #[default]
    Passthrough,
    WrapQa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyTier {
    Easy,
    Medium,
    Hard,
}

impl DifficultyTier {
    pub const ALL: [DifficultyTier; 3] = [Self::Easy, Self::Medium, Self::Hard];

    /// `[0, 1/3)` easy, `[1/3, 2/3)` medium, `[2/3, 1]` hard.
    pub fn of(difficulty: f64) -> Self {
        if difficulty < 1.0 / 3.0 {
            Self::Easy
        } else if difficulty < 2.0 / 3.0 {
            Self::Medium
        } else {
            Self::Hard
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessingConfig {
    pub target_length: usize,
    pub min_length: usize,
    pub format_policy: FormatPolicy,
    /// Fractions for (easy, medium, hard).
    pub difficulty_mix: Option<[f64; 3]>,
    pub seed: u64,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        Self {
            target_length: DEFAULT_TARGET_LENGTH,
            min_length: DEFAULT_MIN_LENGTH,
            format_policy: FormatPolicy::Passthrough,
            difficulty_mix: None,
            seed: 0,
        }
    }
}

impl ProcessingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_length == 0 {
            return Err(ColaError::Validation(
                "target_length must be positive".into(),
            ));
        }
        if self.min_length > self.target_length {
            return Err(ColaError::Validation(format!(
                "min_length {} exceeds target_length {}",
                self.min_length, self.target_length
            )));
        }
        if let Some(mix) = self.difficulty_mix {
            let total: f64 = mix.iter().sum();
            if mix.iter().any(|&m| !(m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(ColaError::Validation(format!(
                    "difficulty_mix {mix:?} must be non-negative and sum to 1"
                )));
            }
        }
        Ok(())
    }
}

/// Keeps samples with at least `min_length` tokens, in order.
pub fn filter_min_length(d: &Dataset, cfg: &ProcessingConfig) -> Dataset {
    let samples = d
        .samples
        .iter()
        .filter(|s| s.token_count() >= cfg.min_length)
        .cloned()
        .collect();
    Dataset::new(d.name.clone(), samples)
}

/// Splits on ". ", "? " and "! ", keeping the terminal punctuation.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    for i in 0..bytes.len().saturating_sub(1) {
        if matches!(bytes[i], b'.' | b'?' | b'!') && bytes[i + 1] == b' ' {
            out.push(&text[start..=i]);
            start = i + 2;
        }
    }
    out.push(&text[start..]);
    out.into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Rewrites a sample into the Question / Reasoning / Answer template.
///
/// The first sentence becomes the question, the last the answer and the
/// sentences in between the reasoning. Samples already in `QaErc` format
/// and samples without text are returned unchanged.
pub fn wrap_format(s: &Sample, policy: FormatPolicy, tokenizer: &FallbackTokenizer) -> Sample {
    if policy == FormatPolicy::Passthrough || s.format == Format::QaErc {
        return s.clone();
    }
    let sentences = split_sentences(&s.text);
    let (Some(first), Some(last)) = (sentences.first(), sentences.last()) else {
        return s.clone();
    };
    let middle = if sentences.len() > 2 {
        sentences[1..sentences.len() - 1].join(" ")
    } else {
        String::new()
    };
    let text = format!("Question: {first}\nReasoning: {middle}\nAnswer: {last}");
    let tokens = tokenizer.encode(&text);
    Sample {
        text,
        tokens: if tokens.is_empty() {
            None
        } else {
            Some(tokens)
        },
        format: Format::QaErc,
        ..s.clone()
    }
}

/// Concatenates token streams (joined by [`DELIMITER_TOKEN`]) and cuts
/// `floor(N / target_length)` non-overlapping windows at seeded offsets.
///
/// Window `i` starts at `i * target_length + o_i` where the `o_i` are sorted
/// uniform draws from `0..=N - m * target_length`. Chunk ids are
/// `<src_id>#<i>` with `src_id` the sample owning the first token; metadata
/// comes from that sample and the text joins every overlapped sample's text.
pub fn chunk_to_length(d: &Dataset, cfg: &ProcessingConfig) -> Result<Dataset> {
    let target = cfg.target_length;
    if target == 0 {
        return Err(ColaError::Argument("target_length must be positive".into()));
    }
    let sources: Vec<&Sample> = d.samples.iter().filter(|s| s.token_count() > 0).collect();
    let mut stream: Vec<u32> = Vec::with_capacity(d.total_tokens() + sources.len());
    // starts[j]: stream offset of sources[j]'s first token.
    let mut starts = Vec::with_capacity(sources.len());
    for (j, s) in sources.iter().enumerate() {
        if j > 0 {
            stream.push(DELIMITER_TOKEN);
        }
        starts.push(stream.len());
        stream.extend_from_slice(s.token_ids());
    }
    let tokens = d.total_tokens();
    if tokens < target {
        return Err(ColaError::InsufficientData(format!(
            "dataset `{}` has {tokens} tokens, need at least {target}",
            d.name
        )));
    }

    // Delimiters only widen the slack; they never add a window.
    let count = tokens / target;
    let slack = stream.len() - count * target;
    let mut rng = seeded_rng(cfg.seed);
    let mut offsets: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=slack)).collect();
    offsets.sort_unstable();

    // A delimiter belongs to the sample before it.
    let owner = |pos: usize| starts.partition_point(|&s| s <= pos) - 1;

    let samples = offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| {
            let begin = i * target + off;
            let end = begin + target;
            let (first, last) = (owner(begin), owner(end - 1));
            let head = sources[first];
            let text = sources[first..=last]
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            Sample {
                id: format!("{}#{i}", head.id),
                text,
                tokens: Some(stream[begin..end].to_vec()),
                ..head.clone()
            }
        })
        .collect();
    Ok(Dataset::new(d.name.clone(), samples))
}

/// Largest-remainder apportionment of `total` over `weights` (ties to the lower index).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-tier draw counts: largest-remainder quotas, with shortfalls of
/// exhausted tiers re-apportioned over tiers that still have samples.
pub fn tier_quotas(count: usize, mix: [f64; 3], available: [usize; 3]) -> Result<[usize; 3]> {
    let capacity: usize = available.iter().sum();
    if count > capacity {
        return Err(ColaError::InsufficientData(format!(
            "requested {count} samples but only {capacity} are available"
        )));
    }
    let mut quota = [0usize; 3];
    let mut remaining = count;
    let mut weights = mix;
    while remaining > 0 {
        let spare: Vec<usize> = (0..3).map(|t| available[t] - quota[t]).collect();
        let mut w: Vec<f64> = (0..3)
            .map(|t| if spare[t] > 0 { weights[t] } else { 0.0 })
            .collect();
        if w.iter().sum::<f64>() <= 0.0 {
            // Only zero-weight tiers have room left: fill by spare capacity.
            w = spare.iter().map(|&s| s as f64).collect();
            weights = [w[0], w[1], w[2]];
        }
        let share = apportion(remaining, &w);
        for t in 0..3 {
            let take = share[t].min(spare[t]);
            quota[t] += take;
            remaining -= take;
        }
    }
    Ok(quota)
}

/// Draws `count` samples with tier proportions `cfg.difficulty_mix`.
///
/// Selected samples keep their original relative order.
pub fn stratified_mix(d: &Dataset, cfg: &ProcessingConfig, count: usize) -> Result<Dataset> {
    let mix = cfg
        .difficulty_mix
        .ok_or_else(|| ColaError::Argument("stratified mixing needs difficulty_mix".into()))?;
    if count == 0 {
        return Err(ColaError::Argument("count must be positive".into()));
    }
    let mut tiers: [Vec<usize>; 3] = Default::default();
    for (i, s) in d.samples.iter().enumerate() {
        let difficulty = s
            .difficulty
            .ok_or_else(|| ColaError::Argument(format!("sample `{}` has no difficulty", s.id)))?;
        tiers[DifficultyTier::of(difficulty).index()].push(i);
    }
    let quota = tier_quotas(count, mix, [tiers[0].len(), tiers[1].len(), tiers[2].len()])?;

    let mut rng = seeded_rng(cfg.seed);
    let mut picked = BTreeSet::new();
    for (members, &q) in tiers.iter().zip(&quota) {
        for k in index::sample(&mut rng, members.len(), q) {
            picked.insert(members[k]);
        }
    }
    let samples = picked.into_iter().map(|i| d.samples[i].clone()).collect();
    Ok(Dataset::new(d.name.clone(), samples))
}

/// Filter, wrap and chunk; everything except the difficulty mix.
pub fn prepare(
    d: &Dataset,
    cfg: &ProcessingConfig,
    tokenizer: &FallbackTokenizer,
) -> Result<Dataset> {
    cfg.validate()?;
    let filtered = filter_min_length(d, cfg);
    let wrapped = Dataset::new(
        filtered.name.clone(),
        filtered
            .samples
            .iter()
            .map(|s| wrap_format(s, cfg.format_policy, tokenizer))
            .collect(),
    );
    chunk_to_length(&wrapped, cfg)
}

/// Applies the configured difficulty mix, if any, to prepared samples.
pub fn apply_mix(d: Dataset, cfg: &ProcessingConfig, count: Option<usize>) -> Result<Dataset> {
    match (cfg.difficulty_mix, count) {
        (Some(_), Some(n)) => stratified_mix(&d, cfg, n),
        (Some(_), None) => Err(ColaError::Argument(
            "difficulty_mix requires a count".into(),
        )),
        (None, _) => Ok(d),
    }
}

/// Full processing chain: filter, wrap, chunk, then (optionally) mix.
pub fn process(
    d: &Dataset,
    cfg: &ProcessingConfig,
    count: Option<usize>,
    tokenizer: &FallbackTokenizer,
) -> Result<Dataset> {
    apply_mix(prepare(d, cfg, tokenizer)?, cfg, count)
}
