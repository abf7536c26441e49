//! Dataset-level selection: how well a candidate dataset covers a set of
//! target capabilities, and greedy selection of a dataset budget.
//!
//! `coverage(S, c) = alpha * EmbSim(S, D_c) + (1 - alpha) * g(KL(P_S || P_Dc))`
//! where `g(kl) = exp(-kl)` by default ([`KlMode::ExpNeg`]) and `g(kl) = kl`
//! in [`KlMode::Raw`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{tokenizer, validate_capabilities, CapabilitySpec, Dataset};
use crate::error::{ColaError, Result};

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// Maps text to a unit-norm vector. Implementations must be pure.
pub trait EmbeddingProvider: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing over lowercased words.
///
/// Each word hashes (FNV-1a, 64-bit) to bucket `h % dim` with sign taken from
/// bit 63 of `h`; the bucket counts are L2-normalized. Text without words
/// embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing-bow"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for word in tokenizer::words(text) {
            let h = tokenizer::fnv1a(word.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        normalize(&mut v);
        v
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// L2-normalizes in place; returns false for the zero vector.
fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMode {
    /// KL enters as `exp(-kl)`, a similarity in (0, 1].
    #[default]
    ExpNeg,
    /// KL is added as-is.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbSimMode {
    /// Cosine between the normalized dataset centroids.
    #[default]
    Centroid,
    /// Mean cosine over all cross-dataset pairs.
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageOptions {
    pub vocab_size: usize,
    pub alpha: f64,
    pub kl_mode: KlMode,
    pub emb_mode: EmbSimMode,
    pub epsilon: f64,
}

impl CoverageOptions {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            alpha: DEFAULT_ALPHA,
            kl_mode: KlMode::ExpNeg,
            emb_mode: EmbSimMode::Centroid,
            epsilon: DEFAULT_EPSILON,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ColaError::Argument(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.vocab_size == 0 {
            return Err(ColaError::Argument("vocab_size must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(ColaError::Argument(format!(
                "epsilon {} must be > 0",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageScore {
    pub emb_sim: f64,
    pub kl: f64,
    pub alpha: f64,
    pub kl_mode: KlMode,
    pub combined: f64,
}

impl CoverageScore {
    pub fn combine(emb_sim: f64, kl: f64, alpha: f64, kl_mode: KlMode) -> Self {
        let kl_term = match kl_mode {
            KlMode::ExpNeg => (-kl).exp(),
            KlMode::Raw => kl,
        };
        Self {
            emb_sim,
            kl,
            alpha,
            kl_mode,
            combined: alpha * emb_sim + (1.0 - alpha) * kl_term,
        }
    }
}

/// Smoothed KL divergence `sum p'_t ln(p'_t / q'_t)` with `p' = (p + eps) / norm`.
pub fn kl_divergence(p: &[f64], q: &[f64], epsilon: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(ColaError::Shape(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(ColaError::Argument(format!(
            "epsilon {epsilon} must be > 0"
        )));
    }
    for (label, dist) in [("p", p), ("q", q)] {
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > 1e-6 || dist.iter().any(|&x| x < 0.0) {
            return Err(ColaError::Argument(format!(
                "{label} is not a probability vector (sum {total})"
            )));
        }
    }
    Ok(smoothed_kl(p, q, epsilon))
}

fn smoothed_kl(p: &[f64], q: &[f64], epsilon: f64) -> f64 {
    let p_norm: f64 = p.iter().map(|x| x + epsilon).sum();
    let q_norm: f64 = q.iter().map(|x| x + epsilon).sum();
    let kl: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let ps = (pi + epsilon) / p_norm;
            let qs = (qi + epsilon) / q_norm;
            ps * (ps / qs).ln()
        })
        .sum();
    kl.max(0.0)
}

/// Sufficient statistics of a dataset for coverage scoring. Profiles of
/// disjoint datasets merge by addition, which keeps greedy selection linear.
#[derive(Debug, Clone)]
struct Profile {
    token_counts: Vec<u64>,
    total_tokens: u64,
    emb_sum: Vec<f64>,
    embeddings: Vec<Vec<f64>>,
}

impl Profile {
    fn build(
        d: &Dataset,
        provider: &dyn EmbeddingProvider,
        opts: &CoverageOptions,
    ) -> Result<Self> {
        let mut token_counts = vec![0u64; opts.vocab_size];
        let mut total_tokens = 0;
        for &t in d.samples.iter().flat_map(|s| s.token_ids()) {
            let slot = token_counts
                .get_mut(t as usize)
                .ok_or(ColaError::TokenOutOfRange {
                    token: t,
                    vocab_size: opts.vocab_size,
                })?;
            *slot += 1;
            total_tokens += 1;
        }
        let embeddings: Vec<Vec<f64>> = d.samples.iter().map(|s| provider.embed(&s.text)).collect();
        let mut emb_sum = vec![0.0; provider.dim()];
        for e in &embeddings {
            if e.len() != emb_sum.len() {
                return Err(ColaError::Shape(format!(
                    "provider `{}` returned {} dims, declared {}",
                    provider.name(),
                    e.len(),
                    emb_sum.len()
                )));
            }
            emb_sum.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        }
        Ok(Self {
            token_counts,
            total_tokens,
            emb_sum,
            embeddings,
        })
    }

    fn merged(&self, other: &Profile) -> Profile {
        let mut out = self.clone();
        out.token_counts
            .iter_mut()
            .zip(&other.token_counts)
            .for_each(|(a, b)| *a += b);
        out.total_tokens += other.total_tokens;
        out.emb_sum
            .iter_mut()
            .zip(&other.emb_sum)
            .for_each(|(a, b)| *a += b);
        out.embeddings.extend(other.embeddings.iter().cloned());
        out
    }

    fn distribution(&self, name: &str) -> Result<Vec<f64>> {
        if self.total_tokens == 0 {
            return Err(ColaError::InsufficientData(format!(
                "dataset `{name}` has no tokens"
            )));
        }
        let total = self.total_tokens as f64;
        Ok(self
            .token_counts
            .iter()
            .map(|&c| c as f64 / total)
            .collect())
    }
}

fn centroid_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let mut ua = a.to_vec();
    let mut ub = b.to_vec();
    if !normalize(&mut ua) || !normalize(&mut ub) {
        return Err(ColaError::DegenerateEmbedding(
            "mean embedding is the zero vector".into(),
        ));
    }
    if ua == ub {
        return Ok(1.0);
    }
    let dot: f64 = ua.iter().zip(&ub).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

fn pairwise_cosine(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let total: f64 = a
        .iter()
        .flat_map(|x| {
            b.iter()
                .map(move |y| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
        })
        .sum();
    (total / (a.len() * b.len()) as f64).clamp(-1.0, 1.0)
}

fn profile_emb_sim(s: &Profile, d: &Profile, mode: EmbSimMode) -> Result<f64> {
    if s.embeddings.is_empty() || d.embeddings.is_empty() {
        return Err(ColaError::Argument(
            "embedding similarity of an empty dataset".into(),
        ));
    }
    match mode {
        // Dividing by the count does not change the direction.
        EmbSimMode::Centroid => centroid_cosine(&s.emb_sum, &d.emb_sum),
        EmbSimMode::Pairwise => Ok(pairwise_cosine(&s.embeddings, &d.embeddings)),
    }
}

/// Cosine similarity of the two datasets' normalized mean embeddings.
pub fn emb_sim(s: &Dataset, d_c: &Dataset, provider: &dyn EmbeddingProvider) -> Result<f64> {
    emb_sim_with(s, d_c, provider, EmbSimMode::Centroid)
}

pub fn emb_sim_with(
    s: &Dataset,
    d_c: &Dataset,
    provider: &dyn EmbeddingProvider,
    mode: EmbSimMode,
) -> Result<f64> {
    if s.is_empty() || d_c.is_empty() {
        return Err(ColaError::Argument(
            "embedding similarity of an empty dataset".into(),
        ));
    }
    let embed_all = |d: &Dataset| -> Vec<Vec<f64>> {
        d.samples.iter().map(|x| provider.embed(&x.text)).collect()
    };
    let (es, ed) = (embed_all(s), embed_all(d_c));
    match mode {
        EmbSimMode::Centroid => {
            let sum = |es: &[Vec<f64>]| {
                let mut acc = vec![0.0; provider.dim()];
                for e in es {
                    acc.iter_mut().zip(e).for_each(|(a, b)| *a += b);
                }
                acc
            };
            centroid_cosine(&sum(&es), &sum(&ed))
        }
        EmbSimMode::Pairwise => Ok(pairwise_cosine(&es, &ed)),
    }
}

fn profile_coverage(
    s: &Profile,
    s_name: &str,
    reference: &Profile,
    reference_name: &str,
    opts: &CoverageOptions,
) -> Result<CoverageScore> {
    let emb = profile_emb_sim(s, reference, opts.emb_mode)?;
    let p = s.distribution(s_name)?;
    let q = reference.distribution(reference_name)?;
    let kl = smoothed_kl(&p, &q, opts.epsilon);
    Ok(CoverageScore::combine(emb, kl, opts.alpha, opts.kl_mode))
}

/// Scores how well `s` covers capability `cap`.
pub fn coverage(
    s: &Dataset,
    cap: &CapabilitySpec,
    provider: &dyn EmbeddingProvider,
    opts: &CoverageOptions,
) -> Result<CoverageScore> {
    opts.validate()?;
    let sp = Profile::build(s, provider, opts)?;
    let rp = Profile::build(&cap.reference, provider, opts)?;
    profile_coverage(&sp, &s.name, &rp, &cap.reference.name, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPick {
    /// Position in the input pool.
    pub index: usize,
    pub name: String,
    pub marginal_gain: f64,
    /// Weighted objective of the union after this pick.
    pub objective: f64,
}

/// Greedy forward selection maximizing `sum_c w_c * coverage(union, c)`.
///
/// Each step adds the pool entry with the largest objective increase over
/// the union selected so far (the empty union scores 0). Ties go to the
/// earliest pool entry.
pub fn select_datasets(
    pool: &[Dataset],
    caps: &[CapabilitySpec],
    budget: usize,
    provider: &dyn EmbeddingProvider,
    opts: &CoverageOptions,
) -> Result<Vec<DatasetPick>> {
    if pool.is_empty() {
        return Err(ColaError::Argument("empty dataset pool".into()));
    }
    if budget == 0 || budget > pool.len() {
        return Err(ColaError::Argument(format!(
            "budget {budget} must be in 1..={}",
            pool.len()
        )));
    }
    opts.validate()?;
    validate_capabilities(caps)?;

    let profiles = pool
        .par_iter()
        .map(|d| Profile::build(d, provider, opts))
        .collect::<Result<Vec<_>>>()?;
    let references = caps
        .par_iter()
        .map(|c| Profile::build(&c.reference, provider, opts))
        .collect::<Result<Vec<_>>>()?;

    let objective = |union: &Profile, name: &str| -> Result<f64> {
        caps.iter()
            .zip(&references)
            .filter(|(c, _)| c.weight > 0.0)
            .map(|(c, r)| {
                profile_coverage(union, name, r, &c.reference.name, opts)
                    .map(|s| c.weight * s.combined)
            })
            .sum()
    };

    let mut chosen = vec![false; pool.len()];
    let mut union: Option<Profile> = None;
    let mut current = 0.0;
    let mut picks = Vec::with_capacity(budget);

    for _ in 0..budget {
        let candidates: Vec<(usize, Profile, f64)> = (0..pool.len())
            .into_par_iter()
            .filter(|&i| !chosen[i])
            .map(|i| {
                let merged = match &union {
                    Some(u) => u.merged(&profiles[i]),
                    None => profiles[i].clone(),
                };
                let value = objective(&merged, &pool[i].name)?;
                Ok((i, merged, value))
            })
            .collect::<Result<Vec<_>>>()?;

        // Candidates arrive in pool order; strict comparison keeps the earliest on ties.
        let mut best: Option<(usize, Profile, f64)> = None;
        for cand in candidates {
            if best.as_ref().is_none_or(|b| cand.2 > b.2) {
                best = Some(cand);
            }
        }
        let (index, merged, value) = best.expect("budget <= pool size");
        chosen[index] = true;
        picks.push(DatasetPick {
            index,
            name: pool[index].name.clone(),
            marginal_gain: value - current,
            objective: value,
        });
        current = value;
        union = Some(merged);
    }
    Ok(picks)
}
