use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::FallbackTokenizer;
use crate::error::{ColaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Language,
    Commonsense,
    Math,
    Code,
    Multilingual,
    Other,
}

/// Structural format of a calibration sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// Free text.
    Raw,
    /// Question with a description, no answer.
    Qd,
    /// Question-answer pair.
    Qa,
    /// Question-answer pair with an explicit reasoning chain.
    QaErc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
    pub domain: Domain,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
    pub format: Format,
}

impl Sample {
    /// Convenience constructor for a raw English sample.
    pub fn new(id: impl Into<String>, text: impl Into<String>, tokens: Vec<u32>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            tokens: Some(tokens),
            domain: Domain::Other,
            language: "en".to_string(),
            difficulty: None,
            format: Format::Raw,
        }
    }

    pub fn token_ids(&self) -> &[u32] {
        self.tokens.as_deref().unwrap_or(&[])
    }

    pub fn token_count(&self) -> usize {
        self.token_ids().len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(tokens) = &self.tokens {
            if tokens.is_empty() {
                return Err(ColaError::Validation(format!(
                    "sample `{}` has an empty token list",
                    self.id
                )));
            }
        }
        if let Some(d) = self.difficulty {
            if !(0.0..=1.0).contains(&d) {
                return Err(ColaError::Validation(format!(
                    "sample `{}` has difficulty {d} outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// On-disk line shape. Token IDs are read signed so negative IDs surface as
/// validation errors instead of opaque parse failures.
#[derive(Deserialize)]
struct SampleLine {
    id: String,
    text: String,
    #[serde(default)]
    tokens: Option<Vec<i64>>,
    domain: Domain,
    language: String,
    #[serde(default)]
    difficulty: Option<f64>,
    format: Format,
}

impl SampleLine {
    fn into_sample(self) -> Result<Sample> {
        let tokens = match self.tokens {
            None => None,
            Some(raw) => Some(
                raw.into_iter()
                    .map(|t| {
                        u32::try_from(t).map_err(|_| {
                            ColaError::Validation(format!(
                                "sample `{}` has invalid token id {t}",
                                self.id
                            ))
                        })
                    })
                    .collect::<Result<Vec<u32>>>()?,
            ),
        };
        let sample = Sample {
            id: self.id,
            text: self.text,
            tokens,
            domain: self.domain,
            language: self.language,
            difficulty: self.difficulty,
            format: self.format,
        };
        sample.validate()?;
        Ok(sample)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
    /// Cached empirical token distribution (token id -> probability).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_distribution: Option<BTreeMap<u32, f64>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        Self {
            name: name.into(),
            samples,
            token_distribution: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.samples.iter().map(Sample::token_count).sum()
    }

    /// Fills in tokens for samples that carry only text.
    pub fn materialize_tokens(&mut self, tokenizer: &FallbackTokenizer) {
        for sample in &mut self.samples {
            if sample.tokens.is_none() {
                let tokens = tokenizer.encode(&sample.text);
                if !tokens.is_empty() {
                    sample.tokens = Some(tokens);
                }
            }
        }
        self.token_distribution = None;
    }

    /// Concatenation of several datasets, in order.
    pub fn union<'a>(
        name: impl Into<String>,
        parts: impl IntoIterator<Item = &'a Dataset>,
    ) -> Self {
        let samples = parts
            .into_iter()
            .flat_map(|d| d.samples.iter().cloned())
            .collect();
        Dataset::new(name, samples)
    }

    /// Computes the sparse empirical distribution and stores it in the cache.
    pub fn with_cached_distribution(mut self) -> Result<Self> {
        self.token_distribution = Some(sparse_distribution(&self)?);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(self.samples.len());
        for (i, sample) in self.samples.iter().enumerate() {
            sample.validate()?;
            if let Some(first) = seen.insert(sample.id.as_str(), i) {
                return Err(ColaError::Validation(format!(
                    "duplicate sample id `{}` at positions {first} and {i}",
                    sample.id
                )));
            }
        }
        if let Some(cached) = &self.token_distribution {
            let total: f64 = cached.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(ColaError::Validation(format!(
                    "cached token distribution sums to {total}"
                )));
            }
            let fresh = sparse_distribution(self)?;
            let matches = fresh.len() == cached.len()
                && fresh
                    .iter()
                    .all(|(t, p)| cached.get(t).is_some_and(|q| (p - q).abs() <= 1e-12));
            if !matches {
                return Err(ColaError::Validation(
                    "cached token distribution is stale".to_string(),
                ));
            }
        }
        Ok(())
    }
}

fn sparse_distribution(d: &Dataset) -> Result<BTreeMap<u32, f64>> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for &t in d.samples.iter().flat_map(|s| s.token_ids()) {
        *counts.entry(t).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(ColaError::InsufficientData(format!(
            "dataset `{}` has no tokens",
            d.name
        )));
    }
    Ok(counts
        .into_iter()
        .map(|(t, c)| (t, c as f64 / total as f64))
        .collect())
}

/// Dense token distribution over `[0, vocab_size)`: entry t = count(t) / total.
pub fn token_distribution(d: &Dataset, vocab_size: usize) -> Result<Vec<f64>> {
    if vocab_size == 0 {
        return Err(ColaError::Argument("vocab_size must be positive".into()));
    }
    let mut counts = vec![0u64; vocab_size];
    let mut total = 0u64;
    for &t in d.samples.iter().flat_map(|s| s.token_ids()) {
        let slot = counts
            .get_mut(t as usize)
            .ok_or(ColaError::TokenOutOfRange {
                token: t,
                vocab_size,
            })?;
        *slot += 1;
        total += 1;
    }
    if total == 0 {
        return Err(ColaError::InsufficientData(format!(
            "dataset `{}` has no tokens",
            d.name
        )));
    }
    let total = total as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

fn name_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a JSONL dataset. Blank lines are skipped; line numbers are 1-based.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ColaError::io(path, e))?;
    let mut samples = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ColaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| ColaError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let raw: SampleLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let sample = raw.into_sample().map_err(|e| parse_err(e.to_string()))?;
        if let Some(first) = first_seen.get(&sample.id) {
            return Err(parse_err(format!(
                "duplicate sample id `{}` (first seen on line {first})",
                sample.id
            )));
        }
        first_seen.insert(sample.id.clone(), line_no);
        samples.push(sample);
    }
    Ok(Dataset::new(name_from_path(path), samples))
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ColaError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for sample in &d.samples {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n").map_err(|e| ColaError::io(path, e))?;
    }
    out.flush().map_err(|e| ColaError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new()
            .suffix(".jsonl")
            .tempfile()
            .unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn line(id: &str, tokens: &str) -> String {
        format!(
            r#"{{"id":"{id}","text":"t {id}","tokens":{tokens},"domain":"math","language":"en","format":"raw"}}"#
        )
    }

    #[test]
    fn loads_in_order() {
        let lines = [line("a", "[1,2]"), line("b", "[3]"), line("c", "[4,5,6]")];
        let f = write_lines(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        let d = load_dataset(f.path()).unwrap();
        let ids: Vec<&str> = d.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(d.samples[2].token_ids(), &[4, 5, 6]);
        d.validate().unwrap();
    }

    #[test]
    fn empty_file_is_empty_dataset_named_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wikitext.jsonl");
        File::create(&path).unwrap();
        let d = load_dataset(&path).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.name, "wikitext");
    }

    #[test]
    fn duplicate_id_reports_second_line() {
        let lines = [
            line("s1", "[1]"),
            line("s2", "[1]"),
            line("s3", "[1]"),
            line("s1", "[2]"),
        ];
        let f = write_lines(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        match load_dataset(f.path()) {
            Err(ColaError::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("s1"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let good = line("a", "[1]");
        let f = write_lines(&[good.as_str(), "{not json"]);
        match load_dataset(f.path()) {
            Err(ColaError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_tokens_and_bad_difficulty() {
        let f = write_lines(&[&line("a", "[1,-2]")]);
        let err = load_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains("invalid token id -2"), "{err}");

        let bad = r#"{"id":"x","text":"t","domain":"code","language":"en","difficulty":1.5,"format":"qa"}"#;
        let f = write_lines(&[bad]);
        assert!(load_dataset(f.path()).is_err());

        let empty = line("e", "[]");
        let f = write_lines(&[empty.as_str()]);
        assert!(load_dataset(f.path()).is_err());
    }

    #[test]
    fn save_then_load_preserves_samples() {
        let mut s = Sample::new("q1", "What is 2+2? It is 4.", vec![5, 6, 7]);
        s.difficulty = Some(0.25);
        s.format = Format::QaErc;
        s.domain = Domain::Math;
        let text_only = Sample {
            tokens: None,
            ..Sample::new("q2", "plain text", vec![])
        };
        let d = Dataset::new("mix", vec![s, text_only]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mix.jsonl");
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn token_distribution_direct_counts() {
        let d = Dataset::new("d", vec![Sample::new("a", "", vec![0, 0, 1])]);
        let p = token_distribution(&d, 2).unwrap();
        assert_eq!(p, vec![2.0 / 3.0, 1.0 / 3.0]);

        let d = Dataset::new(
            "d",
            vec![Sample::new("a", "", vec![0]), Sample::new("b", "", vec![1])],
        );
        assert_eq!(token_distribution(&d, 2).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn token_distribution_errors() {
        let d = Dataset::new("d", vec![Sample::new("a", "", vec![0, 7])]);
        assert!(matches!(
            token_distribution(&d, 5),
            Err(ColaError::TokenOutOfRange {
                token: 7,
                vocab_size: 5
            })
        ));
        let empty = Dataset::new("e", vec![]);
        assert!(matches!(
            token_distribution(&empty, 5),
            Err(ColaError::InsufficientData(_))
        ));
    }

    #[test]
    fn cached_distribution_is_validated() {
        let d = Dataset::new("d", vec![Sample::new("a", "", vec![3, 3, 9])])
            .with_cached_distribution()
            .unwrap();
        d.validate().unwrap();
        let mut stale = d.clone();
        stale.samples.push(Sample::new("b", "", vec![1]));
        assert!(stale.validate().is_err());
    }

    #[test]
    fn materialize_uses_fallback_only_where_missing() {
        let tok = FallbackTokenizer::new(1000);
        let mut d = Dataset::new(
            "d",
            vec![
                Sample {
                    tokens: None,
                    ..Sample::new("a", "Hello world", vec![])
                },
                Sample::new("b", "ignored", vec![1, 2]),
            ],
        );
        d.materialize_tokens(&tok);
        assert_eq!(
            d.samples[0].token_ids(),
            tok.encode("hello world").as_slice()
        );
        assert_eq!(d.samples[1].token_ids(), &[1, 2]);
    }
}
