#![allow(dead_code)]

use cola::data_model::{Dataset, FallbackTokenizer, Sample};
use cola::harness::{LinearLayer, Matrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    cola::rng::seeded_rng(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> LinearLayer {
    LinearLayer::new("random", random_matrix(rng, rows, cols))
}

/// Text dataset drawn from `words`; tokens come from the fallback tokenizer.
pub fn text_dataset(
    name: &str,
    words: &[&str],
    samples: usize,
    len: usize,
    seed: u64,
    vocab: usize,
) -> Dataset {
    let tok = FallbackTokenizer::new(vocab);
    let mut r = rng(seed);
    let samples = (0..samples)
        .map(|i| {
            let text: Vec<&str> = (0..len)
                .map(|_| words[r.gen_range(0..words.len())])
                .collect();
            let text = text.join(" ");
            let tokens = tok.encode(&text);
            Sample::new(format!("{name}-{i}"), text, tokens)
        })
        .collect();
    Dataset::new(name, samples)
}

/// Naive DFT magnitudes of the non-negative half, averaged over rows.
pub fn naive_spectrum(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = vec![0.0; cols / 2 + 1];
    for i in 0..rows {
        for (k, slot) in out.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for t in 0..cols {
                let angle = -2.0 * std::f64::consts::PI * (k * t) as f64 / cols as f64;
                re += m.get(i, t) * angle.cos();
                im += m.get(i, t) * angle.sin();
            }
            *slot += (re * re + im * im).sqrt();
        }
    }
    out.iter().map(|s| s / rows as f64).collect()
}

/// `||(W - W_hat) X||_F` by explicit loops.
pub fn naive_reconstruction_error(w: &Matrix, w_hat: &Matrix, x: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..w.rows() {
        for t in 0..x.cols() {
            let mut acc = 0.0;
            for j in 0..w.cols() {
                acc += (w.get(i, j) - w_hat.get(i, j)) * x.get(j, t);
            }
            total += acc * acc;
        }
    }
    total.sqrt()
}

const TOPICS: [(&str, &[&str]); 4] = [
    (
        "math",
        &[
            "sum", "prime", "angle", "proof", "ratio", "integer", "matrix", "limit",
        ],
    ),
    (
        "code",
        &[
            "loop", "stack", "parser", "thread", "buffer", "index", "compile", "return",
        ],
    ),
    (
        "history",
        &[
            "empire", "treaty", "dynasty", "revolt", "charter", "border", "throne", "siege",
        ],
    ),
    (
        "cooking",
        &[
            "bake", "broth", "flour", "knead", "oven", "salt", "simmer", "whisk",
        ],
    ),
];

fn text_lines(name: &str, words: &[&str], samples: usize, seed: u64) -> String {
    let mut r = rng(seed);
    let mut out = String::new();
    for i in 0..samples {
        let sentences: Vec<String> = (0..3)
            .map(|_| {
                let w: Vec<&str> = (0..20)
                    .map(|_| words[r.gen_range(0..words.len())])
                    .collect();
                format!("{}.", w.join(" "))
            })
            .collect();
        let difficulty = r.gen_range(0.0..=1.0);
        out.push_str(&format!(
            "{{\"id\":\"{name}-{i}\",\"text\":\"{}\",\"domain\":\"other\",\"language\":\"en\",\"difficulty\":{difficulty},\"format\":\"raw\"}}\n",
            sentences.join(" ")
        ));
    }
    out
}

/// Text-only pool of four topic datasets plus two capability references.
/// Returns the pool file names.
pub fn write_text_bundle(dir: &std::path::Path) -> Vec<String> {
    std::fs::create_dir_all(dir.join("pool")).unwrap();
    std::fs::create_dir_all(dir.join("refs")).unwrap();
    let mut pool = Vec::new();
    for (i, (name, words)) in TOPICS.iter().enumerate() {
        let file = format!("pool/{name}.jsonl");
        std::fs::write(dir.join(&file), text_lines(name, words, 12, i as u64)).unwrap();
        pool.push(file);
    }
    std::fs::write(
        dir.join("refs/math.jsonl"),
        text_lines("ref-math", TOPICS[0].1, 5, 100),
    )
    .unwrap();
    std::fs::write(
        dir.join("refs/code.jsonl"),
        text_lines("ref-code", TOPICS[1].1, 5, 101),
    )
    .unwrap();
    pool
}

pub fn text_config(pool: &[String], extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = serde_json::json!({
        "seed": 7,
        "pool": pool,
        "capabilities": [
            { "capability": "math", "weight": 2.0, "reference": "refs/math.jsonl" },
            { "capability": "code", "weight": 1.0, "reference": "refs/code.jsonl" }
        ],
        "budget": 2,
        "vocab_size": 1024,
        "processing": { "target_length": 40, "min_length": 8 }
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    cfg
}

pub fn write_config(dir: &std::path::Path, cfg: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Activation rows (L = 2 segments of 8) for the given ids.
pub fn activations_for(ids: &[String], seed: u64) -> cola::data_model::ActivationMatrix {
    let g = cola::rng::GaussianStream::new(seed);
    let rows: Vec<Vec<f64>> = (0..ids.len())
        .map(|i| (0..16).map(|j| g.at((i * 16 + j) as u64)).collect())
        .collect();
    cola::data_model::ActivationMatrix::from_rows(ids.to_vec(), vec![8, 8], &rows).unwrap()
}
