mod common;

use std::collections::HashMap;

use cola::coverage::{
    coverage, emb_sim, kl_divergence, select_datasets, CoverageOptions, EmbeddingProvider,
    HashingEmbedder,
};
use cola::data_model::{token_distribution, CapabilitySpec, Dataset, Sample};
use common::{rng, text_dataset};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const VOCAB: usize = 4096;

const SCIENCE: &[&str] = &[
    "atom", "cell", "energy", "force", "gene", "orbit", "quark", "wave",
];
const COOKING: &[&str] = &[
    "bake", "broth", "flour", "knead", "oven", "salt", "simmer", "whisk",
];
const LAW: &[&str] = &[
    "appeal", "clause", "court", "statute", "tort", "verdict", "witness", "writ",
];
const MUSIC: &[&str] = &[
    "chord", "fugue", "octave", "rhythm", "tempo", "timbre", "tune", "violin",
];

fn random_dist(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

#[test]
fn token_distribution_matches_counting() {
    let mut r = rng(11);
    let samples = (0..100)
        .map(|i| {
            let len = r.gen_range(1..40);
            let tokens: Vec<u32> = (0..len).map(|_| r.gen_range(0..50)).collect();
            Sample::new(format!("s{i}"), "x", tokens)
        })
        .collect();
    let d = Dataset::new("d", samples);

    let mut counts: HashMap<u32, usize> = HashMap::new();
    let mut total = 0usize;
    for s in &d.samples {
        for &t in s.tokens.as_ref().unwrap() {
            *counts.entry(t).or_default() += 1;
            total += 1;
        }
    }
    let got = token_distribution(&d, 50).unwrap();
    for (t, p) in got.iter().enumerate() {
        let want = counts.get(&(t as u32)).copied().unwrap_or(0) as f64 / total as f64;
        assert_eq!(*p, want, "token {t}");
    }
}

#[test]
fn kl_matches_summation_oracle() {
    let mut r = rng(5);
    let eps = 1e-9;
    for _ in 0..20 {
        let p = random_dist(&mut r, 100);
        let q = random_dist(&mut r, 100);
        let pn = 1.0 + 100.0 * eps;
        let mut want = 0.0;
        for i in 0..100 {
            let a = (p[i] + eps) / pn;
            let b = (q[i] + eps) / pn;
            want += a * (a.ln() - b.ln());
        }
        let got = kl_divergence(&p, &q, eps).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn kl_point_mass_against_uniform() {
    let got = kl_divergence(&[1.0, 0.0], &[0.5, 0.5], 1e-9).unwrap();
    assert!((got - std::f64::consts::LN_2).abs() < 1e-6, "{got}");
}

#[test]
fn emb_sim_matches_centroid_oracle() {
    let e = HashingEmbedder::default();
    let a = text_dataset("a", &[SCIENCE, COOKING].concat(), 10, 12, 1, VOCAB);
    let b = text_dataset("b", &[SCIENCE, LAW].concat(), 10, 12, 2, VOCAB);
    let centroid = |d: &Dataset| {
        let mut c = vec![0.0; e.dim()];
        for s in &d.samples {
            for (ci, v) in c.iter_mut().zip(e.embed(&s.text)) {
                *ci += v / d.len() as f64;
            }
        }
        c
    };
    let (ca, cb) = (centroid(&a), centroid(&b));
    let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let na: f64 = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
    let want = dot / (na * nb);
    let got = emb_sim(&a, &b, &e).unwrap();
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn self_coverage_and_degenerate_alpha() {
    let e = HashingEmbedder::default();
    let d = text_dataset("d", SCIENCE, 8, 10, 3, VOCAB);
    let cap = CapabilitySpec::new("science", 1.0, d.clone());
    let opts = CoverageOptions::new(VOCAB);
    let score = coverage(&d, &cap, &e, &opts).unwrap();
    assert!((score.combined - 1.0).abs() < 1e-9);

    let other = text_dataset("o", &[SCIENCE, LAW].concat(), 8, 10, 4, VOCAB);
    let alpha_one = CoverageOptions { alpha: 1.0, ..opts };
    let s = coverage(&other, &cap, &e, &alpha_one).unwrap();
    assert_eq!(s.combined, emb_sim(&other, &d, &e).unwrap());
}

#[test]
fn disjoint_vocabularies_score_below_self() {
    let e = HashingEmbedder::default();
    let opts = CoverageOptions::new(VOCAB);
    let a = text_dataset("a", COOKING, 8, 10, 5, VOCAB);
    let b = text_dataset("b", MUSIC, 8, 10, 6, VOCAB);
    let cross = coverage(&a, &CapabilitySpec::new("b", 1.0, b.clone()), &e, &opts).unwrap();
    for d in [&a, &b] {
        let own = coverage(d, &CapabilitySpec::new("self", 1.0, d.clone()), &e, &opts).unwrap();
        assert!(cross.combined < own.combined);
    }
}

/// Weighted objective of a union, computed directly from `coverage`.
fn objective(parts: &[&Dataset], caps: &[CapabilitySpec], opts: &CoverageOptions) -> f64 {
    let union = Dataset::union("union", parts.iter().copied());
    caps.iter()
        .map(|c| {
            c.weight
                * coverage(&union, c, &HashingEmbedder::default(), opts)
                    .unwrap()
                    .combined
        })
        .sum()
}

#[test]
fn greedy_matches_exhaustive_search() {
    let opts = CoverageOptions::new(VOCAB);
    let pool = vec![
        text_dataset("law", LAW, 10, 12, 10, VOCAB),
        text_dataset("science", SCIENCE, 10, 12, 11, VOCAB),
        text_dataset("music", MUSIC, 10, 12, 12, VOCAB),
        text_dataset("cooking", COOKING, 10, 12, 13, VOCAB),
    ];
    let caps = vec![
        CapabilitySpec::new(
            "science",
            2.0,
            text_dataset("ref-science", SCIENCE, 6, 12, 20, VOCAB),
        ),
        CapabilitySpec::new(
            "cooking",
            1.0,
            text_dataset("ref-cooking", COOKING, 6, 12, 21, VOCAB),
        ),
    ];
    let picks = select_datasets(&pool, &caps, 2, &HashingEmbedder::default(), &opts).unwrap();

    let mut best = (f64::NEG_INFINITY, (0, 0));
    for i in 0..4 {
        for j in i + 1..4 {
            let v = objective(&[&pool[i], &pool[j]], &caps, &opts);
            if v > best.0 {
                best = (v, (i, j));
            }
        }
    }
    let mut chosen = [picks[0].index, picks[1].index];
    chosen.sort();
    assert_eq!((chosen[0], chosen[1]), best.1);
    assert_eq!(picks[0].name, "science");
    assert!((picks[1].objective - best.0).abs() < 1e-9);
}

#[test]
fn dominant_capability_reference_is_picked_first() {
    let opts = CoverageOptions::new(VOCAB);
    let domains = [SCIENCE, COOKING, LAW, MUSIC];
    for dominant in 0..4 {
        let refs: Vec<Dataset> = domains
            .iter()
            .enumerate()
            .map(|(i, w)| text_dataset(&format!("ref{i}"), w, 6, 10, 30 + i as u64, VOCAB))
            .collect();
        let caps: Vec<CapabilitySpec> = refs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                CapabilitySpec::new(
                    format!("c{i}"),
                    if i == dominant { 10.0 } else { 1.0 },
                    r.clone(),
                )
            })
            .collect();
        let mut pool: Vec<Dataset> = domains
            .iter()
            .enumerate()
            .map(|(i, w)| {
                text_dataset(
                    &format!("pool{i}"),
                    &[*w, MUSIC].concat(),
                    8,
                    10,
                    40 + i as u64,
                    VOCAB,
                )
            })
            .collect();
        pool.push(refs[dominant].clone());
        let picks = select_datasets(&pool, &caps, 1, &HashingEmbedder::default(), &opts).unwrap();
        assert_eq!(picks[0].name, refs[dominant].name);
    }
}

#[test]
fn selection_is_deterministic_and_exhaustive_at_full_budget() {
    let opts = CoverageOptions::new(VOCAB);
    let pool = vec![
        text_dataset("a", LAW, 5, 8, 1, VOCAB),
        text_dataset("b", SCIENCE, 5, 8, 2, VOCAB),
        text_dataset("c", MUSIC, 5, 8, 3, VOCAB),
    ];
    let caps = vec![CapabilitySpec::new(
        "s",
        1.0,
        text_dataset("r", SCIENCE, 5, 8, 4, VOCAB),
    )];
    let e = HashingEmbedder::default();
    let first = select_datasets(&pool, &caps, 3, &e, &opts).unwrap();
    assert_eq!(first, select_datasets(&pool, &caps, 3, &e, &opts).unwrap());
    let mut names: Vec<&str> = first.iter().map(|p| p.name.as_str()).collect();
    names.sort();
    assert_eq!(names, ["a", "b", "c"]);
    assert!(select_datasets(&[], &caps, 1, &e, &opts).is_err());
}

proptest! {
    #[test]
    fn kl_of_identical_distributions_vanishes(raw in prop::collection::vec(0.0f64..1.0, 1..200)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        prop_assert!(kl_divergence(&p, &p, 1e-9).unwrap() <= 1e-9);
    }

    #[test]
    fn coverage_ignores_sample_order(seed in 0u64..1000) {
        let e = HashingEmbedder::default();
        let opts = CoverageOptions::new(VOCAB);
        let d = text_dataset("d", &[SCIENCE, LAW].concat(), 8, 10, seed, VOCAB);
        let cap = CapabilitySpec::new("c", 1.0, text_dataset("r", SCIENCE, 5, 10, seed + 1, VOCAB));
        let mut shuffled = d.clone();
        shuffled.samples.shuffle(&mut rng(seed));
        let a = coverage(&d, &cap, &e, &opts).unwrap().combined;
        let b = coverage(&shuffled, &cap, &e, &opts).unwrap().combined;
        prop_assert!((a - b).abs() < 1e-12);
    }
}
