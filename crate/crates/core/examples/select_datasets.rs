//! Greedy dataset selection against two capability references.

use cola::data_model::{CapabilitySpec, Sample};
use cola::{select_datasets, CoverageOptions, Dataset, FallbackTokenizer, HashingEmbedder};

fn dataset(name: &str, lines: &[&str], tokenizer: &FallbackTokenizer) -> Dataset {
    let samples = lines
        .iter()
        .enumerate()
        .map(|(i, text)| Sample::new(format!("{name}-{i}"), *text, tokenizer.encode(text)))
        .collect();
    Dataset::new(name, samples)
}

fn main() -> cola::Result<()> {
    let tok = FallbackTokenizer::new(4096);
    let pool = vec![
        dataset(
            "algebra",
            &[
                "solve for x in the linear equation",
                "factor the quadratic polynomial",
            ],
            &tok,
        ),
        dataset(
            "recipes",
            &[
                "whisk the eggs with sugar",
                "bake the bread for forty minutes",
            ],
            &tok,
        ),
        dataset(
            "rust",
            &[
                "the borrow checker rejects the mutable alias",
                "implement the iterator trait",
            ],
            &tok,
        ),
        dataset(
            "geometry",
            &[
                "the triangle has equal angles",
                "compute the area of the circle",
            ],
            &tok,
        ),
    ];
    let caps = vec![
        CapabilitySpec::new(
            "math",
            1.0,
            dataset(
                "math-ref",
                &["solve the equation and compute the area"],
                &tok,
            ),
        ),
        CapabilitySpec::new(
            "code",
            0.5,
            dataset("code-ref", &["implement the trait for the iterator"], &tok),
        ),
    ];
    let picks = select_datasets(
        &pool,
        &caps,
        2,
        &HashingEmbedder::default(),
        &CoverageOptions::new(4096),
    )?;
    for p in picks {
        println!(
            "{:<10} gain {:.4}  objective {:.4}",
            p.name, p.marginal_gain, p.objective
        );
    }
    Ok(())
}
