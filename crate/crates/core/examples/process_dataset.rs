//! Filter, QA-wrap, chunk and difficulty-mix a small dataset.

use cola::data_model::Sample;
use cola::processing::FormatPolicy;
use cola::{process, Dataset, FallbackTokenizer, ProcessingConfig};

fn main() -> cola::Result<()> {
    let tok = FallbackTokenizer::new(1024);
    let samples = (0..30)
        .map(|i| {
            let text = format!(
                "Question {i} asks about sums. Add the first {i} numbers one by one. The answer follows from the formula."
            );
            let mut s = Sample::new(format!("q{i}"), text.clone(), tok.encode(&text));
            s.difficulty = Some(i as f64 / 30.0);
            s
        })
        .collect();
    let d = Dataset::new("arith", samples);
    let cfg = ProcessingConfig {
        target_length: 48,
        min_length: 8,
        format_policy: FormatPolicy::WrapQa,
        difficulty_mix: Some([0.5, 0.3, 0.2]),
        seed: 11,
    };
    let out = process(&d, &cfg, Some(6), &tok)?;
    for s in &out.samples {
        println!(
            "{:<8} {:>3} tokens  difficulty {:.2}",
            s.id,
            s.token_count(),
            s.difficulty.unwrap_or(0.0)
        );
    }
    Ok(())
}
