//! Compare pruning and quantization schemes on one random layer.

use cola::data_model::BlockPattern;
use cola::harness::{CalibrationBatch, LinearLayer, Matrix};
use cola::rng::GaussianStream;
use cola::{compress, reconstruction_error, CompressionScheme, SchemeKind};

fn main() -> cola::Result<()> {
    let g = GaussianStream::new(3);
    let layer = LinearLayer::new(
        "fc",
        Matrix::from_fn(32, 64, |i, j| g.at((i * 64 + j) as u64) / 8.0),
    );
    // Channels share four latent factors, as real activations do.
    let inputs = |offset: u64, n: usize| {
        Matrix::from_fn(64, n, |i, j| {
            let own = g.at(offset + (i * n + j) as u64);
            let shared = g.at(offset + 1_000_000 + ((i % 4) * n + j) as u64);
            0.3 * own + 2.0 * shared
        })
    };
    let calib = CalibrationBatch::new(inputs(10_000_000, 256))?;
    let eval = CalibrationBatch::new(inputs(20_000_000, 96))?;

    let schemes = [
        CompressionScheme::pruning(SchemeKind::MagnitudePrune, 0.5),
        CompressionScheme::pruning(SchemeKind::WandaPrune, 0.5),
        CompressionScheme::semi_structured(SchemeKind::WandaPrune, BlockPattern::FOUR_OF_EIGHT),
        CompressionScheme::pruning(SchemeKind::ReconstructPrune, 0.5),
        CompressionScheme::quantization(SchemeKind::RtnQuant, 4, 16),
        CompressionScheme::quantization(SchemeKind::ScaledQuant, 4, 16),
    ];
    for scheme in &schemes {
        let out = compress(&layer, &calib, scheme)?;
        println!(
            "{:<18} sparsity {:.2}  eval error {:.4}",
            format!("{:?}", scheme.kind),
            out.sparsity(),
            reconstruction_error(&layer, &out, &eval)?
        );
    }
    Ok(())
}
