//! Band energies of a layer and how pruning shifts them.

use cola::harness::{magnitude_prune, LinearLayer, Matrix};
use cola::rng::GaussianStream;
use cola::spectral::spectrum_report;

fn main() -> cola::Result<()> {
    let g = GaussianStream::new(0);
    let layer = LinearLayer::new(
        "w",
        Matrix::from_fn(64, 128, |i, j| g.at((i * 128 + j) as u64)),
    );
    let pruned = magnitude_prune(&layer, 0.5)?;
    let report = spectrum_report(&layer, Some(&pruned))?;
    println!("band energy   {:?}", report.band_energy);
    println!("band fraction {:?}", report.band_fraction);
    for (band, ratio) in ["low", "mid", "high"]
        .iter()
        .zip(report.ratio.unwrap_or([None; 3]))
    {
        match ratio {
            Some(r) => println!("{band:<4} compressed/original {r:.4}"),
            None => println!("{band:<4} n/a"),
        }
    }
    Ok(())
}
