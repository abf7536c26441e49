//! Frequency-domain view of weight matrices.
//!
//! Each output row is transformed along the input dimension; magnitudes of
//! the non-negative frequency bins are averaged over rows. Bin `k` of a
//! `c`-wide row sits at normalized frequency `2k / c`, so Nyquist is 1.
//! Bands split at 0.2 and 0.6: `[0, 0.2)` low, `[0.2, 0.6)` mid, `[0.6, 1]` high.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ColaError, Result};
use crate::harness::LinearLayer;

pub const LOW_MID_EDGE: f64 = 0.2;
pub const MID_HIGH_EDGE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    pub fn of(frequency: f64) -> Band {
        if frequency < LOW_MID_EDGE {
            Band::Low
        } else if frequency < MID_HIGH_EDGE {
            Band::Mid
        } else {
            Band::High
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if frequencies.len() != magnitudes.len() {
            return Err(ColaError::Shape(format!(
                "{} frequencies for {} magnitudes",
                frequencies.len(),
                magnitudes.len()
            )));
        }
        Ok(Self {
            frequencies,
            magnitudes,
        })
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn total_energy(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }

    fn band_bins(&self, band: Band) -> impl Iterator<Item = f64> + '_ {
        self.frequencies
            .iter()
            .zip(&self.magnitudes)
            .filter(move |(&f, _)| Band::of(f) == band)
            .map(|(_, &m)| m)
    }
}

/// Normalized frequency of every non-negative bin of a length-`n` transform.
pub fn bin_frequencies(n: usize) -> Vec<f64> {
    (0..=n / 2).map(|k| 2.0 * k as f64 / n as f64).collect()
}

/// Row-averaged DFT magnitude spectrum of the layer's weights.
pub fn weight_spectrum(layer: &LinearLayer) -> Result<Spectrum> {
    let (rows, cols) = layer.weights.shape();
    if cols < 2 {
        return Err(ColaError::Argument(format!(
            "layer `{}` needs at least 2 inputs",
            layer.name
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cols);
    let bins = cols / 2 + 1;
    let mut sums = vec![0.0; bins];
    let mut buffer = vec![Complex::new(0.0, 0.0); cols];
    for i in 0..rows {
        buffer
            .iter_mut()
            .zip(layer.weights.row(i))
            .for_each(|(b, &w)| *b = Complex::new(w, 0.0));
        fft.process(&mut buffer);
        sums.iter_mut()
            .zip(&buffer)
            .for_each(|(s, z)| *s += z.norm());
    }
    let magnitudes = sums.into_iter().map(|s| s / rows as f64).collect();
    Spectrum::new(bin_frequencies(cols), magnitudes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEnergies {
    /// Sum of squared magnitudes per (low, mid, high) band.
    pub energy: [f64; 3],
    /// `energy / total`; all zero for an all-zero spectrum.
    pub fraction: [f64; 3],
}

pub fn band_energies(spectrum: &Spectrum) -> Result<BandEnergies> {
    if spectrum.is_empty() {
        return Err(ColaError::Argument("empty spectrum".into()));
    }
    let mut energy = [0.0; 3];
    for (&f, &m) in spectrum.frequencies.iter().zip(&spectrum.magnitudes) {
        energy[Band::of(f) as usize] += m * m;
    }
    let total: f64 = energy.iter().sum();
    let fraction = if total > 0.0 {
        energy.map(|e| e / total)
    } else {
        [0.0; 3]
    };
    Ok(BandEnergies { energy, fraction })
}

fn band_means(spectrum: &Spectrum) -> [Option<f64>; 3] {
    [Band::Low, Band::Mid, Band::High].map(|band| {
        let (sum, count) = spectrum
            .band_bins(band)
            .fold((0.0, 0usize), |(s, c), m| (s + m, c + 1));
        (count > 0).then(|| sum / count as f64)
    })
}

/// Per-band ratio of mean compressed magnitude to mean original magnitude.
/// A band is `None` when it has no bins or the original band is all zero.
pub fn compression_ratio(
    original: &LinearLayer,
    compressed: &LinearLayer,
) -> Result<[Option<f64>; 3]> {
    if original.weights.shape() != compressed.weights.shape() {
        return Err(ColaError::Shape(format!(
            "original {:?} vs compressed {:?}",
            original.weights.shape(),
            compressed.weights.shape()
        )));
    }
    let before = band_means(&weight_spectrum(original)?);
    let after = band_means(&weight_spectrum(compressed)?);
    Ok(std::array::from_fn(|b| match (before[b], after[b]) {
        (Some(o), Some(c)) if o > 0.0 => Some(c / o),
        _ => None,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub layer_name: String,
    pub frequencies: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub band_energy: [f64; 3],
    pub band_fraction: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<[Option<f64>; 3]>,
}

pub fn spectrum_report(
    original: &LinearLayer,
    compressed: Option<&LinearLayer>,
) -> Result<SpectrumReport> {
    let spectrum = weight_spectrum(original)?;
    let bands = band_energies(&spectrum)?;
    let ratio = compressed
        .map(|c| compression_ratio(original, c))
        .transpose()?;
    Ok(SpectrumReport {
        layer_name: original.name.clone(),
        frequencies: spectrum.frequencies,
        spectrum: spectrum.magnitudes,
        band_energy: bands.energy,
        band_fraction: bands.fraction,
        ratio,
    })
}

/// Reports for paired banks; layers are matched by position.
pub fn spectrum_reports(
    original: &[LinearLayer],
    compressed: Option<&[LinearLayer]>,
) -> Result<Vec<SpectrumReport>> {
    if let Some(c) = compressed {
        if c.len() != original.len() {
            return Err(ColaError::Shape(format!(
                "{} original layers vs {} compressed layers",
                original.len(),
                c.len()
            )));
        }
    }
    original
        .iter()
        .enumerate()
        .map(|(i, layer)| spectrum_report(layer, compressed.map(|c| &c[i])))
        .collect()
}
