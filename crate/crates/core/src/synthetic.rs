//! Synthetic activation banks and weight banks with known structure.
//!
//! The comparison bundle models a skewed candidate pool: activation
//! signatures come from `n_blobs` clusters ("capabilities") whose candidate
//! shares decay geometrically, while the evaluation set draws every cluster
//! equally. Each cluster has, per layer segment, its own mean direction and
//! a low-rank spread subspace plus small isotropic noise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation_selection::{Points, DEFAULT_REDUCED_DIM};
use crate::data_model::{write_activations, ActivationMatrix, CompressionScheme, SchemeKind};
use crate::error::{ColaError, Result};
use crate::harness::{write_layer_bank, LinearLayer, Matrix};
use crate::rng::{derive_seed, GaussianStream};

/// Sequential reader over a [`GaussianStream`].
struct Normals {
    stream: GaussianStream,
    next: u64,
}

impl Normals {
    fn new(seed: u64) -> Self {
        Self {
            stream: GaussianStream::new(seed),
            next: 0,
        }
    }

    fn sample(&mut self) -> f64 {
        let z = self.stream.at(self.next);
        self.next += 1;
        z
    }

    fn vector(&mut self, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * self.sample()).collect()
    }
}

/// Isotropic Gaussian blobs. Returns the points (blob-major order) and labels.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    per_blob: usize,
    std: f64,
    seed: u64,
) -> Result<(Points, Vec<usize>)> {
    let dim = centers.first().map(Vec::len).unwrap_or(0);
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(ColaError::Argument(
            "blob centers must share a positive dimension".into(),
        ));
    }
    let mut normals = Normals::new(seed);
    let mut data = Vec::with_capacity(centers.len() * per_blob * dim);
    let mut labels = Vec::with_capacity(centers.len() * per_blob);
    for (b, center) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            data.extend(center.iter().map(|c| c + std * normals.sample()));
            labels.push(b);
        }
    }
    Ok((Points::new(dim, data)?, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub n_candidates: usize,
    pub n_eval: usize,
    pub n_blobs: usize,
    pub layer_dims: Vec<usize>,
    pub n_layers: usize,
    pub layer_rows: usize,
    /// Candidate share of blob `b` is proportional to `skew^b`.
    pub skew: f64,
    /// Norm of each blob mean per layer segment.
    pub mean_norm: f64,
    pub spread_rank: usize,
    pub spread_std: f64,
    pub noise_std: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        Self {
            n_candidates: 1000,
            n_eval: 400,
            n_blobs: 8,
            layer_dims: vec![128; 4],
            n_layers: 16,
            layer_rows: 64,
            skew: 0.6,
            mean_norm: 6.0,
            spread_rank: 6,
            spread_std: 1.0,
            noise_std: 0.1,
            k: 64,
            seed: 2024,
        }
    }
}

struct BlobModel {
    /// `means[b][l]`: mean of blob `b` in segment `l`.
    means: Vec<Vec<Vec<f64>>>,
    /// `bases[b][l]`: `spread_rank` directions of length `layer_dims[l]`.
    bases: Vec<Vec<Vec<Vec<f64>>>>,
}

impl BlobModel {
    fn new(spec: &ComparisonSpec) -> Self {
        let mut normals = Normals::new(derive_seed(spec.seed, "synthetic/blobs"));
        let mut means = Vec::with_capacity(spec.n_blobs);
        let mut bases = Vec::with_capacity(spec.n_blobs);
        for _ in 0..spec.n_blobs {
            let mut blob_means = Vec::new();
            let mut blob_bases = Vec::new();
            for &dim in &spec.layer_dims {
                let mut mean = normals.vector(dim, 1.0);
                let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
                mean.iter_mut().for_each(|v| *v *= spec.mean_norm / norm);
                blob_means.push(mean);
                let scale = 1.0 / (dim as f64).sqrt();
                blob_bases.push(
                    (0..spec.spread_rank)
                        .map(|_| normals.vector(dim, scale))
                        .collect(),
                );
            }
            means.push(blob_means);
            bases.push(blob_bases);
        }
        Self { means, bases }
    }

    fn draw(&self, spec: &ComparisonSpec, blob: usize, normals: &mut Normals) -> Vec<f64> {
        let mut row = Vec::with_capacity(spec.layer_dims.iter().sum());
        for (l, &dim) in spec.layer_dims.iter().enumerate() {
            let coeffs = normals.vector(spec.spread_rank, spec.spread_std);
            let mut segment = self.means[blob][l].clone();
            for (c, dir) in coeffs.iter().zip(&self.bases[blob][l]) {
                segment.iter_mut().zip(dir).for_each(|(s, d)| *s += c * d);
            }
            for s in segment.iter_mut().take(dim) {
                *s += spec.noise_std * normals.sample();
            }
            row.extend(segment);
        }
        row
    }
}

/// Blob index of every candidate: geometric shares, apportioned exactly.
fn candidate_labels(spec: &ComparisonSpec) -> Vec<usize> {
    let weights: Vec<f64> = (0..spec.n_blobs)
        .map(|b| spec.skew.powi(b as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| ((w / total) * spec.n_candidates as f64).floor().max(1.0) as usize)
        .collect();
    let mut b = 0;
    while counts.iter().sum::<usize>() < spec.n_candidates {
        counts[b % spec.n_blobs] += 1;
        b += 1;
    }
    while counts.iter().sum::<usize>() > spec.n_candidates {
        let largest = (0..spec.n_blobs)
            .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
            .unwrap();
        counts[largest] -= 1;
    }
    counts
        .iter()
        .enumerate()
        .flat_map(|(b, &c)| std::iter::repeat_n(b, c))
        .collect()
}

pub struct ComparisonData {
    pub candidates: ActivationMatrix,
    pub candidate_labels: Vec<usize>,
    pub eval: ActivationMatrix,
    pub layers: Vec<LinearLayer>,
}

pub fn comparison_data(spec: &ComparisonSpec) -> Result<ComparisonData> {
    if spec.n_blobs == 0 || spec.n_candidates < spec.n_blobs || spec.layer_dims.is_empty() {
        return Err(ColaError::Argument("degenerate synthetic spec".into()));
    }
    let model = BlobModel::new(spec);

    let labels = candidate_labels(spec);
    // Interleave blobs so row order carries no label information.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| derive_seed(spec.seed, &format!("synthetic/order/{i}")));
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();

    let mut normals = Normals::new(derive_seed(spec.seed, "synthetic/candidates"));
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&b| model.draw(spec, b, &mut normals))
        .collect();
    let ids = (0..rows.len()).map(|i| format!("cand-{i:04}")).collect();
    let candidates = ActivationMatrix::from_rows(ids, spec.layer_dims.clone(), &rows)?;

    let mut normals = Normals::new(derive_seed(spec.seed, "synthetic/eval"));
    let rows: Vec<Vec<f64>> = (0..spec.n_eval)
        .map(|i| model.draw(spec, i % spec.n_blobs, &mut normals))
        .collect();
    let ids = (0..rows.len()).map(|i| format!("eval-{i:04}")).collect();
    let eval = ActivationMatrix::from_rows(ids, spec.layer_dims.clone(), &rows)?;

    let layers = random_layers(spec, derive_seed(spec.seed, "synthetic/layers"))?;
    Ok(ComparisonData {
        candidates,
        candidate_labels: labels,
        eval,
        layers,
    })
}

/// `n_layers` Gaussian layers of shape `layer_rows x layer_dims[i % L]` with
/// entry variance `1 / cols`. Values are rounded through f32 so the bank
/// survives a file round trip unchanged.
fn random_layers(spec: &ComparisonSpec, seed: u64) -> Result<Vec<LinearLayer>> {
    let cols = spec.layer_dims[0];
    if spec.layer_dims.iter().any(|&d| d != cols) {
        return Err(ColaError::Argument(
            "weight banks need equal segment widths".into(),
        ));
    }
    let mut normals = Normals::new(seed);
    (0..spec.n_layers)
        .map(|i| {
            let data = normals
                .vector(spec.layer_rows * cols, 1.0 / (cols as f64).sqrt())
                .into_iter()
                .map(|v| f64::from(v as f32))
                .collect();
            Ok(LinearLayer::new(
                format!("layer.{i:02}"),
                Matrix::new(spec.layer_rows, cols, data)?,
            ))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub config: PathBuf,
    pub activations: PathBuf,
    pub eval: PathBuf,
    pub layers: PathBuf,
}

/// Writes activations, eval activations, weight bank and a pipeline config
/// (activation-only mode, 50% refit pruning) into `dir`.
pub fn write_comparison_bundle(dir: &Path, spec: &ComparisonSpec) -> Result<BundlePaths> {
    std::fs::create_dir_all(dir).map_err(|e| ColaError::io(dir, e))?;
    let data = comparison_data(spec)?;
    let paths = BundlePaths {
        config: dir.join("config.json"),
        activations: dir.join("acts.cola"),
        eval: dir.join("eval.cola"),
        layers: dir.join("layers.cola"),
    };
    write_activations(&data.candidates, &paths.activations)?;
    write_activations(&data.eval, &paths.eval)?;
    write_layer_bank(&data.layers, &paths.layers)?;
    let config = serde_json::json!({
        "seed": spec.seed,
        "out_dir": "out",
        "activations": "acts.cola",
        "projection": { "reduced_dim": DEFAULT_REDUCED_DIM.min(spec.layer_dims.iter().sum()) },
        "kmeans": { "k": spec.k },
        "scheme": CompressionScheme::pruning(SchemeKind::ReconstructPrune, 0.5),
        "layers": "layers.cola",
        "eval": "eval.cola",
    });
    std::fs::write(&paths.config, serde_json::to_string_pretty(&config)?)
        .map_err(|e| ColaError::io(&paths.config, e))?;
    Ok(paths)
}
