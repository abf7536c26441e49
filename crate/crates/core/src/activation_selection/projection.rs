use serde::{Deserialize, Serialize};

use super::Points;
use crate::data_model::ActivationMatrix;
use crate::error::{ColaError, Result};
use crate::rng::GaussianStream;

pub const DEFAULT_REDUCED_DIM: usize = 64;

/// Gaussian random projection `a' = R a / sqrt(d)` with `R` a `d x D` matrix.
///
/// Entry `(i, j)` of `R` is element `i * D + j` of the [`GaussianStream`]
/// for `seed`, so the matrix is reproducible from `(seed, d, D)` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub original_dim: usize,
    pub reduced_dim: usize,
    pub seed: u64,
    #[serde(skip)]
    matrix: Vec<f64>,
}

impl ProjectionSpec {
    pub fn new(original_dim: usize, reduced_dim: usize, seed: u64) -> Result<Self> {
        if reduced_dim == 0 || original_dim == 0 {
            return Err(ColaError::Argument(
                "projection dims must be positive".into(),
            ));
        }
        if reduced_dim > original_dim {
            return Err(ColaError::Argument(format!(
                "reduced dim {reduced_dim} exceeds original dim {original_dim}"
            )));
        }
        let stream = GaussianStream::new(seed);
        let matrix = (0..(reduced_dim * original_dim) as u64)
            .map(|i| stream.at(i))
            .collect();
        Ok(Self {
            original_dim,
            reduced_dim,
            seed,
            matrix,
        })
    }

    /// Row-major `d x D` matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        let scale = 1.0 / (self.reduced_dim as f64).sqrt();
        self.matrix
            .chunks_exact(self.original_dim)
            .map(|r| r.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect()
    }
}

/// Projects every activation row into `spec.reduced_dim` dimensions.
pub fn project(m: &ActivationMatrix, spec: &ProjectionSpec) -> Result<Points> {
    if m.dim() != spec.original_dim {
        return Err(ColaError::Shape(format!(
            "activations have {} columns, projection expects {}",
            m.dim(),
            spec.original_dim
        )));
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(ColaError::Validation("non-finite activation".into()));
    }
    let mut data = Vec::with_capacity(m.rows() * spec.reduced_dim);
    let mut row = vec![0.0; m.dim()];
    for i in 0..m.rows() {
        row.iter_mut()
            .zip(m.row(i))
            .for_each(|(dst, &src)| *dst = f64::from(src));
        data.extend(spec.project_row(&row));
    }
    Points::new(spec.reduced_dim, data)
}
