//! Activation-space sample selection: random projection, k-means, and one
//! centroid-nearest representative per cluster.

mod kmeans;
mod projection;

use std::collections::BTreeMap;

pub use kmeans::{inertia, kmeans, KMeansConfig, KMeansFit, DEFAULT_K};
pub use projection::{project, ProjectionSpec, DEFAULT_REDUCED_DIM};

use crate::data_model::{ActivationMatrix, SelectionResult};
use crate::error::{ColaError, Result};

/// Dense row-major point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(ColaError::Shape(format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks_exact(self.dim)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each cluster, the member closest to its centroid (lowest row on ties).
/// Empty clusters yield no representative.
pub fn nearest_members(
    points: &Points,
    assignments: &[usize],
    centroids: &Points,
) -> Vec<Option<usize>> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; centroids.len()];
    for (i, &c) in assignments.iter().enumerate() {
        let d = squared_distance(points.row(i), centroids.row(c));
        if best[c].is_none_or(|(_, bd)| d < bd) {
            best[c] = Some((i, d));
        }
    }
    best.into_iter().map(|b| b.map(|(i, _)| i)).collect()
}

/// Projects, clusters and picks one representative per cluster.
pub fn select_representatives(
    m: &ActivationMatrix,
    proj: &ProjectionSpec,
    cfg: &KMeansConfig,
) -> Result<SelectionResult> {
    if m.rows() < cfg.k {
        return Err(ColaError::Argument(format!(
            "{} candidates cannot yield {} representatives",
            m.rows(),
            cfg.k
        )));
    }
    let points = project(m, proj)?;
    let fit = kmeans(&points, cfg)?;
    let selected_ids = nearest_members(&points, &fit.assignments, &fit.centroids)
        .into_iter()
        .flatten()
        .map(|i| m.sample_ids()[i].clone())
        .collect();
    let cluster_assignments: BTreeMap<String, usize> = m
        .sample_ids()
        .iter()
        .cloned()
        .zip(fit.assignments.iter().copied())
        .collect();
    Ok(SelectionResult {
        selected_ids,
        cluster_assignments,
        centroids: fit.centroids.to_rows(),
        inertia: fit.inertia,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_equals_k_selects_everything() {
        let ids: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let data: Vec<f32> = (0..5 * 4).map(|i| (i as f32 * 0.7).cos()).collect();
        let m = ActivationMatrix::new(ids.clone(), vec![2, 2], data).unwrap();
        let proj = ProjectionSpec::new(4, 3, 1).unwrap();
        let sel = select_representatives(&m, &proj, &KMeansConfig::with_k(5, 2)).unwrap();
        let mut got = sel.selected_ids.clone();
        got.sort();
        assert_eq!(got, ids);
        sel.validate().unwrap();
    }

    #[test]
    fn identical_points_pick_lowest_index() {
        let p = Points::new(2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let c = Points::new(2, vec![1.0, 1.0]).unwrap();
        assert_eq!(nearest_members(&p, &[0, 0, 0], &c), vec![Some(0)]);

        let ids: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let m = ActivationMatrix::new(ids, vec![2], vec![0.5; 6]).unwrap();
        let proj = ProjectionSpec::new(2, 2, 0).unwrap();
        let sel = select_representatives(&m, &proj, &KMeansConfig::with_k(1, 0)).unwrap();
        assert_eq!(sel.selected_ids, vec!["x".to_string()]);
    }

    #[test]
    fn too_few_candidates() {
        let m = ActivationMatrix::new(vec!["a".into()], vec![2], vec![0.0, 1.0]).unwrap();
        let proj = ProjectionSpec::new(2, 1, 0).unwrap();
        assert!(select_representatives(&m, &proj, &KMeansConfig::with_k(2, 0)).is_err());
    }
}
