use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{squared_distance, Points};
use crate::error::{ColaError, Result};
use crate::rng::{derive_seed, seeded_rng};

pub const DEFAULT_K: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia decrease falls to or below this.
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_iters: 300,
            tol: 1e-6,
            n_restarts: 10,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn with_k(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    /// `k` centroids, row-major `k x d`.
    pub centroids: Points,
    pub inertia: f64,
    pub best_restart: usize,
    /// Inertia after every centroid update, one trace per restart.
    pub inertia_history: Vec<Vec<f64>>,
}

struct Run {
    assignments: Vec<usize>,
    centroids: Points,
    inertia: f64,
    history: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding, best of `n_restarts`.
///
/// Restarts run in parallel with seeds derived from `cfg.seed`; the lowest
/// inertia wins and ties go to the earlier restart, so the result never
/// depends on scheduling.
pub fn kmeans(points: &Points, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = points.len();
    if cfg.k == 0 {
        return Err(ColaError::Argument("k must be positive".into()));
    }
    if n < cfg.k {
        return Err(ColaError::Argument(format!(
            "{n} points cannot form {} clusters",
            cfg.k
        )));
    }
    if cfg.n_restarts == 0 || cfg.max_iters == 0 {
        return Err(ColaError::Argument(
            "n_restarts and max_iters must be positive".into(),
        ));
    }
    if points.data().iter().any(|v| !v.is_finite()) {
        return Err(ColaError::Validation("non-finite point".into()));
    }

    let runs: Vec<Run> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| {
            lloyd(
                points,
                cfg,
                derive_seed(cfg.seed, &format!("kmeans/restart/{r}")),
            )
        })
        .collect();

    let best_restart = runs.iter().enumerate().fold(0, |best, (i, r)| {
        if r.inertia < runs[best].inertia {
            i
        } else {
            best
        }
    });
    let inertia_history = runs.iter().map(|r| r.history.clone()).collect();
    let best = runs
        .into_iter()
        .nth(best_restart)
        .expect("at least one restart");
    Ok(KMeansFit {
        assignments: best.assignments,
        centroids: best.centroids,
        inertia: best.inertia,
        best_restart,
        inertia_history,
    })
}

fn plus_plus_init(points: &Points, k: usize, seed: u64) -> Points {
    let mut rng = seeded_rng(seed);
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave target at the very end of the range.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // Every point coincides with a chosen center.
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    let data = chosen
        .iter()
        .flat_map(|&i| points.row(i).to_vec())
        .collect();
    Points::new(points.dim(), data).expect("dims match")
}

/// Nearest centroid per point (ties to the lower index) and its squared distance.
pub(crate) fn assign(points: &Points, centroids: &Points) -> (Vec<usize>, Vec<f64>) {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.len() {
                let d = squared_distance(p, centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Moves the farthest points (relative to their current centroid) into empty
/// clusters. Donor clusters always keep at least one member.
fn repair_empty(assignments: &mut [usize], distances: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..assignments.len() {
            if counts[assignments[i]] > 1 && donor.is_none_or(|d| distances[i] > distances[d]) {
                donor = Some(i);
            }
        }
        let i = donor.expect("n >= k guarantees a cluster with two members");
        counts[assignments[i]] -= 1;
        assignments[i] = empty;
        counts[empty] = 1;
        distances[i] = 0.0;
    }
}

pub(crate) fn centroids_of(points: &Points, assignments: &[usize], k: usize) -> Points {
    let d = points.dim();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        sums[c * d..(c + 1) * d]
            .iter_mut()
            .zip(points.row(i))
            .for_each(|(s, v)| *s += v);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums[c * d..(c + 1) * d]
                .iter_mut()
                .for_each(|s| *s /= count as f64);
        }
    }
    Points::new(d, sums).expect("dims match")
}

/// `sum_i |p_i - c_{a(i)}|^2`.
pub fn inertia(points: &Points, assignments: &[usize], centroids: &Points) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(points.row(i), centroids.row(c)))
        .sum()
}

fn lloyd(points: &Points, cfg: &KMeansConfig, seed: u64) -> Run {
    let k = cfg.k;
    let initial = plus_plus_init(points, k, seed);
    let (mut assignments, mut distances) = assign(points, &initial);
    repair_empty(&mut assignments, &mut distances, k);

    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        let centroids = centroids_of(points, &assignments, k);
        let current = inertia(points, &assignments, &centroids);
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| prev - current <= cfg.tol * prev);
        history.push(current);
        iters += 1;
        if converged || iters >= cfg.max_iters {
            return Run {
                assignments,
                centroids,
                inertia: current,
                history,
            };
        }
        let (mut next, mut next_dist) = assign(points, &centroids);
        repair_empty(&mut next, &mut next_dist, k);
        if next == assignments {
            return Run {
                assignments,
                centroids,
                inertia: current,
                history,
            };
        }
        assignments = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[&[f64]]) -> Points {
        Points::new(
            rows[0].len(),
            rows.iter().flat_map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let p = pts(&[&[0.0, 0.0], &[1.0, 5.0], &[-3.0, 2.0], &[7.0, 7.0]]);
        let fit = kmeans(&p, &KMeansConfig::with_k(4, 1)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut a = fit.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn duplicates_with_k_equals_n() {
        let p = pts(&[&[1.0], &[1.0], &[1.0]]);
        let fit = kmeans(&p, &KMeansConfig::with_k(3, 0)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut a = fit.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2]);
    }

    #[test]
    fn k_one_is_the_mean() {
        let p = pts(&[&[1.0, 2.0], &[3.0, 6.0], &[5.0, 1.0]]);
        let fit = kmeans(&p, &KMeansConfig::with_k(1, 0)).unwrap();
        assert_eq!(fit.centroids.row(0), &[3.0, 3.0]);
        // (4+1) + (0+9) + (4+4)
        assert!((fit.inertia - 22.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let p = pts(&[&[1.0], &[2.0]]);
        assert!(matches!(
            kmeans(&p, &KMeansConfig::with_k(3, 0)),
            Err(ColaError::Argument(_))
        ));
        assert!(kmeans(&p, &KMeansConfig::with_k(0, 0)).is_err());
    }

    #[test]
    fn repair_moves_farthest_point() {
        let mut a = vec![0, 0, 0, 1];
        let mut d = vec![0.1, 5.0, 0.2, 0.0];
        repair_empty(&mut a, &mut d, 3);
        assert_eq!(a, vec![0, 2, 0, 1]);
    }

    #[test]
    fn deterministic_across_calls() {
        let data: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let p = Points::new(2, data).unwrap();
        let cfg = KMeansConfig::with_k(5, 77);
        assert_eq!(kmeans(&p, &cfg).unwrap(), kmeans(&p, &cfg).unwrap());
    }
}
