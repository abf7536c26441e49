//! Pruners. Masks are `true` where a weight is removed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{CalibrationBatch, LinearLayer, Matrix};
use crate::data_model::BlockPattern;
use crate::error::{ColaError, Result};

/// Target for activation-aware pruning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneTarget {
    /// Fraction of each output row to remove.
    Sparsity(f64),
    /// Fixed count per contiguous block along the input dimension.
    Block(BlockPattern),
}

/// `floor(fraction * total)`, tolerant of representation error like `0.3 * 10`.
fn prune_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64 + 1e-9).floor() as usize).min(total)
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(ColaError::Argument(format!(
            "sparsity {sparsity} outside [0, 1]"
        )));
    }
    Ok(())
}

fn apply_mask(layer: &LinearLayer, mask: &[bool]) -> LinearLayer {
    let mut weights = layer.weights.clone();
    weights
        .data_mut()
        .iter_mut()
        .zip(mask)
        .filter(|(_, &m)| m)
        .for_each(|(w, _)| *w = 0.0);
    LinearLayer::new(layer.name.clone(), weights)
}

/// Zeroes the `floor(sparsity * r * c)` smallest-magnitude weights of the whole
/// matrix; equal magnitudes are pruned in (row, col) order.
pub fn magnitude_prune(layer: &LinearLayer, sparsity: f64) -> Result<LinearLayer> {
    check_sparsity(sparsity)?;
    let w = layer.weights.data();
    let count = prune_count(sparsity, w.len());
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
    let mut mask = vec![false; w.len()];
    order.iter().take(count).for_each(|&i| mask[i] = true);
    Ok(apply_mask(layer, &mask))
}

/// Activation-aware importance `|W_ij| * ||X_j||_2`.
pub fn wanda_scores(layer: &LinearLayer, batch: &CalibrationBatch) -> Result<Matrix> {
    let (rows, cols) = layer.weights.shape();
    if batch.inputs.rows() != cols {
        return Err(ColaError::Shape(format!(
            "layer `{}` takes {cols} inputs but the batch has {}",
            layer.name,
            batch.inputs.rows()
        )));
    }
    let norms = batch.channel_norms();
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        layer.weights.get(i, j).abs() * norms[j]
    }))
}

/// Mask removing the lowest-score entries per row, or per block in block mode.
/// Equal scores are pruned lowest column first.
pub fn score_mask(scores: &Matrix, target: PruneTarget) -> Result<Vec<bool>> {
    let (rows, cols) = scores.shape();
    let (group, per_group) = match target {
        PruneTarget::Sparsity(s) => {
            check_sparsity(s)?;
            (cols, prune_count(s, cols))
        }
        PruneTarget::Block(p) => {
            if p.block_len == 0 || p.n_zero >= p.block_len {
                return Err(ColaError::Argument(format!(
                    "invalid block pattern {}:{}",
                    p.n_zero, p.block_len
                )));
            }
            if cols % p.block_len != 0 {
                return Err(ColaError::Argument(format!(
                    "input dim {cols} is not divisible by block length {}",
                    p.block_len
                )));
            }
            (p.block_len, p.n_zero)
        }
    };
    let mut mask = vec![false; rows * cols];
    for i in 0..rows {
        let row = scores.row(i);
        for start in (0..cols).step_by(group) {
            let mut idx: Vec<usize> = (start..start + group).collect();
            idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            for &j in idx.iter().take(per_group) {
                mask[i * cols + j] = true;
            }
        }
    }
    Ok(mask)
}

pub fn wanda_mask(
    layer: &LinearLayer,
    batch: &CalibrationBatch,
    target: PruneTarget,
) -> Result<Vec<bool>> {
    score_mask(&wanda_scores(layer, batch)?, target)
}

pub fn wanda_prune(
    layer: &LinearLayer,
    batch: &CalibrationBatch,
    target: PruneTarget,
) -> Result<LinearLayer> {
    Ok(apply_mask(layer, &wanda_mask(layer, batch, target)?))
}

/// Ridge damping used for the refit: `0.01 * mean(diag(X X^T))`.
pub fn damping(gram: &Matrix) -> f64 {
    let n = gram.rows();
    0.01 * (0..n).map(|i| gram.get(i, i)).sum::<f64>() / n as f64
}

/// Refits surviving weights of every row against the calibration batch.
///
/// With `H = X X^T` and `lambda` from [`damping`], the surviving entries `S`
/// of a row minimize `|(w - w0) X|^2 + lambda |w - w0|^2` subject to the
/// pruned entries `P` being zero, giving
/// `w_S = w0_S + (H_SS + lambda I)^-1 H_SP w0_P`.
pub fn refit_masked(
    layer: &LinearLayer,
    batch: &CalibrationBatch,
    mask: &[bool],
) -> Result<LinearLayer> {
    let (rows, cols) = layer.weights.shape();
    if batch.inputs.rows() != cols || mask.len() != rows * cols {
        return Err(ColaError::Shape(format!(
            "refit of `{}`: {rows}x{cols} weights, {} input channels, {} mask entries",
            layer.name,
            batch.inputs.rows(),
            mask.len()
        )));
    }
    let masked = apply_mask(layer, mask);
    let gram = batch.inputs.gram();
    let lambda = damping(&gram);
    if lambda == 0.0 {
        // All-zero inputs: every candidate reaches zero error.
        return Ok(masked);
    }

    let refit_rows = (0..rows)
        .into_par_iter()
        .map(|i| {
            let row_mask = &mask[i * cols..(i + 1) * cols];
            let kept: Vec<usize> = (0..cols).filter(|&j| !row_mask[j]).collect();
            let pruned: Vec<usize> = (0..cols).filter(|&j| row_mask[j]).collect();
            let mut out = masked.weights.row(i).to_vec();
            if kept.is_empty() || pruned.is_empty() {
                return Ok(out);
            }
            let w0 = layer.weights.row(i);
            let system = DMatrix::from_fn(kept.len(), kept.len(), |a, b| {
                gram.get(kept[a], kept[b]) + if a == b { lambda } else { 0.0 }
            });
            let rhs = DVector::from_fn(kept.len(), |a, _| {
                pruned
                    .iter()
                    .map(|&p| gram.get(kept[a], p) * w0[p])
                    .sum::<f64>()
            });
            let chol = system.cholesky().ok_or_else(|| {
                ColaError::Numerical(format!(
                    "refit system for row {i} of `{}` is not positive definite",
                    layer.name
                ))
            })?;
            let delta = chol.solve(&rhs);
            for (a, &j) in kept.iter().enumerate() {
                out[j] = w0[j] + delta[a];
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(ColaError::Numerical(format!(
                    "non-finite refit in row {i} of `{}`",
                    layer.name
                )));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let data = refit_rows.into_iter().flatten().collect();
    Ok(LinearLayer::new(
        layer.name.clone(),
        Matrix::new(rows, cols, data)?,
    ))
}

/// Wanda mask followed by a least-squares refit of the surviving weights.
pub fn reconstruct_prune(
    layer: &LinearLayer,
    batch: &CalibrationBatch,
    target: PruneTarget,
) -> Result<LinearLayer> {
    let mask = wanda_mask(layer, batch, target)?;
    refit_masked(layer, batch, &mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: usize, cols: usize, data: Vec<f64>) -> LinearLayer {
        LinearLayer::new("t", Matrix::new(rows, cols, data).unwrap())
    }

    #[test]
    fn magnitude_extremes() {
        let l = layer(2, 2, vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(magnitude_prune(&l, 0.0).unwrap(), l);
        assert_eq!(magnitude_prune(&l, 1.0).unwrap().weights.count_zeros(), 4);
    }

    #[test]
    fn magnitude_three_by_three() {
        // |w| ranks: 0.1 (1,1), 0.2 (0,2), 0.3 (2,0), 0.4 (0,0) are the four smallest.
        let l = layer(3, 3, vec![0.4, -0.9, 0.2, 0.7, -0.1, 0.8, -0.3, 0.6, -0.5]);
        let p = magnitude_prune(&l, 4.0 / 9.0).unwrap();
        let zeros: Vec<bool> = p.weights.data().iter().map(|&v| v == 0.0).collect();
        assert_eq!(
            zeros,
            vec![true, false, true, false, true, false, true, false, false]
        );
    }

    #[test]
    fn magnitude_ties_follow_position() {
        let l = layer(1, 4, vec![1.0, -1.0, 1.0, 2.0]);
        let p = magnitude_prune(&l, 0.5).unwrap();
        assert_eq!(p.weights.data(), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn four_of_eight_on_sixteen_inputs() {
        let l = layer(
            1,
            16,
            (1..=16)
                .map(|v| v as f64 * if v % 3 == 0 { -1.0 } else { 1.0 })
                .collect(),
        );
        let batch = CalibrationBatch::new(Matrix::from_fn(16, 3, |i, j| {
            ((i * 7 + j) % 5) as f64 + 0.5
        }))
        .unwrap();
        let p = wanda_prune(&l, &batch, PruneTarget::Block(BlockPattern::FOUR_OF_EIGHT)).unwrap();
        for block in p.weights.row(0).chunks(8) {
            assert_eq!(block.iter().filter(|&&v| v == 0.0).count(), 4);
        }
    }

    #[test]
    fn block_mode_needs_divisible_inputs() {
        let l = layer(1, 12, vec![1.0; 12]);
        let batch = CalibrationBatch::new(Matrix::from_fn(12, 2, |_, _| 1.0)).unwrap();
        assert!(matches!(
            wanda_prune(&l, &batch, PruneTarget::Block(BlockPattern::FOUR_OF_EIGHT)),
            Err(ColaError::Argument(_))
        ));
    }

    #[test]
    fn uniform_inputs_reduce_to_row_magnitude() {
        let w: Vec<f64> = (0..24)
            .map(|i| ((i * 13 % 17) as f64 - 8.0) / 3.0)
            .collect();
        let l = layer(3, 8, w);
        let batch =
            CalibrationBatch::new(Matrix::from_fn(
                8,
                4,
                |_, j| if j % 2 == 0 { 1.0 } else { -1.0 },
            ))
            .unwrap();
        let p = wanda_prune(&l, &batch, PruneTarget::Sparsity(0.5)).unwrap();
        for i in 0..3 {
            let row = l.weights.row(i);
            let single = layer(1, 8, row.to_vec());
            // Per-row magnitude pruning of half the row.
            let expected = magnitude_prune(&single, 0.5).unwrap();
            assert_eq!(p.weights.row(i), expected.weights.row(0));
        }
    }

    #[test]
    fn refit_scalar_closed_form() {
        // Row [a, b]; input channel 1 is weak so b is pruned and a absorbs it.
        let (a, b) = (1.5, -0.8);
        let x0 = [1.0, 2.0, -1.0, 0.5];
        let x1 = [0.1, 0.3, 0.2, -0.1];
        let l = layer(1, 2, vec![a, b]);
        let x = Matrix::new(2, 4, [x0, x1].concat()).unwrap();
        let batch = CalibrationBatch::new(x).unwrap();
        let p = reconstruct_prune(&l, &batch, PruneTarget::Sparsity(0.5)).unwrap();
        assert_eq!(p.weights.get(0, 1), 0.0);

        let s00: f64 = x0.iter().map(|v| v * v).sum();
        let s11: f64 = x1.iter().map(|v| v * v).sum();
        let s01: f64 = x0.iter().zip(&x1).map(|(u, v)| u * v).sum();
        let lambda = 0.01 * (s00 + s11) / 2.0;
        // d/dw [ sum_t ((w - a) x0_t - b x1_t)^2 + lambda (w - a)^2 ] = 0
        let expected = a + b * s01 / (s00 + lambda);
        assert!((p.weights.get(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_sparsity_keeps_weights() {
        let l = layer(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.25]);
        let batch =
            CalibrationBatch::new(Matrix::from_fn(3, 5, |i, j| (i + 2 * j) as f64)).unwrap();
        assert_eq!(
            reconstruct_prune(&l, &batch, PruneTarget::Sparsity(0.0)).unwrap(),
            l
        );
    }
}
