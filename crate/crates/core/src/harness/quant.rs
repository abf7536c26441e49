//! Group-wise symmetric round-to-nearest quantizers.
//!
//! Groups are `group_size` consecutive input channels of one output row.
//! A group with largest magnitude `m` uses scale `m / (2^(bits-1) - 1)` and
//! maps each weight to `scale * clamp(round(w / scale))`.

use super::{CalibrationBatch, LinearLayer, Matrix};
use crate::error::{ColaError, Result};

/// Floor applied to per-channel scales derived from activations.
pub const MIN_CHANNEL_SCALE: f64 = 1e-8;

pub fn max_level(bits: u32) -> f64 {
    ((1u64 << (bits - 1)) - 1) as f64
}

fn check(layer: &LinearLayer, bits: u32, group_size: usize) -> Result<()> {
    if !(2..=32).contains(&bits) {
        return Err(ColaError::Argument(format!("bits = {bits}, need 2..=32")));
    }
    let cols = layer.weights.cols();
    if group_size == 0 || !cols.is_multiple_of(group_size) {
        return Err(ColaError::Argument(format!(
            "group size {group_size} does not divide input dim {cols}"
        )));
    }
    Ok(())
}

/// Scale of every group, row-major: `rows x (cols / group_size)`.
pub fn group_scales(weights: &Matrix, bits: u32, group_size: usize) -> Vec<f64> {
    let levels = max_level(bits);
    (0..weights.rows())
        .flat_map(|i| {
            weights
                .row(i)
                .chunks(group_size)
                .map(|g| g.iter().fold(0.0f64, |m, w| m.max(w.abs())) / levels)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn quantize_matrix(weights: &Matrix, bits: u32, group_size: usize) -> Matrix {
    let levels = max_level(bits);
    let scales = group_scales(weights, bits, group_size);
    let groups_per_row = weights.cols() / group_size;
    let mut out = weights.clone();
    for i in 0..weights.rows() {
        for (g, chunk) in out.row_mut(i).chunks_mut(group_size).enumerate() {
            let scale = scales[i * groups_per_row + g];
            for w in chunk.iter_mut() {
                *w = if scale == 0.0 {
                    0.0
                } else {
                    scale * (*w / scale).round().clamp(-levels, levels)
                };
            }
        }
    }
    out
}

pub fn rtn_quantize(layer: &LinearLayer, bits: u32, group_size: usize) -> Result<LinearLayer> {
    check(layer, bits, group_size)?;
    Ok(LinearLayer::new(
        layer.name.clone(),
        quantize_matrix(&layer.weights, bits, group_size),
    ))
}

/// Per-input-channel scales `sqrt(||X_j||)` normalized to unit geometric mean.
///
/// The geometric mean is taken as `min + mean(log s - min)` in log space so
/// that equal channel norms give scales of exactly 1.
pub fn channel_scales(batch: &CalibrationBatch) -> Vec<f64> {
    let logs: Vec<f64> = batch
        .channel_norms()
        .into_iter()
        .map(|n| n.sqrt().max(MIN_CHANNEL_SCALE).ln())
        .collect();
    let min = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_excess = logs.iter().map(|l| l - min).sum::<f64>() / logs.len() as f64;
    let center = min + mean_excess;
    logs.iter().map(|l| (l - center).exp()).collect()
}

/// Quantizes `W diag(s)` and folds `diag(s)^-1` back in.
pub fn scaled_quantize(
    layer: &LinearLayer,
    batch: &CalibrationBatch,
    bits: u32,
    group_size: usize,
) -> Result<LinearLayer> {
    check(layer, bits, group_size)?;
    let cols = layer.weights.cols();
    if batch.inputs.rows() != cols {
        return Err(ColaError::Shape(format!(
            "layer `{}` takes {cols} inputs but the batch has {}",
            layer.name,
            batch.inputs.rows()
        )));
    }
    let s = channel_scales(batch);
    let mut scaled = layer.weights.clone();
    for i in 0..scaled.rows() {
        scaled
            .row_mut(i)
            .iter_mut()
            .zip(&s)
            .for_each(|(w, sj)| *w *= sj);
    }
    let mut q = quantize_matrix(&scaled, bits, group_size);
    for i in 0..q.rows() {
        q.row_mut(i).iter_mut().zip(&s).for_each(|(w, sj)| *w /= sj);
    }
    Ok(LinearLayer::new(layer.name.clone(), q))
}
