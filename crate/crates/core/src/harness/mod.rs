//! Layer-wise compression harness.
//!
//! Every compressor here is scored by the same objective, the reconstruction
//! error `||W X - W_hat X||_F` of a linear layer on a batch of inputs. The
//! pruners and quantizers are compact stand-ins for the production methods
//! (magnitude, activation-aware, and refit pruning; RTN and activation-scaled
//! quantization) so that the effect of the calibration set can be measured
//! directly.
//!
//! # Weight bank files
//!
//! Layers are stored in the activation container (see
//! [`crate::data_model::ActivationMatrix`]) with the header's `layer_dims`
//! reinterpreted as one `(rows, cols)` pair: `L = 2`, `layer_dims = [rows,
//! cols]`, and each record holds a layer name followed by `rows * cols` f32
//! weights in row-major order. All layers in a bank share one shape.

mod matrix;
pub mod prune;
pub mod quant;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use matrix::Matrix;
pub use prune::{
    magnitude_prune, reconstruct_prune, refit_masked, wanda_mask, wanda_prune, wanda_scores,
    PruneTarget,
};
pub use quant::{group_scales, rtn_quantize, scaled_quantize};

use crate::data_model::{
    decode_header, decode_records, encode_header, encode_record, ActivationMatrix, ByteReader,
    CompressionScheme, SchemeKind,
};
use crate::error::{ColaError, Result};

/// Weights `W` of one linear layer, `rows` outputs by `cols` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub name: String,
    pub weights: Matrix,
}

impl LinearLayer {
    pub fn new(name: impl Into<String>, weights: Matrix) -> Self {
        Self {
            name: name.into(),
            weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weights.is_finite() {
            return Err(ColaError::Validation(format!(
                "layer `{}` has non-finite weights",
                self.name
            )));
        }
        Ok(())
    }

    pub fn sparsity(&self) -> f64 {
        self.weights.count_zeros() as f64 / self.weights.data().len() as f64
    }
}

/// Layer inputs `X`, one column per calibration position.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBatch {
    pub inputs: Matrix,
}

impl CalibrationBatch {
    pub fn new(inputs: Matrix) -> Result<Self> {
        if inputs.cols() == 0 || inputs.rows() == 0 {
            return Err(ColaError::Validation(
                "calibration batch must be nonempty".into(),
            ));
        }
        if !inputs.is_finite() {
            return Err(ColaError::Validation(
                "calibration batch has non-finite inputs".into(),
            ));
        }
        Ok(Self { inputs })
    }

    /// Batch whose columns are segment `layer` of the given activation rows.
    pub fn from_activations(m: &ActivationMatrix, layer: usize) -> Result<Self> {
        if layer >= m.layer_dims().len() {
            return Err(ColaError::Shape(format!(
                "layer segment {layer} requested from {} segments",
                m.layer_dims().len()
            )));
        }
        let range = m.segment_range(layer);
        let c = range.len();
        let n = m.rows();
        let inputs = Matrix::from_fn(c, n, |j, t| f64::from(m.row(t)[range.start + j]));
        Self::new(inputs)
    }

    /// `||X_j||_2` for every input channel `j`.
    pub fn channel_norms(&self) -> Vec<f64> {
        (0..self.inputs.rows())
            .map(|j| self.inputs.row(j).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

/// `||(W - W_hat) X||_F`.
pub fn reconstruction_error(
    layer: &LinearLayer,
    compressed: &LinearLayer,
    batch: &CalibrationBatch,
) -> Result<f64> {
    let diff = layer.weights.sub(&compressed.weights)?;
    Ok(diff.matmul(&batch.inputs)?.frobenius_norm())
}

/// Applies `scheme` to `layer`, using `calibration` where the scheme needs it.
pub fn compress(
    layer: &LinearLayer,
    calibration: &CalibrationBatch,
    scheme: &CompressionScheme,
) -> Result<LinearLayer> {
    scheme.validate()?;
    let target = match (scheme.sparsity, scheme.block_pattern) {
        (Some(s), _) => Some(PruneTarget::Sparsity(s)),
        (None, Some(p)) => Some(PruneTarget::Block(p)),
        (None, None) => None,
    };
    let group = scheme.group_size.unwrap_or(layer.weights.cols());
    match scheme.kind {
        SchemeKind::MagnitudePrune => magnitude_prune(layer, scheme.sparsity.unwrap_or(0.0)),
        SchemeKind::WandaPrune => wanda_prune(layer, calibration, target.expect("validated")),
        SchemeKind::ReconstructPrune => {
            reconstruct_prune(layer, calibration, target.expect("validated"))
        }
        SchemeKind::RtnQuant => rtn_quantize(layer, scheme.bits.expect("validated"), group),
        SchemeKind::ScaledQuant => {
            scaled_quantize(layer, calibration, scheme.bits.expect("validated"), group)
        }
    }
}

pub fn layer_bank_to_bytes(layers: &[LinearLayer]) -> Result<Vec<u8>> {
    let Some(first) = layers.first() else {
        return Err(ColaError::Argument("empty layer bank".into()));
    };
    let (rows, cols) = first.weights.shape();
    let mut out = encode_header(layers.len(), &[rows, cols]);
    for layer in layers {
        if layer.weights.shape() != (rows, cols) {
            return Err(ColaError::Shape(format!(
                "layer `{}` is {:?}, bank shape is {:?}",
                layer.name,
                layer.weights.shape(),
                (rows, cols)
            )));
        }
        let row: Vec<f32> = layer.weights.data().iter().map(|&v| v as f32).collect();
        encode_record(&mut out, &layer.name, &row);
    }
    Ok(out)
}

pub fn layer_bank_from_bytes(bytes: &[u8]) -> Result<Vec<LinearLayer>> {
    let mut reader = ByteReader::new(bytes);
    let (n, dims) = decode_header(&mut reader)?;
    let [rows, cols] = dims[..] else {
        return Err(ColaError::Format(format!(
            "weight bank needs one (rows, cols) pair, found {} dims",
            dims.len()
        )));
    };
    let (names, data) = decode_records(&mut reader, n, rows * cols)?;
    names
        .into_iter()
        .zip(data.chunks_exact(rows * cols))
        .map(|(name, w)| {
            let layer = LinearLayer::new(
                name,
                Matrix::new(rows, cols, w.iter().map(|&v| f64::from(v)).collect())?,
            );
            layer
                .validate()
                .map_err(|e| ColaError::Format(e.to_string()))?;
            Ok(layer)
        })
        .collect()
}

pub fn write_layer_bank(layers: &[LinearLayer], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, layer_bank_to_bytes(layers)?).map_err(|e| ColaError::io(path, e))
}

pub fn read_layer_bank(path: impl AsRef<Path>) -> Result<Vec<LinearLayer>> {
    let path = path.as_ref();
    layer_bank_from_bytes(&fs::read(path).map_err(|e| ColaError::io(path, e))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerError {
    pub layer: String,
    /// Activation segment feeding this layer.
    pub segment: usize,
    pub error: f64,
    /// `error / ||W X_eval||_F`.
    pub relative_error: f64,
}

/// Segment of the activation signature that feeds layer `index`: layers
/// cycle through the segments in order.
pub fn segment_for_layer(index: usize, segments: usize) -> usize {
    index % segments
}

/// Compresses every layer using only the selected samples' activations and
/// scores each one on the held-out evaluation activations.
pub fn evaluate_calibration(
    layers: &[LinearLayer],
    activations: &ActivationMatrix,
    selection: &[String],
    scheme: &CompressionScheme,
    eval: &ActivationMatrix,
) -> Result<Vec<LayerError>> {
    if selection.is_empty() {
        return Err(ColaError::Argument("empty calibration selection".into()));
    }
    if eval.layer_dims() != activations.layer_dims() {
        return Err(ColaError::Shape(format!(
            "eval segments {:?} differ from calibration segments {:?}",
            eval.layer_dims(),
            activations.layer_dims()
        )));
    }
    let calibration = activations.select(selection)?;
    let segments = activations.layer_dims().len();
    let calib_batches = (0..segments)
        .map(|s| CalibrationBatch::from_activations(&calibration, s))
        .collect::<Result<Vec<_>>>()?;
    let eval_batches = (0..segments)
        .map(|s| CalibrationBatch::from_activations(eval, s))
        .collect::<Result<Vec<_>>>()?;

    layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| {
            let segment = segment_for_layer(i, segments);
            let compressed = compress(layer, &calib_batches[segment], scheme)?;
            let eval_batch = &eval_batches[segment];
            let error = reconstruction_error(layer, &compressed, eval_batch)?;
            let reference = layer.weights.matmul(&eval_batch.inputs)?.frobenius_norm();
            Ok(LayerError {
                layer: layer.name.clone(),
                segment,
                error,
                relative_error: if reference > 0.0 {
                    error / reference
                } else {
                    0.0
                },
            })
        })
        .collect()
}
