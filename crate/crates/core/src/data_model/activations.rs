//! Activation signatures and their binary container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      4 bytes   "COLA"
//! version    u32       1
//! n          u32       number of records
//! L          u32       number of layer segments
//! layer_dims L x u32   segment widths, D = sum(layer_dims)
//! records    n x { id_len: u16, id: id_len bytes UTF-8, row: D x f32 }
//! ```
//!
//! The same header is reused for weight banks, see `harness::write_layer_bank`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{ColaError, Result};

pub const MAGIC: &[u8; 4] = b"COLA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    sample_ids: Vec<String>,
    layer_dims: Vec<usize>,
    data: Vec<f32>,
}

impl ActivationMatrix {
    /// Builds a matrix from row-major `data` (n x D), validating every invariant.
    pub fn new(sample_ids: Vec<String>, layer_dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if layer_dims.is_empty() || layer_dims.contains(&0) {
            return Err(ColaError::Validation(
                "layer_dims must be a nonempty list of positive widths".into(),
            ));
        }
        let dim: usize = layer_dims.iter().sum();
        if data.len() != sample_ids.len() * dim {
            return Err(ColaError::Shape(format!(
                "{} values for {} rows of width {dim}",
                data.len(),
                sample_ids.len()
            )));
        }
        let mut seen = HashMap::with_capacity(sample_ids.len());
        for (i, id) in sample_ids.iter().enumerate() {
            if id.len() > u16::MAX as usize {
                return Err(ColaError::Validation(format!(
                    "sample id at row {i} is too long"
                )));
            }
            if seen.insert(id.as_str(), i).is_some() {
                return Err(ColaError::Validation(format!("duplicate sample id `{id}`")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(ColaError::Validation(format!(
                "non-finite activation in row {} (`{}`)",
                pos / dim,
                sample_ids[pos / dim]
            )));
        }
        Ok(Self {
            sample_ids,
            layer_dims,
            data,
        })
    }

    /// Builds from f64 rows; values are down-converted to f32.
    pub fn from_rows(
        sample_ids: Vec<String>,
        layer_dims: Vec<usize>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(sample_ids, layer_dims, data)
    }

    pub fn rows(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    /// Column range of layer segment `layer` within a row.
    pub fn segment_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start: usize = self.layer_dims[..layer].iter().sum();
        start..start + self.layer_dims[layer]
    }

    pub fn segment(&self, row: usize, layer: usize) -> &[f32] {
        &self.row(row)[self.segment_range(layer)]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sample_ids.iter().position(|s| s == id)
    }

    /// Rows for `ids`, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<ActivationMatrix> {
        let index: HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut data = Vec::with_capacity(ids.len() * self.dim());
        for id in ids {
            let &row = index
                .get(id.as_str())
                .ok_or_else(|| ColaError::Lookup(id.clone()))?;
            data.extend_from_slice(self.row(row));
        }
        ActivationMatrix::new(ids.to_vec(), self.layer_dims.clone(), data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = encode_header(self.rows(), &self.layer_dims);
        for (i, id) in self.sample_ids.iter().enumerate() {
            encode_record(&mut out, id, self.row(i));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader::new(bytes);
        let (n, layer_dims) = decode_header(&mut reader)?;
        let dim: usize = layer_dims.iter().sum();
        let (ids, data) = decode_records(&mut reader, n, dim)?;
        ActivationMatrix::new(ids, layer_dims, data).map_err(|e| ColaError::Format(e.to_string()))
    }
}

pub fn write_activations(m: &ActivationMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_bytes()).map_err(|e| ColaError::io(path, e))
}

pub fn read_activations(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ColaError::io(path, e))?;
    ActivationMatrix::from_bytes(&bytes)
}

pub(crate) fn encode_header(n: usize, dims: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * dims.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out
}

pub(crate) fn encode_record(out: &mut Vec<u8>, id: &str, row: &[f32]) {
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    for v in row {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn decode_header(reader: &mut ByteReader<'_>) -> Result<(usize, Vec<usize>)> {
    if reader.take(4)? != MAGIC {
        return Err(ColaError::Format("bad magic".into()));
    }
    let version = reader.u32()?;
    if version != VERSION {
        return Err(ColaError::Format(format!("unsupported version {version}")));
    }
    let n = reader.u32()? as usize;
    let layers = reader.u32()? as usize;
    if layers == 0 {
        return Err(ColaError::Format("zero layer segments".into()));
    }
    let dims = (0..layers)
        .map(|_| reader.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(ColaError::Format("zero-width layer segment".into()));
    }
    Ok((n, dims))
}

pub(crate) fn decode_records(
    reader: &mut ByteReader<'_>,
    n: usize,
    width: usize,
) -> Result<(Vec<String>, Vec<f32>)> {
    // Guard the allocation against a corrupt count.
    let min_record = 2 + 4 * width;
    if n.saturating_mul(min_record) > reader.remaining() {
        return Err(ColaError::Format(format!(
            "header claims {n} records of width {width} but only {} bytes remain",
            reader.remaining()
        )));
    }
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * width);
    for _ in 0..n {
        let id_len = reader.u16()? as usize;
        let id = std::str::from_utf8(reader.take(id_len)?)
            .map_err(|e| ColaError::Format(format!("sample id is not UTF-8: {e}")))?
            .to_string();
        let row = reader.take(4 * width)?;
        data.extend(
            row.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
        );
        ids.push(id);
    }
    if reader.remaining() != 0 {
        return Err(ColaError::Format(format!(
            "{} trailing bytes after last record",
            reader.remaining()
        )));
    }
    Ok((ids, data))
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(ColaError::Format(format!(
                "truncated file: wanted {len} bytes at offset {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
