//! Int8 storage for activation-difference vectors and similarity matrices.
//!
//! Vectors are quantized per (sample, layer) with a symmetric max-abs scale:
//! `scale = max|v| / 127` and `code = round(v / scale)`, rounding half away
//! from zero. Because the scale is per vector, cosine similarity of the codes
//! equals cosine similarity of the dequantized vectors, so similarity kernels
//! can stay in integer arithmetic.
//!
//! Similarities are stored as `round(cos · 127)` with `-128` reserved for
//! "undefined" (a zero vector was involved).

mod format;
mod ldif;
mod lsim;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::Digest;

pub use format::FormatError;
pub use ldif::{
    read_vector_set, read_vector_set_expecting, write_vector_set, LdifHeader, SampleBlock,
    VectorSetReader, LDIF_MAGIC, LDIF_VERSION,
};
pub use lsim::{
    read_sim_matrix, write_sim_matrix, LsimHeader, SimMatrixReader, LSIM_MAGIC, LSIM_VERSION,
};

/// Code marking an undefined similarity.
pub const SENTINEL: i8 = -128;
/// Largest magnitude of a valid code.
pub const CODE_MAX: i8 = 127;

/// Quantizes one vector. Returns the codes and the dequantization scale.
pub fn quantize_vector(v: &[f32]) -> Result<(Vec<i8>, f32), FormatError> {
    let mut codes = vec![0i8; v.len()];
    let scale = quantize_into(v, &mut codes)?;
    Ok((codes, scale))
}

pub(crate) fn quantize_into(v: &[f32], codes: &mut [i8]) -> Result<f32, FormatError> {
    debug_assert_eq!(v.len(), codes.len());
    let mut max_abs = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(FormatError::NonFinite { index: i });
        }
        max_abs = max_abs.max((x as f64).abs());
    }
    if max_abs == 0.0 {
        codes.fill(0);
        return Ok(0.0);
    }
    let factor = 127.0 / max_abs;
    for (c, &x) in codes.iter_mut().zip(v) {
        *c = (x as f64 * factor).round().clamp(-127.0, 127.0) as i8;
    }
    Ok((max_abs / 127.0) as f32)
}

pub fn dequantize(codes: &[i8], scale: f32) -> Vec<f32> {
    codes.iter().map(|&c| c as f32 * scale).collect()
}

/// `round(cos · 127)` clamped to `[-127, 127]`; non-finite input maps to the
/// sentinel.
pub fn quantize_similarity(cos: f64) -> i8 {
    if !cos.is_finite() {
        return SENTINEL;
    }
    (cos * 127.0).round().clamp(-127.0, 127.0) as i8
}

/// Similarity value of a code, `None` for the sentinel.
pub fn dequantize_similarity(code: i8) -> Option<f64> {
    (code != SENTINEL).then(|| code as f64 / 127.0)
}

/// Quantized vectors for `n_samples × n_layers × dim`, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    pub model_id: String,
    pub dataset_hash: Digest,
    pub layer_indices: Vec<u32>,
    /// Free-form provenance (token position policy, extraction flags, ...).
    pub attributes: BTreeMap<String, String>,
    n_samples: usize,
    n_layers: usize,
    dim: usize,
    codes: Vec<i8>,
    scales: Vec<f32>,
}

impl VectorSet {
    pub fn new(
        model_id: impl Into<String>,
        dataset_hash: Digest,
        layer_indices: Vec<u32>,
        dim: usize,
        codes: Vec<i8>,
        scales: Vec<f32>,
    ) -> Result<Self, FormatError> {
        let n_layers = layer_indices.len();
        if n_layers == 0 || dim == 0 {
            return Err(FormatError::Invalid("n_layers and dim must be positive".into()));
        }
        if !scales.len().is_multiple_of(n_layers) {
            return Err(FormatError::Invalid(format!(
                "{} scales do not divide into {n_layers} layers",
                scales.len()
            )));
        }
        let n_samples = scales.len() / n_layers;
        let vs = Self {
            model_id: model_id.into(),
            dataset_hash,
            layer_indices,
            attributes: BTreeMap::new(),
            n_samples,
            n_layers,
            dim,
            codes,
            scales,
        };
        vs.validate()?;
        Ok(vs)
    }

    /// Quantizes `data` laid out as `[n_samples][n_layers][dim]`.
    pub fn from_f32(
        model_id: impl Into<String>,
        dataset_hash: Digest,
        layer_indices: Vec<u32>,
        dim: usize,
        data: &[f32],
    ) -> Result<Self, FormatError> {
        let n_layers = layer_indices.len();
        if n_layers == 0 || dim == 0 || !data.len().is_multiple_of(n_layers * dim) {
            return Err(FormatError::Invalid(format!(
                "{} floats do not form vectors of {n_layers} × {dim}",
                data.len()
            )));
        }
        let mut codes = vec![0i8; data.len()];
        let mut scales = Vec::with_capacity(data.len() / dim);
        for (src, dst) in data.chunks_exact(dim).zip(codes.chunks_exact_mut(dim)) {
            scales.push(quantize_into(src, dst)?);
        }
        Self::new(model_id, dataset_hash, layer_indices, dim, codes, scales)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if self.layer_indices.len() != self.n_layers {
            return Err(FormatError::Invalid("layer_indices length != n_layers".into()));
        }
        let expected = self
            .n_samples
            .checked_mul(self.n_layers)
            .and_then(|x| x.checked_mul(self.dim))
            .ok_or_else(|| FormatError::Invalid("shape overflows".into()))?;
        if self.codes.len() != expected {
            return Err(FormatError::Invalid(format!(
                "expected {expected} codes, found {}",
                self.codes.len()
            )));
        }
        if self.scales.len() != self.n_samples * self.n_layers {
            return Err(FormatError::Invalid("scale count mismatch".into()));
        }
        for (v, (&s, codes)) in self
            .scales
            .iter()
            .zip(self.codes.chunks_exact(self.dim))
            .enumerate()
        {
            if !s.is_finite() || s < 0.0 {
                return Err(FormatError::Invalid(format!("vector {v}: bad scale {s}")));
            }
            if codes.contains(&SENTINEL) {
                return Err(FormatError::Invalid(format!("vector {v}: code -128 not allowed")));
            }
            let all_zero = codes.iter().all(|&c| c == 0);
            if (s == 0.0) != all_zero {
                return Err(FormatError::Invalid(format!(
                    "vector {v}: scale is zero iff codes are all zero"
                )));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    /// All layers of sample `i`, concatenated.
    pub fn sample_codes(&self, i: usize) -> &[i8] {
        let w = self.n_layers * self.dim;
        &self.codes[i * w..(i + 1) * w]
    }

    pub fn layer_codes(&self, i: usize, layer: usize) -> &[i8] {
        let off = (i * self.n_layers + layer) * self.dim;
        &self.codes[off..off + self.dim]
    }

    pub fn scale(&self, i: usize, layer: usize) -> f32 {
        self.scales[i * self.n_layers + layer]
    }

    pub fn dequantize_layer(&self, i: usize, layer: usize) -> Vec<f32> {
        dequantize(self.layer_codes(i, layer), self.scale(i, layer))
    }

    /// A new set holding only the given samples, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, FormatError> {
        let w = self.n_layers * self.dim;
        let mut codes = Vec::with_capacity(indices.len() * w);
        let mut scales = Vec::with_capacity(indices.len() * self.n_layers);
        for &i in indices {
            if i >= self.n_samples {
                return Err(FormatError::IndexOutOfRange {
                    index: i,
                    len: self.n_samples,
                });
            }
            codes.extend_from_slice(self.sample_codes(i));
            scales.extend_from_slice(&self.scales[i * self.n_layers..(i + 1) * self.n_layers]);
        }
        let mut out = Self::new(
            self.model_id.clone(),
            self.dataset_hash,
            self.layer_indices.clone(),
            self.dim,
            codes,
            scales,
        )?;
        out.attributes = self.attributes.clone();
        Ok(out)
    }

    /// Digest of the LDIF serialization; equal to the digest of the file
    /// `write_vector_set` produces.
    pub fn digest(&self) -> Digest {
        let mut w = crate::digest::DigestWriter::new();
        write_vector_set(self, &mut w).expect("digest writer is infallible");
        w.digest()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of per-layer cosines, skipping layers where either vector is zero.
    LayerMean,
    /// Cosine of the dequantized layer concatenations.
    Concat,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::LayerMean => "layer_mean",
            Aggregation::Concat => "concat",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "layer_mean" | "layer-mean" => Ok(Aggregation::LayerMean),
            "concat" => Ok(Aggregation::Concat),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

/// Where one side of a similarity matrix came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub model_id: String,
    pub dataset_hash: Digest,
    /// LDIF digest of the vector set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimProvenance {
    pub rows: SourceInfo,
    pub cols: SourceInfo,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

/// Int8 cosine-similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    rows: usize,
    cols: usize,
    symmetric: bool,
    codes: Vec<i8>,
    pub aggregation: Aggregation,
    pub provenance: SimProvenance,
}

impl SimMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        symmetric: bool,
        codes: Vec<i8>,
        aggregation: Aggregation,
        provenance: SimProvenance,
    ) -> Result<Self, FormatError> {
        let m = Self {
            rows,
            cols,
            symmetric,
            codes,
            aggregation,
            provenance,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(FormatError::Invalid("matrix must be non-empty".into()));
        }
        if self.codes.len() != self.rows * self.cols {
            return Err(FormatError::Invalid(format!(
                "expected {} codes, found {}",
                self.rows * self.cols,
                self.codes.len()
            )));
        }
        if self.symmetric {
            if self.rows != self.cols {
                return Err(FormatError::Invalid(format!(
                    "symmetric flag on a {}×{} matrix",
                    self.rows, self.cols
                )));
            }
            for i in 0..self.rows {
                let d = self.get(i, i);
                if d != CODE_MAX && d != SENTINEL {
                    return Err(FormatError::Invalid(format!(
                        "symmetric diagonal ({i},{i}) is {d}, expected 127 or -128"
                    )));
                }
                for j in i + 1..self.cols {
                    if self.get(i, j) != self.get(j, i) {
                        return Err(FormatError::AsymmetricPayload { i, j });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.codes[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.codes[i * self.cols + j]
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        dequantize_similarity(self.get(i, j))
    }

    /// Dataset hash shared by both sides of a square matrix; `None` when the
    /// sides come from different datasets.
    pub fn dataset_hash(&self) -> Option<Digest> {
        let p = &self.provenance;
        (p.rows.dataset_hash == p.cols.dataset_hash).then_some(p.rows.dataset_hash)
    }

    /// Principal submatrix on `indices` (square matrices only).
    pub fn select(&self, indices: &[usize]) -> Result<Self, FormatError> {
        if !self.is_square() {
            return Err(FormatError::Invalid("select needs a square matrix".into()));
        }
        let mut codes = Vec::with_capacity(indices.len() * indices.len());
        for &i in indices {
            if i >= self.rows {
                return Err(FormatError::IndexOutOfRange {
                    index: i,
                    len: self.rows,
                });
            }
            let row = self.row(i);
            codes.extend(indices.iter().map(|&j| row[j]));
        }
        let mut provenance = self.provenance.clone();
        provenance
            .params
            .insert("selected_samples".into(), indices.len().to_string());
        Self::new(
            indices.len(),
            indices.len(),
            self.symmetric,
            codes,
            self.aggregation,
            provenance,
        )
    }

    /// Row-major code payload size in bytes for a `rows × cols` matrix.
    pub fn payload_bytes(rows: u64, cols: u64) -> u64 {
        rows * cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vector_quantizes_to_zero_scale() {
        let (codes, scale) = quantize_vector(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(codes, vec![0, 0, 0]);
        assert_eq!(scale, 0.0);
    }

    #[test]
    fn hand_computed_quantization() {
        let (codes, scale) = quantize_vector(&[1.0, -0.5, 0.25]).unwrap();
        assert_eq!(codes, vec![127, -64, 32]);
        assert_eq!(scale, 1.0f32 / 127.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            quantize_vector(&[1.0, f32::NAN]),
            Err(FormatError::NonFinite { index: 1 })
        ));
        assert!(quantize_vector(&[f32::INFINITY]).is_err());
    }

    #[test]
    fn similarity_codes() {
        assert_eq!(quantize_similarity(1.0), 127);
        assert_eq!(quantize_similarity(-1.0), -127);
        assert_eq!(quantize_similarity(0.5 / 127.0), 1);
        assert_eq!(quantize_similarity(-0.5 / 127.0), -1);
        assert_eq!(quantize_similarity(f64::NAN), SENTINEL);
        assert_eq!(dequantize_similarity(SENTINEL), None);
        assert_eq!(dequantize_similarity(127), Some(1.0));
    }

    #[test]
    fn vector_set_invariants_enforced() {
        let h = Digest(0);
        assert!(VectorSet::new("m", h, vec![1], 2, vec![0, 0], vec![1.0]).is_err());
        assert!(VectorSet::new("m", h, vec![1], 2, vec![1, 0], vec![0.0]).is_err());
        assert!(VectorSet::new("m", h, vec![1], 2, vec![-128, 0], vec![1.0]).is_err());
        assert!(VectorSet::new("m", h, vec![1], 2, vec![1, 0], vec![-1.0]).is_err());
        assert!(VectorSet::new("m", h, vec![1, 2], 2, vec![1, 0], vec![1.0]).is_err());
        assert!(VectorSet::new("m", h, vec![1], 2, vec![0, 0, 3, 1], vec![0.0, 0.5]).is_ok());
    }

    #[test]
    fn sim_matrix_invariants_enforced() {
        let prov = || SimProvenance {
            rows: SourceInfo {
                model_id: "m".into(),
                dataset_hash: Digest(1),
                digest: None,
            },
            cols: SourceInfo {
                model_id: "m".into(),
                dataset_hash: Digest(1),
                digest: None,
            },
            params: BTreeMap::new(),
        };
        let agg = Aggregation::LayerMean;
        assert!(SimMatrix::new(2, 3, false, vec![0; 6], agg, prov()).is_ok());
        assert!(SimMatrix::new(2, 3, true, vec![0; 6], agg, prov()).is_err());
        assert!(SimMatrix::new(2, 2, true, vec![127, 5, 6, 127], agg, prov()).is_err());
        assert!(SimMatrix::new(2, 2, true, vec![127, 5, 5, 100], agg, prov()).is_err());
        assert!(SimMatrix::new(2, 2, true, vec![127, 5, 5, -128], agg, prov()).is_ok());
    }

    #[test]
    fn storage_size_of_the_largest_artifacts() {
        assert_eq!(SimMatrix::payload_bytes(67_000, 67_000), 4_489_000_000);
    }
}
