//! Blocked pairwise cosine similarity over quantized vector sets.
//!
//! Per-layer dot products are exact `i64` sums of `i8` products; only the
//! normalization happens in `f64`. Each output cell is produced by exactly one
//! task with a fixed accumulation order, so the result does not depend on the
//! thread count.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use rayon::prelude::*;

use crate::tensorstore::{
    quantize_similarity, Aggregation, FormatError, SimMatrix, SimProvenance, SourceInfo,
    VectorSet, CODE_MAX, SENTINEL,
};

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model mismatch: `{a}` vs `{b}` (pass force to compare across models)")]
    ModelMismatch { a: String, b: String },
    #[error("tile must be at least 1")]
    BadTile,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threads {
    #[default]
    Auto,
    Fixed(NonZeroUsize),
}

impl Threads {
    pub fn fixed(n: usize) -> Self {
        NonZeroUsize::new(n).map_or(Threads::Auto, Threads::Fixed)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub aggregation: Aggregation,
    /// Output tile edge.
    pub tile: usize,
    pub threads: Threads,
    /// Allow comparing vector sets from different models.
    pub force_cross_model: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::LayerMean,
            tile: 256,
            threads: Threads::Auto,
            force_cross_model: false,
        }
    }
}

/// Exact dot product of two code vectors.
pub fn dot_i8(a: &[i8], b: &[i8]) -> i64 {
    // 4096 · 127² < 2³¹, so each chunk fits an i32 accumulator.
    a.chunks(4096)
        .zip(b.chunks(4096))
        .map(|(ca, cb)| {
            ca.iter()
                .zip(cb)
                .map(|(&x, &y)| x as i32 * y as i32)
                .sum::<i32>() as i64
        })
        .sum()
}

fn cosine_from_parts(dot: i64, norm2_a: i64, norm2_b: i64) -> Option<f64> {
    if norm2_a == 0 || norm2_b == 0 {
        return None;
    }
    let c = dot as f64 / ((norm2_a as f64).sqrt() * (norm2_b as f64).sqrt());
    Some(c.clamp(-1.0, 1.0))
}

/// Cosine of two code vectors; `None` when either is all zero.
pub fn cosine_layer(a: &[i8], b: &[i8]) -> Result<Option<f64>, KernelError> {
    if a.len() != b.len() {
        return Err(KernelError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.is_empty() {
        return Err(KernelError::Empty);
    }
    Ok(cosine_from_parts(dot_i8(a, b), dot_i8(a, a), dot_i8(b, b)))
}

/// Per-vector squared norms, cached once per set.
struct Prepared<'a> {
    vs: &'a VectorSet,
    norm2: Vec<i64>,
}

impl<'a> Prepared<'a> {
    fn new(vs: &'a VectorSet) -> Self {
        let norm2 = vs
            .codes()
            .par_chunks(vs.dim())
            .map(|c| dot_i8(c, c))
            .collect();
        Self { vs, norm2 }
    }

    fn norm2(&self, i: usize, layer: usize) -> i64 {
        self.norm2[i * self.vs.n_layers() + layer]
    }
}

fn cell(a: &Prepared, i: usize, b: &Prepared, j: usize, agg: Aggregation) -> Option<f64> {
    let layers = a.vs.n_layers();
    match agg {
        Aggregation::LayerMean => {
            let mut sum = 0.0;
            let mut used = 0usize;
            for l in 0..layers {
                let (na, nb) = (a.norm2(i, l), b.norm2(j, l));
                if na == 0 || nb == 0 {
                    continue;
                }
                let dot = dot_i8(a.vs.layer_codes(i, l), b.vs.layer_codes(j, l));
                sum += cosine_from_parts(dot, na, nb).expect("norms are nonzero");
                used += 1;
            }
            (used > 0).then(|| sum / used as f64)
        }
        Aggregation::Concat => {
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            for l in 0..layers {
                let sa = a.vs.scale(i, l) as f64;
                let sb = b.vs.scale(j, l) as f64;
                na += sa * sa * a.norm2(i, l) as f64;
                nb += sb * sb * b.norm2(j, l) as f64;
                if sa != 0.0 && sb != 0.0 {
                    dot += sa * sb * dot_i8(a.vs.layer_codes(i, l), b.vs.layer_codes(j, l)) as f64;
                }
            }
            (na > 0.0 && nb > 0.0).then(|| (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
        }
    }
}

fn source_info(vs: &VectorSet) -> SourceInfo {
    SourceInfo {
        model_id: vs.model_id.clone(),
        dataset_hash: vs.dataset_hash,
        digest: Some(vs.digest()),
    }
}

fn run_with_threads<T: Send>(
    threads: Threads,
    f: impl FnOnce() -> T + Send,
) -> Result<T, KernelError> {
    match threads {
        Threads::Auto => Ok(f()),
        Threads::Fixed(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.get())
                .build()
                .map_err(|e| KernelError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Similarity of every sample in `a` with every sample in `b` (or `a` itself
/// when `b` is `None`, giving a symmetric matrix with a 127 diagonal).
pub fn pairwise_similarity(
    a: &VectorSet,
    b: Option<&VectorSet>,
    cfg: &SimConfig,
) -> Result<SimMatrix, KernelError> {
    if cfg.tile == 0 {
        return Err(KernelError::BadTile);
    }
    if a.n_samples() == 0 || b.is_some_and(|b| b.n_samples() == 0) {
        return Err(KernelError::Empty);
    }
    if let Some(b) = b {
        if a.dim() != b.dim() || a.n_layers() != b.n_layers() {
            return Err(KernelError::ShapeMismatch(format!(
                "{}×{} vs {}×{} (layers × dim)",
                a.n_layers(),
                a.dim(),
                b.n_layers(),
                b.dim()
            )));
        }
        if a.model_id != b.model_id && !cfg.force_cross_model {
            return Err(KernelError::ModelMismatch {
                a: a.model_id.clone(),
                b: b.model_id.clone(),
            });
        }
    }
    let symmetric = b.is_none();
    let b = b.unwrap_or(a);
    let (rows, cols) = (a.n_samples(), b.n_samples());
    let tile = cfg.tile;
    let agg = cfg.aggregation;

    let codes = run_with_threads(cfg.threads, || {
        let pa = Prepared::new(a);
        let pb = if symmetric { None } else { Some(Prepared::new(b)) };
        let pb = pb.as_ref().unwrap_or(&pa);
        let mut out = vec![SENTINEL; rows * cols];
        out.par_chunks_mut(tile * cols)
            .enumerate()
            .for_each(|(stripe, block)| {
                let r0 = stripe * tile;
                let r1 = (r0 + tile).min(rows);
                let first_col_tile = if symmetric { stripe } else { 0 };
                for c0 in (first_col_tile * tile..cols).step_by(tile) {
                    let c1 = (c0 + tile).min(cols);
                    for i in r0..r1 {
                        let row = &mut block[(i - r0) * cols..(i - r0 + 1) * cols];
                        let start = if symmetric { c0.max(i) } else { c0 };
                        for j in start..c1 {
                            let v = cell(&pa, i, pb, j, agg);
                            row[j] = match v {
                                Some(_) if symmetric && i == j => CODE_MAX,
                                Some(v) => quantize_similarity(v),
                                None => SENTINEL,
                            };
                        }
                    }
                }
            });
        if symmetric {
            for i in 1..rows {
                for j in 0..i {
                    out[i * cols + j] = out[j * cols + i];
                }
            }
        }
        out
    })?;

    let mut params = BTreeMap::new();
    params.insert("tile".to_string(), tile.to_string());
    params.insert("aggregation".to_string(), agg.to_string());
    if cfg.force_cross_model && a.model_id != b.model_id {
        params.insert("force_cross_model".to_string(), "true".to_string());
    }
    let provenance = SimProvenance {
        rows: source_info(a),
        cols: source_info(b),
        params,
    };
    Ok(SimMatrix::new(rows, cols, symmetric, codes, agg, provenance)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::Digest;

    #[test]
    fn self_similarity_is_one() {
        assert_eq!(cosine_layer(&[3, -4], &[3, -4]).unwrap(), Some(1.0));
    }

    #[test]
    fn orthogonal_is_zero() {
        assert_eq!(cosine_layer(&[1, 0], &[0, 1]).unwrap(), Some(0.0));
    }

    #[test]
    fn hand_computed_angle() {
        let c = cosine_layer(&[127, 0], &[90, 90]).unwrap().unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_is_undefined() {
        assert_eq!(cosine_layer(&[0, 0], &[1, 2]).unwrap(), None);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            cosine_layer(&[1, 2], &[1]),
            Err(KernelError::LengthMismatch { a: 2, b: 1 })
        ));
        assert!(matches!(cosine_layer(&[], &[]), Err(KernelError::Empty)));
    }

    #[test]
    fn dot_handles_long_vectors_exactly() {
        let a = vec![127i8; 20_000];
        let b = vec![-127i8; 20_000];
        assert_eq!(dot_i8(&a, &b), -(127 * 127 * 20_000));
    }

    fn set(model: &str, data: &[f32], layers: usize, dim: usize) -> VectorSet {
        VectorSet::from_f32(model, Digest(3), (1..=layers as u32).collect(), dim, data).unwrap()
    }

    #[test]
    fn diagonal_is_127_and_zero_rows_are_sentinel() {
        // sample 1 is all zero in both layers
        let data = [1.0, 2.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, -1.0, 1.0, 1.0];
        let vs = set("m", &data, 2, 2);
        let m = pairwise_similarity(&vs, None, &SimConfig::default()).unwrap();
        assert_eq!(m.get(0, 0), 127);
        assert_eq!(m.get(2, 2), 127);
        assert!(m.row(1).iter().all(|&c| c == SENTINEL));
        assert_eq!(m.get(0, 1), SENTINEL);
        assert!(m.is_symmetric());
    }

    #[test]
    fn layer_mean_skips_zero_layers() {
        // sample 0: layer 0 = (1, 0), layer 1 = 0; sample 1: (1, 0), (0, 1)
        let data = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let vs = set("m", &data, 2, 2);
        let m = pairwise_similarity(&vs, None, &SimConfig::default()).unwrap();
        assert_eq!(m.get(0, 1), 127);
        let cfg = SimConfig {
            aggregation: Aggregation::Concat,
            ..SimConfig::default()
        };
        let c = pairwise_similarity(&vs, None, &cfg).unwrap();
        // concat: (1,0,0,0)·(1,0,0,1) / √2
        assert_eq!(c.get(0, 1), quantize_similarity(std::f64::consts::FRAC_1_SQRT_2));
    }

    #[test]
    fn cross_model_requires_force() {
        let a = set("a", &[1.0, 0.0], 1, 2);
        let b = set("b", &[0.0, 1.0], 1, 2);
        assert!(matches!(
            pairwise_similarity(&a, Some(&b), &SimConfig::default()),
            Err(KernelError::ModelMismatch { .. })
        ));
        let cfg = SimConfig {
            force_cross_model: true,
            ..SimConfig::default()
        };
        let m = pairwise_similarity(&a, Some(&b), &cfg).unwrap();
        assert_eq!(m.get(0, 0), 0);
        assert_eq!(m.provenance.params.get("force_cross_model").map(String::as_str), Some("true"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = set("a", &[1.0, 0.0], 1, 2);
        let b = set("a", &[1.0, 0.0, 1.0], 1, 3);
        assert!(matches!(
            pairwise_similarity(&a, Some(&b), &SimConfig::default()),
            Err(KernelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rectangular_tiles_cover_every_cell() {
        let data: Vec<f32> = (0..7 * 3).map(|x| ((x * 37 % 11) as f32) - 5.0).collect();
        let a = set("m", &data[..5 * 3], 1, 3);
        let b = set("m", &data, 1, 3);
        let small = SimConfig {
            tile: 2,
            ..SimConfig::default()
        };
        let m1 = pairwise_similarity(&a, Some(&b), &small).unwrap();
        let m2 = pairwise_similarity(&a, Some(&b), &SimConfig::default()).unwrap();
        assert_eq!(m1.codes(), m2.codes());
        assert_eq!((m1.rows(), m1.cols()), (5, 7));
        assert!(!m1.is_symmetric());
    }
}
