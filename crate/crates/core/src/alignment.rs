//! Mutual k-nearest-neighbor alignment between models' similarity structures.
//!
//! For each sample, the k most similar other samples are retrieved from each
//! model's similarity matrix; the alignment score is the mean fraction of
//! neighbors the two models share. The query sample itself is never its own
//! neighbor, sentinel entries are never neighbors, and ties are broken by
//! ascending sample index so results are platform independent.

use rayon::prelude::*;

use crate::tensorstore::{SimMatrix, SENTINEL};

/// Floor applied before taking `-ln` of an alignment score.
pub const DISTANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AlignmentError {
    #[error("k must be positive")]
    ZeroK,
    #[error("k = {k} must be smaller than the {n} samples")]
    KTooLarge { k: usize, n: usize },
    #[error("only {available} defined neighbors, need {k}")]
    TooFewCandidates { available: usize, k: usize },
    #[error("self index {index} out of range for row of {len}")]
    SelfIndexOutOfRange { index: usize, len: usize },
    #[error("similarity matrix must be square, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("sample counts differ: {a} vs {b}")]
    ShapeMismatch { a: usize, b: usize },
    #[error("matrices were built from different sample orders")]
    DatasetMismatch,
    #[error("need at least two models, got {0}")]
    TooFewModels(usize),
    #[error("no sample is defined in both matrices")]
    NoDefinedSamples,
    #[error("alignment score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Indices of the `k` largest defined entries of `row`, excluding
/// `self_index`, returned in ascending index order.
pub fn topk_neighbors(row: &[i8], self_index: usize, k: usize) -> Result<Vec<usize>, AlignmentError> {
    if k == 0 {
        return Err(AlignmentError::ZeroK);
    }
    if self_index >= row.len() {
        return Err(AlignmentError::SelfIndexOutOfRange {
            index: self_index,
            len: row.len(),
        });
    }
    let mut cand: Vec<(i8, usize)> = row
        .iter()
        .enumerate()
        .filter(|&(j, &c)| j != self_index && c != SENTINEL)
        .map(|(j, &c)| (c, j))
        .collect();
    if cand.len() < k {
        return Err(AlignmentError::TooFewCandidates {
            available: cand.len(),
            k,
        });
    }
    let by_rank = |x: &(i8, usize), y: &(i8, usize)| y.0.cmp(&x.0).then(x.1.cmp(&y.1));
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, by_rank);
    }
    let mut out: Vec<usize> = cand[..k].iter().map(|&(_, j)| j).collect();
    out.sort_unstable();
    Ok(out)
}

/// Per-sample neighbor sets for one matrix; `None` marks samples with too
/// few defined neighbors (e.g. zero activation differences).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    pub k: usize,
    pub sets: Vec<Option<Vec<usize>>>,
}

pub fn neighbor_sets(sim: &SimMatrix, k: usize) -> Result<NeighborSets, AlignmentError> {
    let n = sim.rows();
    if !sim.is_square() {
        return Err(AlignmentError::NotSquare {
            rows: sim.rows(),
            cols: sim.cols(),
        });
    }
    if k == 0 {
        return Err(AlignmentError::ZeroK);
    }
    if k >= n {
        return Err(AlignmentError::KTooLarge { k, n });
    }
    let sets = (0..n)
        .into_par_iter()
        .map(|i| topk_neighbors(sim.row(i), i, k).ok())
        .collect();
    Ok(NeighborSets { k, sets })
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Overlap score of two neighbor-set collections plus the skipped samples.
pub fn overlap_score(a: &NeighborSets, b: &NeighborSets) -> Result<(f64, Vec<usize>), AlignmentError> {
    if a.sets.len() != b.sets.len() {
        return Err(AlignmentError::ShapeMismatch {
            a: a.sets.len(),
            b: b.sets.len(),
        });
    }
    let k = a.k;
    let mut total = 0usize;
    let mut evaluated = 0usize;
    let mut skipped = Vec::new();
    for (i, (sa, sb)) in a.sets.iter().zip(&b.sets).enumerate() {
        match (sa, sb) {
            (Some(sa), Some(sb)) => {
                total += sorted_intersection_len(sa, sb);
                evaluated += 1;
            }
            _ => skipped.push(i),
        }
    }
    if evaluated == 0 {
        return Err(AlignmentError::NoDefinedSamples);
    }
    Ok((total as f64 / (k as f64 * evaluated as f64), skipped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub model_a: String,
    pub model_b: String,
    pub k: usize,
    pub n: usize,
    pub score: f64,
    /// Samples left out because they were undefined in either matrix.
    pub skipped: Vec<usize>,
}

fn check_pair(a: &SimMatrix, b: &SimMatrix) -> Result<(), AlignmentError> {
    for m in [a, b] {
        if !m.is_square() {
            return Err(AlignmentError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
    }
    if a.rows() != b.rows() {
        return Err(AlignmentError::ShapeMismatch {
            a: a.rows(),
            b: b.rows(),
        });
    }
    match (a.dataset_hash(), b.dataset_hash()) {
        (Some(x), Some(y)) if x == y => Ok(()),
        _ => Err(AlignmentError::DatasetMismatch),
    }
}

pub fn mutual_knn_alignment(a: &SimMatrix, b: &SimMatrix, k: usize) -> Result<AlignmentResult, AlignmentError> {
    check_pair(a, b)?;
    let na = neighbor_sets(a, k)?;
    let nb = neighbor_sets(b, k)?;
    let (score, skipped) = overlap_score(&na, &nb)?;
    Ok(AlignmentResult {
        model_a: a.provenance.rows.model_id.clone(),
        model_b: b.provenance.rows.model_id.clone(),
        k,
        n: a.rows(),
        score,
        skipped,
    })
}

/// Symmetric model × model alignment scores with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    pub model_ids: Vec<String>,
    pub k: usize,
    pub n: usize,
    scores: Vec<f64>,
}

impl AlignmentMatrix {
    pub fn len(&self) -> usize {
        self.model_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_ids.is_empty()
    }

    pub fn score(&self, a: usize, b: usize) -> f64 {
        self.scores[a * self.len() + b]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// `-ln(score)` for every cell, row-major.
    pub fn distances(&self) -> Vec<f64> {
        self.scores
            .iter()
            .map(|&s| distance_from_alignment(s).expect("scores lie in [0, 1]"))
            .collect()
    }

    /// Mean over the off-diagonal upper triangle.
    pub fn mean_off_diagonal(&self) -> Option<f64> {
        let m = self.len();
        let mut sum = 0.0;
        let mut count = 0usize;
        for a in 0..m {
            for b in a + 1..m {
                sum += self.score(a, b);
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Pairwise alignment of every model against every other.
pub fn alignment_matrix(models: &[(&str, &SimMatrix)], k: usize) -> Result<AlignmentMatrix, AlignmentError> {
    let m = models.len();
    if m < 2 {
        return Err(AlignmentError::TooFewModels(m));
    }
    for (_, sim) in &models[1..] {
        check_pair(models[0].1, sim)?;
    }
    let sets: Vec<NeighborSets> = models
        .iter()
        .map(|(_, sim)| neighbor_sets(sim, k))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let pair_scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| overlap_score(&sets[a], &sets[b]).map(|(s, _)| s))
        .collect::<Result<_, _>>()?;

    let mut scores = vec![0.0; m * m];
    for a in 0..m {
        scores[a * m + a] = 1.0;
    }
    for (&(a, b), &s) in pairs.iter().zip(&pair_scores) {
        scores[a * m + b] = s;
        scores[b * m + a] = s;
    }
    Ok(AlignmentMatrix {
        model_ids: models.iter().map(|(id, _)| id.to_string()).collect(),
        k,
        n: models[0].1.rows(),
        scores,
    })
}

/// `-ln(max(score, ε))` with `ε = 1e-6`.
pub fn distance_from_alignment(score: f64) -> Result<f64, AlignmentError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(AlignmentError::ScoreOutOfRange(score));
    }
    let d = -score.max(DISTANCE_EPSILON).ln();
    // -ln(1) is -0.0; report +0.0.
    Ok(if d == 0.0 { 0.0 } else { d })
}
