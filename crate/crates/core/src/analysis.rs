//! Descriptive statistics over a linguistic similarity matrix.
//!
//! Sums are accumulated over integer codes, so results do not depend on the
//! order in which parallel partial sums are merged.

use rayon::prelude::*;

use crate::digest::Digest;
use crate::model::{Dataset, Level, TaxonEntry};
use crate::rng::SampleRng;
use crate::simkernel::dot_i8;
use crate::tensorstore::{FormatError, SimMatrix, SimMatrixReader, VectorSet, CODE_MAX, SENTINEL};

pub const HIST_BINS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("{labels} labels for a matrix with {n} rows")]
    LabelCount { labels: usize, n: usize },
    #[error("similarity matrix must be square, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("need at least two classes, got {0}")]
    SingleClass(usize),
    #[error("no defined similarity pairs")]
    NoDefinedPairs,
    #[error("dataset hash {found} does not match expected {expected}")]
    DatasetMismatch { expected: Digest, found: Digest },
    #[error("invalid buckets: {0}")]
    BadBuckets(String),
    #[error("embeddings: {0}")]
    Embeddings(String),
    #[error("thresholds must satisfy 0 <= low < high <= 1, got low {low}, high {high}")]
    BadThresholds { low: f64, high: f64 },
    #[error("sample size must be positive")]
    ZeroSample,
    #[error(transparent)]
    Format(#[from] FormatError),
}

fn bin_of_code(c: i8) -> usize {
    let v = c as f64 / CODE_MAX as f64;
    (((v + 1.0) / 2.0 * HIST_BINS as f64).floor() as usize).min(HIST_BINS - 1)
}

/// Running integer sums for one group of pairs.
#[derive(Debug, Clone, PartialEq)]
struct Acc {
    count: u64,
    sum: i64,
    sumsq: i128,
    hist: Vec<u64>,
}

impl Acc {
    fn new() -> Self {
        Self {
            count: 0,
            sum: 0,
            sumsq: 0,
            hist: vec![0; HIST_BINS],
        }
    }

    fn push(&mut self, c: i8) {
        self.count += 1;
        self.sum += c as i64;
        self.sumsq += (c as i128) * (c as i128);
        self.hist[bin_of_code(c)] += 1;
    }

    fn merge(mut self, o: Acc) -> Self {
        self.count += o.count;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
        for (a, b) in self.hist.iter_mut().zip(o.hist) {
            *a += b;
        }
        self
    }

    fn finish(self) -> GroupStats {
        let n = self.count;
        let scale = CODE_MAX as f64;
        let mean = (n > 0).then(|| self.sum as f64 / n as f64 / scale);
        let sd = (n > 1).then(|| {
            let n = n as i128;
            let num = n * self.sumsq - (self.sum as i128) * (self.sum as i128);
            ((num as f64) / ((n * (n - 1)) as f64)).max(0.0).sqrt() / scale
        });
        let se = sd.map(|s| s / (n as f64).sqrt());
        GroupStats {
            count: n,
            mean,
            sd,
            se,
            histogram: self.hist,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub count: u64,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub se: Option<f64>,
    /// Counts over `HIST_BINS` equal bins spanning `[-1, 1]`.
    pub histogram: Vec<u64>,
}

/// Left edge of histogram bin `b`.
pub fn bin_lower_edge(b: usize) -> f64 {
    -1.0 + 2.0 * b as f64 / HIST_BINS as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub n_classes: usize,
    pub intra: GroupStats,
    pub inter: GroupStats,
    pub sampled: bool,
}

impl ClassStats {
    /// Intra-class mean minus inter-class mean.
    pub fn gap(&self) -> Option<f64> {
        Some(self.intra.mean? - self.inter.mean?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairMode {
    /// Every unordered pair `i < j`.
    Exact,
    /// `pairs` intra-class and `pairs` inter-class pairs drawn with replacement.
    Sampled { pairs: usize, seed: u64 },
}

/// Distinct labels in order of first appearance and each sample's class id.
pub fn class_index<S: AsRef<str>>(labels: &[S]) -> (Vec<String>, Vec<usize>) {
    let mut names: Vec<String> = Vec::new();
    let mut lookup = std::collections::HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let l = l.as_ref();
            *lookup.entry(l.to_string()).or_insert_with(|| {
                names.push(l.to_string());
                names.len() - 1
            })
        })
        .collect();
    (names, ids)
}

fn check_square(sim_rows: usize, sim_cols: usize, labels: usize) -> Result<(), AnalysisError> {
    if sim_rows != sim_cols {
        return Err(AnalysisError::NotSquare {
            rows: sim_rows,
            cols: sim_cols,
        });
    }
    if labels != sim_rows {
        return Err(AnalysisError::LabelCount { labels, n: sim_rows });
    }
    Ok(())
}

fn finish_stats(n_classes: usize, intra: Acc, inter: Acc, sampled: bool) -> Result<ClassStats, AnalysisError> {
    if intra.count + inter.count == 0 {
        return Err(AnalysisError::NoDefinedPairs);
    }
    Ok(ClassStats {
        n_classes,
        intra: intra.finish(),
        inter: inter.finish(),
        sampled,
    })
}

/// Intra- and inter-class similarity statistics for one labelling.
pub fn class_similarity_stats<S: AsRef<str> + Sync>(
    sim: &SimMatrix,
    labels: &[S],
    mode: PairMode,
) -> Result<ClassStats, AnalysisError> {
    check_square(sim.rows(), sim.cols(), labels.len())?;
    let (names, ids) = class_index(labels);
    if names.len() < 2 {
        return Err(AnalysisError::SingleClass(names.len()));
    }
    match mode {
        PairMode::Exact => {
            let n = sim.rows();
            let (intra, inter) = (0..n)
                .into_par_iter()
                .fold(
                    || (Acc::new(), Acc::new()),
                    |(mut intra, mut inter), i| {
                        let row = sim.row(i);
                        for j in i + 1..n {
                            let c = row[j];
                            if c == SENTINEL {
                                continue;
                            }
                            if ids[i] == ids[j] {
                                intra.push(c);
                            } else {
                                inter.push(c);
                            }
                        }
                        (intra, inter)
                    },
                )
                .reduce(
                    || (Acc::new(), Acc::new()),
                    |(a1, e1), (a2, e2)| (a1.merge(a2), e1.merge(e2)),
                );
            finish_stats(names.len(), intra, inter, false)
        }
        PairMode::Sampled { pairs, seed } => {
            if pairs == 0 {
                return Err(AnalysisError::ZeroSample);
            }
            let (intra, inter) = sampled_pairs(sim, &ids, names.len(), pairs, seed);
            finish_stats(names.len(), intra, inter, true)
        }
    }
}

fn sampled_pairs(sim: &SimMatrix, ids: &[usize], n_classes: usize, pairs: usize, seed: u64) -> (Acc, Acc) {
    let n = sim.rows();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in ids.iter().enumerate() {
        members[c].push(i);
    }
    // Cumulative unordered intra-pair counts, for drawing a class in
    // proportion to its number of pairs.
    let mut cumulative = Vec::with_capacity(n_classes);
    let mut total = 0u64;
    for m in &members {
        let k = m.len() as u64;
        total += k * k.saturating_sub(1) / 2;
        cumulative.push(total);
    }
    let mut rng = SampleRng::new(seed);
    let max_attempts = pairs.saturating_mul(64);

    let mut intra = Acc::new();
    let mut attempts = 0;
    while total > 0 && (intra.count as usize) < pairs && attempts < max_attempts {
        attempts += 1;
        let u = rng.below(total);
        let class = cumulative.partition_point(|&c| c <= u);
        let m = &members[class];
        let a = rng.below(m.len() as u64) as usize;
        let mut b = rng.below(m.len() as u64 - 1) as usize;
        if b >= a {
            b += 1;
        }
        let c = sim.get(m[a], m[b]);
        if c != SENTINEL {
            intra.push(c);
        }
    }

    let mut inter = Acc::new();
    let mut attempts = 0;
    while (inter.count as usize) < pairs && attempts < max_attempts {
        attempts += 1;
        let i = rng.below(n as u64) as usize;
        let j = rng.below(n as u64) as usize;
        if ids[i] == ids[j] {
            continue;
        }
        let c = sim.get(i, j);
        if c != SENTINEL {
            inter.push(c);
        }
    }
    (intra, inter)
}

/// Exact statistics computed by streaming rows from an LSIM file.
pub fn class_similarity_stats_streaming<R, S>(
    reader: &mut SimMatrixReader<R>,
    labels: &[S],
) -> Result<ClassStats, AnalysisError>
where
    R: std::io::Read + std::io::Seek,
    S: AsRef<str>,
{
    check_square(reader.rows(), reader.cols(), labels.len())?;
    let (names, ids) = class_index(labels);
    if names.len() < 2 {
        return Err(AnalysisError::SingleClass(names.len()));
    }
    let mut intra = Acc::new();
    let mut inter = Acc::new();
    reader.for_each_row(|i, row| {
        for (j, &c) in row.iter().enumerate().skip(i + 1) {
            if c == SENTINEL {
                continue;
            }
            if ids[i] == ids[j] {
                intra.push(c);
            } else {
                inter.push(c);
            }
        }
    })?;
    finish_stats(names.len(), intra, inter, false)
}

/// Mean similarity between every pair of row class and column class.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMeans {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    sums: Vec<i64>,
    counts: Vec<u64>,
}

impl BlockMeans {
    pub fn n_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn count(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.n_cols() + c]
    }

    /// `None` when the block has no defined pairs.
    pub fn mean(&self, r: usize, c: usize) -> Option<f64> {
        let k = r * self.n_cols() + c;
        (self.counts[k] > 0).then(|| self.sums[k] as f64 / self.counts[k] as f64 / CODE_MAX as f64)
    }
}

fn block_means<S: AsRef<str>>(
    sim: &SimMatrix,
    row_labels: &[S],
    col_labels: &[S],
    exclude_diagonal: bool,
) -> BlockMeans {
    let (row_names, row_ids) = class_index(row_labels);
    let (col_names, col_ids) = class_index(col_labels);
    let (nr, nc) = (row_names.len(), col_names.len());
    let (sums, counts) = (0..sim.rows())
        .into_par_iter()
        .fold(
            || (vec![0i64; nr * nc], vec![0u64; nr * nc]),
            |(mut sums, mut counts), i| {
                let base = row_ids[i] * nc;
                for (j, &c) in sim.row(i).iter().enumerate() {
                    if c == SENTINEL || (exclude_diagonal && i == j) {
                        continue;
                    }
                    sums[base + col_ids[j]] += c as i64;
                    counts[base + col_ids[j]] += 1;
                }
                (sums, counts)
            },
        )
        .reduce(
            || (vec![0i64; nr * nc], vec![0u64; nr * nc]),
            |(mut s1, mut c1), (s2, c2)| {
                s1.iter_mut().zip(s2).for_each(|(a, b)| *a += b);
                c1.iter_mut().zip(c2).for_each(|(a, b)| *a += b);
                (s1, c1)
            },
        );
    BlockMeans {
        row_labels: row_names,
        col_labels: col_names,
        sums,
        counts,
    }
}

fn expect_hash(expected: Digest, found: Digest) -> Result<(), AnalysisError> {
    if expected != found {
        return Err(AnalysisError::DatasetMismatch { expected, found });
    }
    Ok(())
}

/// Phenomenon × phenomenon mean similarity, excluding self-pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenomenonMatrix {
    /// Taxonomy of each row/column phenomenon, in first-appearance order.
    pub entries: Vec<TaxonEntry>,
    pub blocks: BlockMeans,
}

pub fn phenomenon_matrix(sim: &SimMatrix, dataset: &Dataset) -> Result<PhenomenonMatrix, AnalysisError> {
    check_square(sim.rows(), sim.cols(), dataset.len())?;
    expect_hash(dataset.content_hash(), sim.provenance.rows.dataset_hash)?;
    let labels = dataset.labels(Level::Phenomenon);
    let blocks = block_means(sim, &labels, &labels, true);
    let mut entries = Vec::with_capacity(blocks.n_rows());
    let mut seen = std::collections::HashSet::new();
    for (i, l) in labels.iter().enumerate() {
        if seen.insert(*l) {
            entries.push(dataset.taxon(i).clone());
        }
    }
    Ok(PhenomenonMatrix { entries, blocks })
}

/// Mean similarity between classes of two datasets, from a rectangular
/// cross-dataset matrix.
pub fn cross_lingual_term_table(
    sim: &SimMatrix,
    rows: &Dataset,
    cols: &Dataset,
    level: Level,
) -> Result<BlockMeans, AnalysisError> {
    if sim.rows() != rows.len() {
        return Err(AnalysisError::LabelCount {
            labels: rows.len(),
            n: sim.rows(),
        });
    }
    if sim.cols() != cols.len() {
        return Err(AnalysisError::LabelCount {
            labels: cols.len(),
            n: sim.cols(),
        });
    }
    expect_hash(rows.content_hash(), sim.provenance.rows.dataset_hash)?;
    expect_hash(cols.content_hash(), sim.provenance.cols.dataset_hash)?;
    Ok(block_means(sim, &rows.labels(level), &cols.labels(level), false))
}

/// Half-open similarity range `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
}

impl Bucket {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }

    pub fn label(&self) -> String {
        format!("({}, {}]", self.lo, self.hi)
    }
}

/// Buckets from strictly ascending edges, highest bucket first.
pub fn buckets_from_edges(edges: &[f64]) -> Result<Vec<Bucket>, AnalysisError> {
    if edges.len() < 2 {
        return Err(AnalysisError::BadBuckets("need at least two edges".into()));
    }
    if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadBuckets("edges must be strictly ascending".into()));
    }
    Ok(edges
        .windows(2)
        .rev()
        .map(|w| Bucket { lo: w[0], hi: w[1] })
        .collect())
}

/// Ten buckets of width 0.1 over `(0, 1]` and one for non-positive values.
pub fn default_buckets() -> Vec<Bucket> {
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend((0..=10).map(|k| k as f64 / 10.0));
    buckets_from_edges(&edges).expect("ascending edges")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRecord {
    pub bucket: usize,
    pub i: usize,
    pub j: usize,
    pub linguistic: f64,
    pub semantic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub buckets: Vec<Bucket>,
    /// Eligible pairs seen per bucket.
    pub population: Vec<u64>,
    /// Sorted by bucket, then `i`, then `j`.
    pub records: Vec<JointRecord>,
    pub pearson_r: Option<f64>,
}

/// Pearson correlation; `None` with fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Stratified sample of pairs by linguistic-similarity bucket, with the
/// semantic similarity of each sampled pair.
///
/// Pairs are visited once in `(i, j)` order with `i < j`; each bucket keeps a
/// uniform reservoir of `per_bucket` pairs. Pairs with an undefined
/// linguistic value or a zero sentence embedding are not eligible.
pub fn joint_distribution_sample(
    sim: &SimMatrix,
    semantic: &VectorSet,
    buckets: &[Bucket],
    per_bucket: usize,
    seed: u64,
) -> Result<JointSample, AnalysisError> {
    let n = sim.rows();
    check_square(sim.rows(), sim.cols(), n)?;
    if per_bucket == 0 {
        return Err(AnalysisError::ZeroSample);
    }
    if buckets.is_empty() {
        return Err(AnalysisError::BadBuckets("no buckets".into()));
    }
    if semantic.n_layers() != 1 {
        return Err(AnalysisError::Embeddings(format!(
            "expected one vector per sample, found {} layers",
            semantic.n_layers()
        )));
    }
    if semantic.n_samples() != n {
        return Err(AnalysisError::Embeddings(format!(
            "{} embeddings for {n} samples",
            semantic.n_samples()
        )));
    }
    expect_hash(sim.provenance.rows.dataset_hash, semantic.dataset_hash)?;

    let bucket_of_code: Vec<Option<usize>> = (0..256)
        .map(|b| {
            let c = (b as u8) as i8;
            if c == SENTINEL {
                return None;
            }
            let v = c as f64 / CODE_MAX as f64;
            buckets.iter().position(|bk| bk.contains(v))
        })
        .collect();
    let norm2: Vec<i64> = (0..n)
        .map(|i| {
            let v = semantic.sample_codes(i);
            dot_i8(v, v)
        })
        .collect();

    let mut rng = SampleRng::new(seed);
    let mut reservoirs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); buckets.len()];
    let mut population = vec![0u64; buckets.len()];
    for i in 0..n {
        if norm2[i] == 0 {
            continue;
        }
        let row = sim.row(i);
        for j in i + 1..n {
            if norm2[j] == 0 {
                continue;
            }
            let Some(b) = bucket_of_code[row[j] as u8 as usize] else {
                continue;
            };
            population[b] += 1;
            let res = &mut reservoirs[b];
            if res.len() < per_bucket {
                res.push((i, j));
            } else {
                let r = rng.below(population[b]) as usize;
                if r < per_bucket {
                    res[r] = (i, j);
                }
            }
        }
    }

    let mut records = Vec::new();
    for (b, mut res) in reservoirs.into_iter().enumerate() {
        res.sort_unstable();
        for (i, j) in res {
            let dot = dot_i8(semantic.sample_codes(i), semantic.sample_codes(j));
            let cos = dot as f64 / ((norm2[i] as f64).sqrt() * (norm2[j] as f64).sqrt());
            records.push(JointRecord {
                bucket: b,
                i,
                j,
                linguistic: sim.get(i, j) as f64 / CODE_MAX as f64,
                semantic: cos.clamp(-1.0, 1.0),
            });
        }
    }
    let xs: Vec<f64> = records.iter().map(|r| r.linguistic).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.semantic).collect();
    Ok(JointSample {
        buckets: buckets.to_vec(),
        population,
        pearson_r: pearson(&xs, &ys),
        records,
    })
}

/// Linguistic level first, semantic level second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrant {
    HighHigh,
    HighLow,
    LowHigh,
    LowLow,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::HighHigh,
        Quadrant::HighLow,
        Quadrant::LowHigh,
        Quadrant::LowLow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::HighHigh => "high_ling_high_sem",
            Quadrant::HighLow => "high_ling_low_sem",
            Quadrant::LowHigh => "low_ling_high_sem",
            Quadrant::LowLow => "low_ling_low_sem",
        }
    }
}

/// Quadrant of a point: high means `>= high`, low means `<= low`.
pub fn quadrant_of(linguistic: f64, semantic: f64, high: f64, low: f64) -> Option<Quadrant> {
    let level = |x: f64| {
        if x >= high {
            Some(true)
        } else if x <= low {
            Some(false)
        } else {
            None
        }
    };
    match (level(linguistic)?, level(semantic)?) {
        (true, true) => Some(Quadrant::HighHigh),
        (true, false) => Some(Quadrant::HighLow),
        (false, true) => Some(Quadrant::LowHigh),
        (false, false) => Some(Quadrant::LowLow),
    }
}

/// Up to `per_quadrant` records per quadrant, in record order.
pub fn quadrant_examples(
    records: &[JointRecord],
    high: f64,
    low: f64,
    per_quadrant: usize,
) -> Result<Vec<(Quadrant, Vec<JointRecord>)>, AnalysisError> {
    if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low >= high {
        return Err(AnalysisError::BadThresholds { low, high });
    }
    let mut out: Vec<(Quadrant, Vec<JointRecord>)> =
        Quadrant::ALL.iter().map(|&q| (q, Vec::new())).collect();
    for r in records {
        if let Some(q) = quadrant_of(r.linguistic, r.semantic, high, low) {
            let slot = &mut out[Quadrant::ALL.iter().position(|&x| x == q).unwrap()].1;
            if slot.len() < per_quadrant {
                slot.push(*r);
            }
        }
    }
    Ok(out)
}
