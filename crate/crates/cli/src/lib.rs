//! `lingsim` command line: ingestion, similarity matrices, alignment,
//! analysis and embedding, each writing CSV or binary artifacts with a
//! `.manifest.json` sibling.

mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use lingsim::alignment::{alignment_matrix, distance_from_alignment};
use lingsim::analysis::{
    bin_lower_edge, buckets_from_edges, class_similarity_stats, class_similarity_stats_streaming,
    cross_lingual_term_table, default_buckets, joint_distribution_sample, phenomenon_matrix,
    quadrant_examples, BlockMeans, Bucket, ClassStats, JointRecord, PairMode, HIST_BINS,
};
use lingsim::embed::classical_mds;
use lingsim::model::{k_from_pool, parse_minimal_pairs, subsample_indices, Adapter};
use lingsim::simkernel::{pairwise_similarity, SimConfig, Threads};
use lingsim::tensorstore::{
    quantize_similarity, read_sim_matrix, read_vector_set, write_sim_matrix, SimMatrixReader,
    SimProvenance, SourceInfo, VectorSetReader, LDIF_MAGIC, LSIM_MAGIC, SENTINEL,
};
use lingsim::{Aggregation, Dataset, Level, SimMatrix};

pub use output::{manifest_path, RunManifest};
use output::{fmt_opt, write_atomic, write_csv};

#[derive(Debug, Parser)]
#[command(name = "lingsim", version, about = "Linguistic similarity analysis of language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a minimal-pair corpus into canonical JSONL.
    Ingest {
        #[arg(long)]
        adapter: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset identifier; defaults to the input file stem.
        #[arg(long)]
        dataset_id: Option<String>,
    },
    /// Pairwise cosine similarity of one or two LDIF files.
    Simmatrix {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, default_value = "layer_mean")]
        mode: Aggregation,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        tile: usize,
        #[arg(long, env = "LINGSIM_THREADS")]
        threads: Option<usize>,
        #[arg(long)]
        force_cross_model: bool,
    },
    /// Element-wise mean of several similarity matrices.
    AverageSims {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mutual k-NN alignment between models.
    Align {
        #[arg(long, num_args = 2.., required = true)]
        sims: Vec<PathBuf>,
        /// Neighborhood size, or `auto` for 1% of the sample pool.
        #[arg(long, default_value = "auto")]
        k: String,
        /// Evaluate on a seeded random fraction of the samples.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Distance matrix output; defaults to `<out stem>.distances.csv`.
        #[arg(long)]
        distances: Option<PathBuf>,
    },
    /// Planar classical MDS of a distance-matrix CSV.
    Embed {
        #[arg(long)]
        distances: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Intra- and inter-class similarity statistics.
    Stats {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// phenomenon, term, field or all.
        #[arg(long, default_value = "all")]
        level: String,
        /// Estimate from this many sampled pairs per group instead of all pairs.
        #[arg(long)]
        sample_pairs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phenomenon × phenomenon mean similarity.
    Phenomatrix {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class × class mean similarity across two datasets.
    Crosstable {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        dataset_a: PathBuf,
        #[arg(long)]
        dataset_b: PathBuf,
        #[arg(long, default_value = "term")]
        level: Level,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified sample of linguistic vs semantic similarity.
    Joint {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// `default` or ascending comma-separated edges, e.g. `-inf,0,0.5,1`.
        #[arg(long, default_value = "default", allow_hyphen_values = true)]
        buckets: String,
        #[arg(long, default_value_t = 1000)]
        per_bucket: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Example pairs from each corner of the joint distribution.
    Quadrants {
        #[arg(long)]
        joint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        high: f64,
        #[arg(long, default_value_t = 0.3)]
        low: f64,
        #[arg(long, default_value_t = 5)]
        per_quadrant: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate and describe an LDIF or LSIM file.
    Info { path: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Simmatrix { .. } => "simmatrix",
            Command::AverageSims { .. } => "average-sims",
            Command::Align { .. } => "align",
            Command::Embed { .. } => "embed",
            Command::Stats { .. } => "stats",
            Command::Phenomatrix { .. } => "phenomatrix",
            Command::Crosstable { .. } => "crosstable",
            Command::Joint { .. } => "joint",
            Command::Quadrants { .. } => "quadrants",
            Command::Info { .. } => "info",
        }
    }
}

/// Runs the command line with process stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_output(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the command line; returns the process exit code.
pub fn run_with_output<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let name = cli.command.name();
    match execute(cli.command, argv, out) {
        Ok(()) => 0,
        Err(e) => {
            let line = serde_json::json!({
                "status": "error",
                "command": name,
                "message": format!("{e:#}"),
            });
            let _ = writeln!(err, "error: {line}");
            1
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_minimal_pairs(open(path)?, Adapter::Canonical, &id)
        .with_context(|| format!("reading dataset {}", path.display()))
}

fn load_sim(path: &Path) -> Result<SimMatrix> {
    read_sim_matrix(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn ensure_same_dataset(what: &str, dataset: &Dataset, found: Option<lingsim::Digest>) -> Result<()> {
    let expected = dataset.content_hash();
    match found {
        Some(h) if h == expected => Ok(()),
        Some(h) => bail!("digest mismatch: {what} has dataset_hash {h}, dataset file has {expected}"),
        None => bail!("digest mismatch: {what} spans two datasets, expected {expected} on both sides"),
    }
}

fn execute(cmd: Command, argv: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let mut m = RunManifest::new(argv);
    match cmd {
        Command::Ingest {
            adapter,
            input,
            out,
            dataset_id,
        } => {
            let adapter: Adapter = adapter.parse()?;
            m.input(&input)?;
            let id = dataset_id.unwrap_or_else(|| {
                input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let ds = parse_minimal_pairs(open(&input)?, adapter, &id)
                .with_context(|| format!("reading {}", input.display()))?;
            let d = write_atomic(&out, |w| Ok(ds.write_canonical(w)?))?;
            m.output(&out, d);
            m.param("adapter", adapter.to_string());
            m.param("dataset_id", id);
            m.param("pairs", ds.len());
            m.param("dataset_hash", ds.content_hash().to_string());
            writeln!(stdout, "{} pairs, dataset_hash {}", ds.len(), ds.content_hash())?;
        }
        Command::Simmatrix {
            a,
            b,
            mode,
            out,
            tile,
            threads,
            force_cross_model,
        } => {
            m.input(&a)?;
            let va = read_vector_set(open(&a)?).with_context(|| format!("reading {}", a.display()))?;
            let vb = match &b {
                Some(p) => {
                    m.input(p)?;
                    Some(read_vector_set(open(p)?).with_context(|| format!("reading {}", p.display()))?)
                }
                None => None,
            };
            let cfg = SimConfig {
                aggregation: mode,
                tile,
                threads: match threads {
                    Some(0) => bail!("--threads must be positive"),
                    Some(n) => Threads::fixed(n),
                    None => Threads::Auto,
                },
                force_cross_model,
            };
            let sim = pairwise_similarity(&va, vb.as_ref(), &cfg)?;
            let d = write_atomic(&out, |w| Ok(write_sim_matrix(&sim, w)?))?;
            m.output(&out, d);
            m.param("mode", mode.to_string());
            m.param("tile", tile);
            m.param("rows", sim.rows());
            m.param("cols", sim.cols());
            m.param("force_cross_model", force_cross_model);
        }
        Command::AverageSims { inputs, out } => {
            let mut sims = Vec::with_capacity(inputs.len());
            for p in &inputs {
                m.input(p)?;
                sims.push(load_sim(p)?);
            }
            let avg = average_sims(&sims)?;
            let d = write_atomic(&out, |w| Ok(write_sim_matrix(&avg, w)?))?;
            m.output(&out, d);
            m.param("n_inputs", inputs.len());
        }
        Command::Align {
            sims,
            k,
            fraction,
            seed,
            out,
            distances,
        } => align(&mut m, &sims, &k, fraction, seed, &out, distances, stdout)?,
        Command::Embed { distances, out } => embed(&mut m, &distances, &out)?,
        Command::Stats {
            sim,
            dataset,
            level,
            sample_pairs,
            seed,
            out,
        } => stats(&mut m, &sim, &dataset, &level, sample_pairs, seed, &out)?,
        Command::Phenomatrix { sim, dataset, out } => {
            m.input(&sim)?;
            m.input(&dataset)?;
            let s = load_sim(&sim)?;
            let ds = load_dataset(&dataset)?;
            ensure_same_dataset("similarity matrix", &ds, s.dataset_hash())?;
            let pm = phenomenon_matrix(&s, &ds)?;
            write_csv(&out, &mut m, |w| {
                let mut header = vec!["phenomenon".to_string(), "term".into(), "field".into()];
                header.extend(pm.blocks.col_labels.iter().cloned());
                w.write_record(&header)?;
                for (r, e) in pm.entries.iter().enumerate() {
                    let mut rec = vec![pm.blocks.row_labels[r].clone(), e.term.clone(), e.field.clone()];
                    rec.extend((0..pm.blocks.n_cols()).map(|c| fmt_opt(pm.blocks.mean(r, c))));
                    w.write_record(&rec)?;
                }
                Ok(())
            })?;
            m.param("phenomena", pm.entries.len());
            m.param("diagonal", "excludes self-pairs");
        }
        Command::Crosstable {
            sim,
            dataset_a,
            dataset_b,
            level,
            out,
        } => {
            m.input(&sim)?;
            m.input(&dataset_a)?;
            m.input(&dataset_b)?;
            let s = load_sim(&sim)?;
            let da = load_dataset(&dataset_a)?;
            let db = load_dataset(&dataset_b)?;
            ensure_same_dataset("matrix rows", &da, Some(s.provenance.rows.dataset_hash))?;
            ensure_same_dataset("matrix columns", &db, Some(s.provenance.cols.dataset_hash))?;
            let t = cross_lingual_term_table(&s, &da, &db, level)?;
            write_block_csv(&out, &mut m, level.as_str(), &t)?;
            m.param("level", level.as_str());
        }
        Command::Joint {
            sim,
            embeddings,
            buckets,
            per_bucket,
            seed,
            out,
        } => {
            m.input(&sim)?;
            m.input(&embeddings)?;
            let s = load_sim(&sim)?;
            let e = read_vector_set(open(&embeddings)?)
                .with_context(|| format!("reading {}", embeddings.display()))?;
            if s.dataset_hash() != Some(e.dataset_hash) {
                bail!(
                    "digest mismatch: embeddings have dataset_hash {}, similarity matrix has {:?}",
                    e.dataset_hash,
                    s.dataset_hash().map(|d| d.to_string())
                );
            }
            let bk = parse_buckets(&buckets)?;
            let j = joint_distribution_sample(&s, &e, &bk, per_bucket, seed)?;
            write_csv(&out, &mut m, |w| {
                w.write_record(["bucket_lo", "bucket_hi", "i", "j", "linguistic_sim", "semantic_sim"])?;
                for r in &j.records {
                    let b = j.buckets[r.bucket];
                    w.write_record([
                        b.lo.to_string(),
                        b.hi.to_string(),
                        r.i.to_string(),
                        r.j.to_string(),
                        r.linguistic.to_string(),
                        r.semantic.to_string(),
                    ])?;
                }
                Ok(())
            })?;
            m.seed("seed", seed);
            m.param("per_bucket", per_bucket);
            m.param("buckets", j.buckets.iter().map(Bucket::label).collect::<Vec<_>>());
            m.param("population", j.population.clone());
            m.param("pearson_r", j.pearson_r);
            m.param("statistic", "pearson_r over all sampled pairs");
            writeln!(stdout, "pearson_r {}", fmt_opt(j.pearson_r))?;
        }
        Command::Quadrants {
            joint,
            dataset,
            high,
            low,
            per_quadrant,
            out,
        } => {
            m.input(&joint)?;
            m.input(&dataset)?;
            let ds = load_dataset(&dataset)?;
            let records = read_joint_csv(&joint)?;
            if let Some(r) = records.iter().find(|r| r.i.max(r.j) >= ds.len()) {
                bail!("joint record ({}, {}) out of range for {} pairs", r.i, r.j, ds.len());
            }
            let q = quadrant_examples(&records, high, low, per_quadrant)?;
            write_csv(&out, &mut m, |w| {
                w.write_record([
                    "quadrant",
                    "i",
                    "j",
                    "linguistic_sim",
                    "semantic_sim",
                    "pair_id_i",
                    "sentence_good_i",
                    "pair_id_j",
                    "sentence_good_j",
                ])?;
                for (quad, recs) in &q {
                    for r in recs {
                        let (a, b) = (&ds.pairs()[r.i], &ds.pairs()[r.j]);
                        w.write_record([
                            quad.as_str(),
                            &r.i.to_string(),
                            &r.j.to_string(),
                            &r.linguistic.to_string(),
                            &r.semantic.to_string(),
                            &a.pair_id,
                            &a.sentence_good,
                            &b.pair_id,
                            &b.sentence_good,
                        ])?;
                    }
                }
                Ok(())
            })?;
            m.param("high", high);
            m.param("low", low);
            m.param("per_quadrant", per_quadrant);
        }
        Command::Info { path } => return info(&path, stdout),
    }
    m.wall_time_ms = started.elapsed().as_millis() as u64;
    m.write_siblings()
}

#[allow(clippy::too_many_arguments)]
fn align(
    m: &mut RunManifest,
    paths: &[PathBuf],
    k: &str,
    fraction: Option<f64>,
    seed: u64,
    out: &Path,
    distances: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let mut sims = Vec::with_capacity(paths.len());
    for p in paths {
        m.input(p)?;
        sims.push(load_sim(p)?);
    }
    let n = sims[0].rows();
    if let Some(f) = fraction {
        let hash = sims[0].dataset_hash().ok_or_else(|| anyhow!("alignment needs square matrices"))?;
        let sel = subsample_indices(n, hash, f, seed)?;
        sims = sims
            .iter()
            .map(|s| s.select(&sel.indices))
            .collect::<Result<_, _>>()?;
        m.seed("seed", seed);
        m.param("fraction", f);
    }
    let pool = sims[0].rows();
    let k = if k == "auto" {
        k_from_pool(pool)?
    } else {
        k.parse().map_err(|_| anyhow!("--k must be a positive integer or `auto`, got `{k}`"))?
    };
    let labels: Vec<String> = sims.iter().map(|s| s.provenance.rows.model_id.clone()).collect();
    let named: Vec<(&str, &SimMatrix)> = labels.iter().map(|l| l.as_str()).zip(sims.iter()).collect();
    let am = alignment_matrix(&named, k)?;
    let dist_path = distances.unwrap_or_else(|| sibling(out, "distances.csv"));
    let mm = labels.len();
    let write_square = |path: &Path, m: &mut RunManifest, cell: &dyn Fn(usize, usize) -> Result<f64>| {
        write_csv(path, m, |w| {
            let mut header = vec!["model".to_string()];
            header.extend(labels.iter().cloned());
            w.write_record(&header)?;
            for a in 0..mm {
                let mut rec = vec![labels[a].clone()];
                for b in 0..mm {
                    rec.push(cell(a, b)?.to_string());
                }
                w.write_record(&rec)?;
            }
            Ok(())
        })
    };
    write_square(out, m, &|a, b| Ok(am.score(a, b)))?;
    write_square(&dist_path, m, &|a, b| Ok(distance_from_alignment(am.score(a, b))?))?;
    m.param("k", k);
    m.param("n", pool);
    m.param("self_excluded", true);
    m.param("tie_break", "ascending sample index");
    m.param("distance", "-ln(max(score, 1e-6))");
    writeln!(stdout, "k {k}, n {pool}, mean off-diagonal {}", fmt_opt(am.mean_off_diagonal()))?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn read_square_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers()?.clone();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::with_capacity(labels.len() * labels.len());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        ensure!(rec.len() == labels.len() + 1, "row {} has {} fields", row + 1, rec.len());
        ensure!(rec.get(0) == Some(labels.get(row).map(String::as_str).unwrap_or("")), "row {} label does not match the header", row + 1);
        for f in rec.iter().skip(1) {
            values.push(f.trim().parse::<f64>().with_context(|| format!("bad number `{f}` in row {}", row + 1))?);
        }
    }
    ensure!(values.len() == labels.len() * labels.len(), "distance matrix is not square");
    Ok((labels, values))
}

fn embed(m: &mut RunManifest, distances: &Path, out: &Path) -> Result<()> {
    m.input(distances)?;
    let (labels, d) = read_square_csv(distances)?;
    let e = classical_mds(&d, &labels)?;
    write_csv(out, m, |w| {
        w.write_record(["label", "x", "y"])?;
        for (l, c) in e.labels.iter().zip(&e.coords) {
            w.write_record([l.clone(), c[0].to_string(), c[1].to_string()])?;
        }
        Ok(())
    })?;
    let side = sibling(out, "eigen.json");
    let body = serde_json::to_vec_pretty(&serde_json::json!({
        "eigenvalues": e.eigenvalues,
        "stress": e.stress,
        "negative_fraction": e.negative_fraction,
    }))?;
    let d = write_atomic(&side, |w| Ok(w.write_all(&body)?))?;
    m.output(&side, d);
    m.param("stress", e.stress);
    Ok(())
}

fn stats(
    m: &mut RunManifest,
    sim: &Path,
    dataset: &Path,
    level: &str,
    sample_pairs: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    m.input(sim)?;
    m.input(dataset)?;
    let ds = load_dataset(dataset)?;
    let levels: Vec<Level> = if level == "all" {
        Level::ALL.to_vec()
    } else {
        vec![level.parse()?]
    };
    let mut results: Vec<(Level, ClassStats)> = Vec::new();
    match sample_pairs {
        None => {
            // One streaming pass per level keeps memory at a single row.
            for &lv in &levels {
                let mut reader = SimMatrixReader::open(File::open(sim)?)
                    .with_context(|| format!("reading {}", sim.display()))?;
                let p = &reader.header().provenance;
                let found = (p.rows.dataset_hash == p.cols.dataset_hash).then_some(p.rows.dataset_hash);
                ensure_same_dataset("similarity matrix", &ds, found)?;
                results.push((lv, class_similarity_stats_streaming(&mut reader, &ds.labels(lv))?));
            }
        }
        Some(pairs) => {
            let s = load_sim(sim)?;
            ensure_same_dataset("similarity matrix", &ds, s.dataset_hash())?;
            for &lv in &levels {
                results.push((lv, class_similarity_stats(&s, &ds.labels(lv), PairMode::Sampled { pairs, seed })?));
            }
            m.seed("seed", seed);
            m.param("sample_pairs", pairs);
        }
    }
    m.param("mode", if sample_pairs.is_some() { "sampled" } else { "exact" });
    write_csv(out, m, |w| {
        w.write_record(["level", "group", "n_classes", "count", "mean", "sd", "se", "gap", "mode"])?;
        for (lv, s) in &results {
            for (group, g) in [("intra", &s.intra), ("inter", &s.inter)] {
                w.write_record([
                    lv.as_str().to_string(),
                    group.to_string(),
                    s.n_classes.to_string(),
                    g.count.to_string(),
                    fmt_opt(g.mean),
                    fmt_opt(g.sd),
                    fmt_opt(g.se),
                    fmt_opt(s.gap()),
                    if s.sampled { "sampled" } else { "exact" }.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    let hist = sibling(out, "hist.csv");
    write_csv(&hist, m, |w| {
        w.write_record(["level", "group", "bin_lo", "bin_hi", "count"])?;
        for (lv, s) in &results {
            for (group, g) in [("intra", &s.intra), ("inter", &s.inter)] {
                for b in 0..HIST_BINS {
                    w.write_record([
                        lv.as_str().to_string(),
                        group.to_string(),
                        bin_lower_edge(b).to_string(),
                        bin_lower_edge(b + 1).to_string(),
                        g.histogram[b].to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn write_block_csv(out: &Path, m: &mut RunManifest, corner: &str, t: &BlockMeans) -> Result<()> {
    write_csv(out, m, |w| {
        let mut header = vec![corner.to_string()];
        header.extend(t.col_labels.iter().cloned());
        w.write_record(&header)?;
        for r in 0..t.n_rows() {
            let mut rec = vec![t.row_labels[r].clone()];
            rec.extend((0..t.n_cols()).map(|c| fmt_opt(t.mean(r, c))));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn parse_buckets(spec: &str) -> Result<Vec<Bucket>> {
    if spec == "default" {
        return Ok(default_buckets());
    }
    let edges: Vec<f64> = spec
        .split(',')
        .map(|e| {
            let e = e.trim();
            e.parse::<f64>().map_err(|_| anyhow!("bad bucket edge `{e}`"))
        })
        .collect::<Result<_>>()?;
    Ok(buckets_from_edges(&edges)?)
}

fn read_joint_csv(path: &Path) -> Result<Vec<JointRecord>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("joint CSV lacks column `{name}`"))
    };
    let (ci, cj, cl, cs) = (col("i")?, col("j")?, col("linguistic_sim")?, col("semantic_sim")?);
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).ok_or_else(|| anyhow!("row {} is short", row + 1));
        out.push(JointRecord {
            bucket: 0,
            i: field(ci)?.parse()?,
            j: field(cj)?.parse()?,
            linguistic: field(cl)?.parse()?,
            semantic: field(cs)?.parse()?,
        });
    }
    Ok(out)
}

fn info(path: &Path, stdout: &mut dyn Write) -> Result<()> {
    let mut magic = [0u8; 4];
    open(path)?
        .read_exact(&mut magic)
        .with_context(|| format!("{} is too short to identify", path.display()))?;
    if magic == LDIF_MAGIC {
        let h = VectorSetReader::open(open(path)?)?.header().clone();
        // A full read validates every scale and code.
        let vs = read_vector_set(open(path)?)?;
        writeln!(stdout, "format: LDIF")?;
        writeln!(stdout, "model_id: {}", h.model_id)?;
        writeln!(stdout, "dataset_hash: {}", h.dataset_hash)?;
        writeln!(stdout, "shape: {} samples × {} layers × {} dim", h.n_samples, h.n_layers, h.dim)?;
        writeln!(
            stdout,
            "layer_indices: [{}]",
            h.layer_indices.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
        )?;
        let zero = (0..vs.n_samples())
            .filter(|&i| vs.scales()[i * vs.n_layers()..(i + 1) * vs.n_layers()].iter().all(|&s| s == 0.0))
            .count();
        writeln!(stdout, "zero_samples: {zero}")?;
        for (k, v) in &h.attributes {
            writeln!(stdout, "attribute {k}: {v}")?;
        }
    } else if magic == LSIM_MAGIC {
        let reader = SimMatrixReader::open(open(path)?)?;
        let h = reader.header();
        writeln!(stdout, "format: LSIM")?;
        writeln!(stdout, "shape: {} × {}", h.rows, h.cols)?;
        writeln!(stdout, "symmetric: {}", h.symmetric)?;
        writeln!(stdout, "aggregation: {}", h.aggregation)?;
        for (side, s) in [("rows", &h.provenance.rows), ("cols", &h.provenance.cols)] {
            writeln!(stdout, "{side}: model_id {} dataset_hash {}", s.model_id, s.dataset_hash)?;
        }
        for (k, v) in &h.provenance.params {
            writeln!(stdout, "param {k}: {v}")?;
        }
    } else {
        bail!("{}: unrecognized magic {:?}", path.display(), magic);
    }
    Ok(())
}

/// Element-wise mean of similarity matrices over the same samples. A cell
/// is undefined if it is undefined in any input.
pub fn average_sims(sims: &[SimMatrix]) -> Result<SimMatrix> {
    let first = sims.first().ok_or_else(|| anyhow!("no input matrices"))?;
    for s in &sims[1..] {
        ensure!(
            s.rows() == first.rows() && s.cols() == first.cols(),
            "shape mismatch: {}×{} vs {}×{}",
            s.rows(),
            s.cols(),
            first.rows(),
            first.cols()
        );
        ensure!(
            s.provenance.rows.dataset_hash == first.provenance.rows.dataset_hash
                && s.provenance.cols.dataset_hash == first.provenance.cols.dataset_hash,
            "digest mismatch: inputs were built from different datasets"
        );
    }
    let n = sims.len() as f64;
    let codes: Vec<i8> = (0..first.codes().len())
        .map(|k| {
            let mut sum = 0i64;
            for s in sims {
                let c = s.codes()[k];
                if c == SENTINEL {
                    return SENTINEL;
                }
                sum += c as i64;
            }
            quantize_similarity(sum as f64 / n / 127.0)
        })
        .collect();
    let models: Vec<String> = sims.iter().map(|s| s.provenance.rows.model_id.clone()).collect();
    let side = |src: &SourceInfo| SourceInfo {
        model_id: format!("mean of {} models", sims.len()),
        dataset_hash: src.dataset_hash,
        digest: None,
    };
    let mut params = BTreeMap::new();
    params.insert("averaged_models".to_string(), models.join(","));
    let symmetric = sims.iter().all(SimMatrix::is_symmetric);
    Ok(SimMatrix::new(
        first.rows(),
        first.cols(),
        symmetric,
        codes,
        first.aggregation,
        SimProvenance {
            rows: side(&first.provenance.rows),
            cols: side(&first.provenance.cols),
            params,
        },
    )?)
}
