#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use lingsim::tensorstore::{write_vector_set, VectorSet};
use lingsim::Digest;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn lingsim(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["lingsim"];
    argv.extend_from_slice(args);
    let code = lingsim_cli::run_with_output(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn ok(args: &[&str]) -> String {
    let o = lingsim(args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.stdout
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// BLiMP-style records: `phenomena` × `per` pairs.
pub fn blimp_jsonl(phenomena: &[(&str, &str, &str)], per: usize) -> String {
    let mut s = String::new();
    for (uid, term, field) in phenomena {
        for k in 0..per {
            s.push_str(
                &serde_json::json!({
                    "sentence_good": format!("The {uid} sentence number {k} is fine."),
                    "sentence_bad": format!("The {uid} sentence number {k} are fine."),
                    "field": field,
                    "linguistics_term": term,
                    "UID": uid,
                    "pairID": k.to_string(),
                })
                .to_string(),
            );
            s.push('\n');
        }
    }
    s
}

/// Vectors scattered around one random center per class label.
pub fn planted_vectors(model: &str, hash: Digest, labels: &[usize], layers: usize, dim: usize, seed: u64) -> VectorSet {
    let mut rng = lingsim::rng::SampleRng::new(seed);
    let mut gauss = move || {
        let (u, v) = (rng.unit().max(1e-300), rng.unit());
        ((-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()) as f32
    };
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let centers: Vec<f32> = (0..n_classes * layers * dim).map(|_| 2.0 * gauss()).collect();
    let mut data = Vec::with_capacity(labels.len() * layers * dim);
    for &c in labels {
        for x in 0..layers * dim {
            data.push(centers[c * layers * dim + x] + gauss());
        }
    }
    VectorSet::from_f32(model, hash, (1..=layers as u32).collect(), dim, &data).unwrap()
}

pub fn write_ldif(path: &Path, vs: &VectorSet) {
    let mut buf = Vec::new();
    write_vector_set(vs, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

pub fn read_csv(path: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

/// The checked-in 3 samples × 2 layers × 4 dim fixture.
pub fn tiny_vector_set() -> VectorSet {
    let data: Vec<f32> = (0..24).map(|x| ((x * 7) % 11) as f32 - 5.0).collect();
    let mut vs = VectorSet::from_f32("toy-model", Digest(0x0123_4567_89ab_cdef), vec![2, 4], 4, &data).unwrap();
    vs.attributes.insert("token_position".into(), "last_but_two".into());
    vs
}
