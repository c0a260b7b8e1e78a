#![allow(dead_code)]

use lingsim::model::{Dataset, MinimalPair, TaxonEntry, Taxonomy};
use lingsim::tensorstore::VectorSet;
use lingsim::Digest;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn normals(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn gaussian_set(model: &str, hash: Digest, n: usize, layers: usize, dim: usize, seed: u64) -> VectorSet {
    let data = normals(n * layers * dim, seed);
    VectorSet::from_f32(model, hash, (1..=layers as u32).collect(), dim, &data).unwrap()
}

/// Dataset with `per` pairs for each `(phenomenon, term, field)` class,
/// grouped by class in the given order.
pub fn dataset(classes: &[(&str, &str, &str)], per: usize) -> Dataset {
    let mut taxonomy = Taxonomy::new();
    let mut pairs = Vec::new();
    for (p, t, f) in classes {
        taxonomy.insert(
            p,
            TaxonEntry {
                phenomenon: p.to_string(),
                term: t.to_string(),
                field: f.to_string(),
            },
        );
        for k in 0..per {
            pairs.push(MinimalPair {
                pair_id: format!("{p}:{k}"),
                language: "en".into(),
                phenomenon_uid: p.to_string(),
                sentence_good: format!("good {p} {k}"),
                sentence_bad: format!("bad {p} {k}"),
            });
        }
    }
    Dataset::new("synthetic", pairs, taxonomy).unwrap()
}

/// Cosine in f64; `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Dequantized `[layer][dim]` vectors of sample `i` in f64.
pub fn dequantized(vs: &VectorSet, i: usize) -> Vec<Vec<f64>> {
    (0..vs.n_layers())
        .map(|l| vs.dequantize_layer(i, l).into_iter().map(f64::from).collect())
        .collect()
}
