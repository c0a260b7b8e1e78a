mod common;

use lingsim::simkernel::{pairwise_similarity, KernelError, SimConfig, Threads};
use lingsim::tensorstore::{Aggregation, VectorSet, SENTINEL};
use lingsim::Digest;
use proptest::prelude::*;

/// Float64 brute force over dequantized vectors.
fn oracle(a: &VectorSet, i: usize, b: &VectorSet, j: usize, agg: Aggregation) -> Option<f64> {
    let (x, y) = (common::dequantized(a, i), common::dequantized(b, j));
    match agg {
        Aggregation::LayerMean => {
            let cs: Vec<f64> = x.iter().zip(&y).filter_map(|(p, q)| common::cosine(p, q)).collect();
            (!cs.is_empty()).then(|| cs.iter().sum::<f64>() / cs.len() as f64)
        }
        Aggregation::Concat => common::cosine(&x.concat(), &y.concat()),
    }
}

fn with_zero_samples(vs: VectorSet, zero: &[usize]) -> VectorSet {
    let mut codes = vs.codes().to_vec();
    let mut scales = vs.scales().to_vec();
    let stride = vs.n_layers() * vs.dim();
    for &i in zero {
        codes[i * stride..(i + 1) * stride].fill(0);
        scales[i * vs.n_layers()..(i + 1) * vs.n_layers()].fill(0.0);
    }
    VectorSet::new(&vs.model_id, vs.dataset_hash, vs.layer_indices.clone(), vs.dim(), codes, scales).unwrap()
}

fn cfg(agg: Aggregation, tile: usize, threads: Threads) -> SimConfig {
    SimConfig {
        aggregation: agg,
        tile,
        threads,
        force_cross_model: false,
    }
}

#[test]
fn matches_float_oracle_both_modes() {
    let vs = with_zero_samples(common::gaussian_set("m", Digest(1), 200, 2, 64, 11), &[17, 150]);
    for agg in [Aggregation::LayerMean, Aggregation::Concat] {
        let m = pairwise_similarity(&vs, None, &cfg(agg, 32, Threads::Auto)).unwrap();
        for i in 0..200 {
            for j in 0..200 {
                let code = m.get(i, j);
                match oracle(&vs, i, &vs, j, agg) {
                    None => assert_eq!(code, SENTINEL, "({i},{j})"),
                    Some(c) => {
                        let got = code as f64 / 127.0;
                        assert!((got - c).abs() <= 1.0 / 127.0 + 1e-6, "{agg} ({i},{j}): {got} vs {c}");
                    }
                }
            }
        }
    }
}

#[test]
fn thread_count_and_tile_do_not_change_codes() {
    let vs = common::gaussian_set("m", Digest(1), 300, 3, 40, 5);
    for agg in [Aggregation::LayerMean, Aggregation::Concat] {
        let reference = pairwise_similarity(&vs, None, &cfg(agg, 64, Threads::fixed(1))).unwrap();
        for (tile, threads) in [(64, 2), (64, 8), (7, 3), (1000, 8)] {
            let m = pairwise_similarity(&vs, None, &cfg(agg, tile, Threads::fixed(threads))).unwrap();
            assert_eq!(m.codes(), reference.codes());
        }
    }
}

#[test]
fn cross_matrix_of_a_set_with_itself_matches_symmetric_one() {
    let vs = common::gaussian_set("m", Digest(1), 50, 2, 16, 9);
    let sym = pairwise_similarity(&vs, None, &SimConfig::default()).unwrap();
    let cross = pairwise_similarity(&vs, Some(&vs), &SimConfig::default()).unwrap();
    assert!(sym.is_symmetric() && !cross.is_symmetric());
    assert_eq!(sym.codes(), cross.codes());
}

#[test]
fn cross_model_needs_explicit_override() {
    let a = common::gaussian_set("a", Digest(1), 5, 1, 4, 1);
    let b = common::gaussian_set("b", Digest(2), 6, 1, 4, 2);
    assert!(matches!(
        pairwise_similarity(&a, Some(&b), &SimConfig::default()),
        Err(KernelError::ModelMismatch { .. })
    ));
    let mut c = SimConfig::default();
    c.force_cross_model = true;
    let m = pairwise_similarity(&a, Some(&b), &c).unwrap();
    assert_eq!((m.rows(), m.cols()), (5, 6));
    assert_eq!(m.dataset_hash(), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_with_unit_diagonal(n in 1usize..40, layers in 1usize..4, dim in 1usize..20, seed in any::<u64>(), tile in 1usize..50) {
        let vs = common::gaussian_set("m", Digest(seed), n, layers, dim, seed);
        for agg in [Aggregation::LayerMean, Aggregation::Concat] {
            let m = pairwise_similarity(&vs, None, &cfg(agg, tile, Threads::Auto)).unwrap();
            for i in 0..n {
                prop_assert_eq!(m.get(i, i), 127);
                for j in 0..n {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    prop_assert!(m.get(i, j) >= -127);
                }
            }
        }
    }

    #[test]
    fn power_of_two_rescaling_leaves_codes_unchanged(seed in any::<u64>(), exp in -20i32..20) {
        let (n, layers, dim) = (12, 2, 24);
        let data = common::normals(n * layers * dim, seed);
        let f = 2f32.powi(exp);
        let scaled: Vec<f32> = data.iter().map(|x| x * f).collect();
        let idx: Vec<u32> = (0..layers as u32).collect();
        let a = VectorSet::from_f32("m", Digest(0), idx.clone(), dim, &data).unwrap();
        let b = VectorSet::from_f32("m", Digest(0), idx, dim, &scaled).unwrap();
        prop_assert_eq!(a.codes(), b.codes());
        for agg in [Aggregation::LayerMean, Aggregation::Concat] {
            let ma = pairwise_similarity(&a, None, &cfg(agg, 5, Threads::Auto)).unwrap();
            let mb = pairwise_similarity(&b, None, &cfg(agg, 5, Threads::Auto)).unwrap();
            prop_assert_eq!(ma.codes(), mb.codes());
        }
    }

    #[test]
    fn permuting_samples_permutes_matrix(seed in any::<u64>(), n in 2usize..30) {
        let vs = common::gaussian_set("m", Digest(0), n, 2, 8, seed);
        let mut rng = lingsim::rng::SampleRng::new(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let m = pairwise_similarity(&vs, None, &SimConfig::default()).unwrap();
        let mp = pairwise_similarity(&vs.select(&perm).unwrap(), None, &SimConfig::default()).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(mp.get(i, j), m.get(perm[i], perm[j]));
            }
        }
    }
}
