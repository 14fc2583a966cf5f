mod common;

use common::{random_graph, random_tensor, singular_values};
use grdl_core::bounds::{
    compare_complexity, grdl_bound, misclassification_bound, multi_ref_bound, profile, r_g,
    spectral_norm, verify_lemmas, NormProfile,
};
use grdl_core::gin::{EncoderConfig, GinEncoder};
use grdl_core::mmd::ReferenceSet;
use grdl_core::model::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sweep_profile(layers: usize, m: usize, theta: f64) -> NormProfile {
    NormProfile::uniform(layers, 2, (1.5, 2.0), 2.5, 4.0, 16, (20, 200, 2, m, 16), theta, 3.0)
}

#[test]
fn spectral_norm_agrees_with_jacobi_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let (r, c) = (rng.random_range(1..9), rng.random_range(1..9));
        let m = random_tensor(&mut rng, r, c);
        let oracle = singular_values(&m)[0];
        assert!((spectral_norm(&m) - oracle).abs() < 1e-7, "{r}x{c}");
    }
}

#[test]
fn lemmas_hold_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let graphs: Vec<_> = (0..100)
        .map(|i| {
            let p = if i % 2 == 0 { 0.1 } else { 0.5 };
            let n = rng.random_range(2..25);
            random_graph(&mut rng, n, p, 1, 0)
        })
        .collect();
    let refs: Vec<_> = graphs.iter().collect();
    let report = verify_lemmas(&refs);
    assert!(report.holds(), "{:?}", report.violations);
    for (g, n) in graphs.iter().zip(&report.graphs) {
        let oracle = singular_values(&g.dense_adjacency())[0];
        assert!((n.a_spectral - oracle).abs() < 1e-7);
    }
}

#[test]
fn bound_is_monotone_in_m_layers_and_theta() {
    let at = |l, m, t| grdl_bound(&sweep_profile(l, m, t), 5.0, 1.0, 0.05, 0.1).unwrap().bound;
    for m in [2, 4, 8, 16, 32] {
        assert!(at(2, m, 0.5) <= at(2, m * 2, 0.5));
    }
    for l in 1..5 {
        assert!(at(l, 8, 0.5) <= at(l + 1, 8, 0.5));
    }
    for t in [0.01, 0.1, 1.0] {
        assert!(at(2, 8, t) <= at(2, 8, t * 10.0));
    }
}

#[test]
fn bound_is_monotone_in_references_per_class() {
    let p = sweep_profile(2, 8, 0.5);
    let b: Vec<f64> = (1..=3)
        .map(|pp| multi_ref_bound(&p, pp, 5.0, 1.0, 0.05, 0.1).unwrap().bound)
        .collect();
    assert!(b[0] <= b[1] && b[1] <= b[2]);
}

#[test]
fn bounds_are_pure() {
    let p = sweep_profile(3, 8, 0.2);
    let a = serde_json::to_string(&grdl_bound(&p, 5.0, 1.0, 0.05, 0.1).unwrap()).unwrap();
    let b = serde_json::to_string(&grdl_bound(&p.clone(), 5.0, 1.0, 0.05, 0.1).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn misclassification_bound_vanishes_in_zeta() {
    let p = sweep_profile(2, 8, 0.5);
    let v: Vec<f64> = [1.0, 10.0, 1e3, 1e6]
        .iter()
        .map(|&z| misclassification_bound(&p, z, 0.05, 0.0).unwrap().v1)
        .collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]));
    // v1 carries μ² = 4/ζ².
    assert!((v[3] / v[0] - 1e-12).abs() < 1e-24);
}

#[test]
fn grdl_complexity_is_smaller_under_the_premises() {
    // 64θK/n ≤ 1 and a classifier with ∏κ = 3.
    let p = NormProfile::uniform(3, 2, (1.2, 1.5), 2.0, 5.0, 32, (256, 500, 2, 10, 32), 0.01, 2.0);
    let q = compare_complexity(&p, &[(3.0, 4.0), (1.0, 1.0)], 5.0, 1.0).unwrap();
    assert!(q.premises_hold);
    assert!(q.grdl_smaller, "{q:?}");
}

#[test]
fn profile_of_a_model_recomputes_by_hand() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = EncoderConfig {
        layers: 2,
        mlp_depth: 2,
        hidden: 3,
        input_dim: 2,
        output_dim: 3,
    };
    let enc = GinEncoder::new(cfg, &mut rng).unwrap();
    let refs = (0..2).map(|_| random_tensor(&mut rng, 4, 3)).collect();
    let model = Model::new(enc, ReferenceSet::new(refs, 2, 1, 2.0).unwrap()).unwrap();
    let graphs: Vec<_> = (0..5).map(|i| random_graph(&mut rng, 4 + i, 0.5, 2, i % 2)).collect();
    let refs: Vec<_> = graphs.iter().collect();
    let p = profile(&model, &refs).unwrap();

    let c = graphs
        .iter()
        .map(|g| singular_values(&g.dense_self_looped())[0])
        .fold(0.0, f64::max);
    assert!((p.c - c).abs() < 1e-7);
    let kappa: Vec<f64> = model.encoder.weights().map(|w| singular_values(w)[0]).collect();
    for (a, b) in p.kappa.iter().flatten().zip(&kappa) {
        assert!((a - b).abs() < 1e-7);
    }
    let prod: f64 = kappa.iter().product();
    let sum: f64 = p
        .b
        .iter()
        .flatten()
        .zip(&kappa)
        .map(|(b, k)| (b / k).powf(2.0 / 3.0))
        .sum();
    let by_hand = c.powi(4) * p.x_norm.powi(2) * (2.0 * (p.d_bar as f64).powi(2)).ln() * prod * prod * sum.powi(3);
    assert!((r_g(&p) - by_hand).abs() < 1e-6 * by_hand);
    assert_eq!((p.big_n, p.k, p.m, p.d), (5, 2, 4, 3));
}
