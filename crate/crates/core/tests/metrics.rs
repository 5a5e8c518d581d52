//! Fréchet distance, feature extractor and γ-analysis properties.

mod common;

use adafm::metrics::{frechet_distance, sorted_gamma_matrix, sqrt_psd, trace_sqrt_product, FeatureExtractor, GaussianFit, FEATURE_DIM};
use adafm::tensor::Tensor;
use common::oracles::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn identical_fits_are_at_distance_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [1, 2, 5, 16] {
        let g = GaussianFit::new(DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0)), random_spd(d, &mut rng));
        assert!(frechet_distance(&g, &g).unwrap().abs() < 1e-8);
    }
}

#[test]
fn mean_shift_adds_squared_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in [1, 3, 8] {
        let cov = random_spd(d, &mut rng);
        let mu = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let a = GaussianFit::new(mu.clone(), cov.clone());
        let b = GaussianFit::new(mu + &v, cov);
        assert!((frechet_distance(&a, &b).unwrap() - v.norm_squared()).abs() < 1e-8);
    }
}

#[test]
fn two_by_two_diagonal_closed_form() {
    // diagonal covariances commute: Tr((Σ₁Σ₂)^½) = Σ √(a_i b_i)
    let a = GaussianFit::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])));
    let b = GaussianFit::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 9.0])));
    let expect: f64 = (4.0 + 1.0) + (1.0 + 9.0) - 2.0 * (2.0 + 3.0);
    assert!((frechet_distance(&a, &b).unwrap() - expect).abs() < 1e-10);
}

#[test]
fn matrix_roots_agree_with_denman_beavers() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let d = rng.gen_range(2..=8);
        let (s1, s2) = (random_spd(d, &mut rng), random_spd(d, &mut rng));
        let root = sqrt_psd(&s1);
        let oracle = db_sqrt(&s1);
        assert!((&root - &oracle).norm() / oracle.norm() < 1e-5);
        // the trace term through the non-symmetric product
        let tr_oracle = db_sqrt(&(&s1 * &s2)).trace();
        let tr = trace_sqrt_product(&s1, &s2);
        assert!((tr - tr_oracle).abs() / tr_oracle.abs() < 1e-5, "{tr} vs {tr_oracle}");
    }
}

#[test]
fn features_are_deterministic_and_chunk_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let imgs = Tensor::uniform(&[70, 3, 16, 16], -1.0, 1.0, &mut rng);
    let fx = FeatureExtractor::new();
    let all = fx.features(&imgs).unwrap();
    assert_eq!(all.len(), 70 * FEATURE_DIM);
    assert_eq!(all, FeatureExtractor::new().features(&imgs).unwrap());
    let tail = fx.features(&imgs.slice0(64, 6).unwrap()).unwrap();
    assert_eq!(&all[64 * FEATURE_DIM..], &tail[..]);
}

#[test]
fn grayscale_features_replicate_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gray = Tensor::uniform(&[3, 1, 8, 8], -1.0, 1.0, &mut rng);
    let rgb: Vec<f32> = gray.data().chunks(64).flat_map(|c| c.repeat(3)).collect();
    let rgb = Tensor::from_vec(rgb, &[3, 3, 8, 8]).unwrap();
    let fx = FeatureExtractor::new();
    assert_eq!(fx.features(&gray).unwrap(), fx.features(&rgb).unwrap());
}

#[test]
fn proxy_fid_separates_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let fx = FeatureExtractor::new();
    let a = Tensor::uniform(&[128, 3, 16, 16], -1.0, 1.0, &mut rng);
    let b = Tensor::uniform(&[128, 3, 16, 16], -1.0, 1.0, &mut rng);
    let c = Tensor::uniform(&[128, 3, 16, 16], -0.2, 1.0, &mut rng);
    let same = adafm::metrics::proxy_fid(&a, &b, &fx).unwrap();
    let diff = adafm::metrics::proxy_fid(&a, &c, &fx).unwrap();
    assert!(diff > 10.0 * same, "{same} vs {diff}");
}

#[test]
fn sorted_gamma_hand_trace() {
    let s = sorted_gamma_matrix(&[vec![1.1, 0.9], vec![0.9, 1.1]]).unwrap();
    assert_eq!(s.permutation, vec![0, 1]);
    assert_eq!(s.matrix, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn sorted_gamma_is_a_column_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (rows, cols) = (rng.gen_range(1..=4), rng.gen_range(1..=12));
        let m: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0.85..1.15)).collect()).collect();
        assert_eq!(sorted_gamma_violation(&m, &mut rng), None);
    }
}
