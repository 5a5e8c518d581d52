//! Modulation algebra against nested-loop oracles.

mod common;

use adafm::modulation::{adafm_modulate, fs_as_adafm, fs_modulate, weight_demod_modulate, DemodForm};
use adafm::tensor::Tensor;
use common::oracles::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn identity_modulation_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let d = random_dims(&mut rng);
        let w = Tensor::<f32>::randn(&d, 1.0, &mut rng);
        let out = adafm_modulate(&w, &Tensor::ones(&d[..2]), &Tensor::zeros(&d[..2])).unwrap();
        assert_eq!(out.data(), w.data());
    }
}

#[test]
fn filter_selection_is_contained_in_adafm() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let d = random_dims(&mut rng);
        let w = Tensor::<f32>::randn(&d, 1.0, &mut rng);
        let gh = Tensor::<f32>::randn(&[d[0]], 1.0, &mut rng);
        let bh = Tensor::<f32>::randn(&[d[0]], 1.0, &mut rng);
        let fs = fs_modulate(&w, &gh, &bh).unwrap();
        let (g, b) = fs_as_adafm(&gh, &bh, d[1]).unwrap();
        assert_eq!(fs.data(), adafm_modulate(&w, &g, &b).unwrap().data());
    }
}

#[test]
fn adafm_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let d = random_dims(&mut rng);
        let w = Tensor::<f32>::randn(&d, 1.0, &mut rng);
        let g = Tensor::<f32>::randn(&d[..2], 1.0, &mut rng);
        let b = Tensor::<f32>::randn(&d[..2], 1.0, &mut rng);
        let got = adafm_modulate(&w, &g, &b).unwrap();
        for (x, y) in got.data().iter().zip(adafm_loop(w.data(), g.data(), b.data(), d)) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn demodulation_matches_loop_oracle_on_positive_radicands() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let d = random_dims(&mut rng);
        // Non-negative weights and styles keep the unsquared radicand positive.
        let w = Tensor::<f64>::uniform(&d, 0.0, 1.0, &mut rng);
        let s = Tensor::<f64>::uniform(&[d[1]], 0.1, 2.0, &mut rng);
        let got = weight_demod_modulate(&w, &s, 1e-8, DemodForm::Linear).unwrap();
        for (x, y) in got.data().iter().zip(demod_loop(w.data(), s.data(), 1e-8, d)) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn squared_demodulation_normalizes_output_filters() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let w = Tensor::<f64>::randn(&[4, 3, 3, 3], 1.0, &mut rng);
    let s = Tensor::<f64>::randn(&[3], 1.0, &mut rng);
    let out = weight_demod_modulate(&w, &s, 0.0, DemodForm::Squared).unwrap();
    for filter in out.data().chunks(27) {
        let norm: f64 = filter.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12, "{norm}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The modulated bank is affine in (γ, β) jointly.
    #[test]
    fn adafm_is_affine_in_its_parameters(seed in 0u64..10_000, t in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dims(&mut rng);
        let w = Tensor::<f64>::randn(&d, 1.0, &mut rng);
        let (g1, b1) = (Tensor::<f64>::randn(&d[..2], 1.0, &mut rng), Tensor::<f64>::randn(&d[..2], 1.0, &mut rng));
        let (g2, b2) = (Tensor::<f64>::randn(&d[..2], 1.0, &mut rng), Tensor::<f64>::randn(&d[..2], 1.0, &mut rng));
        let mix = |a: &Tensor<f64>, b: &Tensor<f64>| a.scale(1.0 - t).add(&b.scale(t)).unwrap();
        let lhs = adafm_modulate(&w, &mix(&g1, &g2), &mix(&b1, &b2)).unwrap();
        let rhs = mix(&adafm_modulate(&w, &g1, &b1).unwrap(), &adafm_modulate(&w, &g2, &b2).unwrap());
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    /// Permuting output channels of (W, γ, β) permutes the output filters.
    #[test]
    fn adafm_commutes_with_output_permutation(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dims(&mut rng);
        let [o, i, k1, k2] = d;
        let w = Tensor::<f32>::randn(&d, 1.0, &mut rng);
        let g = Tensor::<f32>::randn(&[o, i], 1.0, &mut rng);
        let b = Tensor::<f32>::randn(&[o, i], 1.0, &mut rng);
        let mut perm: Vec<usize> = (0..o).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let permute = |t: &Tensor<f32>, row: usize| {
            let data: Vec<f32> = perm.iter().flat_map(|&p| t.data()[p * row..(p + 1) * row].to_vec()).collect();
            Tensor::from_vec(data, t.shape()).unwrap()
        };
        let kk = i * k1 * k2;
        let lhs = adafm_modulate(&permute(&w, kk), &permute(&g, i), &permute(&b, i)).unwrap();
        let rhs = permute(&adafm_modulate(&w, &g, &b).unwrap(), kk);
        prop_assert_eq!(lhs.data(), rhs.data());
    }
}
