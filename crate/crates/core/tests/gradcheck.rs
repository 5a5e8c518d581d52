//! Reverse-mode gradients against central finite differences in f64.

mod common;

use adafm::modulation::{adafm_modulate, fs_modulate, weight_demod_modulate, DemodForm};
use adafm::tensor::conv2d;
use common::fd::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_conv_dense_networks_match_finite_differences() {
    let start = std::time::Instant::now();
    let (mut skipped, mut total) = (0, 0);
    for trial in 0..20u64 {
        let (worst, s, t) = random_network(trial);
        assert!(worst < REL_TOL, "network {trial}: worst relative error {worst:e}");
        skipped += s;
        total += t;
    }
    assert!(skipped * 100 < total, "{skipped} of {total} coordinates sat on a kink");
    assert!(start.elapsed().as_secs() < 60, "gradient check took {:?}", start.elapsed());
}

#[test]
fn elementwise_and_resampling_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = leaf(T64::randn(&[2, 2, 4, 4], 1.0, &mut rng));
    let probe = T64::randn(&[2, 2, 4, 4], 1.0, &mut rng);
    let worst = check(&[a], |p| {
        let x = &p[0];
        let y = x.tanh().add(&x.sigmoid()).unwrap().add(&x.softplus()).unwrap();
        let y = y.avg_pool2x().unwrap().upsample_nearest2x().unwrap().mul(&probe).unwrap();
        let z = x.mul(x).unwrap().add_scalar(1.0).rsqrt().add(&x.add_scalar(0.05).leaky_relu(0.2)).unwrap();
        y.add(&z).unwrap().sum()
    });
    assert!(worst < REL_TOL, "{worst:e}");
}

#[test]
fn transposed_matmuls_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = leaf(T64::randn(&[3, 4], 1.0, &mut rng));
    let b = leaf(T64::randn(&[5, 4], 1.0, &mut rng));
    let worst = check(&[a, b], |p| {
        let m = p[0].matmul_t(&p[1], false, true).unwrap();
        let r = m.sum_to(&[1, 5]).unwrap().expand(&[3, 5]).unwrap();
        m.mul(&r).unwrap().swap01().unwrap().scale(0.3).mean()
    });
    assert!(worst < REL_TOL, "{worst:e}");
}

#[test]
fn modulation_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = T64::randn(&[3, 2, 3, 3], 1.0, &mut rng);
    let x = T64::randn(&[2, 2, 5, 5], 1.0, &mut rng);
    let gamma = leaf(T64::randn(&[3, 2], 0.2, &mut rng).add_scalar(1.0));
    let beta = leaf(T64::randn(&[3, 2], 0.1, &mut rng));
    let gh = leaf(T64::randn(&[3], 0.2, &mut rng).add_scalar(1.0));
    let bh = leaf(T64::randn(&[3], 0.1, &mut rng));
    let s = leaf(T64::uniform(&[2], 0.5, 1.5, &mut rng));
    let worst = check(&[gamma, beta, gh, bh, s], |p| {
        let a = conv2d(&x, &adafm_modulate(&w, &p[0], &p[1]).unwrap(), 1, 1).unwrap();
        let f = conv2d(&x, &fs_modulate(&w, &p[2], &p[3]).unwrap(), 1, 1).unwrap();
        let d = conv2d(&x, &weight_demod_modulate(&w, &p[4], 1e-8, DemodForm::Squared).unwrap(), 1, 1).unwrap();
        a.mul(&f).unwrap().add(&d.tanh()).unwrap().sum()
    });
    assert!(worst < REL_TOL, "{worst:e}");
}
