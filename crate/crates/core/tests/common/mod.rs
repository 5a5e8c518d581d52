//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod fd;
pub mod oracles;

use adafm::modulation::{adafm_modulate, fs_modulate};
use adafm::tensor::{grad, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RECON_SHAPE: [usize; 4] = [8, 6, 3, 3];

/// Fits modulation parameters so that the modulated source bank matches a
/// target `W*_{ij} = c_{ij}·W_{ij} + d_{ij}` with full-rank random `c`, `d`.
/// Runs `steps` Adam steps on the mean squared error; returns the final MSE.
pub fn reconstruction_mse(rank_one: bool, steps: usize, seed: u64) -> f64 {
    let [o, i, k1, k2] = RECON_SHAPE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::<f64>::randn(&RECON_SHAPE, 1.0, &mut rng);
    let c = Tensor::<f64>::uniform(&[o, i], 0.5, 1.5, &mut rng);
    let d = Tensor::<f64>::uniform(&[o, i], -0.3, 0.3, &mut rng);
    let target = adafm_modulate(&w, &c, &d).unwrap();
    let n = (o * i * k1 * k2) as f64;
    let pshape: Vec<usize> = if rank_one { vec![o] } else { vec![o, i] };
    let mut gamma = Tensor::<f64>::ones(&pshape).to_vec();
    let mut beta = Tensor::<f64>::zeros(&pshape).to_vec();
    let (lr, b1, b2, eps) = (0.02, 0.9, 0.999, 1e-12);
    let mut m = [vec![0.0; gamma.len()], vec![0.0; gamma.len()]];
    let mut v = m.clone();
    let mse = |g: &Tensor<f64>, b: &Tensor<f64>| {
        let out = if rank_one { fs_modulate(&w, g, b) } else { adafm_modulate(&w, g, b) }.unwrap();
        let r = out.sub(&target).unwrap();
        r.mul(&r).unwrap().sum().scale(1.0 / n)
    };
    for t in 1..=steps {
        let g = Tensor::from_vec(gamma.clone(), &pshape).unwrap().into_leaf(true);
        let b = Tensor::from_vec(beta.clone(), &pshape).unwrap().into_leaf(true);
        let loss = mse(&g, &b);
        let grads = grad(&loss, &[g, b], false).unwrap();
        // Step size decays so the iterate settles instead of orbiting the optimum.
        let lr_t = lr / (1.0 + t as f64 / 200.0);
        for (k, p) in [&mut gamma, &mut beta].into_iter().enumerate() {
            let gk = grads[k].as_ref().unwrap().data();
            for j in 0..p.len() {
                m[k][j] = b1 * m[k][j] + (1.0 - b1) * gk[j];
                v[k][j] = b2 * v[k][j] + (1.0 - b2) * gk[j] * gk[j];
                let mh = m[k][j] / (1.0 - b1.powi(t as i32));
                let vh = v[k][j] / (1.0 - b2.powi(t as i32));
                p[j] -= lr_t * mh / (vh.sqrt() + eps);
            }
        }
    }
    let g = Tensor::from_vec(gamma, &pshape).unwrap();
    let b = Tensor::from_vec(beta, &pshape).unwrap();
    mse(&g, &b).item()
}

use adafm::config::{Mode, RunConfig};
use adafm::data::{subsample, synth_generate, ImageCorpus, SynthDomain, SyntheticSpec};
use adafm::model::{ArchConfig, Gan, Head};
use adafm::transfer::Checkpoint;

/// A 16×16 model small enough for many short runs.
pub fn tiny_arch() -> ArchConfig {
    ArchConfig { resolution: 16, base_width: 4, max_width: 16, latent_dim: 8, style_dim: 8, mapping_depth: 2, ..Default::default() }
}

pub fn tiny_config(mode: Mode, iters: usize) -> RunConfig {
    RunConfig { mode, arch: tiny_arch(), total_iters: iters, batch: 4, gm: 3, dn: 2, pfid_every: 0, ..Default::default() }
}

pub fn corpus(domain: SynthDomain, count: usize, size: usize) -> ImageCorpus {
    synth_generate(&SyntheticSpec { domain, count, seed: 0, size }).unwrap()
}

pub fn tiny_target(n: usize) -> ImageCorpus {
    subsample(&corpus(SynthDomain::TargetShapes, 4 * n, 16), n, 0).unwrap()
}

pub fn tiny_source() -> Checkpoint {
    Checkpoint::from_gan(&Gan::build(&tiny_arch(), Head::Large, 42).unwrap(), None)
}
