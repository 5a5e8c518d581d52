//! Fixtures shared by the benchmarks: the desk-scale configuration and
//! seeded random tensors.

use adafm::config::{DataSource, Mode, RunConfig};
use adafm::data::{ImageCorpus, SynthDomain};
use adafm::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 32×32, widths 4..32, batch 16: the size used for the desk benchmark.
pub fn desk_config(mode: Mode) -> RunConfig {
    let mut cfg = RunConfig {
        mode,
        total_iters: 1_000_000,
        warmup_iters: Some(0),
        pfid_every: 0,
        data: DataSource::Synthetic { domain: SynthDomain::TargetShapes, count: 500, seed: 1 },
        ..Default::default()
    };
    cfg.arch.resolution = 32;
    cfg.arch.base_width = 4;
    cfg.arch.max_width = 32;
    cfg
}

pub fn desk_target() -> ImageCorpus {
    desk_config(Mode::Scratch).load_data().expect("synthetic corpus")
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}
