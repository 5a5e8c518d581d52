//! Corpus loading, subsampling and synthetic domains.

mod common;

use adafm::data::{load_corpus, resize_bilinear, subsample, subsample_indices, synth_generate, BatchIterator, SynthDomain, SyntheticSpec};
use adafm::metrics::{proxy_fid, write_grid, FeatureExtractor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook Fisher–Yates from the back, drawing `j ∈ [0, i]` per step.
fn reference_shuffle(len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.gen_range(0..(i + 1) as u32) as usize;
        v.swap(i, j);
    }
    v
}

#[test]
fn subsample_is_prefix_of_seeded_shuffle() {
    for (len, n, seed) in [(10, 3, 0), (500, 25, 7), (5000, 500, 0), (4, 4, 99)] {
        let expect: Vec<usize> = reference_shuffle(len, seed).into_iter().take(n).collect();
        assert_eq!(subsample_indices(len, n, seed).unwrap(), expect);
    }
    assert!(subsample_indices(3, 4, 0).is_err());
    assert!(subsample_indices(3, 0, 0).is_err());
}

#[test]
fn subsample_copies_selected_images() {
    let c = common::corpus(SynthDomain::TargetShapes, 20, 16);
    let s = subsample(&c, 5, 3).unwrap();
    for (k, &i) in subsample_indices(20, 5, 3).unwrap().iter().enumerate() {
        assert_eq!(s.image(k), c.image(i));
    }
}

#[test]
fn batches_cover_each_epoch() {
    let mut it = BatchIterator::new(10, 5, 1).unwrap();
    let mut epoch: Vec<usize> = it.next().unwrap().into_iter().chain(it.next().unwrap()).collect();
    epoch.sort_unstable();
    assert_eq!(epoch, (0..10).collect::<Vec<_>>());
    assert!(BatchIterator::new(3, 4, 0).is_err());
}

#[test]
fn png_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = common::corpus(SynthDomain::SourceShapes, 3, 16);
    for i in 0..3 {
        write_grid(&dir.path().join(format!("img{i}.png")), &c.batch(&[i]), 1).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let back = load_corpus(dir.path(), 16, false).unwrap();
    assert_eq!(back.len(), 3);
    for i in 0..3 {
        for (a, b) in back.image(i).iter().zip(c.image(i)) {
            assert!((a - b).abs() <= 1.0 / 127.5 + 1e-6);
        }
    }
    let gray = load_corpus(dir.path(), 8, true).unwrap();
    assert_eq!((gray.channels, gray.size), (1, 8));
    let empty = tempfile::tempdir().unwrap();
    assert!(load_corpus(empty.path(), 16, false).is_err());
}

#[test]
fn bilinear_resize_conventions() {
    // constant planes stay constant; a 2×2 → 1×1 reduction averages
    assert!(resize_bilinear(&[0.25; 9], 3, 3, 5, 5).iter().all(|&v| (v - 0.25).abs() < 1e-7));
    assert_eq!(resize_bilinear(&[0.0, 1.0, 2.0, 3.0], 2, 2, 1, 1), vec![1.5]);
    let same: Vec<f32> = (0..16).map(|v| v as f32).collect();
    assert_eq!(resize_bilinear(&same, 4, 4, 4, 4), same);
}

#[test]
fn synthetic_domains_are_deterministic_and_distinct() {
    let spec = |domain, seed| SyntheticSpec { domain, count: 200, seed, size: 16 };
    let a = synth_generate(&spec(SynthDomain::TargetShapes, 1)).unwrap();
    assert_eq!(a, synth_generate(&spec(SynthDomain::TargetShapes, 1)).unwrap());
    let b = synth_generate(&spec(SynthDomain::TargetShapes, 2)).unwrap();
    let s = synth_generate(&spec(SynthDomain::SourceShapes, 1)).unwrap();
    assert!(a.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
    let fx = FeatureExtractor::new();
    let within = proxy_fid(&a.all(), &b.all(), &fx).unwrap();
    let across = proxy_fid(&a.all(), &s.all(), &fx).unwrap();
    assert!(across > 3.0 * within, "within {within}, across {across}");
}

#[test]
fn grayscale_variant_uses_luminance() {
    let c = common::corpus(SynthDomain::TargetShapes, 2, 16);
    let g = c.to_grayscale();
    let hw = 256;
    let im = c.image(1);
    let expect = 0.299 * im[5] + 0.587 * im[hw + 5] + 0.114 * im[2 * hw + 5];
    assert_eq!(g.image(1)[5], expect);
}
