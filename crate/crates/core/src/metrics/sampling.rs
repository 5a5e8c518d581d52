//! Latent interpolation, style mixing and PNG grids.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Gan;
use crate::tensor::{concat0, no_grad, Tensor};

/// `n` standard-normal latents drawn from `seed`.
pub fn latents(n: usize, dim: usize, seed: u64) -> Tensor {
    Tensor::randn(&[n, dim], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Images at `z(α) = (1−α)·z_a + α·z_b` for `steps` values of α evenly
/// spaced over [0, 1]. Returns a `steps×C×H×W` tensor.
pub fn interpolate(gan: &Gan, z_a: &[f32], z_b: &[f32], steps: usize) -> Result<Tensor> {
    let d = gan.arch.latent_dim;
    if steps < 2 {
        return Err(Error::Config(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    if z_a.len() != d || z_b.len() != d {
        return Err(Error::Config(format!("latents must have length {d}")));
    }
    let mut z = Vec::with_capacity(steps * d);
    for s in 0..steps {
        let t = s as f32 / (steps - 1) as f32;
        // The endpoints copy the inputs so they reproduce direct generation exactly.
        match s {
            0 => z.extend_from_slice(z_a),
            _ if s + 1 == steps => z.extend_from_slice(z_b),
            _ => z.extend(z_a.iter().zip(z_b).map(|(&a, &b)| (1.0 - t) * a + t * b)),
        }
    }
    gan.generate(&Tensor::from_vec(z, &[steps, d])?)
}

/// Generates from `z_source` with the style input of style block
/// `mix_block` (1-based) taken from `z_dest`. Both latents are `N×latent`.
pub fn style_mix(gan: &Gan, z_source: &Tensor, z_dest: &Tensor, mix_block: usize) -> Result<Tensor> {
    let count = gan.gen.style_block_count();
    if count == 0 {
        return Err(Error::Config("style mixing needs the tailored head".into()));
    }
    if mix_block == 0 || mix_block > count {
        return Err(Error::Config(format!("style block index {mix_block} outside 1..={count}")));
    }
    if z_source.shape() != z_dest.shape() {
        return Err(Error::Config(format!("latent shapes differ: {:?} vs {:?}", z_source.shape(), z_dest.shape())));
    }
    let _g = no_grad();
    let p = gan.store.bind_const();
    let ws = gan.gen.style(&p, z_source)?.expect("tailored head has a mapping");
    let wd = gan.gen.style(&p, z_dest)?.expect("tailored head has a mapping");
    let styles: Vec<Tensor> = (1..=count).map(|b| if b == mix_block { wd.clone() } else { ws.clone() }).collect();
    gan.gen.forward_with_styles(&p, z_source, &styles)
}

/// Maps [−1, 1] to bytes.
pub fn to_byte(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// Tiles an `N×C×H×W` batch row-major into a grid with `cols` columns.
/// Returns interleaved bytes plus the grid width and height.
pub fn grid_bytes(images: &Tensor, cols: usize) -> Result<(Vec<u8>, usize, usize)> {
    let s = images.shape();
    if s.len() != 4 || !matches!(s[1], 1 | 3) || s[0] == 0 || cols == 0 {
        return Err(Error::Config(format!("cannot tile images of shape {s:?} into {cols} columns")));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let rows = n.div_ceil(cols);
    let (gw, gh) = (cols * w, rows * h);
    let mut out = vec![0u8; gw * gh * c];
    let data = images.data();
    for i in 0..n {
        let (gy, gx) = (i / cols * h, i % cols * w);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = data[((i * c + ch) * h + y) * w + x];
                    out[((gy + y) * gw + gx + x) * c + ch] = to_byte(v);
                }
            }
        }
    }
    Ok((out, gw, gh))
}

pub fn write_grid(path: &Path, images: &Tensor, cols: usize) -> Result<()> {
    let (bytes, w, h) = grid_bytes(images, cols)?;
    let color = if images.shape()[1] == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
    image::save_buffer_with_format(path, &bytes, w as u32, h as u32, color, image::ImageFormat::Png)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

/// Stacks batches along the first axis.
pub fn stack(batches: &[Tensor]) -> Result<Tensor> {
    Ok(concat0(batches)?)
}
