//! Image corpora: directory loading, limited-N subsets, batching and the
//! synthetic source/target generators used for self-contained runs.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered set of same-shaped images, C×H×W each, values in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCorpus {
    pixels: Vec<f32>,
    count: usize,
    pub channels: usize,
    pub size: usize,
    pub provenance: String,
}

impl ImageCorpus {
    pub fn from_images(images: Vec<Vec<f32>>, channels: usize, size: usize, provenance: impl Into<String>) -> Result<Self> {
        let per = channels * size * size;
        if images.is_empty() {
            return Err(Error::Data("corpus is empty".into()));
        }
        if let Some(i) = images.iter().position(|im| im.len() != per) {
            return Err(Error::Data(format!("image {i} has {} values, expected {per}", images[i].len())));
        }
        let count = images.len();
        Ok(Self { pixels: images.concat(), count, channels, size, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.size * self.size
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Stacks the given images into an N×C×H×W tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Tensor::from_vec(data, &[indices.len(), self.channels, self.size, self.size]).expect("corpus images are well-formed")
    }

    pub fn all(&self) -> Tensor {
        Tensor::from_vec(self.pixels.clone(), &[self.count, self.channels, self.size, self.size]).expect("corpus images are well-formed")
    }

    /// Keeps a single channel holding luminance (0.299 R + 0.587 G + 0.114 B).
    pub fn to_grayscale(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let hw = self.size * self.size;
        let images = (0..self.count)
            .map(|i| {
                let im = self.image(i);
                (0..hw).map(|p| luminance(im[p], im[hw + p], im[2 * hw + p])).collect()
            })
            .collect();
        Self::from_images(images, 1, self.size, format!("{} (grayscale)", self.provenance)).expect("shapes preserved")
    }
}

pub fn luminance(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Bilinear resize of one H×W plane with half-pixel centers: output pixel
/// `d` samples source coordinate `(d + 0.5)·in/out − 0.5`, clamped to the
/// edge.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let coord = |d: usize, n_in: usize, n_out: usize| -> (usize, usize, f32) {
        let s = ((d as f32 + 0.5) * n_in as f32 / n_out as f32 - 0.5).clamp(0.0, (n_in - 1) as f32);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f32)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm" | "ppm")
    )
}

/// Decodes one file to `channels` planes in [0, 1] at its native size.
fn decode(path: &Path, channels: usize) -> Result<(Vec<f32>, usize, usize)> {
    let img = image::open(path).map_err(|e| Error::Data(format!("cannot decode {}: {e}", path.display())))?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    let mut planes = vec![0.0f32; channels * h * w];
    for p in 0..h * w {
        let (r, g, b) = (raw[3 * p], raw[3 * p + 1], raw[3 * p + 2]);
        if channels == 1 {
            planes[p] = luminance(r, g, b);
        } else {
            planes[p] = r;
            planes[h * w + p] = g;
            planes[2 * h * w + p] = b;
        }
    }
    Ok((planes, h, w))
}

/// Loads every PNG/PGM/PPM file in `dir` (sorted by file name), resized to
/// `size`×`size` and scaled to [−1, 1].
pub fn load_corpus(dir: &Path, size: usize, grayscale: bool) -> Result<ImageCorpus> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG/PGM images in {}", dir.display())));
    }
    let channels = if grayscale { 1 } else { 3 };
    let images = files
        .iter()
        .map(|f| {
            let (planes, h, w) = decode(f, channels)?;
            let mut out = Vec::with_capacity(channels * size * size);
            for c in 0..channels {
                let plane = &planes[c * h * w..(c + 1) * h * w];
                out.extend(resize_bilinear(plane, h, w, size, size).into_iter().map(|v| v * 2.0 - 1.0));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageCorpus::from_images(images, channels, size, dir.display().to_string())
}

/// Seeded sample of `n` images without replacement: the first `n` entries
/// of a seeded shuffle of all indices, kept in shuffle order.
pub fn subsample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::Data(format!("cannot select {n} images from a corpus of {len}")));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    Ok(idx)
}

pub fn subsample(corpus: &ImageCorpus, n: usize, seed: u64) -> Result<ImageCorpus> {
    let idx = subsample_indices(corpus.len(), n, seed)?;
    let images = idx.iter().map(|&i| corpus.image(i).to_vec()).collect();
    ImageCorpus::from_images(images, corpus.channels, corpus.size, format!("{} [limit {n}, seed {seed}]", corpus.provenance))
}

/// Endless stream of index batches: each epoch is a fresh seeded shuffle,
/// and batches run across epoch boundaries.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    len: usize,
    batch: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl BatchIterator {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if batch == 0 || batch > len {
            return Err(Error::Data(format!("batch size {batch} invalid for a corpus of {len}")));
        }
        Ok(Self { len, batch, rng: ChaCha8Rng::seed_from_u64(seed), order: Vec::new(), pos: 0 })
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.pos == self.order.len() {
                self.order = (0..self.len).collect();
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        Some(out)
    }
}

/// Which synthetic domain to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthDomain {
    /// Many-class scenes of coloured geometric primitives.
    SourceShapes,
    /// Single-class radial "flower" scenes: a disc ringed by petals.
    TargetShapes,
}

impl std::str::FromStr for SynthDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source_shapes" => Ok(SynthDomain::SourceShapes),
            "target_shapes" => Ok(SynthDomain::TargetShapes),
            other => Err(Error::Config(format!("unknown synthetic domain {other:?}"))),
        }
    }
}

impl SynthDomain {
    pub fn name(self) -> &'static str {
        match self {
            SynthDomain::SourceShapes => "source_shapes",
            SynthDomain::TargetShapes => "target_shapes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub domain: SynthDomain,
    pub count: usize,
    pub seed: u64,
    pub size: usize,
}

/// Soft coverage for a signed distance (negative inside), ~1 px wide edge.
fn coverage(sd: f32, px: f32) -> f32 {
    (0.5 - sd / px).clamp(0.0, 1.0)
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

struct Canvas {
    size: usize,
    rgb: Vec<[f32; 3]>,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Self { size, rgb: vec![[0.0; 3]; size * size] }
    }

    /// Paints `color` wherever `sd(u, v)` (unit coordinates) is negative.
    fn paint(&mut self, color: [f32; 3], sd: impl Fn(f32, f32) -> f32) {
        let px = 1.0 / self.size as f32;
        for y in 0..self.size {
            for x in 0..self.size {
                let (u, v) = ((x as f32 + 0.5) * px, (y as f32 + 0.5) * px);
                let a = coverage(sd(u, v), px);
                if a > 0.0 {
                    let p = &mut self.rgb[y * self.size + x];
                    for c in 0..3 {
                        p[c] = p[c] * (1.0 - a) + color[c] * a;
                    }
                }
            }
        }
    }

    fn planes(&self) -> Vec<f32> {
        let hw = self.size * self.size;
        let mut out = vec![0.0; 3 * hw];
        for (i, p) in self.rgb.iter().enumerate() {
            for c in 0..3 {
                out[c * hw + i] = (p[c].clamp(0.0, 1.0)) * 2.0 - 1.0;
            }
        }
        out
    }
}

fn render_source<R: Rng>(rng: &mut R, size: usize) -> Vec<f32> {
    let mut cv = Canvas::new(size);
    let (top, bot) = (hsv(rng.gen(), rng.gen_range(0.1..0.6), rng.gen_range(0.3..0.9)), hsv(rng.gen(), rng.gen_range(0.1..0.6), rng.gen_range(0.2..0.8)));
    for y in 0..size {
        let t = y as f32 / (size - 1) as f32;
        for x in 0..size {
            cv.rgb[y * size + x] = [0, 1, 2].map(|c| top[c] * (1.0 - t) + bot[c] * t);
        }
    }
    let shapes = rng.gen_range(1..=3);
    for _ in 0..shapes {
        let color = hsv(rng.gen(), rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0));
        let (cx, cy) = (rng.gen_range(0.2..0.8f32), rng.gen_range(0.2..0.8f32));
        let r = rng.gen_range(0.08..0.3f32);
        match rng.gen_range(0..5) {
            0 => cv.paint(color, |u, v| ((u - cx).hypot(v - cy)) - r),
            1 => cv.paint(color, |u, v| (u - cx).abs().max((v - cy).abs()) - r),
            2 => {
                let t = r * 0.35;
                cv.paint(color, |u, v| ((u - cx).hypot(v - cy) - r).abs() - t / 2.0)
            }
            3 => {
                // upright triangle
                cv.paint(color, |u, v| {
                    let (du, dv) = ((u - cx).abs(), v - cy);
                    (dv - r).max(0.866 * du + 0.5 * dv - 0.5 * r)
                })
            }
            _ => {
                // horizontal bar
                let hh = r * 0.3;
                cv.paint(color, |u, v| ((u - cx).abs() - r).max((v - cy).abs() - hh))
            }
        }
    }
    cv.planes()
}

fn render_target<R: Rng>(rng: &mut R, size: usize) -> Vec<f32> {
    let mut cv = Canvas::new(size);
    let bg = hsv(rng.gen_range(0.25..0.4), rng.gen_range(0.4..0.7), rng.gen_range(0.15..0.35));
    cv.rgb.iter_mut().for_each(|p| *p = bg);
    let (cx, cy) = (rng.gen_range(0.4..0.6f32), rng.gen_range(0.4..0.6f32));
    let petals = rng.gen_range(5..=8);
    let reach = rng.gen_range(0.25..0.4f32);
    let width = rng.gen_range(0.07..0.12f32);
    let phase = rng.gen_range(0.0..std::f32::consts::TAU);
    let petal = hsv(rng.gen_range(0.85..1.1), rng.gen_range(0.5..0.9), rng.gen_range(0.7..1.0));
    for k in 0..petals {
        let a = phase + k as f32 * std::f32::consts::TAU / petals as f32;
        let (ex, ey) = (cx + 0.55 * reach * a.cos(), cy + 0.55 * reach * a.sin());
        let (ca, sa) = (a.cos(), a.sin());
        let (len, wid) = (0.5 * reach, width);
        cv.paint(petal, |u, v| {
            let (du, dv) = (u - ex, v - ey);
            let (along, across) = (du * ca + dv * sa, -du * sa + dv * ca);
            ((along / len).hypot(across / wid) - 1.0) * wid
        });
    }
    let center = hsv(rng.gen_range(0.1..0.17), 0.9, rng.gen_range(0.8..1.0));
    let cr = rng.gen_range(0.06..0.1f32);
    cv.paint(center, |u, v| (u - cx).hypot(v - cy) - cr);
    cv.planes()
}

/// Renders a deterministic corpus for `spec`.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<ImageCorpus> {
    if spec.count == 0 || spec.size < 4 {
        return Err(Error::Data(format!("invalid synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let images = (0..spec.count)
        .map(|_| match spec.domain {
            SynthDomain::SourceShapes => render_source(&mut rng, spec.size),
            SynthDomain::TargetShapes => render_target(&mut rng, spec.size),
        })
        .collect();
    ImageCorpus::from_images(images, 3, spec.size, format!("synthetic:{}:seed{}", spec.domain.name(), spec.seed))
}
