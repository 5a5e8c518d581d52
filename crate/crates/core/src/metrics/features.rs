use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::LEAKY_SLOPE;
use crate::tensor::{conv2d, no_grad, Tensor};

use super::frechet::{frechet_distance, GaussianFit};

/// Seed of the fixed feature-extractor weights.
pub const FEATURE_SEED: u64 = 0x0ADA_F0F1_D000_0001;
pub const FEATURE_DIM: usize = 64;
const WIDTHS: [usize; 3] = [16, 32, FEATURE_DIM];
const CHUNK: usize = 64;

/// Never-trained random conv net: three conv + leaky-rectifier + 2×2
/// average-pool stages, then a global average pool to 64 features.
///
/// Distances computed with it are only meaningful relative to each other;
/// they are not comparable to Inception-based FID values.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    weights: Vec<Tensor>,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureExtractor {
    pub fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(FEATURE_SEED);
        let mut cin = 3;
        let weights = WIDTHS
            .iter()
            .map(|&cout| {
                let std = (2.0 / (cin * 9) as f64).sqrt();
                let w = Tensor::randn(&[cout, cin, 3, 3], std, &mut rng);
                cin = cout;
                w
            })
            .collect();
        Self { weights }
    }

    /// Features of an N×C×H×W batch (C = 1 is replicated to RGB), row-major N×64.
    pub fn features(&self, images: &Tensor) -> Result<Vec<f64>> {
        let _g = no_grad();
        let shape = images.shape().to_vec();
        if shape.len() != 4 || !matches!(shape[1], 1 | 3) || shape[2] % 8 != 0 || shape[3] % 8 != 0 {
            return Err(Error::Analysis(format!("feature extractor needs N×{{1,3}}×H×W with H, W divisible by 8, got {shape:?}")));
        }
        let n = shape[0];
        let mut out = Vec::with_capacity(n * FEATURE_DIM);
        for start in (0..n).step_by(CHUNK) {
            let len = CHUNK.min(n - start);
            let mut x = images.slice0(start, len)?;
            if shape[1] == 1 {
                let hw = shape[2] * shape[3];
                let mut rgb = Vec::with_capacity(len * 3 * hw);
                for im in x.data().chunks(hw) {
                    for _ in 0..3 {
                        rgb.extend_from_slice(im);
                    }
                }
                x = Tensor::from_vec(rgb, &[len, 3, shape[2], shape[3]])?;
            }
            for w in &self.weights {
                x = conv2d(&x, w, 1, 1)?.leaky_relu(LEAKY_SLOPE).avg_pool2x()?;
            }
            let hw = x.shape()[2] * x.shape()[3];
            out.extend(x.data().chunks(hw).map(|c| c.iter().map(|&v| v as f64).sum::<f64>() / hw as f64));
        }
        Ok(out)
    }

    pub fn fit(&self, images: &Tensor) -> Result<GaussianFit> {
        let n = images.shape().first().copied().unwrap_or(0);
        if n < 2 {
            return Err(Error::Analysis(format!("proxy FID needs at least 2 images per set, got {n}")));
        }
        GaussianFit::from_features(&self.features(images)?, n, FEATURE_DIM)
    }
}

/// Fréchet distance between Gaussian fits of extractor features.
pub fn proxy_fid(real: &Tensor, fake: &Tensor, fx: &FeatureExtractor) -> Result<f64> {
    frechet_distance(&fx.fit(real)?, &fx.fit(fake)?)
}
