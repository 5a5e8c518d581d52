//! Building blocks: dense layers, filter banks, residual blocks, style
//! blocks and the mapping MLP.

use rand::Rng;

use crate::error::{Error, Result};
use crate::modulation::{adafm_modulate, fs_modulate, Scheme, DEMOD_EPS};
use crate::params::{Bound, Builder, ParamId, ParamKind};
use crate::tensor::{conv2d, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

fn add_channel_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let c = b.numel();
    let mut shape = vec![1; x.ndim()];
    shape[1] = c;
    Ok(x.add(&b.reshape(&shape)?.expand(x.shape())?)?)
}

/// Fully-connected layer `y = x·W + b`, `W` stored in×out.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new<R: Rng>(bld: &mut Builder<'_, R>, name: &str, fan_in: usize, fan_out: usize, head_fc: bool) -> Result<Self> {
        let w = bld.dense_weight(format!("{name}/W"), fan_in, fan_out, head_fc)?;
        let b = bld.constant(format!("{name}/b"), vec![fan_out], 0.0, ParamKind::Bias, head_fc)?;
        Ok(Self { w, b, fan_in, fan_out })
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != 2 || x.shape()[1] != self.fan_in {
            return Err(Error::Tensor(crate::TensorError::Shape {
                op: "dense",
                expected: vec![x.shape().first().copied().unwrap_or(0), self.fan_in],
                got: x.shape().to_vec(),
            }));
        }
        let y = x.matmul(p.get(self.w))?;
        add_channel_bias(&y, p.get(self.b))
    }
}

/// A convolutional filter bank `W` (Cout×Cin×K×K) with bias. Modulation
/// parameters, when attached in the store, are applied on every forward.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl FilterBank {
    pub fn new<R: Rng>(bld: &mut Builder<'_, R>, name: &str, cin: usize, cout: usize, k: usize) -> Result<Self> {
        let w = bld.conv_weight(format!("{name}/W"), cout, cin, k)?;
        let b = bld.constant(format!("{name}/b"), vec![cout], 0.0, ParamKind::Bias, false)?;
        Ok(Self { w, b, cin, cout, k })
    }

    pub fn scheme(&self, p: &Bound) -> Scheme {
        p.store().modulator(self.w).map_or(Scheme::None, |m| m.scheme)
    }

    /// Effective weight after the attached modulation, recomputed per call.
    pub fn weight(&self, p: &Bound) -> Result<Tensor> {
        let w = p.get(self.w);
        match p.store().modulator(self.w) {
            None => Ok(w.clone()),
            Some(m) => match m.scheme {
                Scheme::AdaFm => adafm_modulate(w, p.get(m.gamma), p.get(m.beta)),
                Scheme::Fs => fs_modulate(w, p.get(m.gamma), p.get(m.beta)),
                Scheme::None | Scheme::WeightDemod => Ok(w.clone()),
            },
        }
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        self.forward_with(p, x, &self.weight(p)?)
    }

    fn forward_with(&self, p: &Bound, x: &Tensor, w: &Tensor) -> Result<Tensor> {
        let y = conv2d(x, w, 1, self.k / 2)?;
        add_channel_bias(&y, p.get(self.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    None,
    /// Nearest-neighbour 2x before both branches.
    Up,
    /// 2×2 average pooling after the sum.
    Down,
}

/// `main(x) + shortcut(x)` with `main = conv2 ∘ lrelu ∘ conv1 ∘ lrelu`.
/// The shortcut is the identity when channel counts agree, otherwise a
/// 1×1 filter bank.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: FilterBank,
    pub conv2: FilterBank,
    pub shortcut: Option<FilterBank>,
    pub resample: Resample,
    pub cin: usize,
    pub cout: usize,
}

impl ResidualBlock {
    pub fn new<R: Rng>(bld: &mut Builder<'_, R>, name: &str, cin: usize, cout: usize, resample: Resample) -> Result<Self> {
        let conv1 = FilterBank::new(bld, &format!("{name}/conv1"), cin, cout, 3)?;
        let conv2 = FilterBank::new(bld, &format!("{name}/conv2"), cout, cout, 3)?;
        let shortcut = if cin != cout {
            Some(FilterBank::new(bld, &format!("{name}/shortcut"), cin, cout, 1)?)
        } else {
            None
        };
        Ok(Self { conv1, conv2, shortcut, resample, cin, cout })
    }

    pub fn banks(&self) -> Vec<&FilterBank> {
        let mut v = vec![&self.conv1, &self.conv2];
        v.extend(self.shortcut.as_ref());
        v
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        check_channels("residual block", x, self.cin)?;
        let x = match self.resample {
            Resample::Up => x.upsample_nearest2x()?,
            _ => x.clone(),
        };
        let h = self.conv1.forward(p, &x.leaky_relu(LEAKY_SLOPE))?;
        let h = self.conv2.forward(p, &h.leaky_relu(LEAKY_SLOPE))?;
        let sc = match &self.shortcut {
            Some(s) => s.forward(p, &x)?,
            None => x,
        };
        let out = h.add(&sc)?;
        match self.resample {
            Resample::Down => Ok(out.avg_pool2x()?),
            _ => Ok(out),
        }
    }
}

fn check_channels(what: &str, x: &Tensor, c: usize) -> Result<()> {
    if x.ndim() != 4 || x.shape()[1] != c {
        return Err(Error::Tensor(crate::TensorError::Invalid {
            op: "block",
            msg: format!("{what} expects {c} input channels, got shape {:?}", x.shape()),
        }));
    }
    Ok(())
}

/// Residual block whose convolutions are weight-demodulated by a per-sample
/// style, plus a 1×1 projection shortcut.
#[derive(Debug, Clone)]
pub struct StyleBlock {
    pub conv1: FilterBank,
    pub conv2: FilterBank,
    pub affine1: Dense,
    pub affine2: Dense,
    pub shortcut: FilterBank,
    pub style_dim: usize,
    pub cin: usize,
    pub cout: usize,
}

impl StyleBlock {
    pub fn new<R: Rng>(bld: &mut Builder<'_, R>, name: &str, cin: usize, cout: usize, style_dim: usize) -> Result<Self> {
        let conv1 = FilterBank::new(bld, &format!("{name}/conv1"), cin, cout, 3)?;
        let conv2 = FilterBank::new(bld, &format!("{name}/conv2"), cout, cout, 3)?;
        // style affines start at s = 1: zero weights, unit bias
        let affine1 = style_affine(bld, &format!("{name}/affine1"), style_dim, cin)?;
        let affine2 = style_affine(bld, &format!("{name}/affine2"), style_dim, cout)?;
        let shortcut = FilterBank::new(bld, &format!("{name}/shortcut"), cin, cout, 1)?;
        Ok(Self { conv1, conv2, affine1, affine2, shortcut, style_dim, cin, cout })
    }

    pub fn banks(&self) -> Vec<&FilterBank> {
        vec![&self.conv1, &self.conv2, &self.shortcut]
    }

    /// Styles `s` (N×Cin) for the two convolutions.
    pub fn styles(&self, p: &Bound, w: &Tensor) -> Result<(Tensor, Tensor)> {
        if w.ndim() != 2 || w.shape()[1] != self.style_dim {
            return Err(Error::Tensor(crate::TensorError::Invalid {
                op: "style block",
                msg: format!("style width {} expected, got shape {:?}", self.style_dim, w.shape()),
            }));
        }
        Ok((self.affine1.forward(p, w)?, self.affine2.forward(p, w)?))
    }

    pub fn forward(&self, p: &Bound, x: &Tensor, w: &Tensor) -> Result<Tensor> {
        check_channels("style block", x, self.cin)?;
        let (s1, s2) = self.styles(p, w)?;
        let n = x.shape()[0];
        if w.shape()[0] != n {
            return Err(Error::Tensor(crate::TensorError::Shape {
                op: "style block",
                expected: vec![n, self.style_dim],
                got: w.shape().to_vec(),
            }));
        }
        let h = modulated_conv(&self.conv1, p, &x.leaky_relu(LEAKY_SLOPE), &s1)?;
        let h = modulated_conv(&self.conv2, p, &h.leaky_relu(LEAKY_SLOPE), &s2)?;
        Ok(h.add(&self.shortcut.forward(p, x)?)?)
    }
}

/// Batched weight-demodulated convolution. Scaling input channels by `s`
/// and output channels by `η` equals convolving each sample with its own
/// `η_i·s_j·W_ij` (squared demodulation), without materializing per-sample
/// filter banks.
fn modulated_conv(bank: &FilterBank, p: &Bound, x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let w = bank.weight(p)?;
    let n = x.shape()[0];
    let (o, i) = (bank.cout, bank.cin);
    let w_energy = w.mul(&w)?.sum_to(&[o, i, 1, 1])?.reshape(&[o, i])?;
    let eta = s.mul(s)?.matmul_t(&w_energy, false, true)?.add_scalar(DEMOD_EPS).rsqrt();
    let xs = x.mul(&s.reshape(&[n, i, 1, 1])?.expand(x.shape())?)?;
    let y = conv2d(&xs, &w, 1, bank.k / 2)?;
    let y = y.mul(&eta.reshape(&[n, o, 1, 1])?.expand(y.shape())?)?;
    add_channel_bias(&y, p.get(bank.b))
}

fn style_affine<R: Rng>(bld: &mut Builder<'_, R>, name: &str, style_dim: usize, width: usize) -> Result<Dense> {
    let w = bld.constant(format!("{name}/W"), vec![style_dim, width], 0.0, ParamKind::DenseWeight, false)?;
    let b = bld.constant(format!("{name}/b"), vec![width], 1.0, ParamKind::Bias, false)?;
    Ok(Dense { w, b, fan_in: style_dim, fan_out: width })
}

/// Latent-to-style MLP: `depth` dense layers with leaky-rectifier activations
/// between them.
#[derive(Debug, Clone)]
pub struct MappingMlp {
    pub layers: Vec<Dense>,
}

impl MappingMlp {
    pub fn new<R: Rng>(bld: &mut Builder<'_, R>, name: &str, latent_dim: usize, style_dim: usize, depth: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| {
                let fan_in = if i == 0 { latent_dim } else { style_dim };
                Dense::new(bld, &format!("{name}/fc{}", i + 1), fan_in, style_dim, false)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn forward(&self, p: &Bound, z: &Tensor) -> Result<Tensor> {
        let mut h = z.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = h.leaky_relu(LEAKY_SLOPE);
            }
            h = layer.forward(p, &h)?;
        }
        Ok(h)
    }
}
