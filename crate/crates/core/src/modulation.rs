//! Modulation of frozen filter banks.
//!
//! All three schemes rewrite a Cout×Cin×K×K bank per (output, input) channel
//! pair with a scale and a shift:
//!
//! * AdaFM: a full Cout×Cin scale `gamma` and shift `beta`.
//! * Filter selection (FS): rank-one `gamma = gamma_hat·1ᵀ`, `beta = beta_hat·1ᵀ`.
//! * Weight demodulation: `beta = 0`, `gamma = eta·sᵀ` with a per-output
//!   normalizer `eta` computed from the style `s`.
//!
//! The functions are differentiable in their parameters and in the bank.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, TensorError};

/// How a filter bank is modulated before convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    None,
    AdaFm,
    Fs,
    WeightDemod,
}

/// Default `ε` added under the demodulation square root.
pub const DEMOD_EPS: f64 = 1e-8;

/// Which sum sits under the demodulation square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemodForm {
    /// `ε + Σ_{j,k1,k2} s_j·W_{i,j,k1,k2}`, unsquared. Can be negative for
    /// signed weights, in which case modulation fails with a domain error.
    Linear,
    /// `ε + Σ_{j,k1,k2} (s_j·W_{i,j,k1,k2})²`, always positive.
    Squared,
}

fn bank_dims<T: Element>(w: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    match *w.shape() {
        [o, i, k1, k2] => Ok((o, i, k1, k2)),
        _ => Err(TensorError::Invalid {
            op: "modulate",
            msg: format!("filter bank must be 4-D, got {:?}", w.shape()),
        }
        .into()),
    }
}

fn expect_shape<T: Element>(what: &'static str, t: &Tensor<T>, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(TensorError::Shape { op: what, expected: shape.to_vec(), got: t.shape().to_vec() }.into());
    }
    Ok(())
}

/// `W'_{i,j,:,:} = gamma_{i,j}·W_{i,j,:,:} + beta_{i,j}`.
pub fn adafm_modulate<T: Element>(w: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
    let (o, i, _, _) = bank_dims(w)?;
    expect_shape("adafm gamma", gamma, &[o, i])?;
    expect_shape("adafm beta", beta, &[o, i])?;
    let g = gamma.reshape(&[o, i, 1, 1])?.expand(w.shape())?;
    let b = beta.reshape(&[o, i, 1, 1])?.expand(w.shape())?;
    Ok(w.mul(&g)?.add(&b)?)
}

/// Filter selection: per-output-filter scale and shift.
pub fn fs_modulate<T: Element>(w: &Tensor<T>, gamma_hat: &Tensor<T>, beta_hat: &Tensor<T>) -> Result<Tensor<T>> {
    let (o, _, _, _) = bank_dims(w)?;
    expect_shape("fs gamma_hat", gamma_hat, &[o])?;
    expect_shape("fs beta_hat", beta_hat, &[o])?;
    let g = gamma_hat.reshape(&[o, 1, 1, 1])?.expand(w.shape())?;
    let b = beta_hat.reshape(&[o, 1, 1, 1])?.expand(w.shape())?;
    Ok(w.mul(&g)?.add(&b)?)
}

/// Expands FS vectors into the equivalent AdaFM matrices (`v·1ᵀ`).
pub fn fs_as_adafm<T: Element>(gamma_hat: &Tensor<T>, beta_hat: &Tensor<T>, cin: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let o = gamma_hat.numel();
    let g = gamma_hat.reshape(&[o, 1])?.expand(&[o, cin])?;
    let b = beta_hat.reshape(&[o, 1])?.expand(&[o, cin])?;
    Ok((g, b))
}

/// Per-output normalizer `eta` of weight demodulation for style `s`.
pub fn demod_eta<T: Element>(w: &Tensor<T>, s: &Tensor<T>, eps: f64, form: DemodForm) -> Result<Tensor<T>> {
    let (o, i, _, _) = bank_dims(w)?;
    expect_shape("demod style", s, &[i])?;
    let se = s.reshape(&[1, i, 1, 1])?.expand(w.shape())?;
    let sw = w.mul(&se)?;
    let terms = match form {
        DemodForm::Linear => sw,
        DemodForm::Squared => sw.mul(&sw)?,
    };
    let radicand = terms.sum_to(&[o, 1, 1, 1])?.add_scalar(eps);
    if let Some((channel, &r)) = radicand.data().iter().enumerate().find(|(_, r)| !(**r > T::zero())) {
        return Err(Error::Domain { channel, radicand: r.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(radicand.rsqrt())
}

/// `W'_{i,j,:,:} = eta_i·s_j·W_{i,j,:,:}`.
pub fn weight_demod_modulate<T: Element>(w: &Tensor<T>, s: &Tensor<T>, eps: f64, form: DemodForm) -> Result<Tensor<T>> {
    let (_, i, _, _) = bank_dims(w)?;
    let eta = demod_eta(w, s, eps, form)?;
    let se = s.reshape(&[1, i, 1, 1])?.expand(w.shape())?;
    let ee = eta.expand(w.shape())?;
    Ok(w.mul(&se)?.mul(&ee)?)
}
