//! Adversarial losses and gradient penalties in logit form.

use crate::error::{Error, Result};
use crate::tensor::{second_order_grad_norm, Element, Tensor};

fn check_logits<T: Element>(t: &Tensor<T>, what: &str) -> Result<()> {
    if t.ndim() != 1 || t.numel() == 0 {
        return Err(Error::Config(format!("{what} logits must be a non-empty vector, got {:?}", t.shape())));
    }
    Ok(())
}

/// `mean(softplus(−real)) + mean(softplus(fake))`, i.e. `−log σ(real) − log(1 − σ(fake))`.
pub fn d_loss<T: Element>(real_logits: &Tensor<T>, fake_logits: &Tensor<T>) -> Result<Tensor<T>> {
    check_logits(real_logits, "real")?;
    check_logits(fake_logits, "fake")?;
    if real_logits.shape() != fake_logits.shape() {
        return Err(Error::Config(format!("batch sizes differ: {:?} vs {:?}", real_logits.shape(), fake_logits.shape())));
    }
    Ok(real_logits.neg().softplus().mean().add(&fake_logits.softplus().mean())?)
}

/// Non-saturating generator loss `mean(softplus(−fake))`.
pub fn g_loss<T: Element>(fake_logits: &Tensor<T>) -> Result<Tensor<T>> {
    check_logits(fake_logits, "fake")?;
    Ok(fake_logits.neg().softplus().mean())
}

/// `(γ/2)·mean‖∇ₓD(x)‖²` given logits already computed from `x`.
///
/// Each logit must depend only on its own sample, which holds for the
/// discriminators here (no cross-batch layers).
pub fn r1_from_logits<T: Element>(logits: &Tensor<T>, x: &Tensor<T>, gamma: f64) -> Result<Tensor<T>> {
    check_logits(logits, "penalty")?;
    let n = logits.numel() as f64;
    Ok(second_order_grad_norm(&logits.sum(), x)?.scale(gamma / (2.0 * n)))
}

/// R1 penalty on real samples. `x` is re-bound as a gradient-tracking leaf.
pub fn r1_penalty<T: Element>(d: impl Fn(&Tensor<T>) -> Result<Tensor<T>>, real: &Tensor<T>, gamma: f64) -> Result<Tensor<T>> {
    let x = real.clone().into_leaf(true);
    r1_from_logits(&d(&x)?, &x, gamma)
}

/// The same penalty applied to real and generated samples, summed.
pub fn gp_both_sides<T: Element>(
    d: impl Fn(&Tensor<T>) -> Result<Tensor<T>>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    gamma: f64,
) -> Result<Tensor<T>> {
    Ok(r1_penalty(&d, real, gamma)?.add(&r1_penalty(&d, fake, gamma)?)?)
}
