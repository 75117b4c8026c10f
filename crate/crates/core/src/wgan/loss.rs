use rand::Rng;

use super::model::{Critic, Generator};
use crate::error::{Error, Result};
use crate::tensor::{grad, Mode, Tensor, TensorError};

/// One `ε ~ U[0, 1)` per batch element.
pub fn sample_epsilon<R: Rng + ?Sized>(batch: usize, rng: &mut R) -> Vec<f64> {
    (0..batch).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// `x̂ = ε·x_real + (1 − ε)·x_fake`, with one `ε` per sample broadcast over
/// channels and time. Operates on values; the result is detached.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Result<Tensor> {
    if real.shape() != fake.shape() {
        return Err(Error::ShapeMismatch(format!("real {:?} vs fake {:?}", real.shape(), fake.shape())));
    }
    let b = real.shape().first().copied().unwrap_or(0);
    if eps.len() != b {
        return Err(Error::ShapeMismatch(format!("{} epsilons for batch {b}", eps.len())));
    }
    let per = real.numel().checked_div(b).unwrap_or(0);
    let data = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(i, (&x, &y))| {
            let e = eps[i / per];
            e * x + (1.0 - e) * y
        })
        .collect();
    Ok(Tensor::new(data, real.shape().to_vec())?)
}

#[derive(Debug, Clone)]
pub struct Penalty {
    /// `λ · mean_b (‖∇C(x̂_b)‖₂ − 1)²`, differentiable w.r.t. the critic.
    pub value: Tensor,
    pub mean_grad_norm: f64,
}

/// Gradient penalty for an arbitrary critic function mapping `[B, …]` to
/// scores `[B]`. `x_hat` must be a variable on a higher-order tape.
pub fn gradient_penalty_with<F>(critic: F, x_hat: &Tensor, lambda: f64) -> Result<Penalty>
where
    F: FnOnce(&Tensor) -> Result<Tensor>,
{
    let tape = x_hat.tape().ok_or(TensorError::Detached)?;
    if !tape.higher_order() {
        return Err(TensorError::NotHigherOrder.into());
    }
    let b = x_hat.shape()[0];
    let scores = critic(x_hat)?;
    // Samples do not interact inside the critic, so the gradient of the
    // summed scores holds each sample's own input gradient.
    let g = grad(&scores.sum()?, &[x_hat], true)?.remove(0);
    let per = x_hat.numel() / b;
    let norms = g.square()?.sum_keep(1, per)?.sqrt()?;
    let mean_grad_norm = norms.data().iter().sum::<f64>() / b as f64;
    let value = norms.shift(-1.0)?.square()?.mean()?.scale(lambda)?;
    Ok(Penalty { value, mean_grad_norm })
}

impl Critic {
    pub fn gradient_penalty(&self, params: &[Tensor], x_hat: &Tensor, lambda: f64) -> Result<Penalty> {
        gradient_penalty_with(|x| self.forward_with(params, x, None), x_hat, lambda)
    }
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub loss: Tensor,
    pub real_score: f64,
    pub fake_score: f64,
    pub penalty: f64,
    pub mean_grad_norm: f64,
}

impl CriticLoss {
    /// `mean C(real) − mean C(fake)`.
    pub fn wasserstein_estimate(&self) -> f64 {
        self.real_score - self.fake_score
    }
}

/// `mean C(fake) − mean C(real) + λ·GP(x̂)`.
///
/// `params` must be bound to a higher-order tape; the penalty (and the
/// interpolate gradient norm it reports) is computed even when `lambda` is
/// zero. `fake` is treated as a constant. `x̂` is built from `eps` and
/// registered on the parameters' tape.
pub fn critic_loss(
    critic: &Critic,
    params: &[Tensor],
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    lambda: f64,
) -> Result<CriticLoss> {
    let real_scores = critic.forward_with(params, &real.detach(), None)?.mean()?;
    let fake_scores = critic.forward_with(params, &fake.detach(), None)?.mean()?;
    let tape = params.iter().find_map(|p| p.tape()).ok_or(TensorError::Detached)?;
    let x_hat = tape.var(&interpolate(real, fake, eps)?);
    let gp = critic.gradient_penalty(params, &x_hat, lambda)?;
    let penalty = gp.value.item();
    let mean_grad_norm = gp.mean_grad_norm;
    let loss = fake_scores.sub(&real_scores)?.add(&gp.value)?;
    Ok(CriticLoss { real_score: real_scores.item(), fake_score: fake_scores.item(), penalty, mean_grad_norm, loss })
}

/// `−mean C(G(z))`. Gradients flow into `gen_params`; the critic parameters
/// are used as given (normally detached).
pub fn generator_loss(
    critic: &Critic,
    critic_params: &[Tensor],
    generator: &mut Generator,
    gen_params: &[Tensor],
    z: &Tensor,
    mode: Mode,
) -> Result<Tensor> {
    let fake = generator.forward_with(gen_params, z, mode, None)?;
    Ok(critic.forward_with(critic_params, &fake, None)?.mean()?.neg()?)
}
