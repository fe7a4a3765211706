//! Noise-prediction training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codec::LatentVideo;
use super::layout::Conditioning;
use super::net::DenoiserNet;
use super::real::Real;
use super::sampler::{add_noise, gaussian};
use super::schedule::NoiseSchedule;
use crate::error::{check_dim, Error, Result};

/// A clean target latent with its conditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub target: LatentVideo,
    pub cond: Conditioning,
}

/// Timestep and noise used for one example of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Vec<f64>,
}

impl NoiseDraw {
    /// Uniform timestep in `1..=steps` and standard normal noise.
    pub fn sample(schedule: &NoiseSchedule, len: usize, rng: &mut impl Rng) -> Self {
        let t = rng.gen_range(1..=schedule.steps());
        Self { t, eps: gaussian(len, rng) }
    }
}

/// Mean squared noise-prediction error of one example.
pub fn epsilon_loss<F: Real>(net: &DenoiserNet<F>, example: &TrainExample, draw: &NoiseDraw) -> Result<f64> {
    let z_t = add_noise(net.schedule(), &example.target, draw.t, &draw.eps)?;
    let eps_hat = net.predict_epsilon(&z_t, &example.cond, draw.t)?;
    Ok(mse(eps_hat.data(), &draw.eps))
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Batch-mean loss and its gradient with respect to the parameters.
pub fn loss_and_gradient<F: Real>(
    net: &DenoiserNet<F>,
    batch: &[TrainExample],
    draws: &[NoiseDraw],
) -> Result<(f64, Vec<F>)> {
    if batch.is_empty() {
        return Err(Error::Value("empty training batch".into()));
    }
    check_dim("noise draws", batch.len(), draws.len())?;
    let mut grad = vec![F::zero(); net.param_count()];
    let mut total = 0.0;
    for (index, (ex, draw)) in batch.iter().zip(draws).enumerate() {
        let z_t = add_noise(net.schedule(), &ex.target, draw.t, &draw.eps)?;
        let (h, tape) = net.forward(&z_t, &ex.cond, draw.t)?;
        let eps_hat = net.epsilon_from_output(&z_t, &ex.cond, draw.t, &h);
        let loss = mse(eps_hat.data(), &draw.eps);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { index, t: draw.t });
        }
        total += loss;
        let scale = 2.0 * net.epsilon_output_gain(draw.t) / (draw.eps.len() * batch.len()) as f64;
        let dh: Vec<F> = eps_hat
            .data()
            .iter()
            .zip(&draw.eps)
            .map(|(e, y)| F::from_f64_lossy(scale * (e - y)))
            .collect();
        net.backward(&tape, &dh, &mut grad);
    }
    Ok((total / batch.len() as f64, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Global gradient-norm clip.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn apply<F: Real>(&mut self, params: &mut [F], grad: &[F]) {
        self.apply_scaled(params, grad, 1.0);
    }

    /// Update with the learning rate multiplied by `lr_scale`.
    pub fn apply_scaled<F: Real>(&mut self, params: &mut [F], grad: &[F], lr_scale: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer sized for another network");
        let c = &self.config;
        let norm = grad.iter().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        let clip = match c.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = c.learning_rate * lr_scale;
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            let g = g.to_f64_lossy() * clip;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let upd = lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            *p = F::from_f64_lossy(p.to_f64_lossy() - upd);
        }
    }
}

/// One optimizer step on `batch` with explicit noise draws; returns the
/// pre-update batch loss.
pub fn train_step_with_draws<F: Real>(
    net: &mut DenoiserNet<F>,
    batch: &[TrainExample],
    draws: &[NoiseDraw],
    opt: &mut Adam,
    lr_scale: f64,
) -> Result<f64> {
    let (loss, grad) = loss_and_gradient(net, batch, draws)?;
    opt.apply_scaled(net.params_mut(), &grad, lr_scale);
    Ok(loss)
}

/// One optimizer step with uniformly drawn timesteps and Gaussian noise.
pub fn train_epsilon<F: Real>(
    net: &mut DenoiserNet<F>,
    batch: &[TrainExample],
    opt: &mut Adam,
    rng: &mut impl Rng,
) -> Result<f64> {
    let draws: Vec<NoiseDraw> = batch
        .iter()
        .map(|ex| NoiseDraw::sample(net.schedule(), ex.target.data().len(), rng))
        .collect();
    train_step_with_draws(net, batch, &draws, opt, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(
            AdamConfig {
                clip_norm: None,
                ..AdamConfig::new(0.1)
            },
            2,
        );
        let mut p = vec![1.0f64, -1.0];
        opt.apply(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_update_direction() {
        let mut opt = Adam::new(AdamConfig::new(0.1), 1);
        let mut p = vec![0.0f32];
        opt.apply(&mut p, &[1e6]);
        assert!((p[0] + 0.1).abs() < 1e-5);
    }
}
