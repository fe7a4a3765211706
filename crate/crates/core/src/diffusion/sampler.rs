//! Forward noising and reverse-process samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::codec::{LatentShape, LatentVideo};
use super::layout::Conditioning;
use super::net::DenoiserNet;
use super::real::Real;
use super::schedule::NoiseSchedule;
use crate::error::{check_dim, Result};

/// Anything that predicts the injected noise of a latent at step `t`.
pub trait NoisePredictor {
    fn schedule(&self) -> &NoiseSchedule;

    fn predict(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize) -> Result<LatentVideo>;
}

impl<F: Real> NoisePredictor for DenoiserNet<F> {
    fn schedule(&self) -> &NoiseSchedule {
        DenoiserNet::schedule(self)
    }

    fn predict(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize) -> Result<LatentVideo> {
        self.predict_epsilon(z_t, cond, t)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Stochastic DDPM update.
    Ancestral,
    /// DDIM update with zero noise.
    #[default]
    Deterministic,
}

pub fn gaussian(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`.
pub fn add_noise(schedule: &NoiseSchedule, z0: &LatentVideo, t: usize, eps: &[f64]) -> Result<LatentVideo> {
    schedule.check(t)?;
    check_dim("noise length", z0.data().len(), eps.len())?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = z0.data().iter().zip(eps).map(|(z, e)| a * z + b * e).collect();
    LatentVideo::new(z0.shape(), data)
}

/// Closed-form clean-latent estimate from a noise estimate.
pub fn predict_x0(schedule: &NoiseSchedule, z_t: &LatentVideo, eps: &LatentVideo, t: usize) -> Result<LatentVideo> {
    schedule.check(t)?;
    z_t.shape().ensure_same(&eps.shape())?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = z_t.data().iter().zip(eps.data()).map(|(z, e)| (z - b * e) / a).collect();
    LatentVideo::new(z_t.shape(), data)
}

/// One reverse update from step `t` to step `prev < t` given the noise
/// estimate. Consecutive ancestral steps reduce to the DDPM posterior.
/// `noise` is only read by the ancestral sampler and only when `prev > 0`.
pub fn step_from_epsilon(
    schedule: &NoiseSchedule,
    z_t: &LatentVideo,
    eps: &LatentVideo,
    t: usize,
    prev: usize,
    sampler: Sampler,
    noise: Option<&[f64]>,
) -> Result<LatentVideo> {
    let x0 = predict_x0(schedule, z_t, eps, t)?;
    let (ab_t, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(prev));
    let sigma = match sampler {
        Sampler::Deterministic => 0.0,
        Sampler::Ancestral => ((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)).max(0.0).sqrt(),
    };
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let sa = ab_prev.sqrt();
    let mut data: Vec<f64> = x0.data().iter().zip(eps.data()).map(|(x, e)| sa * x + dir * e).collect();
    if sigma > 0.0 {
        let noise = noise.expect("ancestral step needs noise");
        check_dim("noise length", data.len(), noise.len())?;
        for (d, n) in data.iter_mut().zip(noise) {
            *d += sigma * n;
        }
    }
    LatentVideo::new(z_t.shape(), data)
}

/// Single reverse step `t -> t - 1` using the predictor's noise estimate.
pub fn denoise_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    z_t: &LatentVideo,
    cond: &Conditioning,
    t: usize,
    sampler: Sampler,
    rng: &mut impl Rng,
) -> Result<LatentVideo> {
    let eps = predictor.predict(z_t, cond, t)?;
    let noise = (sampler == Sampler::Ancestral && t > 1).then(|| gaussian(z_t.data().len(), rng));
    step_from_epsilon(predictor.schedule(), z_t, &eps, t, t - 1, sampler, noise.as_deref())
}

/// Descending timesteps visited by a sampler using `count` of the schedule's
/// steps (all of them when `count` is `None` or too large).
pub fn timesteps(steps: usize, count: Option<usize>) -> Vec<usize> {
    let count = count.unwrap_or(steps).clamp(1, steps);
    (0..count).rev().map(|i| (steps * (i + 1)).div_ceil(count)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleOptions {
    pub sampler: Sampler,
    pub seed: u64,
    /// Number of reverse steps; `None` visits every schedule step.
    #[serde(default)]
    pub steps: Option<usize>,
}

impl SampleOptions {
    pub fn deterministic(seed: u64) -> Self {
        Self {
            sampler: Sampler::Deterministic,
            seed,
            steps: None,
        }
    }
}

/// Runs the reverse chain from seeded pure noise.
pub fn sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    cond: &Conditioning,
    shape: LatentShape,
    opts: &SampleOptions,
) -> Result<LatentVideo> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut z = LatentVideo::new(shape, gaussian(shape.len(), &mut rng))?;
    let ts = timesteps(predictor.schedule().steps(), opts.steps);
    for (i, &t) in ts.iter().enumerate() {
        let prev = ts.get(i + 1).copied().unwrap_or(0);
        let eps = predictor.predict(&z, cond, t)?;
        let noise = (opts.sampler == Sampler::Ancestral && prev > 0).then(|| gaussian(shape.len(), &mut rng));
        z = step_from_epsilon(predictor.schedule(), &z, &eps, t, prev, opts.sampler, noise.as_deref())?;
    }
    Ok(z)
}
