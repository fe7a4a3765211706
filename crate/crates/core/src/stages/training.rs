use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::train::train_step_with_draws;
use crate::diffusion::{Adam, AdamConfig, DenoiserNet, NoiseDraw, TrainExample};
use crate::error::{Error, Result};

/// How the harmonizer's mask channel is formed per path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Binary masks for real-to-synthetic samples, feathered alphas for
    /// synthetic-to-real samples.
    #[default]
    Asymmetric,
    /// Binary masks on both paths.
    BinaryOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecipe {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of synthetic-to-real samples per batch.
    #[serde(default = "default_mix")]
    pub path_mix: f64,
    #[serde(default)]
    pub mask_policy: MaskPolicy,
    /// Linear warmup steps.
    #[serde(default)]
    pub warmup: usize,
    /// Learning rate at the last step relative to the peak (cosine decay).
    #[serde(default = "default_final_lr")]
    pub final_lr_fraction: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_mix() -> f64 {
    0.5
}

fn default_final_lr() -> f64 {
    1.0
}

fn default_clip() -> Option<f64> {
    Some(1.0)
}

impl Default for TrainRecipe {
    fn default() -> Self {
        Self {
            iterations: 1200,
            batch_size: 2,
            learning_rate: 1e-3,
            path_mix: default_mix(),
            mask_policy: MaskPolicy::Asymmetric,
            warmup: 0,
            final_lr_fraction: default_final_lr(),
            clip_norm: default_clip(),
            seed: 0,
        }
    }
}

impl TrainRecipe {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.path_mix) {
            return Err(Error::Value(format!("path_mix {} outside [0, 1]", self.path_mix)));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 {
            return Err(Error::Value("batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Learning-rate multiplier at `step`: linear warmup then cosine decay to
/// `final_lr_fraction`.
pub fn lr_scale(recipe: &TrainRecipe, step: usize) -> f64 {
    if step < recipe.warmup {
        return (step + 1) as f64 / recipe.warmup as f64;
    }
    let span = recipe.iterations.saturating_sub(recipe.warmup).max(1) as f64;
    let progress = ((step - recipe.warmup) as f64 / span).min(1.0);
    let f = recipe.final_lr_fraction;
    f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Runs `recipe.iterations` optimizer steps. `batch` builds the examples of
/// one step from the step index and the shared training RNG; `on_step`
/// receives each step's loss. Returns the loss curve.
pub fn run_training(
    net: &mut DenoiserNet<f32>,
    recipe: &TrainRecipe,
    mut batch: impl FnMut(usize, &mut ChaCha8Rng) -> Result<Vec<TrainExample>>,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    recipe.validate()?;
    let mut opt = Adam::new(
        AdamConfig {
            clip_norm: recipe.clip_norm,
            ..AdamConfig::new(recipe.learning_rate)
        },
        net.param_count(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut losses = Vec::with_capacity(recipe.iterations);
    for step in 0..recipe.iterations {
        let examples = batch(step, &mut rng)?;
        let draws: Vec<NoiseDraw> = examples
            .iter()
            .map(|ex| NoiseDraw::sample(net.schedule(), ex.target.data().len(), &mut rng))
            .collect();
        let loss = train_step_with_draws(net, &examples, &draws, &mut opt, lr_scale(recipe, step))?;
        on_step(step, loss);
        losses.push(loss);
    }
    Ok(losses)
}
