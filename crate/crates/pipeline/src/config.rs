use std::path::Path;

use anyhow::{Context, Result};
use harmovid_core::diffusion::{NetConfig, NoiseSchedule, DEFAULT_PATCH};
use harmovid_core::metrics::MetricConfig;
use harmovid_core::stages::{InferenceOptions, TrainRecipe};
use harmovid_core::synthesis::{derive_seed, DatasetConfig, LutConfig};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "HARMOVID_SEED";

/// Everything a pipeline run depends on. Sub-seeds are derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default)]
    pub schedule: NoiseSchedule,
    pub net: NetConfig,
    pub deflicker: TrainRecipe,
    pub harmonizer: TrainRecipe,
    pub inference: InferenceOptions,
    #[serde(default)]
    pub metrics: MetricConfig,
    /// Window of the moving-average deflicker baseline.
    #[serde(default = "default_classical_window")]
    pub classical_window: usize,
}

fn default_patch() -> usize {
    DEFAULT_PATCH
}

fn default_classical_window() -> usize {
    5
}

mod stream {
    pub const DATA: u64 = 101;
    pub const DEFLICKER_INIT: u64 = 102;
    pub const DEFLICKER_TRAIN: u64 = 103;
    pub const HARMONIZER_INIT: u64 = 104;
    pub const HARMONIZER_TRAIN: u64 = 105;
    pub const INFERENCE: u64 = 106;
}

impl PipelineConfig {
    /// The toy configuration used by the acceptance suite.
    pub fn toy() -> Self {
        let recipe = TrainRecipe {
            iterations: 1200,
            batch_size: 2,
            learning_rate: 5e-4,
            warmup: 50,
            final_lr_fraction: 0.1,
            ..TrainRecipe::default()
        };
        Self {
            seed: 2024,
            dataset: DatasetConfig {
                single_lut: LutConfig { size: 5, amplitude: 0.35 },
                flicker_lut: LutConfig { size: 5, amplitude: 0.3 },
                ..DatasetConfig::default()
            },
            patch: DEFAULT_PATCH,
            schedule: NoiseSchedule::default(),
            net: NetConfig {
                width: 64,
                heads: 4,
                blocks: 4,
                ..NetConfig::default()
            },
            deflicker: recipe.clone(),
            harmonizer: recipe,
            inference: InferenceOptions::deterministic(0),
            metrics: MetricConfig::default(),
            classical_window: default_classical_window(),
        }
        .resolved()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str::<Self>(text)?.resolved())
    }

    /// Reads a config file, applying the seed override from the environment.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed.trim().parse().with_context(|| format!("{SEED_ENV}={seed:?} is not a u64"))?;
        }
        Ok((cfg.resolved(), text))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolved()
    }

    /// Overwrites every component seed with one derived from `seed`.
    pub fn resolved(mut self) -> Self {
        self.dataset.seed = derive_seed(self.seed, stream::DATA, 0);
        self.deflicker.seed = derive_seed(self.seed, stream::DEFLICKER_TRAIN, 0);
        self.harmonizer.seed = derive_seed(self.seed, stream::HARMONIZER_TRAIN, 0);
        self.inference.sample.seed = derive_seed(self.seed, stream::INFERENCE, 0);
        self
    }

    pub fn deflicker_init_seed(&self) -> u64 {
        derive_seed(self.seed, stream::DEFLICKER_INIT, 0)
    }

    pub fn harmonizer_init_seed(&self) -> u64 {
        derive_seed(self.seed, stream::HARMONIZER_INIT, 0)
    }
}
