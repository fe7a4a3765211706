//! The two concrete diffusion models (lighting deflicker and dual-path
//! harmonizer), their training loop, and a classical deflicker baseline.

pub mod deflicker;
pub mod harmonizer;
pub mod training;

use serde::{Deserialize, Serialize};

use crate::diffusion::{sample, Conditioning, DenoiserNet, LatentShape, LatentVideo, SampleOptions};
use crate::error::Result;
use crate::multidiffusion::{OverlapWeighting, WindowedPredictor, DEFAULT_WINDOW};

pub use deflicker::{build_deflicker_pair, classical_deflicker, deflicker, DeflickerModel, DeflickerPair};
pub use harmonizer::{
    build_harmonization_batch, harmonize, path_for, HarmonizationDataset, HarmonizerModel, MaskCondition, PathSample,
};
pub use training::{lr_scale, run_training, MaskPolicy, TrainRecipe};

/// Sampling and temporal-window settings used at inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceOptions {
    pub sample: SampleOptions,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Defaults to half the window.
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub weighting: OverlapWeighting,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl InferenceOptions {
    pub fn deterministic(seed: u64) -> Self {
        Self {
            sample: SampleOptions::deterministic(seed),
            window: DEFAULT_WINDOW,
            stride: None,
            weighting: OverlapWeighting::Uniform,
        }
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or((self.window / 2).max(1))
    }
}

/// Conditional sampling, fused over temporal windows when the clip is longer
/// than the window.
pub fn run_inference(
    net: &DenoiserNet<f32>,
    cond: &Conditioning,
    shape: LatentShape,
    opts: &InferenceOptions,
) -> Result<LatentVideo> {
    if shape.frames <= opts.window {
        return sample(net, cond, shape, &opts.sample);
    }
    let fused = WindowedPredictor::new(net, shape.frames, opts.window, opts.stride(), opts.weighting)?;
    sample(&fused, cond, shape, &opts.sample)
}
