//! Stage-1 sample generation: a "real" lit scene, a jittery synthetic
//! background from a second scene, the per-frame harmonized composite, and
//! the evaluation clips derived from held-out scenes.

use serde::{Deserialize, Serialize};

use super::harmonize::per_frame_harmonize_with;
use super::inpaint::inpaint_remove;
use super::pairs::{make_flicker_video_with, make_single_lut_pair_with, LutConfig, PairedSample, DEFAULT_FEATHER};
use super::scene::{render_scene, SceneSpec};
use crate::error::{Error, Result};
use crate::video::{composite, pseudo_alpha, AlphaVideo, MaskVideo, VideoTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Training scenes.
    pub count: usize,
    /// Held-out scenes used by the evaluation sets.
    pub test_count: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub single_lut: LutConfig,
    #[serde(default)]
    pub flicker_lut: LutConfig,
    /// Per-frame light jitter of synthetic backgrounds.
    #[serde(default = "default_jitter")]
    pub synthetic_light_jitter: f32,
    #[serde(default = "default_blend")]
    pub harmonize_blend: f32,
    #[serde(default = "default_feather")]
    pub feather: f32,
}

fn default_jitter() -> f32 {
    0.25
}

fn default_blend() -> f32 {
    super::harmonize::DEFAULT_BLEND
}

fn default_feather() -> f32 {
    DEFAULT_FEATHER
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 32,
            test_count: 16,
            frames: 16,
            height: 32,
            width: 32,
            seed: 7,
            single_lut: LutConfig::default(),
            flicker_lut: LutConfig::default(),
            synthetic_light_jitter: default_jitter(),
            harmonize_blend: default_blend(),
            feather: default_feather(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Seed stream identifiers for [`derive_seed`].
pub mod stream {
    pub const REAL_SCENE: u64 = 1;
    pub const SYNTHETIC_SCENE: u64 = 2;
    pub const SINGLE_LUT: u64 = 3;
    pub const FLICKER: u64 = 4;
}

/// SplitMix64 mix of a base seed, a stream id and an index.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One scene's worth of Stage-1 material.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOneSample {
    pub index: usize,
    pub split: Split,
    pub real_scene: SceneSpec,
    pub synthetic_scene: SceneSpec,
    /// Physically consistent footage.
    pub real: VideoTensor,
    pub mask: MaskVideo,
    pub alpha: AlphaVideo,
    /// Generated background with per-frame light jitter.
    pub synthetic_bg: VideoTensor,
    /// Real foreground harmonized frame by frame onto the synthetic background.
    pub stage1: VideoTensor,
    /// Real footage with the foreground inpainted away.
    pub inpainted_bg: VideoTensor,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Value("dataset needs at least one training scene".into()));
        }
        if self.frames == 0 || self.feather < 1.0 {
            return Err(Error::Value("frames must be positive and feather at least 1".into()));
        }
        Ok(())
    }

    pub fn split_of(&self, index: usize) -> Split {
        if index < self.count {
            Split::Train
        } else {
            Split::Test
        }
    }

    pub fn total(&self) -> usize {
        self.count + self.test_count
    }

    pub fn real_scene(&self, index: usize) -> SceneSpec {
        SceneSpec::random(
            derive_seed(self.seed, stream::REAL_SCENE, index as u64),
            self.frames,
            self.height,
            self.width,
        )
    }

    pub fn synthetic_scene(&self, index: usize) -> SceneSpec {
        let mut spec = SceneSpec::random(
            derive_seed(self.seed, stream::SYNTHETIC_SCENE, index as u64),
            self.frames,
            self.height,
            self.width,
        );
        spec.light_jitter = self.synthetic_light_jitter;
        spec
    }

    /// Renders scene `index` (training scenes first, then held-out ones).
    pub fn generate(&self, index: usize) -> Result<StageOneSample> {
        self.validate()?;
        let real_scene = self.real_scene(index);
        let synthetic_scene = self.synthetic_scene(index);
        let rendered = render_scene(&real_scene)?;
        let real = rendered.real_video()?;
        let synthetic_bg = render_scene(&synthetic_scene)?.bg;
        let stage1 = per_frame_harmonize_with(&rendered.fg, &synthetic_bg, &rendered.mask, self.harmonize_blend)?;
        let inpainted_bg = inpaint_remove(&real, &rendered.mask)?;
        let alpha = pseudo_alpha(&rendered.mask, self.feather)?;
        Ok(StageOneSample {
            index,
            split: self.split_of(index),
            real_scene,
            synthetic_scene,
            real,
            mask: rendered.mask,
            alpha,
            synthetic_bg,
            stage1,
            inpainted_bg,
        })
    }

    /// Held-out relighting pair with one LUT for the whole clip.
    pub fn single_lut_pair(&self, sample: &StageOneSample) -> Result<PairedSample> {
        let seed = derive_seed(self.seed, stream::SINGLE_LUT, sample.index as u64);
        let mut pair = make_single_lut_pair_with(&sample.real, &sample.mask, seed, self.single_lut, self.feather)?;
        pair.scenes = vec![sample.real_scene.clone()];
        Ok(pair)
    }

    /// Held-out clip with an independent LUT per frame.
    pub fn flicker_clip(&self, sample: &StageOneSample) -> Result<VideoTensor> {
        let seed = derive_seed(self.seed, stream::FLICKER, sample.index as u64);
        make_flicker_video_with(&sample.real, &sample.mask, seed, self.flicker_lut).map(|(v, _)| v)
    }
}

impl StageOneSample {
    /// Real foreground naively pasted on the synthetic background.
    pub fn real_on_synthetic(&self) -> Result<VideoTensor> {
        composite(&self.real, &self.synthetic_bg, &self.mask)
    }
}
