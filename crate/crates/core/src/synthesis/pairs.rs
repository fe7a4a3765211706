//! LUT-relit evaluation pairs and per-frame flicker clips.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inpaint::inpaint_remove;
use super::lut::{apply_luts_masked, Lut3d};
use super::scene::SceneSpec;
use crate::error::Result;
use crate::video::{pseudo_alpha, AlphaVideo, MaskVideo, VideoTensor};

/// Which direction of the dual-path scheme a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathTag {
    /// Real foreground over a synthetic background, synthetic target, binary mask.
    RealToSynth,
    /// Synthetic foreground over a real background, real target, soft alpha.
    SynthToReal,
}

impl PathTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathTag::RealToSynth => "real_to_synth",
            PathTag::SynthToReal => "synth_to_real",
        }
    }
}

/// Random LUT draw parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LutConfig {
    pub size: usize,
    pub amplitude: f32,
}

impl Default for LutConfig {
    fn default() -> Self {
        Self {
            size: 5,
            amplitude: 0.15,
        }
    }
}

impl LutConfig {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Lut3d> {
        Lut3d::perturbed_identity(self.size, self.amplitude, rng)
    }
}

/// Feather radius used for the alpha stream of generated samples.
pub const DEFAULT_FEATHER: f32 = 2.0;

/// An input/target pair with its mattes and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub input_composite: VideoTensor,
    pub target: VideoTensor,
    /// Background conditioning for the harmonizer.
    pub background: VideoTensor,
    pub mask: MaskVideo,
    pub alpha: AlphaVideo,
    pub path_tag: PathTag,
    pub seed: u64,
    pub scenes: Vec<SceneSpec>,
    pub luts: Vec<Lut3d>,
}

fn lut_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x0107_A11C_E5EE_D5EE)
}

/// Relights the masked foreground with one random LUT shared by all frames.
///
/// The target is the untouched video; the background conditioning is the
/// video with its foreground inpainted away, as for synthetic-to-real
/// training samples.
pub fn make_single_lut_pair(video: &VideoTensor, mask: &MaskVideo, seed: u64) -> Result<PairedSample> {
    make_single_lut_pair_with(video, mask, seed, LutConfig::default(), DEFAULT_FEATHER)
}

pub fn make_single_lut_pair_with(
    video: &VideoTensor,
    mask: &MaskVideo,
    seed: u64,
    lut: LutConfig,
    feather: f32,
) -> Result<PairedSample> {
    video.dims().ensure_same(&mask.dims())?;
    let mut rng = lut_rng(seed);
    let drawn = lut.draw(&mut rng)?;
    let luts = vec![drawn.clone(); video.frames()];
    let input = apply_luts_masked(video, mask, &luts)?;
    Ok(PairedSample {
        input_composite: input,
        target: video.clone(),
        background: inpaint_remove(video, mask)?,
        mask: mask.clone(),
        alpha: pseudo_alpha(mask, feather)?,
        path_tag: PathTag::SynthToReal,
        seed,
        scenes: Vec::new(),
        luts: vec![drawn],
    })
}

/// Draws an independent LUT per frame and applies it to the foreground only.
pub fn make_flicker_video(video: &VideoTensor, mask: &MaskVideo, seed: u64) -> Result<VideoTensor> {
    make_flicker_video_with(video, mask, seed, LutConfig::default()).map(|(v, _)| v)
}

pub fn make_flicker_video_with(
    video: &VideoTensor,
    mask: &MaskVideo,
    seed: u64,
    lut: LutConfig,
) -> Result<(VideoTensor, Vec<Lut3d>)> {
    video.dims().ensure_same(&mask.dims())?;
    let mut rng = lut_rng(seed);
    let luts = (0..video.frames()).map(|_| lut.draw(&mut rng)).collect::<Result<Vec<_>>>()?;
    let out = apply_luts_masked(video, mask, &luts)?;
    Ok((out, luts))
}
