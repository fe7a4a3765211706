//! Lighting deflicker model and a temporal low-pass baseline.

use super::{run_inference, InferenceOptions};
use crate::diffusion::{
    decode, encode_matte, encode_with, Conditioning, ConditioningLayout, DenoiserNet, LatentShape, NetConfig,
    NoiseSchedule, TrainExample,
};
use crate::error::{Error, Result};
use crate::video::{composite, MaskVideo, VideoTensor};

/// Denoiser over `[noisy target, flickering input, mask]`.
#[derive(Clone, Debug)]
pub struct DeflickerModel {
    pub net: DenoiserNet<f32>,
    pub patch: usize,
}

impl DeflickerModel {
    pub fn new(config: NetConfig, schedule: NoiseSchedule, patch: usize, seed: u64) -> Result<Self> {
        let layout = ConditioningLayout::deflicker(3 * patch * patch);
        Self::from_net(DenoiserNet::new(config, layout, schedule, seed)?, patch)
    }

    pub fn from_net(net: DenoiserNet<f32>, patch: usize) -> Result<Self> {
        let expected = ConditioningLayout::deflicker(3 * patch * patch);
        if net.layout() != &expected {
            return Err(Error::Layout(format!(
                "deflicker model needs {expected:?}, checkpoint has {:?}",
                net.layout()
            )));
        }
        Ok(Self { net, patch })
    }

    pub fn conditioning(&self, flickering: &VideoTensor, mask: &MaskVideo) -> Result<Conditioning> {
        flickering.dims().ensure_same(&mask.dims())?;
        Ok(Conditioning {
            input: encode_with(flickering, self.patch)?,
            background: None,
            mask: encode_matte(mask, self.patch)?,
        })
    }

    pub fn example(&self, pair: &DeflickerPair) -> Result<TrainExample> {
        pair.example(self.patch)
    }
}

/// A flickering composite and the consistent video it should become.
#[derive(Clone, Debug, PartialEq)]
pub struct DeflickerPair {
    pub input: VideoTensor,
    pub target: VideoTensor,
    pub mask: MaskVideo,
}

impl DeflickerPair {
    pub fn example(&self, patch: usize) -> Result<TrainExample> {
        self.input.dims().ensure_same(&self.mask.dims())?;
        Ok(TrainExample {
            target: encode_with(&self.target, patch)?,
            cond: Conditioning {
                input: encode_with(&self.input, patch)?,
                background: None,
                mask: encode_matte(&self.mask, patch)?,
            },
        })
    }
}

/// Pastes the flickering foreground `synth_fg` onto `real` under `mask`; the
/// target is `real` itself.
pub fn build_deflicker_pair(real: &VideoTensor, synth_fg: &VideoTensor, mask: &MaskVideo) -> Result<DeflickerPair> {
    real.dims().ensure_same(&synth_fg.dims())?;
    Ok(DeflickerPair {
        input: composite(synth_fg, real, mask)?,
        target: real.clone(),
        mask: mask.clone(),
    })
}

pub fn deflicker(
    model: &DeflickerModel,
    flickering: &VideoTensor,
    mask: &MaskVideo,
    opts: &InferenceOptions,
) -> Result<VideoTensor> {
    let cond = model.conditioning(flickering, mask)?;
    let shape = LatentShape::for_video(flickering.dims(), model.patch)?;
    let latent = run_inference(&model.net, &cond, shape, opts)?;
    Ok(decode(&latent)?.with_frame_rate(flickering.frame_rate()))
}

/// Per-pixel temporal moving average over `window` frames (odd, at least 3),
/// applied only where the mask is set and averaging only masked samples.
/// The window is truncated at the clip ends.
pub fn classical_deflicker(video: &VideoTensor, mask: &MaskVideo, window: usize) -> Result<VideoTensor> {
    video.dims().ensure_same(&mask.dims())?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Value(format!("window must be odd and at least 3, got {window}")));
    }
    let r = window / 2;
    let frames = video.frames();
    let n = video.dims().frame_pixels();
    let mut data = video.data().to_vec();
    for t in 0..frames {
        let (lo, hi) = (t.saturating_sub(r), (t + r).min(frames - 1));
        for (k, &m) in mask.frame(t).iter().enumerate() {
            if m == 0 {
                continue;
            }
            let mut acc = [0f64; 3];
            let mut count = 0usize;
            for s in lo..=hi {
                if mask.frame(s)[k] == 0 {
                    continue;
                }
                let px = &video.data()[(s * n + k) * 3..(s * n + k) * 3 + 3];
                for c in 0..3 {
                    acc[c] += px[c] as f64;
                }
                count += 1;
            }
            for c in 0..3 {
                data[(t * n + k) * 3 + c] = (acc[c] / count as f64) as f32;
            }
        }
    }
    Ok(VideoTensor::from_vec(video.dims(), data)?.with_frame_rate(video.frame_rate()))
}
