//! Temporal window fusion for sequences longer than the denoiser's window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    denoise_step, Conditioning, LatentVideo, NoisePredictor, NoiseSchedule, Sampler,
};
use crate::error::{Error, Result};
use crate::video::VideoTensor;

pub const DEFAULT_WINDOW: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapWeighting {
    /// Every window contributes equally to each of its frames.
    #[default]
    Uniform,
    /// Frames near a window's centre count more than its edges.
    Triangular,
}

impl OverlapWeighting {
    fn weight(self, index: usize, len: usize) -> f64 {
        match self {
            OverlapWeighting::Uniform => 1.0,
            OverlapWeighting::Triangular => (index + 1).min(len - index) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub frames: usize,
    pub window: usize,
    pub stride: usize,
    /// Half-open `[start, end)` frame intervals.
    pub windows: Vec<(usize, usize)>,
    /// Number of windows covering each frame.
    pub overlap: Vec<usize>,
}

impl WindowPlan {
    pub fn is_single(&self) -> bool {
        self.windows.len() == 1
    }

    /// Indices `i` of the frame transitions `i -> i + 1` that cross a window
    /// edge, ascending.
    pub fn seam_transitions(&self) -> Vec<usize> {
        let mut seams: Vec<usize> = self
            .windows
            .iter()
            .flat_map(|&(s, e)| [(s > 0).then(|| s - 1), (e < self.frames).then(|| e - 1)])
            .flatten()
            .collect();
        seams.sort_unstable();
        seams.dedup();
        seams
    }
}

/// Greedy strided windows over `frames` with the last window right-aligned.
pub fn plan_windows(frames: usize, window: usize, stride: usize) -> Result<WindowPlan> {
    if frames == 0 || window == 0 || stride == 0 {
        return Err(Error::Window("frames, window and stride must be positive".into()));
    }
    if stride > window {
        return Err(Error::Window(format!("stride {stride} exceeds window {window}")));
    }
    let mut windows = Vec::new();
    if frames <= window {
        windows.push((0, frames));
    } else {
        if stride == window {
            return Err(Error::Window(format!(
                "stride {stride} equal to window leaves no overlap between windows"
            )));
        }
        let mut start = 0;
        loop {
            windows.push((start, start + window));
            if start + window >= frames {
                break;
            }
            start += stride;
            if start + window > frames {
                windows.push((frames - window, frames));
                break;
            }
        }
    }
    let mut overlap = vec![0; frames];
    for &(s, e) in &windows {
        for c in &mut overlap[s..e] {
            *c += 1;
        }
    }
    Ok(WindowPlan {
        frames,
        window,
        stride,
        windows,
        overlap,
    })
}

/// Weighted per-frame average of per-window predictions.
pub fn fuse_predictions(plan: &WindowPlan, preds: &[LatentVideo], weighting: OverlapWeighting) -> Result<LatentVideo> {
    if preds.len() != plan.windows.len() {
        return Err(Error::Window(format!(
            "{} predictions for {} windows",
            preds.len(),
            plan.windows.len()
        )));
    }
    let s0 = preds[0].shape();
    let shape = s0.with_frames(plan.frames);
    let per_frame = s0.tokens_per_frame() * s0.channels;
    let mut acc = vec![0.0; shape.len()];
    let mut weights = vec![0.0; plan.frames];
    for (&(start, end), pred) in plan.windows.iter().zip(preds) {
        pred.shape().ensure_same(&s0.with_frames(end - start))?;
        for (i, chunk) in pred.data().chunks_exact(per_frame).enumerate() {
            let w = weighting.weight(i, end - start);
            weights[start + i] += w;
            for (a, v) in acc[(start + i) * per_frame..(start + i + 1) * per_frame].iter_mut().zip(chunk) {
                *a += w * v;
            }
        }
    }
    for (f, chunk) in acc.chunks_exact_mut(per_frame).enumerate() {
        for v in chunk {
            *v /= weights[f];
        }
    }
    LatentVideo::new(shape, acc)
}

/// Noise predictor that runs `inner` per window and fuses the results.
pub struct WindowedPredictor<'a, P: ?Sized> {
    pub inner: &'a P,
    pub plan: WindowPlan,
    pub weighting: OverlapWeighting,
}

impl<'a, P: NoisePredictor + ?Sized> WindowedPredictor<'a, P> {
    pub fn new(inner: &'a P, frames: usize, window: usize, stride: usize, weighting: OverlapWeighting) -> Result<Self> {
        Ok(Self {
            inner,
            plan: plan_windows(frames, window, stride)?,
            weighting,
        })
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for WindowedPredictor<'_, P> {
    fn schedule(&self) -> &NoiseSchedule {
        self.inner.schedule()
    }

    fn predict(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize) -> Result<LatentVideo> {
        let frames = z_t.shape().frames;
        if frames != self.plan.frames || cond.frames() != frames {
            return Err(Error::Window(format!(
                "plan covers {} frames, latent has {frames}, conditioning {}",
                self.plan.frames,
                cond.frames()
            )));
        }
        if self.plan.is_single() {
            return self.inner.predict(z_t, cond, t);
        }
        let preds = self
            .plan
            .windows
            .iter()
            .map(|&(s, e)| self.inner.predict(&z_t.slice_frames(s, e)?, &cond.slice_frames(s, e)?, t))
            .collect::<Result<Vec<_>>>()?;
        fuse_predictions(&self.plan, &preds, self.weighting)
    }
}

/// One global reverse step driven by window-fused noise predictions.
#[allow(clippy::too_many_arguments)]
pub fn fused_denoise_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    z_t: &LatentVideo,
    cond: &Conditioning,
    t: usize,
    plan: &WindowPlan,
    weighting: OverlapWeighting,
    sampler: Sampler,
    rng: &mut impl Rng,
) -> Result<LatentVideo> {
    let fused = WindowedPredictor {
        inner: predictor,
        plan: plan.clone(),
        weighting,
    };
    denoise_step(&fused, z_t, cond, t, sampler, rng)
}

/// Mean absolute change of each frame transition `i -> i + 1`.
pub fn frame_changes(video: &VideoTensor) -> Vec<f64> {
    (1..video.frames())
        .map(|t| {
            let (a, b) = (video.frame(t - 1), video.frame(t));
            a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
        })
        .collect()
}
