//! Frame-independent color-statistics harmonization.
//!
//! Each frame's foreground is shifted and scaled so its per-channel mean and
//! standard deviation move towards those of the same frame's background.
//! No information is shared between frames, so any frame-to-frame change in
//! background statistics shows up as foreground flicker.

use log::warn;

use crate::error::Result;
use crate::video::{composite, MaskVideo, VideoTensor};

/// Fraction of the way the foreground statistics move towards the background.
pub const DEFAULT_BLEND: f32 = 0.8;

const MIN_STD: f32 = 1e-6;

fn channel_stats<'a>(pixels: impl Iterator<Item = &'a [f32]>) -> Option<([f32; 3], [f32; 3])> {
    let mut sum = [0f64; 3];
    let mut sq = [0f64; 3];
    let mut n = 0usize;
    for p in pixels {
        for c in 0..3 {
            sum[c] += p[c] as f64;
            sq[c] += (p[c] as f64) * (p[c] as f64);
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let mut mean = [0f32; 3];
    let mut std = [0f32; 3];
    for c in 0..3 {
        let m = sum[c] / n as f64;
        mean[c] = m as f32;
        std[c] = (sq[c] / n as f64 - m * m).max(0.0).sqrt() as f32;
    }
    Some((mean, std))
}

/// Per-frame moment-matching harmonization with [`DEFAULT_BLEND`].
pub fn per_frame_harmonize(fg: &VideoTensor, bg: &VideoTensor, mask: &MaskVideo) -> Result<VideoTensor> {
    per_frame_harmonize_with(fg, bg, mask, DEFAULT_BLEND)
}

pub fn per_frame_harmonize_with(fg: &VideoTensor, bg: &VideoTensor, mask: &MaskVideo, blend: f32) -> Result<VideoTensor> {
    fg.dims().ensure_same(&bg.dims())?;
    fg.dims().ensure_same(&mask.dims())?;
    let per_frame = fg.dims().frame_pixels();
    let mut adjusted = Vec::with_capacity(fg.data().len());
    for t in 0..fg.frames() {
        let frame = fg.frame(t);
        let m = mask.frame(t);
        let fg_stats = channel_stats(frame.chunks_exact(3).zip(m).filter(|(_, &k)| k == 1).map(|(p, _)| p));
        let Some((fg_mean, fg_std)) = fg_stats else {
            warn!("frame {t} has an empty mask; passing it through unharmonized");
            adjusted.extend_from_slice(frame);
            continue;
        };
        let (bg_mean, bg_std) = channel_stats(bg.frame(t).chunks_exact(3)).expect("frames are non-empty");
        let mut scale = [1f32; 3];
        for c in 0..3 {
            if fg_std[c] > MIN_STD {
                scale[c] = bg_std[c] / fg_std[c];
            }
        }
        for p in frame.chunks_exact(3) {
            for c in 0..3 {
                let matched = (p[c] - fg_mean[c]) * scale[c] + bg_mean[c];
                adjusted.push(p[c] + blend * (matched - p[c]));
            }
        }
        debug_assert_eq!(adjusted.len(), (t + 1) * per_frame * 3);
    }
    let adjusted = VideoTensor::from_vec_clamped(fg.dims(), adjusted)?;
    composite(&adjusted, bg, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Dims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_shift_example() {
        let dims = Dims::new(1, 8, 8);
        let fg = VideoTensor::filled(dims, 0.8).unwrap();
        let bg = VideoTensor::filled(dims, 0.2).unwrap();
        let mask = MaskVideo::from_fn(dims, |_, y, _| y < 4).unwrap();
        let out = per_frame_harmonize(&fg, &bg, &mask).unwrap();
        assert!((out.get(0, 1, 1, 0) - 0.32).abs() < 1e-6);
        assert_eq!(out.get(0, 6, 1, 0), 0.2);
    }

    #[test]
    fn matching_statistics_is_fixed_point() {
        let dims = Dims::new(1, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bg = VideoTensor::from_fn(dims, |_, _, _, _| rng.gen_range(0.2..0.8)).unwrap();
        let fg = bg.clone();
        let all = MaskVideo::filled(dims, true).unwrap();
        let out = per_frame_harmonize(&fg, &bg, &all).unwrap();
        for (a, b) in out.data().iter().zip(fg.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_frames_identical_outputs_and_background_untouched() {
        let dims = Dims::new(2, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f0: Vec<f32> = (0..192).map(|_| rng.gen()).collect();
        let b0: Vec<f32> = (0..192).map(|_| rng.gen()).collect();
        let fg = VideoTensor::from_vec(dims, [f0.clone(), f0].concat()).unwrap();
        let bg = VideoTensor::from_vec(dims, [b0.clone(), b0].concat()).unwrap();
        let mask = MaskVideo::from_fn(dims, |_, y, x| (2..6).contains(&y) && (2..6).contains(&x)).unwrap();
        let out = per_frame_harmonize(&fg, &bg, &mask).unwrap();
        assert_eq!(out.frame(0), out.frame(1));
        for t in 0..2 {
            for y in 0..8 {
                for x in 0..8 {
                    if !mask.get(t, y, x) {
                        assert_eq!(out.pixel(t, y, x), bg.pixel(t, y, x));
                    }
                }
            }
        }
    }

    #[test]
    fn empty_mask_frame_passes_through() {
        let dims = Dims::new(1, 8, 8);
        let fg = VideoTensor::filled(dims, 0.7).unwrap();
        let bg = VideoTensor::filled(dims, 0.1).unwrap();
        let none = MaskVideo::filled(dims, false).unwrap();
        assert_eq!(per_frame_harmonize(&fg, &bg, &none).unwrap(), bg);
    }
}
