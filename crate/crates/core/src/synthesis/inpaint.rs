//! Hole filling by iterated 4-neighbor averaging (discrete harmonic fill).

use log::warn;

use crate::error::Result;
use crate::video::{MaskVideo, VideoTensor};

pub const DEFAULT_TOLERANCE: f32 = 1e-4;
const MAX_SWEEPS: usize = 20_000;

/// Removes the masked region of every frame and fills it from the
/// surrounding pixels. Unmasked pixels are returned bit-for-bit.
pub fn inpaint_remove(video: &VideoTensor, mask: &MaskVideo) -> Result<VideoTensor> {
    inpaint_remove_with(video, mask, DEFAULT_TOLERANCE)
}

pub fn inpaint_remove_with(video: &VideoTensor, mask: &MaskVideo, tolerance: f32) -> Result<VideoTensor> {
    video.dims().ensure_same(&mask.dims())?;
    let (h, w) = (video.height(), video.width());
    let n = h * w;
    let mut out = video.data().to_vec();
    for t in 0..video.frames() {
        let holes = mask.frame(t);
        let known = n - mask.frame_count(t);
        if known == n {
            continue;
        }
        let frame = &mut out[t * n * 3..(t + 1) * n * 3];
        if known == 0 {
            warn!("frame {t} is entirely masked; filling with the border mean");
            let mut mean = [0f64; 3];
            let mut count = 0;
            for y in 0..h {
                for x in 0..w {
                    if y == 0 || x == 0 || y == h - 1 || x == w - 1 {
                        for c in 0..3 {
                            mean[c] += frame[(y * w + x) * 3 + c] as f64;
                        }
                        count += 1;
                    }
                }
            }
            for p in frame.chunks_exact_mut(3) {
                for c in 0..3 {
                    p[c] = (mean[c] / count as f64) as f32;
                }
            }
            continue;
        }
        fill_frame(frame, holes, h, w, tolerance);
    }
    VideoTensor::from_vec(video.dims(), out).map(|v| v.with_frame_rate(video.frame_rate()))
}

fn fill_frame(frame: &mut [f32], holes: &[u8], h: usize, w: usize, tolerance: f32) {
    // Start holes at the mean of the known pixels.
    let mut mean = [0f64; 3];
    let mut count = 0usize;
    for (i, &m) in holes.iter().enumerate() {
        if m == 0 {
            for c in 0..3 {
                mean[c] += frame[i * 3 + c] as f64;
            }
            count += 1;
        }
    }
    let hole_idx: Vec<usize> = holes.iter().enumerate().filter(|(_, &m)| m == 1).map(|(i, _)| i).collect();
    for &i in &hole_idx {
        for c in 0..3 {
            frame[i * 3 + c] = (mean[c] / count as f64) as f32;
        }
    }
    for _ in 0..MAX_SWEEPS {
        let mut change = 0f32;
        for &i in &hole_idx {
            let (y, x) = (i / w, i % w);
            let mut acc = [0f32; 3];
            let mut k = 0.0f32;
            let mut add = |j: usize| {
                for c in 0..3 {
                    acc[c] += frame[j * 3 + c];
                }
                k += 1.0;
            };
            if y > 0 {
                add(i - w);
            }
            if y + 1 < h {
                add(i + w);
            }
            if x > 0 {
                add(i - 1);
            }
            if x + 1 < w {
                add(i + 1);
            }
            for c in 0..3 {
                let v = acc[c] / k;
                change = change.max((v - frame[i * 3 + c]).abs());
                frame[i * 3 + c] = v;
            }
        }
        if change < tolerance {
            break;
        }
    }
}
