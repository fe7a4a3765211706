//! Full-reference quality metrics. Each is computed per frame and averaged.

use crate::error::Result;
use crate::video::VideoTensor;

use super::plane::{downsample2, Plane};

/// Per-frame mean squared error over all channels.
pub fn mse_per_frame(a: &VideoTensor, b: &VideoTensor) -> Result<Vec<f64>> {
    a.dims().ensure_same(&b.dims())?;
    Ok((0..a.frames())
        .map(|t| {
            let (fa, fb) = (a.frame(t), b.frame(t));
            fa.iter().zip(fb).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / fa.len() as f64
        })
        .collect())
}

/// PSNR for unit peak; `+inf` when the frames are identical.
pub fn psnr_per_frame(a: &VideoTensor, b: &VideoTensor) -> Result<Vec<f64>> {
    Ok(mse_per_frame(a, b)?
        .into_iter()
        .map(|m| if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
        .collect())
}

pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    Ok(mean(&psnr_per_frame(a, b)?))
}

pub fn rmse_per_frame(a: &VideoTensor, b: &VideoTensor) -> Result<Vec<f64>> {
    Ok(mse_per_frame(a, b)?.into_iter().map(f64::sqrt).collect())
}

pub fn rmse(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    Ok(mean(&rmse_per_frame(a, b)?))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

const SSIM_RADIUS: usize = 3;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut w = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - SSIM_RADIUS as f64;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM of two luma planes over every full 7x7 window.
pub fn ssim_plane(a: &Plane, b: &Plane) -> f64 {
    let w = gaussian_window();
    let k = 2 * SSIM_RADIUS + 1;
    let (h, wd) = (a.height, a.width);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - k {
        for x in 0..=wd - k {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dy, wy) in w.iter().enumerate() {
                for (dx, wx) in w.iter().enumerate() {
                    let g = wy * wx;
                    let va = a.get(y + dy, x + dx) as f64;
                    let vb = b.get(y + dy, x + dx) as f64;
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn ssim_per_frame(a: &VideoTensor, b: &VideoTensor) -> Result<Vec<f64>> {
    a.dims().ensure_same(&b.dims())?;
    Ok((0..a.frames())
        .map(|t| ssim_plane(&Plane::luma(a, t), &Plane::luma(b, t)))
        .collect())
}

pub fn ssim(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    Ok(mean(&ssim_per_frame(a, b)?))
}

const PERCEPTUAL_SCALES: usize = 3;
const LCN_RADIUS: usize = 1;
const LCN_FLOOR: f32 = 0.1;

/// `(x - local mean) / (local std + floor)` over a 3x3 neighbourhood.
fn contrast_normalize(p: &Plane) -> Plane {
    let mean = p.box_mean(LCN_RADIUS);
    let sq = Plane {
        data: p.data.iter().map(|v| v * v).collect(),
        ..*p
    }
    .box_mean(LCN_RADIUS);
    let data = p
        .data
        .iter()
        .zip(&mean.data)
        .zip(&sq.data)
        .map(|((v, m), s)| (v - m) / ((s - m * m).max(0.0).sqrt() + LCN_FLOOR))
        .collect();
    Plane { data, ..*p }
}

fn mean_abs_diff(a: &Plane, b: &Plane) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.data.len() as f64
}

/// Multi-scale distance between contrast-normalized channel planes, plus the
/// plain intensity difference at each scale.
pub fn perceptual_frame(a: &VideoTensor, b: &VideoTensor, t: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..3 {
        let mut pa = Plane::channel(a, t, c);
        let mut pb = Plane::channel(b, t, c);
        for s in 0..PERCEPTUAL_SCALES {
            if s > 0 {
                if pa.height < 2 || pa.width < 2 {
                    break;
                }
                pa = downsample2(&pa);
                pb = downsample2(&pb);
            }
            let structure = mean_abs_diff(&contrast_normalize(&pa), &contrast_normalize(&pb));
            total += 0.5 * (structure + mean_abs_diff(&pa, &pb));
        }
    }
    total / (3 * PERCEPTUAL_SCALES) as f64
}

pub fn perceptual_per_frame(a: &VideoTensor, b: &VideoTensor) -> Result<Vec<f64>> {
    a.dims().ensure_same(&b.dims())?;
    Ok((0..a.frames()).map(|t| perceptual_frame(a, b, t)).collect())
}

pub fn perceptual_dist(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    Ok(mean(&perceptual_per_frame(a, b)?))
}
