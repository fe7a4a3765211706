//! Reference-free sharpness measured in a band around the mask edge.

use super::plane::Plane;
use crate::error::{Error, Result};
use crate::video::{boundary_band, MaskVideo, VideoTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryScores {
    pub laplacian_var: f64,
    pub tenengrad: f64,
    /// Per-frame values; `None` for frames whose band is empty.
    pub per_frame: Vec<Option<(f64, f64)>>,
}

fn laplacian(p: &Plane, y: isize, x: isize) -> f64 {
    (p.clamped(y - 1, x) + p.clamped(y + 1, x) + p.clamped(y, x - 1) + p.clamped(y, x + 1) - 4.0 * p.clamped(y, x))
        as f64
}

fn sobel_sq(p: &Plane, y: isize, x: isize) -> f64 {
    let v = |dy: isize, dx: isize| p.clamped(y + dy, x + dx) as f64;
    let gx = v(-1, 1) + 2.0 * v(0, 1) + v(1, 1) - v(-1, -1) - 2.0 * v(0, -1) - v(1, -1);
    let gy = v(1, -1) + 2.0 * v(1, 0) + v(1, 1) - v(-1, -1) - 2.0 * v(-1, 0) - v(-1, 1);
    gx * gx + gy * gy
}

/// Laplacian variance and Tenengrad of the luma over the boundary band,
/// averaged over frames whose band is nonempty.
pub fn boundary_quality(v: &VideoTensor, mask: &MaskVideo, inner: usize, outer: usize) -> Result<BoundaryScores> {
    v.dims().ensure_same(&mask.dims())?;
    let band = boundary_band(mask, inner, outer)?;
    let w = v.width();
    let mut per_frame = Vec::with_capacity(v.frames());
    for t in 0..v.frames() {
        let luma = Plane::luma(v, t);
        let (mut lap, mut ten) = (Vec::new(), 0.0);
        for (k, &b) in band.frame(t).iter().enumerate() {
            if b == 1 {
                let (y, x) = ((k / w) as isize, (k % w) as isize);
                lap.push(laplacian(&luma, y, x));
                ten += sobel_sq(&luma, y, x);
            }
        }
        if lap.is_empty() {
            per_frame.push(None);
            continue;
        }
        let n = lap.len() as f64;
        let mean = lap.iter().sum::<f64>() / n;
        let var = lap.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        per_frame.push(Some((var, ten / n)));
    }
    let valid: Vec<(f64, f64)> = per_frame.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Metric("boundary band is empty on every frame".into()));
    }
    let n = valid.len() as f64;
    Ok(BoundaryScores {
        laplacian_var: valid.iter().map(|s| s.0).sum::<f64>() / n,
        tenengrad: valid.iter().map(|s| s.1).sum::<f64>() / n,
        per_frame,
    })
}
