//! Coarse-to-fine iterative Lucas-Kanade dense optical flow.

use log::warn;

use super::plane::{downsample2, Plane};
use crate::error::{Error, Result};
use crate::video::{MaskVideo, VideoTensor};

pub const LEVELS: usize = 3;
pub const WINDOW_RADIUS: usize = 2;
pub const ITERATIONS: usize = 3;
const REGULARIZER: f32 = 1e-3;
/// Largest per-iteration flow update in pixels of the current level.
const MAX_UPDATE: f32 = 1.0;

/// Dense flow for each consecutive frame pair, `[T-1, H, W]` of `(dx, dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub pairs: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn pair(&self, i: usize) -> &[[f32; 2]] {
        let n = self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }
}

fn upsample_flow(flow: &[[f32; 2]], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<[f32; 2]> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        for x in 0..out_w {
            let v = flow[(y / 2).min(h - 1) * w + (x / 2).min(w - 1)];
            out.push([2.0 * v[0], 2.0 * v[1]]);
        }
    }
    out
}

/// Component-wise 3x3 median with replicated borders.
fn median3(flow: &[[f32; 2]], h: usize, w: usize) -> Vec<[f32; 2]> {
    let mut out = Vec::with_capacity(flow.len());
    let mut buf = [[0f32; 9]; 2];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                    let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let f = flow[yy * w + xx];
                    buf[0][k] = f[0];
                    buf[1][k] = f[1];
                    k += 1;
                }
            }
            buf[0].sort_by(f32::total_cmp);
            buf[1].sort_by(f32::total_cmp);
            out.push([buf[0][4], buf[1][4]]);
        }
    }
    out
}

fn refine(a: &Plane, b: &Plane, flow: &mut [[f32; 2]]) {
    let (h, w) = (a.height, a.width);
    let r = WINDOW_RADIUS as isize;
    for _ in 0..ITERATIONS {
        let mut warped = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let f = flow[y * w + x];
                warped.push(b.bilinear(y as f32 + f[1], x as f32 + f[0]));
            }
        }
        let warped = Plane::new(h, w, warped);
        let mut gx = Vec::with_capacity(h * w);
        let mut gy = Vec::with_capacity(h * w);
        let mut gt = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let avg = |yy, xx| 0.5 * (a.clamped(yy, xx) + warped.clamped(yy, xx));
                gx.push(0.5 * (avg(y, x + 1) - avg(y, x - 1)));
                gy.push(0.5 * (avg(y + 1, x) - avg(y - 1, x)));
                gt.push(warped.clamped(y, x) - a.clamped(y, x));
            }
        }
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                        let i = yy as usize * w + xx as usize;
                        sxx += gx[i] * gx[i];
                        sxy += gx[i] * gy[i];
                        syy += gy[i] * gy[i];
                        sxt += gx[i] * gt[i];
                        syt += gy[i] * gt[i];
                    }
                }
                let (a11, a22) = (sxx + REGULARIZER, syy + REGULARIZER);
                let det = a11 * a22 - sxy * sxy;
                let du = (-(a22 * sxt - sxy * syt) / det).clamp(-MAX_UPDATE, MAX_UPDATE);
                let dv = (-(a11 * syt - sxy * sxt) / det).clamp(-MAX_UPDATE, MAX_UPDATE);
                let f = &mut flow[y as usize * w + x as usize];
                f[0] += du;
                f[1] += dv;
            }
        }
    }
}

/// Flow from luma plane `a` to `b`: `b(y + dy, x + dx) ~ a(y, x)`. Each plane
/// is standardized first, so global brightness and contrast changes do not
/// register as motion.
pub fn estimate_flow(a: &Plane, b: &Plane) -> Vec<[f32; 2]> {
    let mut pa = vec![a.standardized()];
    let mut pb = vec![b.standardized()];
    for _ in 1..LEVELS {
        let (la, lb) = (pa.last().expect("nonempty"), pb.last().expect("nonempty"));
        if la.height < 2 * (2 * WINDOW_RADIUS + 1) || la.width < 2 * (2 * WINDOW_RADIUS + 1) {
            break;
        }
        let (na, nb) = (downsample2(la), downsample2(lb));
        pa.push(na);
        pb.push(nb);
    }
    let top = pa.len() - 1;
    let mut flow = vec![[0.0f32; 2]; pa[top].height * pa[top].width];
    for level in (0..=top).rev() {
        if level < top {
            let (ch, cw) = (pa[level + 1].height, pa[level + 1].width);
            flow = upsample_flow(&flow, ch, cw, pa[level].height, pa[level].width);
        }
        refine(&pa[level], &pb[level], &mut flow);
        flow = median3(&flow, pa[level].height, pa[level].width);
    }
    flow
}

pub fn estimate_video_flow(v: &VideoTensor) -> FlowField {
    let mut data = Vec::with_capacity(v.frames().saturating_sub(1) * v.height() * v.width());
    for t in 1..v.frames() {
        data.extend(estimate_flow(&Plane::luma(v, t - 1), &Plane::luma(v, t)));
    }
    FlowField {
        pairs: v.frames().saturating_sub(1),
        height: v.height(),
        width: v.width(),
        data,
    }
}

/// Mean endpoint error between the flows of `out` and `reference` per frame
/// pair, restricted to `region` at the first frame of each pair when given.
pub fn motion_preservation_per_pair(
    out: &VideoTensor,
    reference: &VideoTensor,
    region: Option<&MaskVideo>,
) -> Result<Vec<f64>> {
    out.dims().ensure_same(&reference.dims())?;
    if let Some(r) = region {
        out.dims().ensure_same(&r.dims())?;
    }
    if out.frames() < 2 {
        return Err(Error::Metric("motion preservation needs at least two frames".into()));
    }
    let fo = estimate_video_flow(out);
    let fr = estimate_video_flow(reference);
    let mut per_pair = Vec::new();
    for i in 0..fo.pairs {
        let mask = region.map(|r| r.frame(i));
        if let Some(m) = mask {
            if m.iter().all(|&v| v == 0) {
                warn!("region empty on frame {i}; skipping pair {i}->{}", i + 1);
                continue;
            }
        }
        let (mut sum, mut n) = (0.0, 0usize);
        for (k, (a, b)) in fo.pair(i).iter().zip(fr.pair(i)).enumerate() {
            if mask.is_some_and(|m| m[k] == 0) {
                continue;
            }
            sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() as f64;
            n += 1;
        }
        per_pair.push(sum / n as f64);
    }
    if per_pair.is_empty() {
        return Err(Error::Metric("region is empty on every frame pair".into()));
    }
    Ok(per_pair)
}

pub fn motion_preservation(out: &VideoTensor, reference: &VideoTensor, region: Option<&MaskVideo>) -> Result<f64> {
    Ok(super::paired::mean(&motion_preservation_per_pair(out, reference, region)?))
}
