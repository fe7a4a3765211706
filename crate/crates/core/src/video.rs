//! Video, mask and alpha containers plus the compositing and morphology
//! primitives the rest of the crate is built on.
//!
//! All pixel data is linear-light. Videos are stored frame-major as
//! `[T, H, W, 3]`, masks and alphas as `[T, H, W]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Smallest allowed frame height or width.
pub const MIN_SIDE: usize = 8;

/// Values below this magnitude are flushed to zero on construction so the
/// latent codec's affine map stays exactly invertible in `f64`.
const FLUSH_BELOW: f32 = 1.0 / (1u64 << 30) as f32;

/// Frame count and spatial size shared by a video and its masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    pub fn frame_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn pixels(&self) -> usize {
        self.frames * self.frame_pixels()
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Shape("video needs at least one frame".into()));
        }
        if self.height < MIN_SIDE || self.width < MIN_SIDE {
            return Err(Error::Shape(format!(
                "frame size {}x{} is below the minimum {MIN_SIDE}x{MIN_SIDE}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Errors with the first axis on which `other` differs.
    pub fn ensure_same(&self, other: &Dims) -> Result<()> {
        check_dim("frames", self.frames, other.frames)?;
        check_dim("height", self.height, other.height)?;
        check_dim("width", self.width, other.width)
    }

    pub fn with_frames(&self, frames: usize) -> Self {
        Self { frames, ..*self }
    }
}

/// An RGB video with linear-light values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor {
    dims: Dims,
    data: Vec<f32>,
    frame_rate: f32,
}

impl VideoTensor {
    pub const CHANNELS: usize = 3;
    pub const DEFAULT_FRAME_RATE: f32 = 24.0;

    /// Builds a video from raw `[T, H, W, 3]` data, rejecting non-finite or
    /// out-of-range values.
    pub fn from_vec(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        check_dim("data length", dims.pixels() * Self::CHANNELS, data.len())?;
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Value(format!("video value {bad} outside [0, 1]")));
        }
        Ok(Self::new_unchecked(dims, data))
    }

    /// Like [`VideoTensor::from_vec`] but clamps into `[0, 1]`. Non-finite
    /// values are still rejected.
    pub fn from_vec_clamped(dims: Dims, mut data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        check_dim("data length", dims.pixels() * Self::CHANNELS, data.len())?;
        for v in data.iter_mut() {
            if !v.is_finite() {
                return Err(Error::Value("non-finite video value".into()));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self::new_unchecked(dims, data))
    }

    /// Evaluates `f(t, y, x, c)` at every sample, clamping the result.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.pixels() * Self::CHANNELS);
        for t in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    for c in 0..Self::CHANNELS {
                        data.push(f(t, y, x, c));
                    }
                }
            }
        }
        Self::from_vec_clamped(dims, data)
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Self::from_vec(dims, vec![value; dims.pixels() * Self::CHANNELS])
    }

    fn new_unchecked(dims: Dims, mut data: Vec<f32>) -> Self {
        for v in data.iter_mut() {
            if *v < FLUSH_BELOW {
                *v = 0.0;
            }
        }
        Self {
            dims,
            data,
            frame_rate: Self::DEFAULT_FRAME_RATE,
        }
    }

    pub fn with_frame_rate(mut self, frame_rate: f32) -> Self {
        self.frame_rate = frame_rate;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims.frames
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize) -> usize {
        ((t * self.dims.height + y) * self.dims.width + x) * Self::CHANNELS
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(t, y, x) + c]
    }

    #[inline]
    pub fn pixel(&self, t: usize, y: usize, x: usize) -> [f32; 3] {
        let i = self.index(t, y, x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.dims.frame_pixels() * Self::CHANNELS;
        &self.data[t * n..(t + 1) * n]
    }

    /// Frames `[start, end)` as a new video.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.dims.frames {
            return Err(Error::Shape(format!(
                "frame range {start}..{end} invalid for {} frames",
                self.dims.frames
            )));
        }
        let n = self.dims.frame_pixels() * Self::CHANNELS;
        Ok(Self {
            dims: self.dims.with_frames(end - start),
            data: self.data[start * n..end * n].to_vec(),
            frame_rate: self.frame_rate,
        })
    }

    /// Rec. 709 luma of one frame.
    pub fn luma_frame(&self, t: usize) -> Vec<f32> {
        self.frame(t)
            .chunks_exact(3)
            .map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
            .collect()
    }

    /// Applies `f` to every RGB pixel, clamping the output.
    pub fn map_pixels(&self, mut f: impl FnMut(usize, [f32; 3]) -> [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, p) in self.data.chunks_exact(3).enumerate() {
            let t = i / self.dims.frame_pixels();
            data.extend_from_slice(&f(t, [p[0], p[1], p[2]]));
        }
        Ok(Self::from_vec_clamped(self.dims, data)?.with_frame_rate(self.frame_rate))
    }
}

/// Per-pixel foreground weight, either binary or soft.
pub trait Matte {
    fn dims(&self) -> Dims;
    /// Weight of the pixel at flat index `t * H * W + y * W + x`.
    fn weight(&self, pixel: usize) -> f32;
}

/// A strictly binary foreground mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskVideo {
    dims: Dims,
    data: Vec<u8>,
}

impl MaskVideo {
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.pixels());
        for t in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    data.push(f(t, y, x) as u8);
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Builds a mask from 0/1 values; anything else is an error.
    pub fn from_values(dims: Dims, values: &[f32]) -> Result<Self> {
        dims.validate()?;
        check_dim("data length", dims.pixels(), values.len())?;
        let mut data = Vec::with_capacity(values.len());
        for &v in values {
            if v == 0.0 {
                data.push(0);
            } else if v == 1.0 {
                data.push(1);
            } else {
                return Err(Error::Value(format!("mask value {v} is not binary")));
            }
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: Dims, value: bool) -> Result<Self> {
        Self::from_fn(dims, |_, _, _| value)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.data[(t * self.dims.height + y) * self.dims.width + x] != 0
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.dims.frame_pixels();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn frame_count(&self, t: usize) -> usize {
        self.frame(t).iter().map(|&v| v as usize).sum()
    }

    pub fn is_frame_empty(&self, t: usize) -> bool {
        self.frame_count(t) == 0
    }

    pub fn not(&self) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.dims.ensure_same(&other.dims)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect(),
        })
    }

    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.dims.frames {
            return Err(Error::Shape(format!("frame range {start}..{end} invalid")));
        }
        let n = self.dims.frame_pixels();
        Ok(Self {
            dims: self.dims.with_frames(end - start),
            data: self.data[start * n..end * n].to_vec(),
        })
    }

    pub fn to_alpha(&self) -> AlphaVideo {
        AlphaVideo {
            dims: self.dims,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

impl Matte for MaskVideo {
    fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn weight(&self, pixel: usize) -> f32 {
        self.data[pixel] as f32
    }
}

/// A soft foreground matte with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaVideo {
    dims: Dims,
    data: Vec<f32>,
}

impl AlphaVideo {
    pub fn from_vec(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        check_dim("data length", dims.pixels(), data.len())?;
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Value(format!("alpha value {bad} outside [0, 1]")));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> f32 {
        self.data[(t * self.dims.height + y) * self.dims.width + x]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.dims.frame_pixels();
        &self.data[t * n..(t + 1) * n]
    }

    /// True when every value is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Pixels with alpha `>= 0.5` become foreground.
    pub fn threshold(&self) -> MaskVideo {
        MaskVideo {
            dims: self.dims,
            data: self.data.iter().map(|&v| (v >= 0.5) as u8).collect(),
        }
    }

    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.dims.frames {
            return Err(Error::Shape(format!("frame range {start}..{end} invalid")));
        }
        let n = self.dims.frame_pixels();
        Ok(Self {
            dims: self.dims.with_frames(end - start),
            data: self.data[start * n..end * n].to_vec(),
        })
    }
}

impl Matte for AlphaVideo {
    fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn weight(&self, pixel: usize) -> f32 {
        self.data[pixel]
    }
}

/// `mask * fg + (1 - mask) * bg` per pixel and channel.
///
/// Pixels with weight exactly 0 or 1 are copied verbatim from `bg` or `fg`.
pub fn composite<M: Matte + ?Sized>(fg: &VideoTensor, bg: &VideoTensor, mask: &M) -> Result<VideoTensor> {
    fg.dims.ensure_same(&bg.dims)?;
    fg.dims.ensure_same(&mask.dims())?;
    let mut data = Vec::with_capacity(fg.data.len());
    for (i, (f, b)) in fg.data.chunks_exact(3).zip(bg.data.chunks_exact(3)).enumerate() {
        let m = mask.weight(i);
        if m >= 1.0 {
            data.extend_from_slice(f);
        } else if m <= 0.0 {
            data.extend_from_slice(b);
        } else {
            for c in 0..3 {
                data.push((b[c] + m * (f[c] - b[c])).clamp(0.0, 1.0));
            }
        }
    }
    Ok(VideoTensor::new_unchecked(fg.dims, data).with_frame_rate(fg.frame_rate))
}

/// Sliding-window AND (erode) or OR (dilate) along one axis of a frame.
fn morph_pass(src: &[u8], dst: &mut [u8], h: usize, w: usize, radius: usize, horizontal: bool, erode: bool, outside: u8) {
    let (outer, inner) = if horizontal { (h, w) } else { (w, h) };
    for o in 0..outer {
        for i in 0..inner {
            let lo = i as isize - radius as isize;
            let hi = i as isize + radius as isize;
            let mut acc = erode as u8;
            for j in lo..=hi {
                let v = if j < 0 || j >= inner as isize {
                    outside
                } else {
                    let j = j as usize;
                    if horizontal {
                        src[o * w + j]
                    } else {
                        src[j * w + o]
                    }
                };
                if erode {
                    acc &= v;
                    if acc == 0 {
                        break;
                    }
                } else {
                    acc |= v;
                    if acc == 1 {
                        break;
                    }
                }
            }
            let idx = if horizontal { o * w + i } else { i * w + o };
            dst[idx] = acc;
        }
    }
}

fn morph(mask: &MaskVideo, radius: usize, erode: bool, outside: u8) -> MaskVideo {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.dims.height, mask.dims.width);
    let n = h * w;
    let mut out = vec![0u8; mask.data.len()];
    let mut tmp = vec![0u8; n];
    for t in 0..mask.dims.frames {
        let src = &mask.data[t * n..(t + 1) * n];
        morph_pass(src, &mut tmp, h, w, radius, true, erode, outside);
        morph_pass(&tmp, &mut out[t * n..(t + 1) * n], h, w, radius, false, erode, outside);
    }
    MaskVideo {
        dims: mask.dims,
        data: out,
    }
}

/// Binary erosion with a `(2r+1)x(2r+1)` square; pixels outside the frame
/// count as background.
pub fn erode(mask: &MaskVideo, radius: usize) -> MaskVideo {
    morph(mask, radius, true, 0)
}

/// Erosion with an explicit value for pixels outside the frame.
pub fn erode_bordered(mask: &MaskVideo, radius: usize, outside_is_foreground: bool) -> MaskVideo {
    morph(mask, radius, true, outside_is_foreground as u8)
}

/// Binary dilation with a `(2r+1)x(2r+1)` square.
pub fn dilate(mask: &MaskVideo, radius: usize) -> MaskVideo {
    morph(mask, radius, false, 0)
}

/// `dilate(mask, outer) AND NOT erode(mask, inner)`.
pub fn boundary_band(mask: &MaskVideo, inner: usize, outer: usize) -> Result<MaskVideo> {
    if inner == 0 || outer == 0 {
        return Err(Error::Value("band radii must be at least 1".into()));
    }
    dilate(mask, outer).and(&erode(mask, inner).not())
}

/// Maps a signed distance (positive inside) to a feathered alpha.
#[inline]
pub fn alpha_from_distance(distance: f32, feather: f32) -> f32 {
    (0.5 + distance / (2.0 * feather)).clamp(0.0, 1.0)
}

/// Feathered matte from a binary mask.
///
/// The signed distance of a pixel is the Euclidean distance from its center
/// to the nearest pixel of the opposite label, minus half a pixel, so the
/// zero level lies on the pixel edge between the two labels. Pixels farther
/// than `feather` from that edge keep their binary value.
pub fn pseudo_alpha(mask: &MaskVideo, feather: f32) -> Result<AlphaVideo> {
    if !(feather >= 1.0) || !feather.is_finite() {
        return Err(Error::Value(format!("feather {feather} must be >= 1")));
    }
    let (h, w) = (mask.dims.height as isize, mask.dims.width as isize);
    let reach = (feather + 0.5).ceil() as isize;
    let n = (h * w) as usize;
    let mut data = Vec::with_capacity(mask.data.len());
    for t in 0..mask.dims.frames {
        let frame = &mask.data[t * n..(t + 1) * n];
        for y in 0..h {
            for x in 0..w {
                let inside = frame[(y * w + x) as usize];
                let mut best = f32::INFINITY;
                for dy in -reach..=reach {
                    let yy = y + dy;
                    if yy < 0 || yy >= h {
                        continue;
                    }
                    for dx in -reach..=reach {
                        let xx = x + dx;
                        if xx < 0 || xx >= w || frame[(yy * w + xx) as usize] == inside {
                            continue;
                        }
                        let d2 = (dy * dy + dx * dx) as f32;
                        if d2 < best {
                            best = d2;
                        }
                    }
                }
                let alpha = if best.is_infinite() {
                    inside as f32
                } else {
                    let d = best.sqrt() - 0.5;
                    alpha_from_distance(if inside == 1 { d } else { -d }, feather)
                };
                data.push(alpha);
            }
        }
    }
    Ok(AlphaVideo {
        dims: mask.dims,
        data,
    })
}
