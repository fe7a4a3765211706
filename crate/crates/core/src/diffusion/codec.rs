//! Lossless latent codec: space-to-depth rearrangement of `p x p` patches
//! followed by the affine map `x -> 2x - 1`. Frames are not compressed, so
//! latent frame `t` corresponds to video frame `t`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::video::{Dims, Matte, VideoTensor};

pub const DEFAULT_PATCH: usize = 4;

/// Shape of a latent video `[T, H/p, W/p, C]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentShape {
    pub fn tokens_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn tokens(&self) -> usize {
        self.frames * self.tokens_per_frame()
    }

    pub fn len(&self) -> usize {
        self.tokens() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        Self { channels, ..*self }
    }

    pub fn with_frames(&self, frames: usize) -> Self {
        Self { frames, ..*self }
    }

    pub fn ensure_same(&self, other: &LatentShape) -> Result<()> {
        check_dim("latent frames", self.frames, other.frames)?;
        check_dim("latent height", self.height, other.height)?;
        check_dim("latent width", self.width, other.width)?;
        check_dim("latent channels", self.channels, other.channels)
    }

    /// Latent shape of an RGB video under patch size `patch`.
    pub fn for_video(dims: Dims, patch: usize) -> Result<Self> {
        if patch == 0 || !dims.height.is_multiple_of(patch) || !dims.width.is_multiple_of(patch) {
            return Err(Error::PatchDivisibility {
                patch,
                height: dims.height,
                width: dims.width,
            });
        }
        Ok(Self {
            frames: dims.frames,
            height: dims.height / patch,
            width: dims.width / patch,
            channels: 3 * patch * patch,
        })
    }
}

/// A latent video stored `[T, H', W', C]` in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVideo {
    shape: LatentShape,
    data: Vec<f64>,
}

impl LatentVideo {
    pub fn new(shape: LatentShape, data: Vec<f64>) -> Result<Self> {
        check_dim("latent data length", shape.len(), data.len())?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape.frames {
            return Err(Error::Shape(format!(
                "latent frame range {start}..{end} invalid for {} frames",
                self.shape.frames
            )));
        }
        let n = self.shape.tokens_per_frame() * self.shape.channels;
        Ok(Self {
            shape: self.shape.with_frames(end - start),
            data: self.data[start * n..end * n].to_vec(),
        })
    }

    /// Root-mean-square difference to `other`.
    pub fn rms_diff(&self, other: &LatentVideo) -> f64 {
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        (sum / self.data.len().max(1) as f64).sqrt()
    }
}

/// Encodes a video with the default patch size.
pub fn encode(video: &VideoTensor) -> Result<LatentVideo> {
    encode_with(video, DEFAULT_PATCH)
}

/// Space-to-depth with channel index `(dy * p + dx) * 3 + c`, then `2x - 1`.
pub fn encode_with(video: &VideoTensor, patch: usize) -> Result<LatentVideo> {
    let shape = LatentShape::for_video(video.dims(), patch)?;
    let mut data = Vec::with_capacity(shape.len());
    for t in 0..shape.frames {
        for ty in 0..shape.height {
            for tx in 0..shape.width {
                for dy in 0..patch {
                    for dx in 0..patch {
                        let p = video.pixel(t, ty * patch + dy, tx * patch + dx);
                        for v in p {
                            data.push(2.0 * v as f64 - 1.0);
                        }
                    }
                }
            }
        }
    }
    Ok(LatentVideo { shape, data })
}

/// Exact inverse of [`encode_with`], clamped into `[0, 1]`.
pub fn decode(latent: &LatentVideo) -> Result<VideoTensor> {
    let s = latent.shape;
    if !s.channels.is_multiple_of(3) {
        return Err(Error::Shape(format!("{} latent channels is not 3 * p^2", s.channels)));
    }
    let patch = ((s.channels / 3) as f64).sqrt().round() as usize;
    if patch * patch * 3 != s.channels {
        return Err(Error::Shape(format!("{} latent channels is not 3 * p^2", s.channels)));
    }
    let dims = Dims::new(s.frames, s.height * patch, s.width * patch);
    let mut data = vec![0f32; dims.pixels() * 3];
    let mut it = latent.data.iter();
    for t in 0..s.frames {
        for ty in 0..s.height {
            for tx in 0..s.width {
                for dy in 0..patch {
                    for dx in 0..patch {
                        let base = ((t * dims.height + ty * patch + dy) * dims.width + tx * patch + dx) * 3;
                        for c in 0..3 {
                            let z = *it.next().expect("length checked");
                            data[base + c] = ((z + 1.0) / 2.0) as f32;
                        }
                    }
                }
            }
        }
    }
    VideoTensor::from_vec_clamped(dims, data)
}

/// Mask or alpha average-pooled over each patch and mapped by `2m - 1`,
/// giving a one-channel latent aligned with the video latent.
pub fn encode_matte<M: Matte + ?Sized>(matte: &M, patch: usize) -> Result<LatentVideo> {
    let dims = matte.dims();
    let shape = LatentShape::for_video(dims, patch)?.with_channels(1);
    let mut data = Vec::with_capacity(shape.len());
    let norm = 1.0 / (patch * patch) as f64;
    for t in 0..shape.frames {
        for ty in 0..shape.height {
            for tx in 0..shape.width {
                let mut acc = 0.0;
                for dy in 0..patch {
                    for dx in 0..patch {
                        let idx = (t * dims.height + ty * patch + dy) * dims.width + tx * patch + dx;
                        acc += matte.weight(idx) as f64;
                    }
                }
                data.push(2.0 * acc * norm - 1.0);
            }
        }
    }
    Ok(LatentVideo { shape, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::MaskVideo;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn midgray_is_zero_latent() {
        let v = VideoTensor::filled(Dims::new(2, 8, 8), 0.5).unwrap();
        let z = encode(&v).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));
        assert_eq!(decode(&z).unwrap(), v);
    }

    #[test]
    fn shape_bookkeeping() {
        let v = VideoTensor::filled(Dims::new(1, 8, 8), 0.2).unwrap();
        let z = encode(&v).unwrap();
        let s = z.shape();
        assert_eq!((s.height, s.width, s.channels), (2, 2, 48));
        let back = decode(&z).unwrap();
        assert_eq!(back.dims(), v.dims());
    }

    #[test]
    fn divisibility_error_names_patch() {
        let v = VideoTensor::filled(Dims::new(1, 10, 8), 0.2).unwrap();
        match encode(&v) {
            Err(Error::PatchDivisibility { patch, .. }) => assert_eq!(patch, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let v = VideoTensor::from_fn(Dims::new(3, 16, 8), |_, _, _, _| rng.gen()).unwrap();
            assert_eq!(decode(&encode(&v).unwrap()).unwrap(), v);
            let v2 = VideoTensor::from_fn(Dims::new(1, 8, 8), |_, _, _, _| rng.gen::<f32>().powi(12)).unwrap();
            assert_eq!(decode(&encode_with(&v2, 2).unwrap()).unwrap(), v2);
        }
    }

    #[test]
    fn matte_pooling() {
        let m = MaskVideo::from_fn(Dims::new(1, 8, 8), |_, y, x| y < 4 && x < 2).unwrap();
        let z = encode_matte(&m, 4).unwrap();
        assert_eq!(z.data(), &[0.0, -1.0, -1.0, -1.0]);
    }
}
