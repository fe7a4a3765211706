//! Reference-free temporal consistency scores.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::video::{MaskVideo, VideoTensor};

pub const DEFAULT_EMBED_SEED: u64 = 0x5EED_F00D;
pub const EMBED_DIM: usize = 64;
const GRID: usize = 8;
const BINS: usize = 8;
const FEATURES: usize = GRID * GRID + 3 * BINS;

/// Fixed random projection from frame features to an embedding.
#[derive(Clone, Debug)]
pub struct FrameEmbedder {
    projection: Vec<f64>,
}

impl FrameEmbedder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (FEATURES as f64).sqrt();
        let projection = (0..EMBED_DIM * FEATURES)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self { projection }
    }

    /// Zero-mean 8x8 block-averaged luma followed by per-channel 8-bin
    /// histograms centred on the uniform distribution.
    pub fn features(video: &VideoTensor, t: usize) -> Vec<f64> {
        let (h, w) = (video.height(), video.width());
        let luma = video.luma_frame(t);
        let mut grid = [0f64; GRID * GRID];
        let mut counts = [0usize; GRID * GRID];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * GRID / h) * GRID + x * GRID / w;
                grid[cell] += luma[y * w + x] as f64;
                counts[cell] += 1;
            }
        }
        let mut feats: Vec<f64> = grid.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
        let mean = feats.iter().sum::<f64>() / feats.len() as f64;
        feats.iter_mut().for_each(|v| *v -= mean);
        let mut hist = [0f64; 3 * BINS];
        for p in video.frame(t).chunks_exact(3) {
            for c in 0..3 {
                let bin = ((p[c] * BINS as f32) as usize).min(BINS - 1);
                hist[c * BINS + bin] += 1.0;
            }
        }
        let n = (h * w) as f64;
        feats.extend(hist.iter().map(|v| v / n - 1.0 / BINS as f64));
        feats
    }

    pub fn embed(&self, video: &VideoTensor, t: usize) -> Vec<f64> {
        let f = Self::features(video, t);
        self.projection
            .chunks_exact(FEATURES)
            .map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (true, true) => (dot / (na * nb)).clamp(-1.0, 1.0),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Cosine similarity of consecutive frame embeddings.
pub fn frame_similarity_per_pair(video: &VideoTensor, seed: u64) -> Result<Vec<f64>> {
    if video.frames() < 2 {
        return Err(Error::Metric("frame similarity needs at least two frames".into()));
    }
    let embedder = FrameEmbedder::new(seed);
    let embeds: Vec<Vec<f64>> = (0..video.frames()).map(|t| embedder.embed(video, t)).collect();
    Ok(embeds.windows(2).map(|w| cosine(&w[0], &w[1])).collect())
}

pub fn frame_similarity(video: &VideoTensor) -> Result<f64> {
    frame_similarity_with(video, DEFAULT_EMBED_SEED)
}

pub fn frame_similarity_with(video: &VideoTensor, seed: u64) -> Result<f64> {
    Ok(super::paired::mean(&frame_similarity_per_pair(video, seed)?))
}

/// Mean absolute change between consecutive frames over pixels inside the
/// mask at the later frame.
pub fn flicker_score(video: &VideoTensor, mask: &MaskVideo) -> Result<f64> {
    video.dims().ensure_same(&mask.dims())?;
    if video.frames() < 2 {
        return Err(Error::Metric("flicker score needs at least two frames".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for t in 1..video.frames() {
        let (prev, cur) = (video.frame(t - 1), video.frame(t));
        for (k, &m) in mask.frame(t).iter().enumerate() {
            if m == 1 {
                for c in 0..3 {
                    sum += (cur[3 * k + c] - prev[3 * k + c]).abs() as f64;
                }
                n += 3;
            }
        }
    }
    if n == 0 {
        return Err(Error::Metric("mask is empty on every frame".into()));
    }
    Ok(sum / n as f64)
}
