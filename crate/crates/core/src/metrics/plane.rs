//! Single-channel image planes used by the metrics.

use crate::video::VideoTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width, "plane data length");
        Self { height, width, data }
    }

    pub fn luma(video: &VideoTensor, t: usize) -> Self {
        Self::new(video.height(), video.width(), video.luma_frame(t))
    }

    pub fn channel(video: &VideoTensor, t: usize, c: usize) -> Self {
        let data = video.frame(t).chunks_exact(3).map(|p| p[c]).collect();
        Self::new(video.height(), video.width(), data)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Value with replicated borders.
    #[inline]
    pub fn clamped(&self, y: isize, x: isize) -> f32 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.get(y, x)
    }

    /// Bilinear sample with replicated borders.
    pub fn bilinear(&self, y: f32, x: f32) -> f32 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let top = self.clamped(y0, x0) * (1.0 - fx) + self.clamped(y0, x0 + 1) * fx;
        let bottom = self.clamped(y0 + 1, x0) * (1.0 - fx) + self.clamped(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Mean over the `(2r+1)^2` neighbourhood with replicated borders.
    pub fn box_mean(&self, r: usize) -> Self {
        let r = r as isize;
        let norm = 1.0 / ((2 * r + 1) * (2 * r + 1)) as f32;
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                let mut s = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        s += self.clamped(y + dy, x + dx);
                    }
                }
                data.push(s * norm);
            }
        }
        Self { data, ..*self }
    }

    /// Copy with zero mean and unit standard deviation.
    pub fn standardized(&self) -> Self {
        let n = self.data.len() as f64;
        let mean = self.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = self.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var.sqrt() + 1e-6);
        let data = self.data.iter().map(|&v| ((v as f64 - mean) * inv) as f32).collect();
        Self { data, ..*self }
    }
}

/// 2x2 average pooling; odd trailing rows and columns are dropped.
pub fn downsample2(p: &Plane) -> Plane {
    let (h, w) = (p.height / 2, p.width / 2);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let s = p.get(2 * y, 2 * x) + p.get(2 * y, 2 * x + 1) + p.get(2 * y + 1, 2 * x) + p.get(2 * y + 1, 2 * x + 1);
            data.push(0.25 * s);
        }
    }
    Plane::new(h, w, data)
}
