//! 3D color look-up tables with trilinear interpolation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{composite, MaskVideo, VideoTensor};

/// A cubic RGB lattice. Entry `(r, g, b)` lives at `(r * N + g) * N + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LutRepr", into = "LutRepr")]
pub struct Lut3d {
    size: usize,
    lattice: Vec<[f32; 3]>,
}

/// Serialized form: the lattice as nested `[r][g][b] -> [R, G, B]` arrays.
#[derive(Serialize, Deserialize)]
struct LutRepr {
    lattice: Vec<Vec<Vec<[f32; 3]>>>,
}

impl TryFrom<LutRepr> for Lut3d {
    type Error = Error;

    fn try_from(repr: LutRepr) -> Result<Self> {
        let n = repr.lattice.len();
        let mut flat = Vec::with_capacity(n * n * n);
        for plane in repr.lattice {
            if plane.len() != n {
                return Err(Error::Shape("LUT lattice is not cubic".into()));
            }
            for row in plane {
                if row.len() != n {
                    return Err(Error::Shape("LUT lattice is not cubic".into()));
                }
                flat.extend(row);
            }
        }
        Lut3d::from_lattice(n, flat)
    }
}

impl From<Lut3d> for LutRepr {
    fn from(lut: Lut3d) -> Self {
        let n = lut.size;
        let lattice = (0..n)
            .map(|r| {
                (0..n)
                    .map(|g| (0..n).map(|b| lut.lattice[(r * n + g) * n + b]).collect())
                    .collect()
            })
            .collect();
        LutRepr { lattice }
    }
}

impl Lut3d {
    pub fn from_lattice(size: usize, lattice: Vec<[f32; 3]>) -> Result<Self> {
        if size < 2 {
            return Err(Error::Value(format!("LUT size {size} must be at least 2")));
        }
        if lattice.len() != size * size * size {
            return Err(Error::Shape(format!(
                "LUT of size {size} needs {} entries, got {}",
                size * size * size,
                lattice.len()
            )));
        }
        if lattice.iter().flatten().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::Value("LUT entries must lie in [0, 1]".into()));
        }
        Ok(Self { size, lattice })
    }

    /// Lattice built from `f(r, g, b)` evaluated at the grid coordinates.
    pub fn from_fn(size: usize, f: impl Fn([f32; 3]) -> [f32; 3]) -> Result<Self> {
        let step = 1.0 / (size.max(2) - 1) as f32;
        let mut lattice = Vec::with_capacity(size * size * size);
        for r in 0..size {
            for g in 0..size {
                for b in 0..size {
                    lattice.push(f([r as f32 * step, g as f32 * step, b as f32 * step]));
                }
            }
        }
        Self::from_lattice(size, lattice)
    }

    pub fn identity(size: usize) -> Result<Self> {
        Self::from_fn(size, |c| c)
    }

    pub fn constant(size: usize, color: [f32; 3]) -> Result<Self> {
        Self::from_fn(size, |_| color)
    }

    /// Identity lattice plus independent uniform noise in `[-amplitude, amplitude]`
    /// on every entry, clamped into `[0, 1]`.
    pub fn perturbed_identity<R: Rng + ?Sized>(size: usize, amplitude: f32, rng: &mut R) -> Result<Self> {
        let mut lut = Self::identity(size)?;
        if amplitude > 0.0 {
            for entry in lut.lattice.iter_mut() {
                for v in entry.iter_mut() {
                    *v = (*v + rng.gen_range(-amplitude..=amplitude)).clamp(0.0, 1.0);
                }
            }
        }
        Ok(lut)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, r: usize, g: usize, b: usize) -> [f32; 3] {
        self.lattice[(r * self.size + g) * self.size + b]
    }

    /// Trilinear lookup of one color; inputs are clamped to `[0, 1]`.
    pub fn lookup(&self, rgb: [f32; 3]) -> [f32; 3] {
        let n = self.size;
        let scale = (n - 1) as f32;
        let mut base = [0usize; 3];
        let mut frac = [0f32; 3];
        for c in 0..3 {
            let x = rgb[c].clamp(0.0, 1.0) * scale;
            let i = (x.floor() as usize).min(n - 2);
            base[c] = i;
            frac[c] = x - i as f32;
        }
        let mut out = [0f32; 3];
        for corner in 0..8 {
            let (dr, dg, db) = (corner >> 2 & 1, corner >> 1 & 1, corner & 1);
            let w = (if dr == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dg == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if db == 1 { frac[2] } else { 1.0 - frac[2] });
            if w == 0.0 {
                continue;
            }
            let e = self.entry(base[0] + dr, base[1] + dg, base[2] + db);
            for c in 0..3 {
                out[c] += w * e[c];
            }
        }
        out
    }
}

/// Per-pixel LUT application.
pub fn apply_lut(video: &VideoTensor, lut: &Lut3d) -> Result<VideoTensor> {
    video.map_pixels(|_, p| lut.lookup(p))
}

/// Applies `luts[t]` to frame `t` inside the mask; background pixels are
/// copied verbatim.
pub fn apply_luts_masked(video: &VideoTensor, mask: &MaskVideo, luts: &[Lut3d]) -> Result<VideoTensor> {
    if luts.len() != video.frames() {
        return Err(Error::Dimension {
            axis: "frames",
            expected: video.frames(),
            actual: luts.len(),
        });
    }
    let relit = video.map_pixels(|t, p| luts[t].lookup(p))?;
    composite(&relit, video, mask)
}
