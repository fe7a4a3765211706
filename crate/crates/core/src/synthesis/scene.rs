//! Procedural lit scenes: a textured elliptical sprite moving over a smooth
//! background, both shaded by one directional light, with a soft cast shadow
//! baked into the background.

use std::f32::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Dims, MaskVideo, VideoTensor, MIN_SIDE};

/// Constant term added to the sprite shading.
pub const AMBIENT: f32 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    /// Unit vector in the image plane pointing towards the light (x right, y down).
    pub direction: [f32; 2],
    pub intensity: f32,
    pub color: [f32; 3],
}

/// Sprite center over time: `start + velocity * t + wobble * sin(2 pi t / period)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    /// Center at frame 0 as a fraction of (width, height).
    pub start: [f32; 2],
    /// Pixels per frame.
    pub velocity: [f32; 2],
    pub wobble: [f32; 2],
    pub wobble_period: f32,
}

impl Trajectory {
    pub fn position(&self, t: usize, width: usize, height: usize) -> [f32; 2] {
        let phase = (TAU * t as f32 / self.wobble_period.max(1.0)).sin();
        [
            self.start[0] * width as f32 + self.velocity[0] * t as f32 + self.wobble[0] * phase,
            self.start[1] * height as f32 + self.velocity[1] * t as f32 + self.wobble[1] * phase,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: usize,
    /// `(height, width)`.
    pub size: (usize, usize),
    pub fg_motion: Trajectory,
    pub light: Light,
    pub shadow_opacity: f32,
    /// Relative per-frame jitter of the background light intensity. Zero for
    /// physically stable footage; positive values mimic generated backgrounds.
    #[serde(default)]
    pub light_jitter: f32,
}

impl SceneSpec {
    /// Draws a plausible scene from `seed`.
    pub fn random(seed: u64, frames: usize, height: usize, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7_E5EE_D000_0001);
        let angle = rng.gen_range(0.0..TAU);
        let hue: [f32; 3] = [rng.gen_range(0.7..1.0), rng.gen_range(0.7..1.0), rng.gen_range(0.7..1.0)];
        let max_c = hue.iter().cloned().fold(0.0, f32::max);
        let speed = rng.gen_range(0.2..0.6);
        let heading = rng.gen_range(0.0..TAU);
        Self {
            seed,
            frames,
            size: (height, width),
            fg_motion: Trajectory {
                start: [rng.gen_range(0.4..0.6), rng.gen_range(0.45..0.55)],
                velocity: [speed * heading.cos(), speed * heading.sin()],
                wobble: [rng.gen_range(0.0..1.5), rng.gen_range(0.0..1.0)],
                wobble_period: rng.gen_range(8.0..20.0),
            },
            light: Light {
                direction: [angle.cos(), angle.sin()],
                intensity: rng.gen_range(0.5..1.0),
                color: hue.map(|c| c / max_c),
            },
            shadow_opacity: rng.gen_range(0.3..0.6),
            light_jitter: 0.0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.frames, self.size.0, self.size.1)
    }

    fn validate(&self) -> Result<()> {
        let (h, w) = self.size;
        if h < MIN_SIDE || w < MIN_SIDE || self.frames == 0 {
            return Err(Error::Shape(format!(
                "scene {}x{}x{} is degenerate (need >= {MIN_SIDE} pixels per side and one frame)",
                self.frames, h, w
            )));
        }
        if !(0.0..=1.0).contains(&self.shadow_opacity) || self.light.intensity < 0.0 {
            return Err(Error::Value("shadow opacity must be in [0, 1] and intensity >= 0".into()));
        }
        Ok(())
    }
}

/// Foreground, background and mask of one rendered scene.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedScene {
    pub fg: VideoTensor,
    pub bg: VideoTensor,
    pub mask: MaskVideo,
}

/// Random sinusoidal texture, periodic on the unit square.
struct Texture {
    base: [f32; 3],
    waves: Vec<([f32; 2], f32, [f32; 3])>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, base_range: (f32, f32), amplitude: f32, waves: usize, max_freq: i32) -> Self {
        let base = [0; 3].map(|_| rng.gen_range(base_range.0..base_range.1));
        let waves = (0..waves)
            .map(|_| {
                let mut f = [0f32; 2];
                while f == [0.0, 0.0] {
                    f = [
                        rng.gen_range(-max_freq..=max_freq) as f32,
                        rng.gen_range(-max_freq..=max_freq) as f32,
                    ];
                }
                let phase = rng.gen_range(0.0..TAU);
                let amp = [0; 3].map(|_| rng.gen_range(0.3..1.0) * amplitude);
                (f, phase, amp)
            })
            .collect();
        Self { base, waves }
    }

    fn sample(&self, u: f32, v: f32) -> [f32; 3] {
        let mut out = self.base;
        for (f, phase, amp) in &self.waves {
            let s = (TAU * (f[0] * u + f[1] * v) + phase).sin();
            for c in 0..3 {
                out[c] += amp[c] * s;
            }
        }
        out
    }
}

fn smoothstep(e0: f32, e1: f32, x: f32) -> f32 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Renders foreground, background (with cast shadow) and sprite mask.
///
/// Pure function of the spec: identical specs give bit-identical output.
pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let dims = spec.dims();
    let (h, w) = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let albedo = Texture::random(&mut rng, (0.55, 0.8), 0.12, 4, 3);
    let backdrop = Texture::random(&mut rng, (0.35, 0.75), 0.08, 5, 3);
    let jitter: Vec<f32> = (0..spec.frames)
        .map(|_| 1.0 + spec.light_jitter * rng.gen_range(-1.0f32..=1.0))
        .collect();

    let radii = [0.22 * w as f32, 0.3 * h as f32];
    let l = spec.light.direction;
    let shadow_offset = 0.3 * h.min(w) as f32;
    let centers: Vec<[f32; 2]> = (0..spec.frames).map(|t| spec.fg_motion.position(t, w, h)).collect();

    let ellipse = |t: usize, x: usize, y: usize| -> (f32, f32) {
        let c = centers[t];
        ((x as f32 + 0.5 - c[0]) / radii[0], (y as f32 + 0.5 - c[1]) / radii[1])
    };

    let mask = MaskVideo::from_fn(dims, |t, y, x| {
        let (u, v) = ellipse(t, x, y);
        u * u + v * v < 1.0
    })?;

    let mut fg = Vec::with_capacity(dims.pixels() * 3);
    let mut bg = Vec::with_capacity(dims.pixels() * 3);
    for t in 0..spec.frames {
        let intensity = spec.light.intensity * jitter[t];
        let c = centers[t];
        let shadow_center = [c[0] - l[0] * shadow_offset, c[1] - l[1] * shadow_offset];
        for y in 0..h {
            for x in 0..w {
                let (u, v) = ellipse(t, x, y);
                let r2 = u * u + v * v;
                if r2 < 1.0 {
                    let lambert = (u * l[0] + v * l[1]).max(0.0);
                    // Texture in sprite coordinates so it moves with the sprite.
                    let a = albedo.sample(0.5 * u, 0.5 * v);
                    for ch in 0..3 {
                        fg.push(a[ch] * (lambert * spec.light.intensity * spec.light.color[ch] + AMBIENT));
                    }
                } else {
                    fg.extend_from_slice(&[0.0; 3]);
                }

                let px = (x as f32 + 0.5) / w as f32;
                let py = (y as f32 + 0.5) / h as f32;
                let facing = 0.5 + 0.5 * ((2.0 * px - 1.0) * l[0] + (2.0 * py - 1.0) * l[1]);
                let su = (x as f32 + 0.5 - shadow_center[0]) / (1.1 * radii[0]);
                let sv = (y as f32 + 0.5 - shadow_center[1]) / (0.8 * radii[1]);
                let shade = 1.0 - spec.shadow_opacity * (1.0 - smoothstep(0.6, 1.2, (su * su + sv * sv).sqrt()));
                let b = backdrop.sample(px, py);
                for ch in 0..3 {
                    let lit = 0.35 + 0.65 * intensity * spec.light.color[ch] * facing;
                    let value = b[ch] * lit;
                    bg.push(if spec.shadow_opacity > 0.0 { value * shade } else { value });
                }
            }
        }
    }
    Ok(RenderedScene {
        fg: VideoTensor::from_vec_clamped(dims, fg)?,
        bg: VideoTensor::from_vec_clamped(dims, bg)?,
        mask,
    })
}

impl RenderedScene {
    /// The physically consistent composite of sprite over background.
    pub fn real_video(&self) -> Result<VideoTensor> {
        crate::video::composite(&self.fg, &self.bg, &self.mask)
    }
}
