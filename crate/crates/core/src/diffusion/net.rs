//! Factorized space-time transformer denoiser.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::codec::{LatentShape, LatentVideo};
use super::layout::{Conditioning, ConditioningLayout};
use super::nn::{
    gelu, gelu_backward, silu, silu_backward, Attention, AttnCache, Axis, Init, LayerNorm, Linear, LnCache, ParamTable,
    TokenGrid,
};
use super::real::Real;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub width: usize,
    pub heads: usize,
    /// Number of transformer blocks; even blocks attend spatially, odd ones temporally.
    pub blocks: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    /// Predict the clean latent as a residual on top of the input-condition latent.
    #[serde(default = "default_true")]
    pub residual_anchor: bool,
}

fn default_mlp_ratio() -> usize {
    4
}

fn default_true() -> bool {
    true
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            width: 128,
            heads: 4,
            blocks: 4,
            mlp_ratio: 4,
            residual_anchor: true,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.blocks == 0 || self.mlp_ratio == 0 {
            return Err(Error::Value("network dimensions must be positive".into()));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::Value(format!("width {} not divisible by {} heads", self.width, self.heads)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Block {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

#[derive(Clone, Debug)]
struct Layers {
    embed: Linear,
    time1: Linear,
    time2: Linear,
    blocks: Vec<Block>,
    ln_out: LayerNorm,
    head: Linear,
}

fn build_layers(cfg: &NetConfig, in_channels: usize, out_channels: usize) -> (ParamTable, Layers) {
    let mut t = ParamTable::default();
    let d = cfg.width;
    let hidden = d * cfg.mlp_ratio;
    let resid = 1.0 / ((2 * cfg.blocks) as f64).sqrt();
    let std = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
    let embed = Linear::new(&mut t, "embed", in_channels, d, Init::Normal(std(in_channels)));
    let time1 = Linear::new(&mut t, "time.0", d, d, Init::Normal(std(d)));
    let time2 = Linear::new(&mut t, "time.1", d, d, Init::Normal(std(d)));
    let blocks = (0..cfg.blocks)
        .map(|i| {
            let axis = if i % 2 == 0 { Axis::Spatial } else { Axis::Temporal };
            let name = format!("blocks.{i}");
            Block {
                ln1: LayerNorm::new(&mut t, &format!("{name}.ln1"), d),
                attn: Attention::new(&mut t, &format!("{name}.attn"), d, cfg.heads, axis, std(d) * resid),
                ln2: LayerNorm::new(&mut t, &format!("{name}.ln2"), d),
                fc1: Linear::new(&mut t, &format!("{name}.mlp.0"), d, hidden, Init::Normal(std(d))),
                fc2: Linear::new(&mut t, &format!("{name}.mlp.1"), hidden, d, Init::Normal(std(hidden) * resid)),
            }
        })
        .collect();
    let ln_out = LayerNorm::new(&mut t, "ln_out", d);
    let head = Linear::new(&mut t, "head", d, out_channels, Init::Zeros);
    (
        t,
        Layers {
            embed,
            time1,
            time2,
            blocks,
            ln_out,
            head,
        },
    )
}

/// Sinusoidal code for each `(frame, row, col)` token; dimension `i` encodes
/// axis `i % 3`.
fn position_code(shape: LatentShape, width: usize) -> Vec<f64> {
    let per_axis = width.div_ceil(3);
    let mut out = Vec::with_capacity(shape.tokens() * width);
    let norm = 1.0 / 3f64.sqrt();
    for f in 0..shape.frames {
        for r in 0..shape.height {
            for c in 0..shape.width {
                let pos = [f as f64, r as f64, c as f64];
                for i in 0..width {
                    let j = i / 3;
                    let freq = 100f64.powf(-((j / 2 * 2) as f64) / per_axis as f64);
                    let a = pos[i % 3] * freq;
                    out.push(norm * if j % 2 == 0 { a.sin() } else { a.cos() });
                }
            }
        }
    }
    out
}

/// Sinusoidal timestep features.
fn time_code(t: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..width)
        .map(|i| {
            let j = i % half.max(1);
            let freq = 10000f64.powf(-(j as f64) / half.max(1) as f64);
            let a = t as f64 * freq;
            if i < half {
                a.sin()
            } else {
                a.cos()
            }
        })
        .collect()
}

struct BlockTape<F> {
    a: Vec<F>,
    ln1: LnCache<F>,
    attn: AttnCache<F>,
    b: Vec<F>,
    ln2: LnCache<F>,
    pre: Vec<F>,
    act: Vec<F>,
}

/// Activations saved by [`DenoiserNet::forward`] for the backward pass.
pub struct Tape<F> {
    grid: TokenGrid,
    input: Vec<F>,
    tcode: Vec<F>,
    tpre: Vec<F>,
    tact: Vec<F>,
    blocks: Vec<BlockTape<F>>,
    ln_out: LnCache<F>,
    y: Vec<F>,
}

/// Denoiser with parameters in a flat buffer of element type `F`.
#[derive(Clone, Debug)]
pub struct DenoiserNet<F: Real> {
    config: NetConfig,
    layout: ConditioningLayout,
    schedule: NoiseSchedule,
    table: ParamTable,
    layers: Layers,
    params: Vec<F>,
}

impl<F: Real> DenoiserNet<F> {
    pub fn new(config: NetConfig, layout: ConditioningLayout, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        config.validate()?;
        let (table, layers) = build_layers(&config, layout.total_channels(), layout.latent_channels());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(table.len());
        for (entry, init) in table.entries().iter().zip(table.inits()) {
            match *init {
                Init::Zeros => params.extend(std::iter::repeat_n(F::zero(), entry.len())),
                Init::Ones => params.extend(std::iter::repeat_n(F::one(), entry.len())),
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("positive std");
                    params.extend((0..entry.len()).map(|_| F::from_f64_lossy(dist.sample(&mut rng))));
                }
            }
        }
        Ok(Self {
            config,
            layout,
            schedule,
            table,
            layers,
            params,
        })
    }

    /// Rebuilds a network around an existing parameter buffer.
    pub fn from_params(config: NetConfig, layout: ConditioningLayout, schedule: NoiseSchedule, params: Vec<F>) -> Result<Self> {
        config.validate()?;
        let (table, layers) = build_layers(&config, layout.total_channels(), layout.latent_channels());
        if params.len() != table.len() {
            return Err(Error::Checkpoint(format!(
                "parameter blob has {} values, architecture needs {}",
                params.len(),
                table.len()
            )));
        }
        Ok(Self {
            config,
            layout,
            schedule,
            table,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &ConditioningLayout {
        &self.layout
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn table(&self) -> &ParamTable {
        &self.table
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Converts the parameters to another element type.
    pub fn cast<G: Real>(&self) -> DenoiserNet<G> {
        DenoiserNet {
            config: self.config.clone(),
            layout: self.layout.clone(),
            schedule: self.schedule.clone(),
            table: self.table.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(|v| G::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Raw network output `h` of shape `[tokens, latent_channels]` plus the
    /// activation tape.
    pub fn forward(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize) -> Result<(Vec<F>, Tape<F>)> {
        self.schedule.check(t)?;
        let shape = z_t.shape();
        let input: Vec<F> = self.layout.assemble(z_t, cond)?.into_iter().map(F::from_f64_lossy).collect();
        let p = &self.params;
        let l = &self.layers;
        let d = self.config.width;
        let n = shape.tokens();
        let grid = TokenGrid {
            frames: shape.frames,
            per_frame: shape.tokens_per_frame(),
        };

        let tcode: Vec<F> = time_code(t, d).into_iter().map(F::from_f64_lossy).collect();
        let tpre = l.time1.forward(p, &tcode, 1);
        let tact = silu(&tpre);
        let temb = l.time2.forward(p, &tact, 1);

        let mut x = l.embed.forward(p, &input, n);
        for (i, (v, pos)) in x.iter_mut().zip(position_code(shape, d)).enumerate() {
            *v += F::from_f64_lossy(pos) + temb[i % d];
        }

        let mut blocks = Vec::with_capacity(l.blocks.len());
        for blk in &l.blocks {
            let (a, ln1) = blk.ln1.forward(p, &x);
            let (y, attn) = blk.attn.forward(p, &a, grid);
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv += *yv;
            }
            let (b, ln2) = blk.ln2.forward(p, &x);
            let pre = blk.fc1.forward(p, &b, n);
            let act = gelu(&pre);
            let y = blk.fc2.forward(p, &act, n);
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv += *yv;
            }
            blocks.push(BlockTape {
                a,
                ln1,
                attn,
                b,
                ln2,
                pre,
                act,
            });
        }
        let (y, ln_out) = l.ln_out.forward(p, &x);
        let h = l.head.forward(p, &y, n);
        Ok((
            h,
            Tape {
                grid,
                input,
                tcode,
                tpre,
                tact,
                blocks,
                ln_out,
                y,
            },
        ))
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d h`.
    pub fn backward(&self, tape: &Tape<F>, dh: &[F], grad: &mut [F]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let p = &self.params;
        let l = &self.layers;
        let d = self.config.width;
        let n = tape.grid.frames * tape.grid.per_frame;
        let dy = l.head.backward(p, grad, &tape.y, dh, n, true).expect("dx requested");
        let mut dx = l.ln_out.backward(p, grad, &tape.ln_out, &dy);
        for (blk, bt) in l.blocks.iter().zip(&tape.blocks).rev() {
            let dact = blk.fc2.backward(p, grad, &bt.act, &dx, n, true).expect("dx requested");
            let dpre = gelu_backward(&bt.pre, &dact);
            let db = blk.fc1.backward(p, grad, &bt.b, &dpre, n, true).expect("dx requested");
            for (a, b) in dx.iter_mut().zip(blk.ln2.backward(p, grad, &bt.ln2, &db)) {
                *a += b;
            }
            let da = blk.attn.backward(p, grad, &bt.a, &bt.attn, &dx, tape.grid);
            for (a, b) in dx.iter_mut().zip(blk.ln1.backward(p, grad, &bt.ln1, &da)) {
                *a += b;
            }
        }
        l.embed.backward(p, grad, &tape.input, &dx, n, false);
        let mut dtemb = vec![F::zero(); d];
        for row in dx.chunks_exact(d) {
            for (acc, v) in dtemb.iter_mut().zip(row) {
                *acc += *v;
            }
        }
        let dtact = l.time2.backward(p, grad, &tape.tact, &dtemb, 1, true).expect("dx requested");
        let dtpre = silu_backward(&tape.tpre, &dtact);
        l.time1.backward(p, grad, &tape.tcode, &dtpre, 1, false);
    }

    /// Latent the output residual is measured against.
    fn anchor<'a>(&self, cond: &'a Conditioning) -> Option<&'a [f64]> {
        self.config.residual_anchor.then(|| cond.input.data())
    }

    /// Converts the raw output `h` into a noise prediction.
    pub fn epsilon_from_output(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize, h: &[F]) -> LatentVideo {
        let ab = self.schedule.alpha_bar(t);
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let anchor = self.anchor(cond);
        let data = z_t
            .data()
            .iter()
            .zip(h)
            .enumerate()
            .map(|(i, (&z, hv))| {
                let x0 = hv.to_f64_lossy() + anchor.map_or(0.0, |a| a[i]);
                (z - sa * x0) / sn
            })
            .collect();
        LatentVideo::new(z_t.shape(), data).expect("same shape as z_t")
    }

    /// `d eps / d h` is the constant `-sqrt(abar / (1 - abar))`.
    pub fn epsilon_output_gain(&self, t: usize) -> f64 {
        let ab = self.schedule.alpha_bar(t);
        -(ab / (1.0 - ab)).sqrt()
    }

    pub fn predict_epsilon(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize) -> Result<LatentVideo> {
        let (h, _) = self.forward(z_t, cond, t)?;
        Ok(self.epsilon_from_output(z_t, cond, t, &h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::layout::ConditioningLayout;

    fn tiny() -> NetConfig {
        NetConfig {
            width: 12,
            heads: 2,
            blocks: 2,
            mlp_ratio: 2,
            residual_anchor: true,
        }
    }

    fn lat(shape: LatentShape, seed: u64) -> LatentVideo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        LatentVideo::new(shape, (0..shape.len()).map(|_| n.sample(&mut rng)).collect()).unwrap()
    }

    fn setup() -> (DenoiserNet<f64>, LatentVideo, Conditioning) {
        let shape = LatentShape {
            frames: 3,
            height: 2,
            width: 2,
            channels: 3,
        };
        let mut net = DenoiserNet::<f64>::new(tiny(), ConditioningLayout::deflicker(3), NoiseSchedule::default(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let jitter = Normal::new(0.0, 0.3).unwrap();
        for v in net.params_mut() {
            *v += jitter.sample(&mut rng);
        }
        let cond = Conditioning {
            input: lat(shape, 2),
            background: None,
            mask: lat(shape.with_channels(1), 3),
        };
        (net, lat(shape, 1), cond)
    }

    #[test]
    fn output_shape_matches_latent() {
        let (net, z, cond) = setup();
        let eps = net.predict_epsilon(&z, &cond, 10).unwrap();
        assert_eq!(eps.shape(), z.shape());
        let harm = DenoiserNet::<f32>::new(tiny(), ConditioningLayout::harmonizer(3), NoiseSchedule::default(), 5).unwrap();
        let cond4 = Conditioning {
            background: Some(cond.input.clone()),
            ..cond.clone()
        };
        assert_eq!(harm.predict_epsilon(&z, &cond4, 3).unwrap().shape(), z.shape());
        assert!(harm.predict_epsilon(&z, &cond, 3).is_err());
    }

    #[test]
    fn zero_head_predicts_anchor() {
        let net = DenoiserNet::<f32>::new(tiny(), ConditioningLayout::deflicker(3), NoiseSchedule::default(), 1).unwrap();
        let (_, z, cond) = setup();
        let (h, _) = net.forward(&z, &cond, 7).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (net, z, cond) = setup();
        let t = 20;
        let (h, tape) = net.forward(&z, &cond, t).unwrap();
        let weights: Vec<f64> = (0..h.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let objective = |net: &DenoiserNet<f64>| -> f64 {
            let (h, _) = net.forward(&z, &cond, t).unwrap();
            h.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut grad = vec![0.0; net.param_count()];
        net.backward(&tape, &weights, &mut grad);
        let step = 1e-5;
        for entry in net.table().entries() {
            for k in [0, entry.len() / 2, entry.len() - 1] {
                let i = entry.offset + k;
                let mut plus = net.clone();
                plus.params_mut()[i] += step;
                let mut minus = net.clone();
                minus.params_mut()[i] -= step;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * step);
                let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
                assert!(err < 1e-4, "{} [{k}]: analytic {} numeric {numeric}", entry.name, grad[i]);
            }
        }
    }

    #[test]
    fn position_code_separates_axes() {
        let shape = LatentShape {
            frames: 2,
            height: 2,
            width: 2,
            channels: 1,
        };
        let code = position_code(shape, 12);
        let tok = |i: usize| &code[i * 12..(i + 1) * 12];
        assert_ne!(tok(1), tok(2));
        assert_ne!(tok(1), tok(4));
        assert_ne!(tok(2), tok(4));
    }
}
