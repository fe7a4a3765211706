//! Layers with hand-written backward passes over a flat parameter buffer.

use serde::{Deserialize, Serialize};

use super::real::{matmul, Real};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Initial value distribution of a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

/// Named-offset table describing the flat parameter buffer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamTable {
    entries: Vec<ParamEntry>,
    inits: Vec<Init>,
    len: usize,
}

impl ParamTable {
    pub fn alloc(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        let offset = self.len;
        let entry = ParamEntry {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        };
        self.len += entry.len();
        self.entries.push(entry);
        self.inits.push(init);
        offset
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn inits(&self) -> &[Init] {
        &self.inits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: usize,
    b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(table: &mut ParamTable, name: &str, fan_in: usize, fan_out: usize, init: Init) -> Self {
        let w = table.alloc(format!("{name}.weight"), &[fan_in, fan_out], init);
        let b = table.alloc(format!("{name}.bias"), &[fan_out], Init::Zeros);
        Self { w, b, fan_in, fan_out }
    }

    fn weight<'a, F: Real>(&self, p: &'a [F]) -> &'a [F] {
        &p[self.w..self.w + self.fan_in * self.fan_out]
    }

    /// `y = x @ W + b` for `rows` input rows.
    pub fn forward<F: Real>(&self, p: &[F], x: &[F], rows: usize) -> Vec<F> {
        let mut y = Vec::with_capacity(rows * self.fan_out);
        let bias = &p[self.b..self.b + self.fan_out];
        for _ in 0..rows {
            y.extend_from_slice(bias);
        }
        matmul(rows, self.fan_in, self.fan_out, x, false, self.weight(p), false, &mut y, true);
        y
    }

    /// Accumulates parameter gradients and returns `dx` when requested.
    pub fn backward<F: Real>(&self, p: &[F], g: &mut [F], x: &[F], dy: &[F], rows: usize, want_dx: bool) -> Option<Vec<F>> {
        let (fi, fo) = (self.fan_in, self.fan_out);
        matmul(fi, rows, fo, x, true, dy, false, &mut g[self.w..self.w + fi * fo], true);
        let gb = &mut g[self.b..self.b + fo];
        for row in dy.chunks_exact(fo) {
            for (acc, v) in gb.iter_mut().zip(row) {
                *acc += *v;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![F::zero(); rows * fi];
            matmul(rows, fo, fi, dy, false, self.weight(p), true, &mut dx, false);
            dx
        })
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gain: usize,
    bias: usize,
    dim: usize,
}

pub struct LnCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(table: &mut ParamTable, name: &str, dim: usize) -> Self {
        let gain = table.alloc(format!("{name}.gain"), &[dim], Init::Ones);
        let bias = table.alloc(format!("{name}.bias"), &[dim], Init::Zeros);
        Self { gain, bias, dim }
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &[F]) -> (Vec<F>, LnCache<F>) {
        let d = self.dim;
        let gain = &p[self.gain..self.gain + d];
        let bias = &p[self.bias..self.bias + d];
        let inv_d = F::from_f64_lossy(1.0 / d as f64);
        let eps = F::from_f64_lossy(LN_EPS);
        let mut y = Vec::with_capacity(x.len());
        let mut xhat = Vec::with_capacity(x.len());
        let mut rstd = Vec::with_capacity(x.len() / d);
        for row in x.chunks_exact(d) {
            let mean = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let r = F::one() / (var + eps).sqrt();
            rstd.push(r);
            for i in 0..d {
                let h = (row[i] - mean) * r;
                xhat.push(h);
                y.push(h * gain[i] + bias[i]);
            }
        }
        (y, LnCache { xhat, rstd })
    }

    pub fn backward<F: Real>(&self, p: &[F], g: &mut [F], cache: &LnCache<F>, dy: &[F]) -> Vec<F> {
        let d = self.dim;
        let inv_d = F::from_f64_lossy(1.0 / d as f64);
        let mut dx = Vec::with_capacity(dy.len());
        let mut dxhat = vec![F::zero(); d];
        for ((dyr, xh), &r) in dy.chunks_exact(d).zip(cache.xhat.chunks_exact(d)).zip(&cache.rstd) {
            let mut sum = F::zero();
            let mut sum_x = F::zero();
            for i in 0..d {
                g[self.gain + i] += dyr[i] * xh[i];
                g[self.bias + i] += dyr[i];
                dxhat[i] = dyr[i] * p[self.gain + i];
                sum += dxhat[i];
                sum_x += dxhat[i] * xh[i];
            }
            let (mean, mean_x) = (sum * inv_d, sum_x * inv_d);
            for i in 0..d {
                dx.push(r * (dxhat[i] - mean - xh[i] * mean_x));
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu<F: Real>(x: &[F]) -> Vec<F> {
    let c = F::from_f64_lossy(GELU_C);
    let k = F::from_f64_lossy(0.044715);
    let half = F::from_f64_lossy(0.5);
    x.iter()
        .map(|&v| half * v * (F::one() + (c * (v + k * v * v * v)).tanh()))
        .collect()
}

pub fn gelu_backward<F: Real>(x: &[F], dy: &[F]) -> Vec<F> {
    let c = F::from_f64_lossy(GELU_C);
    let k = F::from_f64_lossy(0.044715);
    let k3 = F::from_f64_lossy(3.0 * 0.044715);
    let half = F::from_f64_lossy(0.5);
    x.iter()
        .zip(dy)
        .map(|(&v, &d)| {
            let th = (c * (v + k * v * v * v)).tanh();
            let deriv = half * (F::one() + th) + half * v * (F::one() - th * th) * c * (F::one() + k3 * v * v);
            d * deriv
        })
        .collect()
}

pub fn silu<F: Real>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| v / (F::one() + (-v).exp())).collect()
}

pub fn silu_backward<F: Real>(x: &[F], dy: &[F]) -> Vec<F> {
    x.iter()
        .zip(dy)
        .map(|(&v, &d)| {
            let s = F::one() / (F::one() + (-v).exp());
            d * (s + v * s * (F::one() - s))
        })
        .collect()
}

/// Which token axis an attention layer mixes over. Tokens are ordered
/// `(frame, row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Tokens of one frame attend to each other.
    Spatial,
    /// Tokens at one spatial position attend across frames.
    Temporal,
}

#[derive(Clone, Copy, Debug)]
pub struct TokenGrid {
    pub frames: usize,
    pub per_frame: usize,
}

impl TokenGrid {
    fn groups(&self, axis: Axis) -> (usize, usize) {
        match axis {
            Axis::Spatial => (self.frames, self.per_frame),
            Axis::Temporal => (self.per_frame, self.frames),
        }
    }

    #[inline]
    fn token(&self, axis: Axis, group: usize, i: usize) -> usize {
        match axis {
            Axis::Spatial => group * self.per_frame + i,
            Axis::Temporal => i * self.per_frame + group,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    qkv: Linear,
    out: Linear,
    heads: usize,
    dim: usize,
    pub axis: Axis,
}

pub struct AttnCache<F> {
    qkv: Vec<F>,
    probs: Vec<F>,
    ctx: Vec<F>,
}

fn gather<F: Real>(src: &[F], stride: usize, col: usize, width: usize, rows: impl Iterator<Item = usize>, out: &mut Vec<F>) {
    out.clear();
    for r in rows {
        out.extend_from_slice(&src[r * stride + col..r * stride + col + width]);
    }
}

fn scatter_add<F: Real>(dst: &mut [F], stride: usize, col: usize, width: usize, rows: impl Iterator<Item = usize>, src: &[F]) {
    for (k, r) in rows.enumerate() {
        for (d, s) in dst[r * stride + col..r * stride + col + width].iter_mut().zip(&src[k * width..(k + 1) * width]) {
            *d += *s;
        }
    }
}

impl Attention {
    pub fn new(table: &mut ParamTable, name: &str, dim: usize, heads: usize, axis: Axis, out_std: f64) -> Self {
        assert!(dim.is_multiple_of(heads), "width must be divisible by heads");
        let std = 1.0 / (dim as f64).sqrt();
        Self {
            qkv: Linear::new(table, &format!("{name}.qkv"), dim, 3 * dim, Init::Normal(std)),
            out: Linear::new(table, &format!("{name}.out"), dim, dim, Init::Normal(out_std)),
            heads,
            dim,
            axis,
        }
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &[F], grid: TokenGrid) -> (Vec<F>, AttnCache<F>) {
        let n = grid.frames * grid.per_frame;
        let (d, dh) = (self.dim, self.dim / self.heads);
        let qkv = self.qkv.forward(p, x, n);
        let (groups, len) = grid.groups(self.axis);
        let scale = F::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let mut ctx = vec![F::zero(); n * d];
        let mut probs = Vec::with_capacity(groups * self.heads * len * len);
        let (mut q, mut k, mut v) = (Vec::new(), Vec::new(), Vec::new());
        let mut s = vec![F::zero(); len * len];
        let mut o = vec![F::zero(); len * dh];
        for g in 0..groups {
            let rows = || (0..len).map(move |i| grid.token(self.axis, g, i));
            for h in 0..self.heads {
                gather(&qkv, 3 * d, h * dh, dh, rows(), &mut q);
                gather(&qkv, 3 * d, d + h * dh, dh, rows(), &mut k);
                gather(&qkv, 3 * d, 2 * d + h * dh, dh, rows(), &mut v);
                matmul(len, dh, len, &q, false, &k, true, &mut s, false);
                for row in s.chunks_exact_mut(len) {
                    let mut max = F::neg_infinity();
                    for val in row.iter_mut() {
                        *val *= scale;
                        max = max.max(*val);
                    }
                    let mut sum = F::zero();
                    for val in row.iter_mut() {
                        *val = (*val - max).exp();
                        sum += *val;
                    }
                    for val in row.iter_mut() {
                        *val /= sum;
                    }
                }
                matmul(len, len, dh, &s, false, &v, false, &mut o, false);
                scatter_add(&mut ctx, d, h * dh, dh, rows(), &o);
                probs.extend_from_slice(&s);
            }
        }
        let y = self.out.forward(p, &ctx, n);
        (y, AttnCache { qkv, probs, ctx })
    }

    pub fn backward<F: Real>(&self, p: &[F], g: &mut [F], x: &[F], cache: &AttnCache<F>, dy: &[F], grid: TokenGrid) -> Vec<F> {
        let n = grid.frames * grid.per_frame;
        let (d, dh) = (self.dim, self.dim / self.heads);
        let dctx = self.out.backward(p, g, &cache.ctx, dy, n, true).expect("dx requested");
        let (groups, len) = grid.groups(self.axis);
        let scale = F::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let mut dqkv = vec![F::zero(); n * 3 * d];
        let (mut q, mut k, mut v, mut d_o) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut dp = vec![F::zero(); len * len];
        let mut dq = vec![F::zero(); len * dh];
        let mut dk = vec![F::zero(); len * dh];
        let mut dv = vec![F::zero(); len * dh];
        for gi in 0..groups {
            let rows = || (0..len).map(move |i| grid.token(self.axis, gi, i));
            for h in 0..self.heads {
                let pr = &cache.probs[(gi * self.heads + h) * len * len..(gi * self.heads + h + 1) * len * len];
                gather(&cache.qkv, 3 * d, h * dh, dh, rows(), &mut q);
                gather(&cache.qkv, 3 * d, d + h * dh, dh, rows(), &mut k);
                gather(&cache.qkv, 3 * d, 2 * d + h * dh, dh, rows(), &mut v);
                gather(&dctx, d, h * dh, dh, rows(), &mut d_o);
                matmul(len, dh, len, &d_o, false, &v, true, &mut dp, false);
                matmul(len, len, dh, pr, true, &d_o, false, &mut dv, false);
                for (dpr, pr_row) in dp.chunks_exact_mut(len).zip(pr.chunks_exact(len)) {
                    let dot: F = dpr.iter().zip(pr_row).map(|(a, b)| *a * *b).sum();
                    for (val, &pv) in dpr.iter_mut().zip(pr_row) {
                        *val = pv * (*val - dot) * scale;
                    }
                }
                matmul(len, len, dh, &dp, false, &k, false, &mut dq, false);
                matmul(len, len, dh, &dp, true, &q, false, &mut dk, false);
                scatter_add(&mut dqkv, 3 * d, h * dh, dh, rows(), &dq);
                scatter_add(&mut dqkv, 3 * d, d + h * dh, dh, rows(), &dk);
                scatter_add(&mut dqkv, 3 * d, 2 * d + h * dh, dh, rows(), &dv);
            }
        }
        self.qkv.backward(p, g, x, &dqkv, n, true).expect("dx requested")
    }
}
