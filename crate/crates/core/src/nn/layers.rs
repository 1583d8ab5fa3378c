use std::cell::RefCell;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;

use super::params::{orthogonal_blocks, uniform_fan_in, Bound, ParamSet};
use crate::autograd::{Geometry, Graph, Var};

/// Batch statistics observed during a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Everything a layer needs during one forward pass.
pub struct Ctx<'a, 'g> {
    pub params: &'a Bound<'g>,
    pub buffers: &'a ParamSet,
    pub train: bool,
    pub bn_updates: RefCell<Vec<BnUpdate>>,
}

impl<'a, 'g> Ctx<'a, 'g> {
    pub fn new(params: &'a Bound<'g>, buffers: &'a ParamSet, train: bool) -> Self {
        Self {
            params,
            buffers,
            train,
            bn_updates: RefCell::new(Vec::new()),
        }
    }

    pub fn p(&self, name: &str) -> Var<'g> {
        self.params.get(name)
    }

    pub fn take_bn_updates(&self) -> Vec<BnUpdate> {
        std::mem::take(&mut *self.bn_updates.borrow_mut())
    }
}

fn graph<'g>(x: Var<'g>) -> &'g Graph {
    x.graph()
}

/// 2-D convolution over `[batch, channels, time, freq]`, unpadded along
/// frequency. Kernels taller than one frame get `kt - 1` zero frames of
/// padding on the past side so the frame count is preserved.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl Conv2d {
    pub fn out_width(&self, w: usize) -> Option<usize> {
        (w >= self.kernel.1).then(|| (w - self.kernel.1) / self.stride.1 + 1)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let fan_in = self.cin * self.kernel.0 * self.kernel.1;
        params.insert(
            format!("{}.weight", self.name),
            uniform_fan_in(&[self.cout, fan_in], fan_in, rng),
        );
        params.insert(format!("{}.bias", self.name), ArrayD::zeros(IxDyn(&[self.cout])));
    }

    pub fn num_params(&self) -> usize {
        self.cout * self.cin * self.kernel.0 * self.kernel.1 + self.cout
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let (n, c, t, w) = (s[0], s[1], s[2], s[3]);
        assert_eq!(c, self.cin, "{}: input channels", self.name);
        let (kt, _) = self.kernel;
        let xp = if kt > 1 { x.pad(2, kt - 1, 0) } else { x };
        let geo = Geometry::valid(n, c, t + kt - 1, w, self.kernel, self.stride);
        let cols = xp.im2col(geo);
        let wt = ctx.p(&format!("{}.weight", self.name));
        let b = ctx.p(&format!("{}.bias", self.name));
        let y = cols.matmul(wt.t()) + b;
        y.reshape(&[n, geo.small_h, geo.small_w, self.cout])
            .permute(&[0, 3, 1, 2])
    }
}

/// Transposed convolution: the adjoint of [`Conv2d`]'s patch extraction,
/// with the output width pinned and the time axis cropped back to the input
/// frame count (future side).
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub out_width: usize,
}

impl ConvTranspose2d {
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let fan_in = self.cin * self.kernel.0 * self.kernel.1;
        params.insert(
            format!("{}.weight", self.name),
            uniform_fan_in(
                &[self.cin, self.cout * self.kernel.0 * self.kernel.1],
                fan_in,
                rng,
            ),
        );
        params.insert(format!("{}.bias", self.name), ArrayD::zeros(IxDyn(&[self.cout])));
    }

    pub fn num_params(&self) -> usize {
        self.cout * self.cin * self.kernel.0 * self.kernel.1 + self.cout
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let (n, c, t, w) = (s[0], s[1], s[2], s[3]);
        assert_eq!(c, self.cin, "{}: input channels", self.name);
        let (kt, kw) = self.kernel;
        let geo = Geometry {
            n,
            c: self.cout,
            big_h: t + kt - 1,
            big_w: self.out_width,
            small_h: t,
            small_w: w,
            kh: kt,
            kw,
            sh: self.stride.0,
            sw: self.stride.1,
        };
        let wt = ctx.p(&format!("{}.weight", self.name));
        let b = ctx.p(&format!("{}.bias", self.name));
        let rows = x.permute(&[0, 2, 3, 1]).reshape(&[n * t * w, c]);
        let big = rows.matmul(wt).col2im(geo);
        let big = if kt > 1 { big.slice(2, 0, t) } else { big };
        big + b.reshape(&[1, self.cout, 1, 1])
    }
}

/// Per-channel batch normalization over `[batch, channels, time, freq]`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub name: String,
    pub channels: usize,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl BatchNorm2d {
    pub fn init(&self, params: &mut ParamSet, buffers: &mut ParamSet) {
        let c = self.channels;
        params.insert(format!("{}.gamma", self.name), ArrayD::ones(IxDyn(&[c])));
        params.insert(format!("{}.beta", self.name), ArrayD::zeros(IxDyn(&[c])));
        buffers.insert(format!("{}.running_mean", self.name), ArrayD::zeros(IxDyn(&[c])));
        buffers.insert(format!("{}.running_var", self.name), ArrayD::ones(IxDyn(&[c])));
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let c = self.channels;
        assert_eq!(s[1], c, "{}: channels", self.name);
        let g = graph(x);
        let gamma = ctx.p(&format!("{}.gamma", self.name)).reshape(&[1, c, 1, 1]);
        let beta = ctx.p(&format!("{}.beta", self.name)).reshape(&[1, c, 1, 1]);
        if ctx.train {
            let m = s[0] * s[2] * s[3];
            let flat = x.permute(&[1, 0, 2, 3]).reshape(&[c, m]);
            let mean = flat.mean_axis(1).reshape(&[c, 1]);
            let centered = flat - mean;
            let var = centered.square().mean_axis(1).reshape(&[c, 1]);
            let inv = var.add_scalar(BN_EPS).sqrt().recip();
            let normed = (centered * inv)
                .reshape(&[c, s[0], s[2], s[3]])
                .permute(&[1, 0, 2, 3]);
            let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
            ctx.bn_updates.borrow_mut().push(BnUpdate {
                name: self.name.clone(),
                mean: mean.value().iter().copied().collect(),
                var: var.value().iter().map(|v| v * unbias).collect(),
            });
            normed * gamma + beta
        } else {
            let rm = ctx.buffers.get(&format!("{}.running_mean", self.name)).unwrap();
            let rv = ctx.buffers.get(&format!("{}.running_var", self.name)).unwrap();
            let shift = g.leaf(rm.clone().into_shape_with_order(IxDyn(&[1, c, 1, 1])).unwrap());
            let inv = g.leaf(
                rv.mapv(|v| 1.0 / (v + BN_EPS).sqrt())
                    .into_shape_with_order(IxDyn(&[1, c, 1, 1]))
                    .unwrap(),
            );
            (x - shift) * inv * gamma + beta
        }
    }
}

/// Fold observed batch statistics into running averages.
pub fn apply_bn_updates(buffers: &mut ParamSet, updates: &[BnUpdate]) {
    for u in updates {
        for (key, vals) in [("running_mean", &u.mean), ("running_var", &u.var)] {
            if let Some(buf) = buffers.get_mut(&format!("{}.{key}", u.name)) {
                for (b, &v) in buf.iter_mut().zip(vals.iter()) {
                    *b = (1.0 - BN_MOMENTUM) * *b + BN_MOMENTUM * v;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        params.insert(
            format!("{}.weight", self.name),
            uniform_fan_in(&[self.dout, self.din], self.din, rng),
        );
        params.insert(format!("{}.bias", self.name), ArrayD::zeros(IxDyn(&[self.dout])));
    }

    pub fn num_params(&self) -> usize {
        self.dout * self.din + self.dout
    }

    /// `[m, din] -> [m, dout]`.
    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let w = ctx.p(&format!("{}.weight", self.name));
        let b = ctx.p(&format!("{}.bias", self.name));
        x.matmul(w.t()) + b
    }
}

/// Single-direction LSTM over `[time, batch, features]`. Gate order is
/// input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub name: String,
    pub din: usize,
    pub hidden: usize,
    pub reverse: bool,
}

impl Lstm {
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let h = self.hidden;
        params.insert(
            format!("{}.w_ih", self.name),
            uniform_fan_in(&[4 * h, self.din], self.din, rng),
        );
        params.insert(format!("{}.w_hh", self.name), orthogonal_blocks(4, h, rng));
        params.insert(format!("{}.bias", self.name), ArrayD::zeros(IxDyn(&[4 * h])));
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden * (self.din + self.hidden + 1)
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let (t_len, n) = (s[0], s[1]);
        let h = self.hidden;
        let g = graph(x);
        let w_ih = ctx.p(&format!("{}.w_ih", self.name));
        let w_hh_t = ctx.p(&format!("{}.w_hh", self.name)).t();
        let bias = ctx.p(&format!("{}.bias", self.name));
        let xw = x.reshape(&[t_len * n, self.din]).matmul(w_ih.t()) + bias;
        let mut hs = g.zeros(&[n, h]);
        let mut cs = g.zeros(&[n, h]);
        let mut outs = vec![None; t_len];
        let order: Vec<usize> = if self.reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for t in order {
            let gates = xw.slice(0, t * n, n) + hs.matmul(w_hh_t);
            let i = gates.slice(1, 0, h).sigmoid();
            let f = gates.slice(1, h, h).sigmoid();
            let c_hat = gates.slice(1, 2 * h, h).tanh();
            let o = gates.slice(1, 3 * h, h).sigmoid();
            cs = f * cs + i * c_hat;
            hs = o * cs.tanh();
            outs[t] = Some(hs);
        }
        let outs: Vec<Var<'g>> = outs.into_iter().map(Option::unwrap).collect();
        g.concat(&outs, 0).reshape(&[t_len, n, h])
    }
}

/// Stack of recurrent layers, optionally bidirectional (outputs concatenated).
#[derive(Clone, Debug)]
pub struct Recurrent {
    pub layers: Vec<Vec<Lstm>>,
}

impl Recurrent {
    pub fn new(prefix: &str, din: usize, hidden: usize, num_layers: usize, bidirectional: bool) -> Self {
        let dirs = if bidirectional { 2 } else { 1 };
        let layers = (0..num_layers)
            .map(|l| {
                let d = if l == 0 { din } else { hidden * dirs };
                (0..dirs)
                    .map(|k| Lstm {
                        name: format!("{prefix}.l{l}{}", if k == 0 { "f" } else { "b" }),
                        din: d,
                        hidden,
                        reverse: k == 1,
                    })
                    .collect()
            })
            .collect();
        Self { layers }
    }

    pub fn out_width(&self) -> usize {
        self.layers
            .last()
            .map(|l| l.iter().map(|c| c.hidden).sum())
            .unwrap_or(0)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        for cell in self.layers.iter().flatten() {
            cell.init(params, rng);
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flatten().map(Lstm::num_params).sum()
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, mut x: Var<'g>) -> Var<'g> {
        for layer in &self.layers {
            let outs: Vec<Var<'g>> = layer.iter().map(|cell| cell.forward(ctx, x)).collect();
            x = if outs.len() == 1 {
                outs[0]
            } else {
                graph(x).concat(&outs, 2)
            };
        }
        x
    }
}
