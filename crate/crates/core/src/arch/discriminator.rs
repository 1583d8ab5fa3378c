use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Ctx, Linear, ParamSet};
use crate::signal::NUM_BINS;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Conv stack shaped like the generator's encoder, without batch norm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub input_bins: usize,
    pub input_channels: usize,
    pub channels: Vec<usize>,
    pub kernels: Vec<(usize, usize)>,
    pub strides: Vec<(usize, usize)>,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self::with_channels(vec![4, 8, 16, 32, 64], 1)
    }
}

impl DiscriminatorSpec {
    pub fn with_channels(channels: Vec<usize>, input_channels: usize) -> Self {
        let n = channels.len();
        Self {
            input_bins: NUM_BINS,
            input_channels,
            kernels: (0..n).map(|i| if i == 0 { (1, 3) } else { (2, 3) }).collect(),
            strides: vec![(1, 2); n],
            channels,
        }
    }

    /// Frequency widths through the stack, input first.
    pub fn frequency_chain(&self) -> Result<Vec<usize>> {
        let n = self.channels.len();
        if n == 0 || self.kernels.len() != n || self.strides.len() != n {
            return Err(Error::Spec {
                layer: "disc".into(),
                reason: "channel, kernel and stride lists must be equal and non-empty".into(),
            });
        }
        if self.input_channels == 0 {
            return Err(Error::Spec {
                layer: "disc".into(),
                reason: "zero input channels".into(),
            });
        }
        let mut chain = vec![self.input_bins];
        for i in 0..n {
            let (k, s) = (self.kernels[i], self.strides[i]);
            let w = *chain.last().unwrap();
            if self.channels[i] == 0 || s.0 != 1 || s.1 == 0 || k.1 == 0 || w < k.1 {
                return Err(Error::Spec {
                    layer: format!("disc.{i}"),
                    reason: format!("cannot convolve {w} bins with kernel {k:?} stride {s:?}"),
                });
            }
            chain.push((w - k.1) / s.1 + 1);
        }
        Ok(chain)
    }
}

/// Both heads for each batch element; `prob` is exactly `sigmoid(logit)`.
pub struct DiscOutput<'g> {
    pub logit: Var<'g>,
    pub prob: Var<'g>,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub params: ParamSet,
    convs: Vec<Conv2d>,
    head: Linear,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        let chain = spec.frequency_chain()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut cin = spec.input_channels;
        let convs: Vec<Conv2d> = spec
            .channels
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let c = Conv2d {
                    name: format!("disc{i}.conv"),
                    cin,
                    cout,
                    kernel: spec.kernels[i],
                    stride: spec.strides[i],
                };
                cin = cout;
                c
            })
            .collect();
        let head = Linear {
            name: "disc.fc".into(),
            din: cin * chain.last().unwrap(),
            dout: 1,
        };
        for c in &convs {
            c.init(&mut params, &mut rng);
        }
        head.init(&mut params, &mut rng);
        Ok(Self {
            spec,
            params,
            convs,
            head,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// `x`: `[batch, channels, frames, bins]`. Per-frame features are
    /// averaged over time before the single-unit head, so any frame count
    /// is accepted.
    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Result<DiscOutput<'g>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.spec.input_channels || s[3] != self.spec.input_bins {
            return Err(Error::Shape {
                what: "discriminator input",
                expected: vec![s.first().copied().unwrap_or(0), self.spec.input_channels, s.get(2).copied().unwrap_or(0), self.spec.input_bins],
                got: s,
            });
        }
        let (n, t) = (s[0], s[2]);
        let mut h = x;
        for c in &self.convs {
            h = c.forward(ctx, h).leaky_relu(LEAKY_SLOPE);
        }
        let hs = h.shape();
        let feats = h
            .permute(&[0, 2, 1, 3])
            .reshape(&[n, t, hs[1] * hs[3]])
            .mean_axis(1);
        let logit = self.head.forward(ctx, feats).reshape(&[n]);
        Ok(DiscOutput {
            logit,
            prob: logit.sigmoid(),
        })
    }
}
