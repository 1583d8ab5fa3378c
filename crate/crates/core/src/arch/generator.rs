use ndarray::{Array2, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, Ctx, Linear, ParamSet, Recurrent};
use crate::signal::NUM_BINS;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrentSpec {
    None,
    /// `hidden` units per direction, `layers` stacked BiLSTM layers.
    BiLstm { hidden: usize, layers: usize },
}

/// Encoder-recurrent-decoder mask estimator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub input_bins: usize,
    pub encoder_channels: Vec<usize>,
    /// `(time, frequency)` per encoder layer; the decoder mirrors them.
    pub kernels: Vec<(usize, usize)>,
    pub strides: Vec<(usize, usize)>,
    pub recurrent: RecurrentSpec,
    /// Multiply the mask onto the noisy magnitude and emit that as well.
    pub multiply_output: bool,
    /// Batch norm on the output deconvolution too, right before the
    /// sigmoid. Off by default: normalizing there pins the mask's spread to
    /// the learned scale, which makes fitting sharp masks very slow.
    pub output_batch_norm: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let mut spec = Self::with_channels(vec![16, 32, 64, 128, 256]);
        spec.recurrent = RecurrentSpec::BiLstm {
            hidden: 1024,
            layers: 2,
        };
        spec
    }
}

impl GeneratorSpec {
    /// `(1,3)` kernel on the first layer, `(2,3)` after, stride `(1,2)`
    /// everywhere, no recurrent block.
    pub fn with_channels(encoder_channels: Vec<usize>) -> Self {
        let n = encoder_channels.len();
        Self {
            input_bins: NUM_BINS,
            kernels: (0..n).map(|i| if i == 0 { (1, 3) } else { (2, 3) }).collect(),
            strides: vec![(1, 2); n],
            encoder_channels,
            recurrent: RecurrentSpec::None,
            multiply_output: false,
            output_batch_norm: false,
        }
    }

    pub fn topology(&self) -> Result<GeneratorTopology> {
        let n = self.encoder_channels.len();
        if n == 0 {
            return Err(spec_err("encoder", "no layers"));
        }
        if self.kernels.len() != n || self.strides.len() != n {
            return Err(spec_err(
                "encoder",
                format!(
                    "{n} channel entries but {} kernels and {} strides",
                    self.kernels.len(),
                    self.strides.len()
                ),
            ));
        }
        let mut encoder = Vec::with_capacity(n);
        let mut bins = self.input_bins;
        let mut cin = 1;
        for i in 0..n {
            let layer = format!("encoder.{i}");
            let (k, s) = (self.kernels[i], self.strides[i]);
            let cout = self.encoder_channels[i];
            if cout == 0 || k.0 == 0 || k.1 == 0 || s.0 == 0 || s.1 == 0 {
                return Err(spec_err(&layer, "zero channel, kernel or stride"));
            }
            if s.0 != 1 {
                return Err(spec_err(&layer, "time stride must be 1 to preserve frames"));
            }
            if bins < k.1 {
                return Err(spec_err(
                    &layer,
                    format!("{bins} bins cannot fit a width-{} kernel", k.1),
                ));
            }
            let out = (bins - k.1) / s.1 + 1;
            encoder.push(LayerShape {
                name: layer,
                in_channels: cin,
                out_channels: cout,
                in_bins: bins,
                out_bins: out,
                kernel: k,
                stride: s,
            });
            bins = out;
            cin = cout;
        }
        let bottleneck_features = cin * bins;
        let recurrent_width = match self.recurrent {
            RecurrentSpec::None => 0,
            RecurrentSpec::BiLstm { hidden, layers } => {
                if hidden == 0 || layers == 0 {
                    return Err(spec_err("recurrent", "zero units or layers"));
                }
                2 * hidden
            }
        };
        let decoder = (0..n)
            .map(|i| {
                let mirror = &encoder[n - 1 - i];
                LayerShape {
                    name: format!("decoder.{i}"),
                    in_channels: 2 * mirror.out_channels,
                    out_channels: mirror.in_channels,
                    in_bins: mirror.out_bins,
                    out_bins: mirror.in_bins,
                    kernel: mirror.kernel,
                    stride: mirror.stride,
                }
            })
            .collect();
        let topo = GeneratorTopology {
            encoder,
            bottleneck_features,
            recurrent_width,
            decoder,
        };
        topo.check_mirror()?;
        Ok(topo)
    }

    pub fn num_params(&self) -> Result<usize> {
        let topo = self.topology()?;
        let conv: usize = topo
            .encoder
            .iter()
            .chain(&topo.decoder)
            .map(|l| l.in_channels * l.out_channels * l.kernel.0 * l.kernel.1 + l.out_channels + 2 * l.out_channels)
            .sum::<usize>()
            - if self.output_batch_norm { 0 } else { 2 };
        let rnn = match self.recurrent {
            RecurrentSpec::None => 0,
            RecurrentSpec::BiLstm { hidden, layers } => {
                let r = Recurrent::new("r", topo.bottleneck_features, hidden, layers, true);
                r.num_params() + (2 * hidden + 1) * topo.bottleneck_features
            }
        };
        Ok(conv + rnn)
    }
}

fn spec_err(layer: &str, reason: impl Into<String>) -> Error {
    Error::Spec {
        layer: layer.to_string(),
        reason: reason.into(),
    }
}

/// Shape of one conv or deconv layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_bins: usize,
    pub out_bins: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorTopology {
    pub encoder: Vec<LayerShape>,
    /// Channels x bins after the last encoder layer.
    pub bottleneck_features: usize,
    /// Per-frame output width of the recurrent block (0 if absent).
    pub recurrent_width: usize,
    pub decoder: Vec<LayerShape>,
}

impl GeneratorTopology {
    /// Frequency sizes through the encoder, input first.
    pub fn frequency_chain(&self) -> Vec<usize> {
        std::iter::once(self.encoder[0].in_bins)
            .chain(self.encoder.iter().map(|l| l.out_bins))
            .collect()
    }

    fn check_mirror(&self) -> Result<()> {
        let n = self.encoder.len();
        for (i, d) in self.decoder.iter().enumerate() {
            let e = &self.encoder[n - 1 - i];
            if d.in_channels != 2 * e.out_channels
                || d.out_channels != e.in_channels
                || d.in_bins != e.out_bins
                || d.out_bins != e.in_bins
            {
                return Err(spec_err(&d.name, format!("does not mirror {}", e.name)));
            }
            // transposed conv can reach out_bins with at most stride-1 pinned extra bins
            let natural = (d.in_bins - 1) * d.stride.1 + d.kernel.1;
            if d.out_bins < natural || d.out_bins >= natural + d.stride.1 {
                return Err(spec_err(
                    &d.name,
                    format!("cannot pin {} bins from {}", d.out_bins, d.in_bins),
                ));
            }
        }
        Ok(())
    }
}

/// Per-example standardization of log-magnitude input, `[batch, frames, bins]`.
pub fn standardize(x: &ArrayD<f64>) -> ArrayD<f64> {
    let mut out = x.clone();
    for mut ex in out.axis_iter_mut(Axis(0)) {
        let n = ex.len() as f64;
        let mean = ex.sum() / n;
        let var = ex.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var.sqrt() + 1e-8);
        ex.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

pub struct GenOutput<'g> {
    /// `[batch, frames, bins]` in (0, 1).
    pub mask: Var<'g>,
    /// `mask * noisy magnitude` when the multiplication layer is present.
    pub enhanced: Option<Var<'g>>,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub topology: GeneratorTopology,
    pub params: ParamSet,
    pub buffers: ParamSet,
    enc: Vec<(Conv2d, BatchNorm2d)>,
    rnn: Option<(Recurrent, Linear)>,
    dec: Vec<(ConvTranspose2d, Option<BatchNorm2d>)>,
}

impl Generator {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        let topology = spec.topology()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let enc: Vec<_> = topology
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    Conv2d {
                        name: format!("enc{i}.conv"),
                        cin: l.in_channels,
                        cout: l.out_channels,
                        kernel: l.kernel,
                        stride: l.stride,
                    },
                    BatchNorm2d {
                        name: format!("enc{i}.bn"),
                        channels: l.out_channels,
                    },
                )
            })
            .collect();
        let rnn = match spec.recurrent {
            RecurrentSpec::None => None,
            RecurrentSpec::BiLstm { hidden, layers } => Some((
                Recurrent::new("rnn", topology.bottleneck_features, hidden, layers, true),
                Linear {
                    name: "proj".into(),
                    din: 2 * hidden,
                    dout: topology.bottleneck_features,
                },
            )),
        };
        let n_dec = topology.decoder.len();
        let dec: Vec<_> = topology
            .decoder
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    ConvTranspose2d {
                        name: format!("dec{i}.deconv"),
                        cin: l.in_channels,
                        cout: l.out_channels,
                        kernel: l.kernel,
                        stride: l.stride,
                        out_width: l.out_bins,
                    },
                    (i + 1 < n_dec || spec.output_batch_norm).then(|| BatchNorm2d {
                        name: format!("dec{i}.bn"),
                        channels: l.out_channels,
                    }),
                )
            })
            .collect();
        for (c, bn) in &enc {
            c.init(&mut params, &mut rng);
            bn.init(&mut params, &mut buffers);
        }
        if let Some((r, p)) = &rnn {
            r.init(&mut params, &mut rng);
            p.init(&mut params, &mut rng);
        }
        for (c, bn) in &dec {
            c.init(&mut params, &mut rng);
            if let Some(bn) = bn {
                bn.init(&mut params, &mut buffers);
            }
        }
        Ok(Self {
            spec,
            topology,
            params,
            buffers,
            enc,
            rnn,
            dec,
        })
    }

    /// `x`: `[batch, frames, bins]` log-magnitudes (standardized here).
    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>, noisy_mag: Option<Var<'g>>) -> GenOutput<'g> {
        let s = x.shape();
        let (n, t, f) = (s[0], s[1], s[2]);
        assert_eq!(f, self.spec.input_bins, "generator input bins");
        let g = x.graph();
        let mut h = g.leaf(standardize(&x.value())).reshape(&[n, 1, t, f]);
        let mut skips = Vec::with_capacity(self.enc.len());
        for ((conv, bn), shape) in self.enc.iter().zip(&self.topology.encoder) {
            h = bn.forward(ctx, conv.forward(ctx, h)).elu();
            assert_eq!(h.shape(), [n, shape.out_channels, t, shape.out_bins], "{}", shape.name);
            skips.push(h);
        }
        if let Some((rnn, proj)) = &self.rnn {
            let hs = h.shape();
            let (c, w) = (hs[1], hs[3]);
            let seq = h.permute(&[2, 0, 1, 3]).reshape(&[t, n, c * w]);
            let r = rnn.forward(ctx, seq);
            assert_eq!(r.shape()[2], self.topology.recurrent_width, "recurrent width");
            h = proj
                .forward(ctx, r.reshape(&[t * n, self.topology.recurrent_width]))
                .reshape(&[t, n, c, w])
                .permute(&[1, 2, 0, 3]);
        }
        let last = self.dec.len() - 1;
        for (i, ((deconv, bn), shape)) in self.dec.iter().zip(&self.topology.decoder).enumerate() {
            let skip = skips[skips.len() - 1 - i];
            let joined = g.concat(&[h, skip], 1);
            let mut y = deconv.forward(ctx, joined);
            if let Some(bn) = bn {
                y = bn.forward(ctx, y);
            }
            h = if i == last { y.sigmoid() } else { y.elu() };
            assert_eq!(h.shape(), [n, shape.out_channels, t, shape.out_bins], "{}", shape.name);
        }
        let mask = h.reshape(&[n, t, f]);
        let enhanced = if self.spec.multiply_output {
            noisy_mag.map(|m| mask * m)
        } else {
            None
        };
        GenOutput { mask, enhanced }
    }

    /// Inference-mode mask for one utterance.
    pub fn infer_mask(&self, logmag: &Array2<f64>) -> Array2<f64> {
        let g = crate::autograd::Graph::new();
        let bound = self.params.bind(&g);
        let ctx = Ctx::new(&bound, &self.buffers, false);
        let (t, f) = logmag.dim();
        let x = g.leaf(logmag.clone().into_shape_with_order((1, t, f)).unwrap().into_dyn());
        let out = self.forward(&ctx, x, None);
        let v = out.mask.value();
        v.as_standard_layout()
            .into_owned()
            .into_shape_with_order((t, f))
            .unwrap()
    }
}
