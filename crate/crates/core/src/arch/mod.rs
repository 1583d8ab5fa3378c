//! Generator, discriminator and baseline topologies.
//!
//! Specs are plain data. [`GeneratorSpec::topology`] works out every layer's
//! shape without allocating parameters, so the full-size network can be
//! checked cheaply; [`Generator::new`] then materializes parameters for it.

mod baseline;
mod discriminator;
mod enhance;
mod generator;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::NUM_BINS;

pub use baseline::{RnnMasker, RnnMaskerSpec};
pub use discriminator::{DiscOutput, Discriminator, DiscriminatorSpec};
pub use enhance::{enhance_with, forward_enhance, ConstantMask, MaskEstimator};
pub use generator::{standardize, GenOutput, Generator, GeneratorSpec, GeneratorTopology, LayerShape, RecurrentSpec};

/// SHA-256 of a spec's canonical JSON.
pub fn fingerprint<T: Serialize>(spec: &T) -> String {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    hex::encode(Sha256::digest(&json))
}

/// Adversarial objective families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Wasserstein,
    Relativistic,
    RelativisticAverage,
    Metric,
}

impl LossFamily {
    pub const ALL: [LossFamily; 4] = [
        LossFamily::Wasserstein,
        LossFamily::Relativistic,
        LossFamily::RelativisticAverage,
        LossFamily::Metric,
    ];

    /// Discriminator input channels: the mask alone for Wasserstein, a
    /// (mask, noisy features) pair for the relativistic families, and an
    /// (enhanced, clean) log-magnitude pair for the metric family.
    pub fn disc_input_channels(self) -> usize {
        match self {
            LossFamily::Wasserstein => 1,
            _ => 2,
        }
    }

    pub fn uses_gradient_penalty(self) -> bool {
        self != LossFamily::Metric
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossFamily::Wasserstein => "wasserstein",
            LossFamily::Relativistic => "relativistic",
            LossFamily::RelativisticAverage => "relativistic_average",
            LossFamily::Metric => "metric",
        })
    }
}

impl FromStr for LossFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossFamily::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown loss family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "W-CRGAN")]
    WCrgan,
    #[serde(rename = "R-CRGAN")]
    RCrgan,
    #[serde(rename = "Ra-CRGAN")]
    RaCrgan,
    #[serde(rename = "M-CRGAN")]
    MCrgan,
    #[serde(rename = "M-CRGAN-MSE")]
    MCrganMse,
    #[serde(rename = "W-CGAN")]
    WCgan,
    #[serde(rename = "R-CGAN")]
    RCgan,
    #[serde(rename = "Ra-CGAN")]
    RaCgan,
    #[serde(rename = "M-CGAN")]
    MCgan,
    #[serde(rename = "M-CGAN-MSE")]
    MCganMse,
    #[serde(rename = "CRN-MSE")]
    CrnMse,
    #[serde(rename = "CNN-MSE")]
    CnnMse,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "BiLSTM")]
    BiLstm,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 14] = [
        ModelVariant::WCrgan,
        ModelVariant::RCrgan,
        ModelVariant::RaCrgan,
        ModelVariant::MCrgan,
        ModelVariant::MCrganMse,
        ModelVariant::WCgan,
        ModelVariant::RCgan,
        ModelVariant::RaCgan,
        ModelVariant::MCgan,
        ModelVariant::MCganMse,
        ModelVariant::CrnMse,
        ModelVariant::CnnMse,
        ModelVariant::Lstm,
        ModelVariant::BiLstm,
    ];

    pub fn name(self) -> &'static str {
        use ModelVariant::*;
        match self {
            WCrgan => "W-CRGAN",
            RCrgan => "R-CRGAN",
            RaCrgan => "Ra-CRGAN",
            MCrgan => "M-CRGAN",
            MCrganMse => "M-CRGAN-MSE",
            WCgan => "W-CGAN",
            RCgan => "R-CGAN",
            RaCgan => "Ra-CGAN",
            MCgan => "M-CGAN",
            MCganMse => "M-CGAN-MSE",
            CrnMse => "CRN-MSE",
            CnnMse => "CNN-MSE",
            Lstm => "LSTM",
            BiLstm => "BiLSTM",
        }
    }

    /// `None` for the non-adversarial baselines.
    pub fn loss_family(self) -> Option<LossFamily> {
        use ModelVariant::*;
        match self {
            WCrgan | WCgan => Some(LossFamily::Wasserstein),
            RCrgan | RCgan => Some(LossFamily::Relativistic),
            RaCrgan | RaCgan => Some(LossFamily::RelativisticAverage),
            MCrgan | MCrganMse | MCgan | MCganMse => Some(LossFamily::Metric),
            CrnMse | CnnMse | Lstm | BiLstm => None,
        }
    }

    pub fn is_gan(self) -> bool {
        self.loss_family().is_some()
    }

    /// Metric variants with the extra mask MSE term in the generator loss.
    pub fn uses_mse_term(self) -> bool {
        matches!(self, ModelVariant::MCrganMse | ModelVariant::MCganMse)
    }

    /// Convolutional encoder/decoder generator (with or without recurrence).
    pub fn is_conv(self) -> bool {
        !matches!(self, ModelVariant::Lstm | ModelVariant::BiLstm)
    }

    /// Conv variants that keep the recurrent block.
    pub fn has_recurrent_block(self) -> bool {
        use ModelVariant::*;
        matches!(self, WCrgan | RCrgan | RaCrgan | MCrgan | MCrganMse | CrnMse)
    }

    /// Metric variants produce an enhanced magnitude through the
    /// generator's multiplication layer.
    pub fn multiplies_internally(self) -> bool {
        self.loss_family() == Some(LossFamily::Metric)
    }

    pub fn default_optimizer(self) -> crate::nn::OptimizerKind {
        match self {
            ModelVariant::Lstm | ModelVariant::BiLstm => crate::nn::OptimizerKind::Rmsprop,
            _ => crate::nn::OptimizerKind::Adam,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown model variant `{s}`")))
    }
}

/// Width settings shared by every variant. The defaults are the full-size
/// networks; smaller settings keep the same layer structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub encoder_channels: Vec<usize>,
    /// Units per direction in each BiLSTM layer of the generator.
    pub recurrent_hidden: usize,
    pub recurrent_layers: usize,
    pub disc_channels: Vec<usize>,
    pub lstm_hidden: usize,
    pub bilstm_hidden: usize,
    pub baseline_layers: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            encoder_channels: vec![16, 32, 64, 128, 256],
            recurrent_hidden: 1024,
            recurrent_layers: 2,
            disc_channels: vec![4, 8, 16, 32, 64],
            lstm_hidden: 256,
            bilstm_hidden: 128,
            baseline_layers: 2,
        }
    }
}

impl ArchConfig {
    /// Desk-scale widths: `[4, 8, 16, 32, 64]` encoder, 64 units per
    /// direction, and small baselines.
    pub fn tiny() -> Self {
        Self {
            encoder_channels: vec![4, 8, 16, 32, 64],
            recurrent_hidden: 64,
            recurrent_layers: 2,
            disc_channels: vec![4, 8, 16, 32, 64],
            lstm_hidden: 32,
            bilstm_hidden: 16,
            baseline_layers: 2,
        }
    }

    pub fn generator_spec(&self, variant: ModelVariant) -> GeneratorSpec {
        let mut spec = GeneratorSpec::with_channels(self.encoder_channels.clone());
        spec.recurrent = if variant.has_recurrent_block() {
            RecurrentSpec::BiLstm {
                hidden: self.recurrent_hidden,
                layers: self.recurrent_layers,
            }
        } else {
            RecurrentSpec::None
        };
        spec.multiply_output = variant.multiplies_internally();
        spec
    }

    pub fn baseline_spec(&self, variant: ModelVariant) -> Option<RnnMaskerSpec> {
        match variant {
            ModelVariant::Lstm => Some(RnnMaskerSpec {
                bins: NUM_BINS,
                hidden: self.lstm_hidden,
                layers: self.baseline_layers,
                bidirectional: false,
            }),
            ModelVariant::BiLstm => Some(RnnMaskerSpec {
                bins: NUM_BINS,
                hidden: self.bilstm_hidden,
                layers: self.baseline_layers,
                bidirectional: true,
            }),
            _ => None,
        }
    }

    pub fn discriminator_spec(&self, family: LossFamily) -> DiscriminatorSpec {
        DiscriminatorSpec::with_channels(self.disc_channels.clone(), family.disc_input_channels())
    }
}

/// The mask-producing network of a variant.
#[derive(Clone, Debug)]
pub enum MaskNet {
    Conv(Generator),
    Rnn(RnnMasker),
}

impl MaskNet {
    pub fn build(variant: ModelVariant, arch: &ArchConfig, seed: u64) -> Result<Self> {
        match arch.baseline_spec(variant) {
            Some(spec) => Ok(MaskNet::Rnn(RnnMasker::new(spec, seed)?)),
            None => Ok(MaskNet::Conv(Generator::new(arch.generator_spec(variant), seed)?)),
        }
    }

    pub fn params(&self) -> &crate::nn::ParamSet {
        match self {
            MaskNet::Conv(g) => &g.params,
            MaskNet::Rnn(r) => &r.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut crate::nn::ParamSet {
        match self {
            MaskNet::Conv(g) => &mut g.params,
            MaskNet::Rnn(r) => &mut r.params,
        }
    }

    pub fn buffers(&self) -> &crate::nn::ParamSet {
        match self {
            MaskNet::Conv(g) => &g.buffers,
            MaskNet::Rnn(r) => &r.buffers,
        }
    }

    pub fn buffers_mut(&mut self) -> &mut crate::nn::ParamSet {
        match self {
            MaskNet::Conv(g) => &mut g.buffers,
            MaskNet::Rnn(r) => &mut r.buffers,
        }
    }

    pub fn fingerprint(&self) -> String {
        match self {
            MaskNet::Conv(g) => fingerprint(&g.spec),
            MaskNet::Rnn(r) => fingerprint(&r.spec),
        }
    }

    pub fn multiplies_internally(&self) -> bool {
        matches!(self, MaskNet::Conv(g) if g.spec.multiply_output)
    }

    /// `x`: `[batch, frames, bins]` log-magnitudes. `noisy_mag` feeds the
    /// multiplication layer when the generator has one.
    pub fn forward<'g>(
        &self,
        ctx: &crate::nn::Ctx<'_, 'g>,
        x: crate::autograd::Var<'g>,
        noisy_mag: Option<crate::autograd::Var<'g>>,
    ) -> GenOutput<'g> {
        match self {
            MaskNet::Conv(g) => g.forward(ctx, x, noisy_mag),
            MaskNet::Rnn(r) => GenOutput {
                mask: r.forward(ctx, x),
                enhanced: None,
            },
        }
    }
}
