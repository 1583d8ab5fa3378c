//! Alternating adversarial training, baseline training, checkpoints and the
//! epoch loop.

mod checkpoint;
mod run;

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::{s, Array2, ArrayD, Axis, IxDyn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{standardize, ArchConfig, Discriminator, LossFamily, MaskNet, ModelVariant};
use crate::autograd::{Graph, Tensor, Var};
use crate::corpus::{derive_seed, PartialPolicy, TrainingChunk};
use crate::error::{Error, Result};
use crate::losses::{self, LossBreakdown, LossConfig};
use crate::nn::{apply_bn_updates, Bound, BnUpdate, Ctx, Optimizer, OptimizerConfig, OptimizerKind, ParamSet};
use crate::quality::QualitySource;
use crate::signal::{istft, EPS_FLOOR};

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_VERSION};
pub use run::{
    checkpoint_dir, latest_checkpoint, read_epoch_log, train, train_with, EpochRecord, StepRecord, TrainOutcome, EPOCH_LOG,
    INCOMPLETE_MARKER, STEP_LOG,
};

/// Seed-derivation tags.
const TAG_GENERATOR: u64 = 1;
const TAG_DISCRIMINATOR: u64 = 2;
const TAG_EPOCH: u64 = 3;
const TAG_VALIDATION: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: ModelVariant,
    pub arch: ArchConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Chunks per step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Whole utterances drawn with replacement per epoch (metric family).
    pub utterances_per_epoch: usize,
    /// Frames per chunk for the fixed-chunk families.
    pub chunk_frames: usize,
    pub partial: PartialPolicy,
    pub seed: u64,
    pub d_steps_per_g_step: usize,
    /// Share of training records held out for validation.
    pub validation_fraction: f64,
}

impl TrainConfig {
    /// Defaults for `variant`: full-size networks, Adam (RMSprop for the
    /// recurrent baselines) at 0.002, 60 epochs, batches of 60 chunks of 100
    /// frames, or single whole utterances for the metric family.
    pub fn new(variant: ModelVariant) -> Self {
        let metric = variant.loss_family() == Some(LossFamily::Metric);
        Self {
            variant,
            arch: ArchConfig::default(),
            loss: LossConfig::new(variant.loss_family()),
            optimizer: variant.default_optimizer(),
            learning_rate: 0.002,
            batch_size: if metric { 1 } else { 60 },
            epochs: 60,
            utterances_per_epoch: 6000,
            chunk_frames: 100,
            partial: PartialPolicy::Drop,
            seed: 0,
            d_steps_per_g_step: 1,
            validation_fraction: 0.05,
        }
    }

    pub fn family(&self) -> Option<LossFamily> {
        self.variant.loss_family()
    }

    /// Whole-utterance chunks, sampled with replacement.
    pub fn samples_utterances(&self) -> bool {
        self.family() == Some(LossFamily::Metric)
    }

    /// Weight of the mask MSE term in the generator loss.
    pub fn mse_weight(&self) -> f64 {
        if !self.variant.is_gan() {
            1.0
        } else if self.variant.uses_mse_term() {
            self.loss.lambda_mse
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss.family != self.family() {
            let show = |f: Option<LossFamily>| f.map_or("none".to_string(), |f| f.to_string());
            return Err(Error::config(
                "loss.family",
                format!(
                    "{} needs loss family {}, got {}",
                    self.variant,
                    show(self.family()),
                    show(self.loss.family)
                ),
            ));
        }
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if self.samples_utterances() && self.batch_size != 1 {
            return Err(Error::config(
                "train.batch_size",
                "the metric family trains on single whole utterances (batch_size = 1)",
            ));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.samples_utterances() && self.utterances_per_epoch == 0 {
            return Err(Error::config("train.utterances_per_epoch", "must be positive"));
        }
        if self.chunk_frames == 0 {
            return Err(Error::config("train.chunk_frames", "must be positive"));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::config("train.d_steps_per_g_step", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("train.validation_fraction", "must lie in [0, 1)"));
        }
        match self.arch.baseline_spec(self.variant) {
            Some(s) if s.hidden == 0 || s.layers == 0 => {
                return Err(Error::config("arch", "baseline needs positive units and layers"));
            }
            Some(_) => {}
            None => {
                self.arch.generator_spec(self.variant).topology()?;
            }
        }
        if let Some(f) = self.family() {
            self.arch.discriminator_spec(f).frequency_chain()?;
        }
        Ok(())
    }

    /// Chunk length for this config, `None` meaning whole utterances.
    pub fn chunk_length(&self) -> Option<usize> {
        (!self.samples_utterances()).then_some(self.chunk_frames)
    }

    pub(crate) fn epoch_seed(&self, epoch: usize) -> u64 {
        derive_seed(self.seed, &[TAG_EPOCH, epoch as u64])
    }

    pub(crate) fn validation_seed(&self) -> u64 {
        derive_seed(self.seed, &[TAG_VALIDATION])
    }
}

/// Chunks stacked into `[batch, frames, bins]` tensors.
#[derive(Clone, Debug)]
pub struct Batch {
    pub chunks: Vec<TrainingChunk>,
    /// Noisy log-magnitude.
    pub input: Tensor,
    /// Standardized noisy log-magnitude, the conditioning channel of the
    /// relativistic discriminators.
    pub input_std: Tensor,
    /// Clipped PSM.
    pub target: Tensor,
    pub noisy_mag: Tensor,
    pub clean_mag: Tensor,
    /// 1 on real frames, 0 on padding; `None` when nothing is padded.
    pub valid: Option<Rc<Tensor>>,
}

fn stack(rows: impl Iterator<Item = Array2<f64>>, shape: [usize; 3]) -> Tensor {
    let mut out = ArrayD::zeros(IxDyn(&shape));
    for (i, r) in rows.enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&r.into_dyn());
    }
    out
}

fn pad_to(a: Array2<f64>, rows: usize) -> Array2<f64> {
    if a.nrows() == rows {
        return a;
    }
    let mut out = Array2::zeros((rows, a.ncols()));
    out.slice_mut(s![..a.nrows(), ..]).assign(&a);
    out
}

impl Batch {
    pub fn new(chunks: Vec<TrainingChunk>) -> Result<Self> {
        let first = chunks.first().ok_or(Error::Empty("batch"))?;
        let (t, f) = first.input.dim();
        if let Some(c) = chunks.iter().find(|c| c.input.dim() != (t, f)) {
            return Err(Error::Shape {
                what: "batch chunk",
                expected: vec![t, f],
                got: vec![c.input.nrows(), c.input.ncols()],
            });
        }
        let shape = [chunks.len(), t, f];
        let input = stack(chunks.iter().map(|c| c.input.clone()), shape);
        let valid = chunks.iter().any(|c| c.valid_frames < t).then(|| {
            let mut v = ArrayD::zeros(IxDyn(&shape));
            for (i, c) in chunks.iter().enumerate() {
                v.slice_mut(s![i, ..c.valid_frames, ..]).fill(1.0);
            }
            Rc::new(v)
        });
        Ok(Self {
            input_std: standardize(&input),
            input,
            target: stack(chunks.iter().map(|c| c.target.clone()), shape),
            noisy_mag: stack(chunks.iter().map(TrainingChunk::noisy_magnitude), shape),
            clean_mag: stack(chunks.iter().map(|c| pad_to(c.clean.magnitude(), t)), shape),
            valid,
            chunks,
        })
    }

    /// A batch from raw `[batch, frames, bins]` tensors, with no source
    /// chunks behind it. Quality targets cannot be computed for it, so the
    /// metric discriminator loss needs them passed in.
    pub fn from_tensors(input: Tensor, target: Tensor, noisy_mag: Tensor, clean_mag: Tensor) -> Result<Self> {
        let shape = input.shape().to_vec();
        if shape.len() != 3 || shape.contains(&0) {
            return Err(Error::Invalid(format!("batch tensors must be non-empty [batch, frames, bins], got {shape:?}")));
        }
        for (what, t) in [("target", &target), ("noisy magnitude", &noisy_mag), ("clean magnitude", &clean_mag)] {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    what,
                    expected: shape.clone(),
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            chunks: Vec::new(),
            input_std: standardize(&input),
            input,
            target,
            noisy_mag,
            clean_mag,
            valid: None,
        })
    }

    pub fn len(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.input.shape();
        (s[0], s[1], s[2])
    }

    /// Zero the padded frames of a `[batch, frames, bins]` value.
    fn mask_padding<'g>(&self, v: Var<'g>) -> Var<'g> {
        match &self.valid {
            Some(w) => v.mul_const(w.clone()),
            None => v,
        }
    }

    /// Per-example `(mean, 1/std)` of the clean log-magnitude.
    fn clean_log_stats(&self) -> (Tensor, Tensor) {
        let logc = self.clean_mag.mapv(|v| v.max(EPS_FLOOR).ln());
        let mut mean = ArrayD::zeros(logc.raw_dim());
        let mut inv = ArrayD::zeros(logc.raw_dim());
        for i in 0..self.len() {
            let ex = logc.index_axis(Axis(0), i);
            let n = ex.len() as f64;
            let m = ex.sum() / n;
            let sd = (ex.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            mean.index_axis_mut(Axis(0), i).fill(m);
            inv.index_axis_mut(Axis(0), i).fill(1.0 / (sd + 1e-8));
        }
        (mean, inv)
    }

    /// Metric discriminator input `[batch, 2, frames, bins]`: log of
    /// `enhanced` and of the clean magnitude, both standardized with the
    /// clean statistics.
    fn metric_input<'g>(&self, graph: &'g Graph, enhanced: Var<'g>) -> (Var<'g>, Var<'g>) {
        let (n, t, f) = self.dims();
        let (mean, inv) = self.clean_log_stats();
        let shift = Rc::new(-&mean * &inv);
        let inv = Rc::new(inv);
        let norm = |v: Var<'g>| v.clamp_min(EPS_FLOOR).ln().mul_const(inv.clone()) + graph.leaf((*shift).clone());
        let clean = norm(graph.leaf(self.clean_mag.clone())).reshape(&[n, 1, t, f]);
        let enh = norm(enhanced).reshape(&[n, 1, t, f]);
        (graph.concat(&[enh, clean], 1), graph.concat(&[clean, clean], 1))
    }

    fn channel<'g>(&self, graph: &'g Graph, v: &Tensor) -> Var<'g> {
        let (n, t, f) = self.dims();
        graph.leaf(v.clone()).reshape(&[n, 1, t, f])
    }
}

/// Generator, discriminator and both optimizers.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: MaskNet,
    pub discriminator: Option<Discriminator>,
    pub g_opt: Optimizer,
    pub d_opt: Optimizer,
    /// Last completed epoch.
    pub epoch: usize,
}

fn non_finite_grad(grads: &BTreeMap<String, Tensor>) -> Option<String> {
    grads
        .iter()
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        .map(|(k, _)| k.clone())
}

fn check_loss(v: f64, phase: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            param: "loss".into(),
            phase,
        })
    }
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = MaskNet::build(config.variant, &config.arch, derive_seed(config.seed, &[TAG_GENERATOR]))?;
        let discriminator = match config.family() {
            Some(f) => Some(Discriminator::new(
                config.arch.discriminator_spec(f),
                derive_seed(config.seed, &[TAG_DISCRIMINATOR]),
            )?),
            None => None,
        };
        let opt = OptimizerConfig::of_kind(config.optimizer, config.learning_rate);
        Ok(Self {
            generator,
            discriminator,
            g_opt: Optimizer::new(opt),
            d_opt: Optimizer::new(opt),
            epoch: 0,
            config,
        })
    }

    /// A trainer around networks built elsewhere, e.g. with non-standard
    /// input sizes. Only the loss and optimizer settings of `config` apply.
    pub fn with_networks(config: TrainConfig, generator: MaskNet, discriminator: Option<Discriminator>) -> Result<Self> {
        config.loss.validate()?;
        if config.family().is_some() != discriminator.is_some() {
            return Err(Error::Invalid(format!(
                "{} needs {} discriminator",
                config.variant,
                if config.family().is_some() { "a" } else { "no" }
            )));
        }
        let opt = OptimizerConfig::of_kind(config.optimizer, config.learning_rate);
        Ok(Self {
            generator,
            discriminator,
            g_opt: Optimizer::new(opt),
            d_opt: Optimizer::new(opt),
            epoch: 0,
            config,
        })
    }

    pub fn family(&self) -> Option<LossFamily> {
        self.config.family()
    }

    fn q_source(&self) -> QualitySource {
        self.config.loss.q_metric.clone().unwrap_or(QualitySource::Surrogate)
    }

    /// Normalized quality of each enhanced chunk against its clean chunk,
    /// resynthesized with the noisy phase.
    pub fn quality_targets(&self, batch: &Batch, enhanced: &Tensor) -> Result<Vec<f64>> {
        let source = self.q_source();
        batch
            .chunks
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let mag = enhanced
                    .index_axis(Axis(0), i)
                    .slice(s![..c.valid_frames, ..])
                    .to_owned();
                let enh = istft(&c.noisy.with_magnitude(&mag)?)?;
                let clean = istft(&c.clean)?;
                source.q_prime(&enh, &clean)
            })
            .collect()
    }

    /// Generator outputs as plain values: `(mask, enhanced magnitude)`.
    /// Batch-norm statistics are used but not recorded.
    pub fn generate(&self, batch: &Batch) -> (Tensor, Tensor) {
        let g = Graph::new();
        let bound = self.generator.params().bind(&g);
        let ctx = Ctx::new(&bound, self.generator.buffers(), true);
        let nm = g.leaf(batch.noisy_mag.clone());
        let out = self.generator.forward(&ctx, g.leaf(batch.input.clone()), Some(nm));
        let mask = batch.mask_padding(out.mask);
        let enhanced = match out.enhanced {
            Some(e) => batch.mask_padding(e),
            None => mask * nm,
        };
        ((*mask.value()).clone(), (*enhanced.value()).clone())
    }

    /// Discriminator objective with the generator's output as constants.
    /// `draws` holds one interpolation weight per batch element for the
    /// gradient penalty (ignored by the metric family). `q` overrides the
    /// quality targets, which are otherwise computed from `batch`.
    pub fn discriminator_loss<'g>(
        &self,
        g: &'g Graph,
        params: &Bound<'g>,
        batch: &Batch,
        draws: &[f64],
        q: Option<&[f64]>,
    ) -> Result<(Var<'g>, BTreeMap<String, f64>)> {
        let (family, disc) = match (self.family(), &self.discriminator) {
            (Some(f), Some(d)) => (f, d),
            _ => return Err(Error::Invalid(format!("{} has no discriminator", self.config.variant))),
        };
        let (mask_v, enh_v) = self.generate(batch);
        let lambda_gp = self.config.loss.gp_weight();
        let no_buffers = ParamSet::new();
        let ctx = Ctx::new(params, &no_buffers, true);
        let critic = |v| disc.forward(&ctx, v).map(|o| o.logit);
        let mut parts = BTreeMap::new();
        let total = match family {
            LossFamily::Wasserstein => {
                let real = batch.channel(g, &batch.target);
                let fake = batch.channel(g, &mask_v);
                let adv = losses::wasserstein_d(critic(real)?, critic(fake)?)?;
                let gp = losses::gradient_penalty(g, critic, real, fake, draws)?;
                parts.insert("adversarial_d", adv.item());
                parts.insert("gp", gp.item());
                adv + gp.scale(lambda_gp)
            }
            LossFamily::Relativistic | LossFamily::RelativisticAverage => {
                let cond = batch.channel(g, &batch.input_std);
                let paired = |m| critic(g.concat(&[m, cond], 1));
                let real = batch.channel(g, &batch.target);
                let fake = batch.channel(g, &mask_v);
                let (rl, fl) = (paired(real)?, paired(fake)?);
                let (adv, _) = if family == LossFamily::Relativistic {
                    losses::relativistic(rl, fl)?
                } else {
                    losses::relativistic_average(rl, fl)?
                };
                let gp = losses::gradient_penalty(g, paired, real, fake, draws)?;
                parts.insert("adversarial_d", adv.item());
                parts.insert("gp", gp.item());
                adv + gp.scale(lambda_gp)
            }
            LossFamily::Metric => {
                let q = match q {
                    Some(q) => q.to_vec(),
                    None => self.quality_targets(batch, &enh_v)?,
                };
                let (enh_in, clean_in) = batch.metric_input(g, g.leaf(enh_v));
                let (clean_term, regression, _) = losses::metric_terms(critic(enh_in)?, critic(clean_in)?, &q)?;
                parts.insert("adversarial_d", clean_term.item());
                parts.insert("metric_regression", regression.item());
                parts.insert("q_prime", q.iter().sum::<f64>() / q.len() as f64);
                clean_term + regression
            }
        };
        Ok((total, parts.into_iter().map(|(k, v)| (k.to_string(), v)).collect()))
    }

    /// One discriminator update with the generator frozen. Both the
    /// real-labelled and the generated pass happen here. `rng` supplies the
    /// gradient-penalty interpolation draws.
    pub fn step_discriminator(&mut self, batch: &Batch, rng: &mut impl Rng) -> Result<LossBreakdown> {
        let disc = self
            .discriminator
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} has no discriminator", self.config.variant)))?;
        let draws: Vec<f64> = match self.family() {
            Some(f) if f.uses_gradient_penalty() => (0..batch.len()).map(|_| rng.gen()).collect(),
            _ => Vec::new(),
        };
        let g = Graph::new();
        let bound = disc.params.bind(&g);
        let (total, components) = self.discriminator_loss(&g, &bound, batch, &draws, None)?;
        let d_total = total.item();
        check_loss(d_total, "discriminator")?;
        let grads = bound.grads(&g, total);
        if let Some(param) = non_finite_grad(&grads) {
            return Err(Error::NonFinite {
                param,
                phase: "discriminator",
            });
        }
        let disc = self.discriminator.as_mut().expect("checked above");
        self.d_opt.update(&mut disc.params, &grads);
        Ok(LossBreakdown {
            d_total,
            g_total: 0.0,
            components,
        })
    }

    /// Generator objective with the discriminator's weights as constants.
    /// Also returns the batch-norm statistics the forward pass produced.
    pub fn generator_loss<'g>(
        &self,
        g: &'g Graph,
        params: &Bound<'g>,
        batch: &Batch,
    ) -> Result<(Var<'g>, BTreeMap<String, f64>, Vec<BnUpdate>)> {
        let family = self.family();
        let lambda_l1 = self.config.loss.l1_weight();
        let mse_w = self.config.mse_weight();
        let ctx = Ctx::new(params, self.generator.buffers(), true);
        let nm = g.leaf(batch.noisy_mag.clone());
        let out = self.generator.forward(&ctx, g.leaf(batch.input.clone()), Some(nm));
        let mask = batch.mask_padding(out.mask);
        let target = g.leaf(batch.target.clone());
        let mut parts = BTreeMap::new();
        let mut terms = Vec::new();
        let no_buffers = ParamSet::new();
        if let (Some(family), Some(disc)) = (family, &self.discriminator) {
            let dbound = disc.params.bind(g);
            let dctx = Ctx::new(&dbound, &no_buffers, true);
            let critic = |v| disc.forward(&dctx, v).map(|o| o.logit);
            let (n, t, f) = batch.dims();
            let fake = mask.reshape(&[n, 1, t, f]);
            let adv = match family {
                LossFamily::Wasserstein => losses::wasserstein_g(critic(fake)?)?,
                LossFamily::Relativistic | LossFamily::RelativisticAverage => {
                    let cond = batch.channel(g, &batch.input_std);
                    let real = critic(g.concat(&[batch.channel(g, &batch.target), cond], 1))?;
                    let fake = critic(g.concat(&[fake, cond], 1))?;
                    if family == LossFamily::Relativistic {
                        losses::relativistic(real, fake)?.1
                    } else {
                        losses::relativistic_average(real, fake)?.1
                    }
                }
                LossFamily::Metric => {
                    let enhanced = match out.enhanced {
                        Some(e) => batch.mask_padding(e),
                        None => mask * nm,
                    };
                    let (enh_in, clean_in) = batch.metric_input(g, enhanced);
                    let ones = vec![1.0; n];
                    losses::metric_terms(critic(enh_in)?, critic(clean_in)?, &ones)?.2
                }
            };
            parts.insert("adversarial_g", adv.item());
            terms.push(adv);
        }
        if lambda_l1 > 0.0 {
            let l = losses::l1(mask, target)?;
            parts.insert("l1", l.item());
            terms.push(l.scale(lambda_l1));
        }
        if mse_w > 0.0 {
            let m = losses::mse(mask, target)?;
            parts.insert("mse", m.item());
            terms.push(m.scale(mse_w));
        }
        let total = terms
            .into_iter()
            .reduce(|a, b| a + b)
            .ok_or_else(|| Error::Invalid("generator loss has no terms".into()))?;
        let parts = parts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Ok((total, parts, ctx.take_bn_updates()))
    }

    /// One generator update with the discriminator frozen.
    pub fn step_generator(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let g = Graph::new();
        let bound = self.generator.params().bind(&g);
        let (total, components, updates) = self.generator_loss(&g, &bound, batch)?;
        let g_total = total.item();
        check_loss(g_total, "generator")?;
        let grads = bound.grads(&g, total);
        if let Some(param) = non_finite_grad(&grads) {
            return Err(Error::NonFinite {
                param,
                phase: "generator",
            });
        }
        self.g_opt.update(self.generator.params_mut(), &grads);
        apply_bn_updates(self.generator.buffers_mut(), &updates);
        Ok(LossBreakdown {
            d_total: 0.0,
            g_total,
            components,
        })
    }

    /// `d_steps_per_g_step` discriminator updates (adversarial variants
    /// only) followed by one generator update.
    pub fn train_step(&mut self, batch: &Batch, rng: &mut impl Rng) -> Result<LossBreakdown> {
        let mut out = LossBreakdown::default();
        if self.discriminator.is_some() {
            for _ in 0..self.config.d_steps_per_g_step {
                out.merge(&self.step_discriminator(batch, rng)?);
            }
        }
        out.merge(&self.step_generator(batch)?);
        Ok(out)
    }

    /// Metric family: the discriminator's linear output for each
    /// (enhanced, clean) pair, i.e. its estimate of the normalized quality.
    pub fn predicted_quality(&self, batch: &Batch) -> Result<Vec<f64>> {
        let disc = match (&self.discriminator, self.family()) {
            (Some(d), Some(LossFamily::Metric)) => d,
            _ => return Err(Error::Invalid(format!("{} has no metric discriminator", self.config.variant))),
        };
        let (_, enh) = self.generate(batch);
        let g = Graph::new();
        let bound = disc.params.bind(&g);
        let no_buffers = ParamSet::new();
        let ctx = Ctx::new(&bound, &no_buffers, false);
        let (enh_in, _) = batch.metric_input(&g, g.leaf(enh));
        let out = disc.forward(&ctx, enh_in)?;
        let v = out.logit.value();
        Ok(v.iter().copied().collect())
    }

    /// Mean squared error of the current inference-mode mask against the
    /// batch targets, over real frames.
    pub fn mask_mse(&self, batch: &Batch) -> f64 {
        let g = Graph::new();
        let bound = self.generator.params().bind(&g);
        let ctx = Ctx::new(&bound, self.generator.buffers(), false);
        let out = self.generator.forward(&ctx, g.leaf(batch.input.clone()), None);
        let mask = batch.mask_padding(out.mask);
        let (sum, n) = mask
            .value()
            .iter()
            .zip(batch.target.iter())
            .fold((0.0, 0usize), |(s, n), (a, b)| (s + (a - b).powi(2), n + 1));
        sum / n as f64
    }
}

#[cfg(test)]
mod tests;
