//! Experiment configuration and the command implementations behind the
//! `crgan` binary.
//!
//! An experiment is one TOML file. Relative paths in it resolve against the
//! experiment root, which is the config file's directory unless overridden.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{forward_enhance, ArchConfig, ModelVariant};
use crate::corpus::{build_manifest, read_manifest, write_corpus, CorpusConfig, MixtureRecord, PartialPolicy};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::quality::{comparison_table, score_pair, write_text, MetricReport, QualitySource};
use crate::signal::{read_wav, write_wav};
use crate::train::{load_checkpoint, train_with, EpochRecord, TrainConfig, TrainOutcome};

/// Environment variable that overrides the experiment root directory.
pub const ROOT_ENV: &str = "CRGAN_ROOT";

/// Noisy-baseline figures on the 824-utterance real test set scored with
/// ITU-T P.862. Synthetic-corpus numbers are not comparable to them.
pub const REFERENCE_NOISY_PESQ: f64 = 1.97;
pub const REFERENCE_NOISY_STOI: f64 = 0.921;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchPreset {
    #[default]
    Full,
    Tiny,
}

/// Network widths: a preset plus optional per-field overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub preset: ArchPreset,
    pub encoder_channels: Option<Vec<usize>>,
    pub recurrent_hidden: Option<usize>,
    pub recurrent_layers: Option<usize>,
    pub disc_channels: Option<Vec<usize>>,
    pub lstm_hidden: Option<usize>,
    pub bilstm_hidden: Option<usize>,
    pub baseline_layers: Option<usize>,
}

impl ArchSection {
    pub fn resolve(&self) -> ArchConfig {
        let mut a = match self.preset {
            ArchPreset::Full => ArchConfig::default(),
            ArchPreset::Tiny => ArchConfig::tiny(),
        };
        if let Some(v) = &self.encoder_channels {
            a.encoder_channels = v.clone();
        }
        if let Some(v) = &self.disc_channels {
            a.disc_channels = v.clone();
        }
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut a.recurrent_hidden, self.recurrent_hidden);
        set(&mut a.recurrent_layers, self.recurrent_layers);
        set(&mut a.lstm_hidden, self.lstm_hidden);
        set(&mut a.bilstm_hidden, self.bilstm_hidden);
        set(&mut a.baseline_layers, self.baseline_layers);
        a
    }
}

/// Training settings. Anything left out takes the variant's default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub variant: ModelVariant,
    #[serde(default)]
    pub arch: ArchSection,
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub utterances_per_epoch: Option<usize>,
    pub chunk_frames: Option<usize>,
    pub partial: Option<PartialPolicy>,
    pub seed: Option<u64>,
    pub d_steps_per_g_step: Option<usize>,
    pub validation_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub lambda_gp: Option<f64>,
    pub lambda_l1: Option<f64>,
    pub lambda_mse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// External PESQ executable. When set it scores the PESQ column and
    /// drives the metric discriminator; otherwise the surrogate does.
    pub pesq_plugin: Option<PathBuf>,
}

/// Output directories, relative to the experiment root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub corpus: PathBuf,
    pub runs: PathBuf,
    pub enhanced: PathBuf,
    pub reports: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            corpus: "corpus".into(),
            runs: "runs".into(),
            enhanced: "enhanced".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub corpus: CorpusConfig,
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

/// Command-line overrides shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// Replaces both the corpus and the training seed.
    pub seed: Option<u64>,
    pub pesq_plugin: Option<PathBuf>,
    /// Experiment root; normally the config file's directory.
    pub root: Option<PathBuf>,
}

/// A parsed, override-applied and validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub root: PathBuf,
    pub config: ExperimentConfig,
    pub train: TrainConfig,
}

fn absolute(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })
    }

    /// Training config after applying defaults, overrides and the quality
    /// source. `root` resolves a relative plugin path.
    pub fn train_config(&self, root: &Path) -> TrainConfig {
        let t = &self.train;
        let mut c = TrainConfig::new(t.variant);
        c.arch = t.arch.resolve();
        if let Some(v) = t.optimizer {
            c.optimizer = v;
        }
        if let Some(v) = t.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = t.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = t.epochs {
            c.epochs = v;
        }
        if let Some(v) = t.utterances_per_epoch {
            c.utterances_per_epoch = v;
        }
        if let Some(v) = t.chunk_frames {
            c.chunk_frames = v;
        }
        if let Some(v) = t.partial {
            c.partial = v;
        }
        if let Some(v) = t.seed {
            c.seed = v;
        }
        if let Some(v) = t.d_steps_per_g_step {
            c.d_steps_per_g_step = v;
        }
        if let Some(v) = t.validation_fraction {
            c.validation_fraction = v;
        }
        if let Some(v) = self.loss.lambda_gp {
            c.loss.lambda_gp = v;
        }
        if let Some(v) = self.loss.lambda_l1 {
            c.loss.lambda_l1 = v;
        }
        if let Some(v) = self.loss.lambda_mse {
            c.loss.lambda_mse = v;
        }
        if c.loss.q_metric.is_some() {
            c.loss.q_metric = Some(self.quality_source(root));
        }
        c
    }

    pub fn quality_source(&self, root: &Path) -> QualitySource {
        match &self.metrics.pesq_plugin {
            Some(p) => QualitySource::Pesq {
                plugin: absolute(root, p),
            },
            None => QualitySource::Surrogate,
        }
    }
}

impl Experiment {
    /// Read, override and validate. Nothing is written.
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = ExperimentConfig::from_toml(&text, path)?;
        let root = match &ov.root {
            Some(r) => r.clone(),
            None => path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .to_path_buf(),
        };
        if let Some(s) = ov.seed {
            config.corpus.seed = s;
            config.train.seed = Some(s);
        }
        if let Some(p) = &ov.pesq_plugin {
            config.metrics.pesq_plugin = Some(p.clone());
        }
        Self::from_config(config, root)
    }

    pub fn from_config(config: ExperimentConfig, root: PathBuf) -> Result<Self> {
        config.corpus.validate()?;
        let train = config.train_config(&root);
        train.validate()?;
        if let Some(p) = &config.metrics.pesq_plugin {
            let p = absolute(&root, p);
            if !p.is_file() {
                return Err(Error::config("metrics.pesq_plugin", format!("{} is not a file", p.display())));
            }
        }
        Ok(Self { root, config, train })
    }

    pub fn corpus_dir(&self) -> PathBuf {
        absolute(&self.root, &self.config.paths.corpus)
    }

    pub fn run_dir(&self) -> PathBuf {
        absolute(&self.root, &self.config.paths.runs).join(self.train.variant.name())
    }

    pub fn enhanced_dir(&self) -> PathBuf {
        absolute(&self.root, &self.config.paths.enhanced).join(self.train.variant.name())
    }

    pub fn reports_dir(&self) -> PathBuf {
        absolute(&self.root, &self.config.paths.reports)
    }

    pub fn quality_source(&self) -> QualitySource {
        self.config.quality_source(&self.root)
    }
}

/// Render the corpus into `out` and return its records.
pub fn cmd_synth_corpus(cfg: &CorpusConfig, out: &Path) -> Result<Vec<MixtureRecord>> {
    cfg.validate()?;
    let records = build_manifest(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_corpus(out, &records)?;
    Ok(records)
}

/// Train on `manifest` into `out`.
pub fn cmd_train(
    cfg: &TrainConfig,
    manifest: &Path,
    out: &Path,
    resume: bool,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let records = read_manifest(manifest)?;
    train_with(cfg, &records, out, resume, on_epoch)
}

fn wav_names(dir: &Path) -> Result<BTreeSet<String>> {
    let mut set = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".wav") && entry.path().is_file() {
            set.insert(name);
        }
    }
    Ok(set)
}

/// Enhance every WAV in `input` with the checkpoint's generator, writing
/// same-named files to `out`. Returns the names written.
pub fn cmd_enhance(checkpoint: &Path, input: &Path, out: &Path) -> Result<Vec<String>> {
    let trainer = load_checkpoint(checkpoint)?;
    let names: Vec<String> = wav_names(input)?.into_iter().collect();
    if names.is_empty() {
        return Err(Error::Empty("input directory (no .wav files)"));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    names.par_iter().try_for_each(|name| {
        let noisy = read_wav(input.join(name))?;
        let enhanced = forward_enhance(&trainer.generator, &noisy)?;
        write_wav(out.join(name), &enhanced)
    })?;
    Ok(names)
}

/// Scores of one system plus the noisy baseline.
pub struct Evaluation {
    pub system: MetricReport,
    pub noisy: MetricReport,
}

/// Score `enhanced` and `noisy` against `clean`, matched by file name.
/// Names missing from any directory, and pairs that cannot be scored, are
/// listed as exclusions.
pub fn cmd_evaluate(
    clean: &Path,
    enhanced: &Path,
    noisy: &Path,
    system: &str,
    source: &QualitySource,
) -> Result<Evaluation> {
    let (c, e, n) = (wav_names(clean)?, wav_names(enhanced)?, wav_names(noisy)?);
    let all: BTreeSet<&String> = c.iter().chain(&e).chain(&n).collect();
    let mut exclusions = Vec::new();
    let mut common = Vec::new();
    for name in all {
        let missing: Vec<&str> = [("clean", &c), ("enhanced", &e), ("noisy", &n)]
            .into_iter()
            .filter(|(_, s)| !s.contains(name))
            .map(|(d, _)| d)
            .collect();
        if missing.is_empty() {
            common.push(name.clone());
        } else {
            exclusions.push(format!("{name}: missing in {}", missing.join(", ")));
        }
    }
    if common.is_empty() {
        return Err(Error::Empty("intersection of clean, enhanced and noisy directories"));
    }
    let scored: Vec<(String, Result<_>)> = common
        .par_iter()
        .map(|name| {
            let r = (|| {
                let cw = read_wav(clean.join(name))?;
                let ew = read_wav(enhanced.join(name))?;
                let nw = read_wav(noisy.join(name))?;
                Ok((score_pair(source, &cw, &ew)?, score_pair(source, &cw, &nw)?))
            })();
            (name.clone(), r)
        })
        .collect();
    let (mut sys, mut base) = (BTreeMap::new(), BTreeMap::new());
    for (name, r) in scored {
        let id = name[..name.len() - 4].to_string();
        match r {
            Ok((s, b)) => {
                sys.insert(id.clone(), s);
                base.insert(id, b);
            }
            Err(Error::Plugin(msg)) => return Err(Error::Plugin(msg)),
            Err(err) => exclusions.push(format!("{name}: {err}")),
        }
    }
    let prov = source.provenance();
    Ok(Evaluation {
        system: MetricReport::new(system, prov, sys, exclusions.clone())?,
        noisy: MetricReport::new("Noisy", prov, base, exclusions)?,
    })
}

/// Note printed under every evaluation of the noisy baseline.
pub fn noisy_reference_note() -> String {
    format!(
        "Noisy row: on the real 824-utterance test set with ITU-T P.862 the noisy baseline scores \
         PESQ {REFERENCE_NOISY_PESQ:.2}, STOI {REFERENCE_NOISY_STOI:.3}. Those figures need that corpus and \
         real PESQ; they are not reproduced by synthetic data or the surrogate."
    )
}

/// Write `<stem>.json`, `<stem>.csv` and `<stem>.txt` for a report.
pub fn write_report_files(report: &MetricReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    let txt = dir.join(format!("{stem}.txt"));
    report.save_json(&json)?;
    write_text(&csv, &report.to_csv())?;
    write_text(&txt, &report.to_table())?;
    Ok(vec![json, csv, txt])
}

/// Comparison table over saved metric files.
pub fn cmd_report(files: &[PathBuf]) -> Result<String> {
    if files.is_empty() {
        return Err(Error::Empty("metric file list"));
    }
    let reports: Vec<MetricReport> = files.iter().map(|f| MetricReport::load_json(f)).collect::<Result<_>>()?;
    let mut table = comparison_table(&reports);
    if reports.iter().any(|r| r.system == "Noisy") {
        table.push('\n');
        table.push_str(&noisy_reference_note());
        table.push('\n');
    }
    Ok(table)
}
