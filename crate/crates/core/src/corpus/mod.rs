//! Synthetic speech-in-noise corpus, manifests, WAV ingestion and chunking.
//!
//! A manifest is a pure function of a [`CorpusConfig`]: records are
//! enumerated in a fixed order and every signal is generated from seeds
//! derived from the config seed, so re-rendering a record is bit-exact.

mod chunk;
mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{read_wav, write_wav, Waveform};

pub use chunk::{chunk, Features, PartialPolicy, TrainingChunk};
pub use synth::{mix_at_snr, synthesize_clean, synthesize_noise, Mixture, MAX_DURATION_S, MIN_DURATION_S, MIX_PEAK};

/// SplitMix64-style mixing of a base seed with a path of integers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    TonalHarmonic,
    White,
    Pink,
    BabbleSurrogate,
    Modulated,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::TonalHarmonic,
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::BabbleSurrogate,
        NoiseKind::Modulated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::TonalHarmonic => "tonal-harmonic",
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::BabbleSurrogate => "babble-surrogate",
            NoiseKind::Modulated => "modulated",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown noise kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!("unknown split `{s}`"))),
        }
    }
}

/// Declarative description of a synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub train_clean: usize,
    pub test_clean: usize,
    pub train_noises: Vec<NoiseKind>,
    pub test_noises: Vec<NoiseKind>,
    pub train_snrs: Vec<f64>,
    pub test_snrs: Vec<f64>,
    /// Utterance durations are drawn uniformly from this range (seconds).
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_clean: 10,
            test_clean: 2,
            train_noises: NoiseKind::ALL.to_vec(),
            test_noises: NoiseKind::ALL.to_vec(),
            train_snrs: vec![0.0, 5.0, 10.0, 15.0],
            test_snrs: vec![2.5, 7.5, 12.5, 17.5],
            min_duration_s: 1.5,
            max_duration_s: 3.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, grid) in [("corpus.train_snrs", &self.train_snrs), ("corpus.test_snrs", &self.test_snrs)] {
            if grid.is_empty() {
                return Err(Error::config(key, "empty SNR grid"));
            }
            if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
                return Err(Error::config(key, format!("non-finite SNR {v}")));
            }
            for (i, a) in grid.iter().enumerate() {
                if grid[..i].contains(a) {
                    return Err(Error::config(key, format!("duplicate SNR {a}")));
                }
            }
        }
        for (key, kinds) in [("corpus.train_noises", &self.train_noises), ("corpus.test_noises", &self.test_noises)] {
            if kinds.is_empty() {
                return Err(Error::config(key, "no noise kinds"));
            }
            for (i, k) in kinds.iter().enumerate() {
                if kinds[..i].contains(k) {
                    return Err(Error::config(key, format!("duplicate noise kind {k}")));
                }
            }
        }
        let shared_kind = self.train_noises.iter().any(|k| self.test_noises.contains(k));
        let shared_snr = self.train_snrs.iter().any(|s| self.test_snrs.contains(s));
        if shared_kind && shared_snr {
            return Err(Error::config(
                "corpus.test_snrs",
                "test conditions must differ from training: share no SNR or no noise kind",
            ));
        }
        if self.train_clean == 0 {
            return Err(Error::config("corpus.train_clean", "must be positive"));
        }
        let range = MIN_DURATION_S..=MAX_DURATION_S;
        if !range.contains(&self.min_duration_s) || !range.contains(&self.max_duration_s) || self.min_duration_s > self.max_duration_s
        {
            return Err(Error::config(
                "corpus.min_duration_s",
                format!(
                    "duration range [{}, {}] must lie within [{MIN_DURATION_S}, {MAX_DURATION_S}]",
                    self.min_duration_s, self.max_duration_s
                ),
            ));
        }
        Ok(())
    }
}

/// How a record's signals are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Synthetic {
        clean_seed: u64,
        noise_seed: u64,
        duration_s: f64,
    },
    Files {
        clean: PathBuf,
        noisy: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureRecord {
    pub id: String,
    pub split: Split,
    pub clean_id: String,
    /// `None` for ingested pairs.
    pub noise_kind: Option<NoiseKind>,
    pub snr_db: Option<f64>,
    pub source: Source,
}

/// A loaded clean/noisy pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
}

impl MixtureRecord {
    /// Generate or read this record's signals.
    pub fn render(&self) -> Result<Utterance> {
        let (clean, noisy) = match &self.source {
            Source::Synthetic {
                clean_seed,
                noise_seed,
                duration_s,
            } => {
                let kind = self.noise_kind.ok_or_else(|| Error::Invalid(format!("{}: synthetic record without noise kind", self.id)))?;
                let snr = self.snr_db.ok_or_else(|| Error::Invalid(format!("{}: synthetic record without SNR", self.id)))?;
                let clean = synthesize_clean(*clean_seed, *duration_s)?;
                let noise = synthesize_noise(kind, *noise_seed, clean.len())?;
                let m = mix_at_snr(&clean, &noise, snr)?;
                (m.clean, m.noisy)
            }
            Source::Files { clean, noisy } => (read_wav(clean)?, read_wav(noisy)?),
        };
        if clean.len() != noisy.len() {
            return Err(Error::Invalid(format!(
                "{}: clean has {} samples, noisy {}",
                self.id,
                clean.len(),
                noisy.len()
            )));
        }
        Ok(Utterance {
            id: self.id.clone(),
            clean,
            noisy,
        })
    }
}

fn fmt_snr(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m")
}

/// Enumerate every (clean utterance, noise kind, SNR) combination per split.
/// Train and test use disjoint clean utterances.
pub fn build_manifest(cfg: &CorpusConfig) -> Result<Vec<MixtureRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let splits = [
        (Split::Train, 0, cfg.train_clean, &cfg.train_noises, &cfg.train_snrs),
        (Split::Test, cfg.train_clean, cfg.test_clean, &cfg.test_noises, &cfg.test_snrs),
    ];
    for (split, offset, count, kinds, snrs) in splits {
        for c in offset..offset + count {
            let clean_seed = derive_seed(cfg.seed, &[1, c as u64]);
            let u = (derive_seed(cfg.seed, &[2, c as u64]) >> 11) as f64 / (1u64 << 53) as f64;
            let duration_s = cfg.min_duration_s + u * (cfg.max_duration_s - cfg.min_duration_s);
            let duration_s = (duration_s * 1000.0).round() / 1000.0;
            for &kind in kinds.iter() {
                for (j, &snr) in snrs.iter().enumerate() {
                    let clean_id = format!("c{c:04}");
                    out.push(MixtureRecord {
                        id: format!("{split}_{clean_id}_{kind}_{}dB", fmt_snr(snr)),
                        split,
                        clean_id,
                        noise_kind: Some(kind),
                        snr_db: Some(snr),
                        source: Source::Synthetic {
                            clean_seed,
                            noise_seed: derive_seed(cfg.seed, &[3, c as u64, kind as u64, j as u64]),
                            duration_s,
                        },
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    Ok(out)
}

/// Pair up `clean_dir/*.wav` with same-named files in `noisy_dir`.
/// Returns the matched records and the names without a partner.
pub fn ingest_dirs(clean_dir: &Path, noisy_dir: &Path, split: Split) -> Result<(Vec<MixtureRecord>, Vec<String>)> {
    let names = |dir: &Path| -> Result<std::collections::BTreeSet<String>> {
        let mut set = std::collections::BTreeSet::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.to_ascii_lowercase().ends_with(".wav") {
                set.insert(name);
            }
        }
        Ok(set)
    };
    let clean = names(clean_dir)?;
    let noisy = names(noisy_dir)?;
    let unmatched: Vec<String> = clean.symmetric_difference(&noisy).cloned().collect();
    let records: Vec<MixtureRecord> = clean
        .intersection(&noisy)
        .map(|name| {
            let id = name[..name.len() - 4].to_string();
            MixtureRecord {
                id: id.clone(),
                split,
                clean_id: id,
                noise_kind: None,
                snr_db: None,
                source: Source::Files {
                    clean: clean_dir.join(name),
                    noisy: noisy_dir.join(name),
                },
            }
        })
        .collect();
    if records.is_empty() {
        return Err(Error::Empty("corpus (no matching clean/noisy file names)"));
    }
    Ok((records, unmatched))
}

const MANIFEST_HEADER: &str = "id\tsplit\tclean_id\tnoise_kind\tsnr_db\tclean_seed\tnoise_seed\tduration_s\tclean_path\tnoisy_path";

/// Tab-separated manifest text. File paths are written as given.
pub fn manifest_to_string(records: &[MixtureRecord]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for r in records {
        let (cs, ns, d, cp, np) = match &r.source {
            Source::Synthetic {
                clean_seed,
                noise_seed,
                duration_s,
            } => (
                clean_seed.to_string(),
                noise_seed.to_string(),
                duration_s.to_string(),
                "-".into(),
                "-".into(),
            ),
            Source::Files { clean, noisy } => (
                "-".into(),
                "-".into(),
                "-".into(),
                clean.display().to_string(),
                noisy.display().to_string(),
            ),
        };
        s.push_str(&[
            r.id.clone(),
            r.split.to_string(),
            r.clean_id.clone(),
            opt(r.noise_kind.map(|k| k.to_string())),
            opt(r.snr_db.map(|v| v.to_string())),
            cs,
            ns,
            d,
            cp,
            np,
        ]
        .join("\t"));
        s.push('\n');
    }
    s
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<MixtureRecord>> {
    let perr = |line: usize, reason: String| Error::Parse {
        path: path.into(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        _ => return Err(perr(1, "missing or unexpected header".into())),
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(perr(i + 1, format!("{} fields, expected 10", f.len())));
        }
        let opt = |s: &str| (s != "-").then(|| s.to_string());
        let num = |s: &str, what: &str| -> Result<Option<f64>> {
            opt(s)
                .map(|v| v.parse::<f64>().map_err(|e| perr(i + 1, format!("{what}: {e}"))))
                .transpose()
        };
        let int = |s: &str, what: &str| -> Result<Option<u64>> {
            opt(s)
                .map(|v| v.parse::<u64>().map_err(|e| perr(i + 1, format!("{what}: {e}"))))
                .transpose()
        };
        let source = match (int(f[5], "clean_seed")?, int(f[6], "noise_seed")?, num(f[7], "duration_s")?) {
            (Some(clean_seed), Some(noise_seed), Some(duration_s)) => Source::Synthetic {
                clean_seed,
                noise_seed,
                duration_s,
            },
            _ => {
                let (Some(c), Some(n)) = (opt(f[8]), opt(f[9])) else {
                    return Err(perr(i + 1, "record has neither seeds nor file paths".into()));
                };
                let resolve = |p: String| {
                    let p = PathBuf::from(p);
                    if p.is_relative() {
                        base.join(p)
                    } else {
                        p
                    }
                };
                Source::Files {
                    clean: resolve(c),
                    noisy: resolve(n),
                }
            }
        };
        out.push(MixtureRecord {
            id: f[0].to_string(),
            split: f[1].parse().map_err(|e: Error| perr(i + 1, e.to_string()))?,
            clean_id: f[2].to_string(),
            noise_kind: opt(f[3])
                .map(|k| k.parse())
                .transpose()
                .map_err(|e: Error| perr(i + 1, e.to_string()))?,
            snr_db: num(f[4], "snr_db")?,
            source,
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[MixtureRecord]) -> Result<()> {
    crate::quality::write_text(path, &manifest_to_string(records))
}

pub fn read_manifest(path: &Path) -> Result<Vec<MixtureRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

/// Layout of a rendered corpus on disk.
pub fn wav_paths(root: &Path, r: &MixtureRecord) -> (PathBuf, PathBuf) {
    let dir = root.join(r.split.name());
    (
        dir.join("clean").join(format!("{}.wav", r.id)),
        dir.join("noisy").join(format!("{}.wav", r.id)),
    )
}

/// Render every record to `root/{split}/{clean,noisy}/{id}.wav` (in
/// parallel; output does not depend on scheduling) and write
/// `root/manifest.tsv`.
pub fn write_corpus(root: &Path, records: &[MixtureRecord]) -> Result<()> {
    records.par_iter().try_for_each(|r| {
        let u = r.render()?;
        let (c, n) = wav_paths(root, r);
        write_wav(&c, &u.clean)?;
        write_wav(&n, &u.noisy)
    })?;
    write_manifest(&root.join("manifest.tsv"), records)
}
