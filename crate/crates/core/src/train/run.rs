//! The epoch loop: data preparation, validation slice, logs, checkpoints
//! and resumption.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint_for, save_checkpoint};
use super::{Batch, TrainConfig, Trainer};
use crate::arch::forward_enhance;
use crate::corpus::{chunk, Features, MixtureRecord, Split, TrainingChunk, Utterance};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::quality::{stoi, QualitySource};

pub const STEP_LOG: &str = "train_log.jsonl";
pub const EPOCH_LOG: &str = "epochs.jsonl";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub d_total: f64,
    pub g_total: f64,
    pub components: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

/// Step-averaged losses of one epoch plus validation scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub d_total: f64,
    pub g_total: f64,
    pub components: BTreeMap<String, f64>,
    pub val_q: Option<f64>,
    pub val_stoi: Option<f64>,
    pub wall_time_s: f64,
}

pub struct TrainOutcome {
    pub trainer: Trainer,
    /// Every epoch recorded in the output directory, resumed ones included.
    pub epochs: Vec<EpochRecord>,
    pub checkpoint: PathBuf,
    pub validation_ids: Vec<String>,
}

pub fn checkpoint_dir(out: &Path) -> PathBuf {
    out.join("checkpoints")
}

pub fn latest_checkpoint(out: &Path) -> PathBuf {
    checkpoint_dir(out).join("latest.ckpt")
}

/// Train from scratch into `out`.
pub fn train(cfg: &TrainConfig, records: &[MixtureRecord], out: &Path) -> Result<TrainOutcome> {
    train_with(cfg, records, out, false, |_| {})
}

/// Held-out indices: `round(fraction * n)` records chosen by seed, at least
/// one when the fraction is positive, never all of them.
fn validation_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if fraction <= 0.0 || n < 2 {
        return Vec::new();
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut v = idx[..k].to_vec();
    v.sort_unstable();
    v
}

fn mean_breakdown(steps: &[LossBreakdown]) -> (f64, f64, BTreeMap<String, f64>) {
    let n = steps.len().max(1) as f64;
    let mut comps: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for s in steps {
        for (k, v) in &s.components {
            let e = comps.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    (
        steps.iter().map(|s| s.d_total).sum::<f64>() / n,
        steps.iter().map(|s| s.g_total).sum::<f64>() / n,
        comps.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
    )
}

/// Keep the JSONL lines whose `epoch` is at most `max_epoch`.
fn truncate_log(path: &Path, max_epoch: usize) -> Result<()> {
    let Ok(f) = File::open(path) else {
        return Ok(());
    };
    let mut kept = String::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })?;
        if v["epoch"].as_u64().is_some_and(|e| e as usize <= max_epoch) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path, e))
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.into(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn append_line<T: Serialize>(w: &mut impl Write, path: &Path, rec: &T) -> Result<()> {
    let line = serde_json::to_string(rec).expect("record serializes");
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn open_append(path: &Path) -> Result<BufWriter<File>> {
    std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Mean normalized quality and STOI of the current generator over `val`.
fn validate(trainer: &Trainer, val: &[Utterance], source: &QualitySource) -> Result<(Option<f64>, Option<f64>)> {
    if val.is_empty() {
        return Ok((None, None));
    }
    let scores: Vec<(f64, f64)> = val
        .par_iter()
        .map(|u| {
            let enh = forward_enhance(&trainer.generator, &u.noisy)?;
            Ok((source.q_prime(&enh, &u.clean)?, stoi(&u.clean, &enh)?))
        })
        .collect::<Result<_>>()?;
    let n = scores.len() as f64;
    Ok((
        Some(scores.iter().map(|s| s.0).sum::<f64>() / n),
        Some(scores.iter().map(|s| s.1).sum::<f64>() / n),
    ))
}

/// Train into `out`, calling `on_epoch` after each finished epoch.
///
/// With `resume`, training continues after the epoch stored in
/// `out/checkpoints/latest.ckpt`, and logs past that epoch are discarded.
/// Every epoch's random draws come from a generator seeded by
/// `(seed, epoch)`, so a resumed run matches an uninterrupted one.
pub fn train_with(
    cfg: &TrainConfig,
    records: &[MixtureRecord],
    out: &Path,
    resume: bool,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_recs: Vec<&MixtureRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    if train_recs.is_empty() {
        return Err(Error::Empty("training manifest"));
    }
    let ckdir = checkpoint_dir(out);
    std::fs::create_dir_all(&ckdir).map_err(|e| Error::io(&ckdir, e))?;
    let latest = latest_checkpoint(out);
    let step_log = out.join(STEP_LOG);
    let epoch_log = out.join(EPOCH_LOG);

    let mut trainer = if resume {
        if !latest.exists() {
            return Err(Error::Checkpoint {
                path: latest,
                reason: "nothing to resume".into(),
            });
        }
        let mut t = load_checkpoint_for(&latest, cfg)?;
        t.config = cfg.clone();
        truncate_log(&step_log, t.epoch)?;
        truncate_log(&epoch_log, t.epoch)?;
        t
    } else {
        for p in [&step_log, &epoch_log] {
            if p.exists() {
                std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
            }
        }
        Trainer::new(cfg.clone())?
    };
    let marker = out.join(INCOMPLETE_MARKER);
    std::fs::write(&marker, "training in progress or interrupted\n").map_err(|e| Error::io(&marker, e))?;
    crate::quality::write_text(
        &out.join("train_config.json"),
        &serde_json::to_string_pretty(cfg).expect("config serializes"),
    )?;

    let utterances: Vec<Utterance> = train_recs.par_iter().map(|r| r.render()).collect::<Result<_>>()?;
    let val_idx = validation_indices(utterances.len(), cfg.validation_fraction, cfg.validation_seed());
    let (mut val, mut fit) = (Vec::new(), Vec::new());
    for (i, u) in utterances.into_iter().enumerate() {
        if val_idx.binary_search(&i).is_ok() {
            val.push(u);
        } else {
            fit.push(u);
        }
    }
    let features: Vec<Features> = fit.par_iter().map(Features::from_utterance).collect::<Result<_>>()?;
    drop(fit);
    let pool: Vec<Vec<TrainingChunk>> = features
        .iter()
        .map(|f| chunk(f, cfg.chunk_length(), cfg.partial))
        .collect::<Result<_>>()?;
    drop(features);
    let flat: Vec<&TrainingChunk> = pool.iter().flatten().collect();
    if flat.is_empty() {
        return Err(Error::Empty("training chunks (utterances shorter than one chunk)"));
    }
    let val_source = cfg.loss.q_metric.clone().unwrap_or(QualitySource::Surrogate);

    let start = trainer.epoch;
    let clock = Instant::now();
    let mut step_w = open_append(&step_log)?;
    let mut epoch_w = open_append(&epoch_log)?;
    for epoch in start + 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.epoch_seed(epoch));
        let order: Vec<&TrainingChunk> = if cfg.samples_utterances() {
            (0..cfg.utterances_per_epoch)
                .map(|_| flat[rng.gen_range(0..flat.len())])
                .collect()
        } else {
            let mut o = flat.clone();
            o.shuffle(&mut rng);
            o
        };
        let mut steps = Vec::new();
        for (i, group) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::new(group.iter().map(|c| (*c).clone()).collect())?;
            let b = trainer.train_step(&batch, &mut rng)?;
            append_line(
                &mut step_w,
                &step_log,
                &StepRecord {
                    epoch,
                    step: i + 1,
                    d_total: b.d_total,
                    g_total: b.g_total,
                    components: b.components.clone(),
                    wall_time_s: clock.elapsed().as_secs_f64(),
                },
            )?;
            steps.push(b);
        }
        step_w.flush().map_err(|e| Error::io(&step_log, e))?;
        let (val_q, val_stoi) = validate(&trainer, &val, &val_source)?;
        let (d_total, g_total, components) = mean_breakdown(&steps);
        let rec = EpochRecord {
            epoch,
            steps: steps.len(),
            d_total,
            g_total,
            components,
            val_q,
            val_stoi,
            wall_time_s: clock.elapsed().as_secs_f64(),
        };
        trainer.epoch = epoch;
        let ck = ckdir.join(format!("epoch_{epoch:03}.ckpt"));
        save_checkpoint(&trainer, &ck)?;
        save_checkpoint(&trainer, &latest)?;
        append_line(&mut epoch_w, &epoch_log, &rec)?;
        epoch_w.flush().map_err(|e| Error::io(&epoch_log, e))?;
        on_epoch(&rec);
    }
    drop((step_w, epoch_w));
    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(TrainOutcome {
        trainer,
        epochs: read_epoch_log(&epoch_log)?,
        checkpoint: latest,
        validation_ids: val.iter().map(|u| u.id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_slice_is_seeded_and_proper() {
        let a = validation_indices(200, 0.05, 7);
        assert_eq!(a.len(), 10);
        assert_eq!(a, validation_indices(200, 0.05, 7));
        assert_ne!(a, validation_indices(200, 0.05, 8));
        assert_eq!(validation_indices(3, 0.05, 1).len(), 1);
        assert!(validation_indices(1, 0.5, 1).is_empty());
        assert!(validation_indices(10, 0.0, 1).is_empty());
        assert_eq!(validation_indices(2, 0.9, 1).len(), 1);
    }
}
