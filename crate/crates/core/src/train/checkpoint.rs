//! Checkpoint files: a magic line, a little-endian `u64` header length, a
//! JSON header, then every tensor as raw little-endian `f64`s.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainConfig, Trainer};
use crate::arch::{fingerprint, ModelVariant};
use crate::error::{Error, Result};
use crate::nn::{Optimizer, OptimizerConfig, ParamSet};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8] = b"CRGANCK1\n";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    variant: ModelVariant,
    epoch: usize,
    seed: u64,
    config: TrainConfig,
    generator_fingerprint: String,
    discriminator_fingerprint: Option<String>,
    g_optimizer: OptState,
    d_optimizer: OptState,
    tensors: Vec<Entry>,
    data_len: u64,
    data_sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptState {
    config: OptimizerConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    group: String,
    name: String,
    shape: Vec<usize>,
    /// In elements from the start of the data section.
    offset: u64,
}

/// Spec fingerprints of the networks `cfg` would build.
pub(crate) fn fingerprints(cfg: &TrainConfig) -> (String, Option<String>) {
    let g = match cfg.arch.baseline_spec(cfg.variant) {
        Some(s) => fingerprint(&s),
        None => fingerprint(&cfg.arch.generator_spec(cfg.variant)),
    };
    let d = cfg.family().map(|f| fingerprint(&cfg.arch.discriminator_spec(f)));
    (g, d)
}

fn groups(t: &Trainer) -> Vec<(&'static str, &ParamSet)> {
    let mut v = vec![
        ("g.param", t.generator.params()),
        ("g.buffer", t.generator.buffers()),
        ("g.opt.first", &t.g_opt.first),
        ("g.opt.second", &t.g_opt.second),
    ];
    if let Some(d) = &t.discriminator {
        v.push(("d.param", &d.params));
        v.push(("d.opt.first", &t.d_opt.first));
        v.push(("d.opt.second", &t.d_opt.second));
    }
    v
}

/// Write atomically: a sibling temp file renamed into place.
pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    let mut offset = 0u64;
    for (group, set) in groups(trainer) {
        for (name, t) in set.iter() {
            tensors.push(Entry {
                group: group.into(),
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            for v in t.iter() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.len() as u64;
        }
    }
    let (gf, df) = fingerprints(&trainer.config);
    let header = Header {
        version: CHECKPOINT_VERSION,
        variant: trainer.config.variant,
        epoch: trainer.epoch,
        seed: trainer.config.seed,
        config: trainer.config.clone(),
        generator_fingerprint: gf,
        discriminator_fingerprint: df,
        g_optimizer: OptState {
            config: trainer.g_opt.config,
            step: trainer.g_opt.step,
        },
        d_optimizer: OptState {
            config: trainer.d_opt.config,
            step: trainer.d_opt.step,
        },
        tensors,
        data_len: data.len() as u64,
        data_sha256: hex::encode(Sha256::digest(&data)),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let write = |f: &mut tempfile::NamedTempFile| -> std::io::Result<()> {
        f.write_all(MAGIC)?;
        f.write_all(&(json.len() as u64).to_le_bytes())?;
        f.write_all(&json)?;
        f.write_all(&data)?;
        f.flush()
    };
    write(&mut tmp).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Load and verify a checkpoint: magic, version, checksum, and that the
/// stored tensors exactly match the networks its config builds.
pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad(path, "not a checkpoint file"))?;
    if rest.len() < 8 {
        return Err(bad(path, "truncated header"));
    }
    let hlen = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
    let rest = &rest[8..];
    if rest.len() < hlen {
        return Err(bad(path, "truncated header"));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| bad(path, format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(
            path,
            format!("version {} (expected {CHECKPOINT_VERSION})", header.version),
        ));
    }
    let data = &rest[hlen..];
    if data.len() as u64 != header.data_len {
        return Err(bad(
            path,
            format!("data section has {} bytes, header says {}", data.len(), header.data_len),
        ));
    }
    if hex::encode(Sha256::digest(data)) != header.data_sha256 {
        return Err(bad(path, "checksum mismatch"));
    }
    if header.variant != header.config.variant || header.seed != header.config.seed {
        return Err(bad(path, "header disagrees with its config"));
    }
    let mut trainer = Trainer::new(header.config.clone()).map_err(|e| bad(path, format!("config: {e}")))?;
    let (gf, df) = fingerprints(&trainer.config);
    if gf != header.generator_fingerprint || df != header.discriminator_fingerprint {
        return Err(bad(path, "network fingerprint mismatch"));
    }
    let total = data.len() / 8;
    let read = |e: &Entry| -> Result<ndarray::ArrayD<f64>> {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        if start + n > total {
            return Err(bad(path, format!("tensor {}:{} out of range", e.group, e.name)));
        }
        let vals = data[start * 8..(start + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ArrayD::from_shape_vec(IxDyn(&e.shape), vals).expect("length checked"))
    };
    let mut sets: Vec<(&str, ParamSet)> = Vec::new();
    for e in &header.tensors {
        let t = read(e)?;
        match sets.iter_mut().find(|(g, _)| *g == e.group) {
            Some((_, s)) => s.insert(e.name.clone(), t),
            None => {
                let mut s = ParamSet::new();
                s.insert(e.name.clone(), t);
                sets.push((e.group.as_str(), s));
            }
        }
    }
    let mut take = |group: &str| {
        sets.iter()
            .position(|(g, _)| *g == group)
            .map(|i| sets.swap_remove(i).1)
            .unwrap_or_default()
    };
    let same_layout = |a: &ParamSet, b: &ParamSet| {
        a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| w.shape() == v.shape()))
    };
    let restore = |group: &str, stored: ParamSet, fresh: &mut ParamSet| -> Result<()> {
        if !same_layout(&stored, fresh) {
            return Err(bad(path, format!("{group} tensors do not match the network")));
        }
        *fresh = stored;
        Ok(())
    };
    let optimizer = |group: &str, first: ParamSet, second: ParamSet, params: &ParamSet, st: &OptState| -> Result<Optimizer> {
        let names: BTreeSet<&String> = first.names().chain(second.names()).collect();
        if first.len() != second.len() || names.iter().any(|n| params.get(n).is_none()) {
            return Err(bad(path, format!("{group} optimizer state does not match the network")));
        }
        Ok(Optimizer {
            config: st.config,
            step: st.step,
            first,
            second,
        })
    };
    let (gp, gb, gm, gv) = (take("g.param"), take("g.buffer"), take("g.opt.first"), take("g.opt.second"));
    restore("g.param", gp, trainer.generator.params_mut())?;
    restore("g.buffer", gb, trainer.generator.buffers_mut())?;
    trainer.g_opt = optimizer("generator", gm, gv, trainer.generator.params(), &header.g_optimizer)?;
    let (dp, dm, dv) = (take("d.param"), take("d.opt.first"), take("d.opt.second"));
    match &mut trainer.discriminator {
        Some(d) => {
            restore("d.param", dp, &mut d.params)?;
            trainer.d_opt = optimizer("discriminator", dm, dv, &d.params, &header.d_optimizer)?;
        }
        None if dp.is_empty() && dm.is_empty() && dv.is_empty() => {}
        None => return Err(bad(path, "discriminator tensors for a variant without one")),
    }
    if let Some((g, _)) = sets.first() {
        return Err(bad(path, format!("unknown tensor group `{g}`")));
    }
    trainer.epoch = header.epoch;
    Ok(trainer)
}

/// [`load_checkpoint`], additionally requiring that `cfg` builds the same
/// networks (variant and spec fingerprints).
pub fn load_checkpoint_for(path: &Path, cfg: &TrainConfig) -> Result<Trainer> {
    let t = load_checkpoint(path)?;
    if t.config.variant != cfg.variant {
        return Err(bad(
            path,
            format!("checkpoint is {}, config asks for {}", t.config.variant, cfg.variant),
        ));
    }
    if fingerprints(&t.config) != fingerprints(cfg) {
        return Err(bad(path, "network fingerprint mismatch with the current config"));
    }
    Ok(t)
}
