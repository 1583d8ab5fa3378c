//! Objective quality measures, the normalized score used by the metric
//! discriminator, and report tables.

mod measures;
mod report;
mod stoi;

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{write_wav, Waveform};

pub use measures::{fw_seg_snr, llr, llr_frames, seg_snr, wss, wss_frames, LPC_ORDER, SEG_SNR_MAX, SEG_SNR_MIN};
pub(crate) use report::write_text;
pub use report::{comparison_table, MetricReport, Provenance, UtteranceScores, COLUMNS};
pub use stoi::{stoi, SEGMENT_FRAMES};

pub const PESQ_MIN: f64 = -0.5;
pub const PESQ_MAX: f64 = 4.5;

/// Where the normalized quality score comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum QualitySource {
    /// Frequency-weighted segmental SNR mapped onto `[0, 1]`.
    Surrogate,
    /// External PESQ executable called as `plugin reference.wav degraded.wav`.
    Pesq { plugin: PathBuf },
}

impl QualitySource {
    pub fn provenance(&self) -> Provenance {
        match self {
            QualitySource::Surrogate => Provenance::Surrogate,
            QualitySource::Pesq { .. } => Provenance::Plugin,
        }
    }

    /// Normalized score in `[0, 1]`, 1 best.
    pub fn q_prime(&self, enhanced: &Waveform, reference: &Waveform) -> Result<f64> {
        match self {
            QualitySource::Surrogate => surrogate_q(enhanced, reference),
            QualitySource::Pesq { plugin } => Ok(normalize_pesq(run_pesq_plugin(plugin, reference, enhanced)?)),
        }
    }

    /// Score on the PESQ scale: the plugin's value, or the surrogate
    /// mapped linearly onto `[-0.5, 4.5]`.
    pub fn pesq_scale(&self, enhanced: &Waveform, reference: &Waveform) -> Result<f64> {
        match self {
            QualitySource::Surrogate => Ok(denormalize_pesq(surrogate_q(enhanced, reference)?)),
            QualitySource::Pesq { plugin } => run_pesq_plugin(plugin, reference, enhanced),
        }
    }
}

/// `(PESQ + 0.5) / 5`, clipped to `[0, 1]`.
pub fn normalize_pesq(pesq: f64) -> f64 {
    ((pesq - PESQ_MIN) / (PESQ_MAX - PESQ_MIN)).clamp(0.0, 1.0)
}

pub fn denormalize_pesq(q: f64) -> f64 {
    PESQ_MIN + q * (PESQ_MAX - PESQ_MIN)
}

/// Frequency-weighted segmental SNR, clamped to `[-10, 35]` dB and mapped
/// linearly onto `[0, 1]`.
pub fn surrogate_q(enhanced: &Waveform, reference: &Waveform) -> Result<f64> {
    let v = fw_seg_snr(reference, enhanced)?;
    Ok(((v - SEG_SNR_MIN) / (SEG_SNR_MAX - SEG_SNR_MIN)).clamp(0.0, 1.0))
}

/// Run an external PESQ tool. It receives the reference and degraded WAV
/// paths and must print a single score; anything else is an error.
pub fn run_pesq_plugin(plugin: &Path, reference: &Waveform, degraded: &Waveform) -> Result<f64> {
    let dir = tempfile::tempdir().map_err(|e| Error::Plugin(format!("temp dir: {e}")))?;
    let r = dir.path().join("reference.wav");
    let d = dir.path().join("degraded.wav");
    write_wav(&r, reference)?;
    write_wav(&d, degraded)?;
    let out = Command::new(plugin)
        .arg(&r)
        .arg(&d)
        .output()
        .map_err(|e| Error::Plugin(format!("{}: {e}", plugin.display())))?;
    if !out.status.success() {
        return Err(Error::Plugin(format!(
            "{} exited with {}: {}",
            plugin.display(),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let tokens: Vec<&str> = text.split_whitespace().collect();
    match tokens.as_slice() {
        [one] => one
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Plugin(format!("not a score: `{one}`"))),
        _ => Err(Error::Plugin(format!("expected one score on stdout, got `{}`", text.trim()))),
    }
}

/// Composite scores from PESQ-scale quality, LLR, WSS and segmental SNR,
/// each clipped to `[1, 5]`.
pub fn composite(pesq: f64, llr: f64, wss: f64, segsnr: f64) -> (f64, f64, f64) {
    let csig = 3.093 - 1.029 * llr + 0.603 * pesq - 0.009 * wss;
    let cbak = 1.634 + 0.478 * pesq - 0.007 * wss + 0.063 * segsnr;
    let covl = 1.594 + 0.805 * pesq - 0.512 * llr - 0.007 * wss;
    (csig.clamp(1.0, 5.0), cbak.clamp(1.0, 5.0), covl.clamp(1.0, 5.0))
}

/// Every score for one (clean, degraded) pair.
pub fn score_pair(source: &QualitySource, clean: &Waveform, degraded: &Waveform) -> Result<UtteranceScores> {
    let pesq = source.pesq_scale(degraded, clean)?;
    let l = llr(clean, degraded)?;
    let w = wss(clean, degraded)?;
    let s = seg_snr(clean, degraded)?;
    let (csig, cbak, covl) = composite(pesq, l, w, s);
    Ok(UtteranceScores {
        pesq,
        stoi: stoi(clean, degraded)?,
        csig,
        cbak,
        covl,
        segsnr: s,
    })
}
