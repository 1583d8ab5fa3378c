//! Frame-based distortion measures behind the composite scores.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{resample, Waveform, SAMPLE_RATE};

pub const SEG_SNR_MIN: f64 = -10.0;
pub const SEG_SNR_MAX: f64 = 35.0;
/// Frames whose clean energy sits more than this far below the loudest
/// frame count as silence.
pub const VOICED_RANGE_DB: f64 = 40.0;
/// Fraction of best frames kept by the trimmed means.
pub const TRIM_KEEP: f64 = 0.95;
pub const LPC_ORDER: usize = 10;
pub const LLR_CEILING: f64 = 2.0;
const ANALYSIS_RATE: u32 = 8_000;

const CENT_FREQ: [f64; 25] = [
    50.0, 120.0, 190.0, 260.0, 330.0, 400.0, 470.0, 540.0, 617.372, 703.378, 798.717, 904.128, 1020.38, 1148.30,
    1288.72, 1442.54, 1610.70, 1794.16, 1993.93, 2211.08, 2446.71, 2701.97, 2978.04, 3276.17, 3597.63,
];
const BANDWIDTH: [f64; 25] = [
    70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 77.3724, 86.0056, 95.3398, 105.411, 116.256, 127.914, 140.423, 153.823,
    168.154, 183.457, 199.776, 217.153, 235.631, 255.255, 276.072, 298.126, 321.465, 346.136,
];
const WSS_KMAX: f64 = 20.0;
const WSS_KLOCMAX: f64 = 1.0;
const FW_GAMMA: f64 = 0.2;

/// Trim both signals to the shorter length; both must be 16 kHz.
pub(crate) fn aligned<'a>(clean: &'a Waveform, degraded: &'a Waveform) -> Result<(&'a [f64], &'a [f64])> {
    for w in [clean, degraded] {
        if w.sample_rate != SAMPLE_RATE {
            return Err(Error::Invalid(format!(
                "quality measures expect {SAMPLE_RATE} Hz, got {}",
                w.sample_rate
            )));
        }
    }
    let n = clean.len().min(degraded.len());
    Ok((&clean.samples[..n], &degraded.samples[..n]))
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    let count = if len >= frame { (len - frame) / hop + 1 } else { 0 };
    (0..count).map(move |i| i * hop)
}

/// Symmetric Hann window that excludes the zero endpoints.
fn hanning(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n as f64 + 1.0)).cos()))
        .collect()
}

fn trimmed_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let keep = ((v.len() as f64 * TRIM_KEEP).round() as usize).clamp(1, v.len());
    v[..keep].iter().sum::<f64>() / keep as f64
}

/// Segmental SNR over 400/160 frames. Per-frame values are clamped to
/// `[-10, 35]` dB and averaged over frames within 40 dB of the loudest
/// clean frame.
pub fn seg_snr(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    let (c, d) = aligned(clean, degraded)?;
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroEnergy("clean"));
    }
    let (frame, hop) = (crate::signal::FRAME_LENGTH, crate::signal::HOP);
    let frames: Vec<(f64, f64)> = frame_starts(c.len(), frame, hop)
        .map(|s| {
            let mut sig = 0.0;
            let mut err = 0.0;
            for i in s..s + frame {
                sig += c[i] * c[i];
                err += (c[i] - d[i]).powi(2);
            }
            (sig, err)
        })
        .collect();
    if frames.is_empty() {
        return Err(Error::TooShort {
            len: c.len(),
            frame,
        });
    }
    let loudest = frames.iter().map(|f| f.0).fold(0.0, f64::max);
    let floor = loudest * 10f64.powf(-VOICED_RANGE_DB / 10.0);
    let vals: Vec<f64> = frames
        .iter()
        .filter(|f| f.0 > floor)
        .map(|&(sig, err)| {
            let snr = if err == 0.0 {
                SEG_SNR_MAX
            } else {
                10.0 * (sig / err).log10()
            };
            snr.clamp(SEG_SNR_MIN, SEG_SNR_MAX)
        })
        .collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

struct Analysis {
    clean: Vec<f64>,
    degraded: Vec<f64>,
    frame: usize,
    hop: usize,
    window: Vec<f64>,
}

impl Analysis {
    /// Both signals at 8 kHz with 30 ms frames and 75% overlap.
    fn new(clean: &Waveform, degraded: &Waveform) -> Result<Self> {
        let (c, d) = aligned(clean, degraded)?;
        let frame = (0.030 * ANALYSIS_RATE as f64).round() as usize;
        let a = Self {
            clean: resample(c, SAMPLE_RATE, ANALYSIS_RATE),
            degraded: resample(d, SAMPLE_RATE, ANALYSIS_RATE),
            frame,
            hop: frame / 4,
            window: hanning(frame),
        };
        if a.clean.len() < frame {
            return Err(Error::TooShort {
                len: c.len(),
                frame: frame * 2,
            });
        }
        Ok(a)
    }

    fn frames(&self) -> impl Iterator<Item = (Vec<f64>, Vec<f64>)> + '_ {
        frame_starts(self.clean.len(), self.frame, self.hop).map(|s| {
            let win = |x: &[f64]| {
                x[s..s + self.frame]
                    .iter()
                    .zip(&self.window)
                    .map(|(a, b)| a * b)
                    .collect::<Vec<_>>()
            };
            (win(&self.clean), win(&self.degraded))
        })
    }
}

fn autocorr(x: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|k| x[..x.len() - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Levinson-Durbin; returns `[1, a_1, .., a_p]` or `None` if the
/// recursion is not stable.
fn lpc(r: &[f64]) -> Option<Vec<f64>> {
    let p = r.len() - 1;
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if !(err > 0.0) {
        return None;
    }
    for i in 1..=p {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return None;
        }
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    Some(a)
}

/// `a^T R a` with `R` the Toeplitz matrix of `r`.
fn quad_form(a: &[f64], r: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i] * a[j] * r[i.abs_diff(j)];
        }
    }
    s
}

/// Per-frame log-likelihood ratios (frames skipped where either LPC fit is
/// unusable).
pub fn llr_frames(clean: &Waveform, degraded: &Waveform) -> Result<Vec<f64>> {
    let an = Analysis::new(clean, degraded)?;
    let frames: Vec<_> = an.frames().collect();
    let energies: Vec<(f64, f64)> = frames
        .iter()
        .map(|(c, d)| (c.iter().map(|v| v * v).sum(), d.iter().map(|v| v * v).sum()))
        .collect();
    let max_c = energies.iter().map(|e| e.0).fold(0.0, f64::max);
    let max_d = energies.iter().map(|e| e.1).fold(0.0, f64::max);
    let mut out = Vec::new();
    for ((c, d), (ec, ed)) in frames.iter().zip(energies) {
        // numerically silent frames have no meaningful LPC fit
        if ec <= 1e-12 * max_c || ed <= 1e-12 * max_d {
            continue;
        }
        let rc = autocorr(c, LPC_ORDER);
        let rd = autocorr(d, LPC_ORDER);
        let (Some(ac), Some(ad)) = (lpc(&rc), lpc(&rd)) else {
            continue;
        };
        let v = (quad_form(&ad, &rc) / quad_form(&ac, &rc)).ln();
        if v.is_finite() {
            out.push(v.min(LLR_CEILING));
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("LLR frames (all skipped)"));
    }
    Ok(out)
}

/// Log-likelihood ratio: mean of the lowest 95% of frame values.
pub fn llr(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    Ok(trimmed_mean(llr_frames(clean, degraded)?))
}

struct CriticalBands {
    filters: Vec<Vec<f64>>,
    nfft: usize,
}

impl CriticalBands {
    fn new(frame: usize, rate: u32) -> Self {
        let nfft = (2 * frame).next_power_of_two();
        let half = nfft / 2;
        let max_freq = rate as f64 / 2.0;
        let min_factor = (-30.0f64 / (2.0 * 2.303)).exp();
        let bw_min = BANDWIDTH[0];
        let filters = CENT_FREQ
            .iter()
            .zip(BANDWIDTH)
            .map(|(&cf, bwhz)| {
                let f0 = (cf / max_freq * half as f64).floor();
                let bw = bwhz / max_freq * half as f64;
                let norm = bw_min.ln() - bwhz.ln();
                (0..half)
                    .map(|j| {
                        let v = (-11.0 * ((j as f64 - f0) / bw).powi(2) + norm).exp();
                        if v > min_factor {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self { filters, nfft }
    }

    fn spectrum(&self, frame: &[f64], power: bool) -> Vec<f64> {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(self.nfft);
        let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.nfft, Complex64::new(0.0, 0.0));
        fft.process(&mut buf);
        buf[..self.nfft / 2]
            .iter()
            .map(|c| if power { c.norm_sqr() } else { c.norm() })
            .collect()
    }

    fn band_energies(&self, spec: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|f| f.iter().zip(spec).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Nearest local maximum reached by following the slope from each band.
fn local_peaks(energy: &[f64], slope: &[f64]) -> Vec<f64> {
    let last = slope.len();
    (0..last)
        .map(|i| {
            if slope[i] > 0.0 {
                let mut n = i;
                while n < last && slope[n] > 0.0 {
                    n += 1;
                }
                energy[n]
            } else {
                let mut n = i as isize;
                while n >= 0 && slope[n as usize] <= 0.0 {
                    n -= 1;
                }
                energy[(n + 1) as usize]
            }
        })
        .collect()
}

fn slope_weights(energy: &[f64], slope: &[f64]) -> Vec<f64> {
    let peaks = local_peaks(energy, slope);
    let db_max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..slope.len())
        .map(|i| {
            let wmax = WSS_KMAX / (WSS_KMAX + db_max - energy[i]);
            let wloc = WSS_KLOCMAX / (WSS_KLOCMAX + peaks[i] - energy[i]);
            wmax * wloc
        })
        .collect()
}

/// Per-frame weighted spectral-slope distances.
pub fn wss_frames(clean: &Waveform, degraded: &Waveform) -> Result<Vec<f64>> {
    let an = Analysis::new(clean, degraded)?;
    let bands = CriticalBands::new(an.frame, ANALYSIS_RATE);
    let analyse = |x: &[f64]| {
        let e: Vec<f64> = bands
            .band_energies(&bands.spectrum(x, true))
            .into_iter()
            .map(|v| 10.0 * v.max(1e-10).log10())
            .collect();
        let s: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        (e, s)
    };
    let out: Vec<f64> = an
        .frames()
        .map(|(c, d)| {
            let (ec, sc) = analyse(&c);
            let (ed, sd) = analyse(&d);
            let wc = slope_weights(&ec, &sc);
            let wd = slope_weights(&ed, &sd);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..sc.len() {
                let w = 0.5 * (wc[i] + wd[i]);
                num += w * (sc[i] - sd[i]).powi(2);
                den += w;
            }
            num / den
        })
        .collect();
    if out.is_empty() {
        return Err(Error::Empty("WSS frames"));
    }
    Ok(out)
}

/// Weighted spectral slope: mean of the lowest 95% of frame distances.
pub fn wss(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    Ok(trimmed_mean(wss_frames(clean, degraded)?))
}

/// Frequency-weighted segmental SNR in dB at 16 kHz: critical-band
/// magnitudes normalized per frame, band weights `clean^0.2`, per-frame
/// clamp to `[-10, 35]`, silent clean frames skipped.
pub fn fw_seg_snr(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    let (c, d) = aligned(clean, degraded)?;
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroEnergy("clean"));
    }
    let frame = (0.030 * SAMPLE_RATE as f64).round() as usize;
    let hop = frame / 4;
    if c.len() < frame {
        return Err(Error::TooShort { len: c.len(), frame });
    }
    let window = hanning(frame);
    let bands = CriticalBands::new(frame, SAMPLE_RATE);
    let energies: Vec<f64> = frame_starts(c.len(), frame, hop)
        .map(|s| c[s..s + frame].iter().map(|v| v * v).sum())
        .collect();
    let loudest = energies.iter().copied().fold(0.0, f64::max);
    let floor = loudest * 10f64.powf(-VOICED_RANGE_DB / 10.0);
    let mut vals = Vec::new();
    for (s, e) in frame_starts(c.len(), frame, hop).zip(energies) {
        if e <= floor {
            continue;
        }
        let win = |x: &[f64]| -> Vec<f64> { x[s..s + frame].iter().zip(&window).map(|(a, b)| a * b).collect() };
        let normed = |x: &[f64]| {
            let spec = bands.spectrum(&win(x), false);
            let total: f64 = spec.iter().sum();
            let spec: Vec<f64> = if total > 0.0 { spec.iter().map(|v| v / total).collect() } else { spec };
            bands.band_energies(&spec)
        };
        let ec = normed(c);
        let ed = normed(d);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in ec.iter().zip(&ed) {
            let err = ((a - b) * (a - b)).max(f64::EPSILON);
            let w = a.powf(FW_GAMMA);
            num += w * 10.0 * (a * a / err).log10();
            den += w;
        }
        let v = if den > 0.0 { num / den } else { SEG_SNR_MIN };
        vals.push(v.clamp(SEG_SNR_MIN, SEG_SNR_MAX));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}
