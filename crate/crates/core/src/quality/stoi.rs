//! Short-time objective intelligibility.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::measures::aligned;
use crate::error::{Error, Result};
use crate::signal::{resample, Waveform, SAMPLE_RATE};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const NFFT: usize = 512;
const BANDS: usize = 15;
const LOWEST_CENTER: f64 = 150.0;
/// Frames per intermediate-intelligibility segment (384 ms).
pub const SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;

fn hanning(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n as f64 + 1.0)).cos()))
        .collect()
}

fn frame_starts(len: usize) -> Vec<usize> {
    // frames start every FRAME/2 samples while start < len - FRAME
    if len <= FRAME {
        return vec![];
    }
    (0..len - FRAME).step_by(FRAME / 2).collect()
}

/// Drop frames more than 40 dB below the loudest clean frame from both
/// signals and overlap-add the rest.
fn remove_silent(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts = frame_starts(x.len());
    let level: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = x[s..s + FRAME].iter().zip(w).map(|(a, b)| (a * b).powi(2)).sum();
            20.0 * (e.sqrt() / (FRAME as f64).sqrt() + f64::EPSILON).log10()
        })
        .collect();
    let top = level.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&level)
        .filter(|(_, &l)| l - top + DYN_RANGE_DB > 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if keep.is_empty() { 0 } else { (keep.len() - 1) * FRAME / 2 + FRAME };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in keep.iter().enumerate() {
        let o = j * FRAME / 2;
        for i in 0..FRAME {
            xs[o + i] += x[s + i] * w[i];
            ys[o + i] += y[s + i] * w[i];
        }
    }
    (xs, ys)
}

/// One-third-octave band matrix over the `NFFT/2 + 1` bins; bands whose
/// upper edge falls past Nyquist are dropped.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let f: Vec<f64> = (0..=NFFT / 2).map(|i| i as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |target: f64| {
        f.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).powi(2).total_cmp(&(b.1 - target).powi(2)))
            .map(|(i, _)| i)
            .unwrap()
    };
    let mut bands: Vec<(usize, usize)> = (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let cf = LOWEST_CENTER * 2f64.powf(k / 3.0);
            let lo = (cf * LOWEST_CENTER * 2f64.powf((k - 1.0) / 3.0)).sqrt();
            let hi = (cf * LOWEST_CENTER * 2f64.powf((k + 1.0) / 3.0)).sqrt();
            (nearest(lo), nearest(hi))
        })
        .collect();
    // keep bands up to the last one whose width does not shrink
    let width: Vec<usize> = bands.iter().map(|(a, b)| b - a).collect();
    let last = (1..width.len())
        .rev()
        .find(|&i| width[i] >= width[i - 1] && width[i] != 0)
        .unwrap_or(0);
    bands.truncate(last + 1);
    bands
}

fn band_envelopes(x: &[f64], w: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let starts = frame_starts(x.len());
    let mut env = vec![Vec::with_capacity(starts.len()); bands.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for s in starts {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex64::new(x[s + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        for (j, &(lo, hi)) in bands.iter().enumerate() {
            let p: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            env[j].push(p.sqrt());
        }
    }
    env
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        num += x * y;
        na += x * x;
        nb += y * y;
    }
    num / (na.sqrt() * nb.sqrt() + f64::EPSILON)
}

/// STOI of `degraded` against `clean`, clipped to `[0, 1]`.
pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    let (c, d) = aligned(clean, degraded)?;
    let x = resample(c, SAMPLE_RATE, FS);
    let y = resample(d, SAMPLE_RATE, FS);
    let w = hanning(FRAME);
    let (x, y) = remove_silent(&x, &y, &w);
    let bands = third_octave_bands();
    let xe = band_envelopes(&x, &w, &bands);
    let ye = band_envelopes(&y, &w, &bands);
    let frames = xe[0].len();
    if frames < SEGMENT_FRAMES {
        return Err(Error::TooShort {
            len: c.len(),
            frame: SEGMENT_FRAMES * FRAME / 2 * SAMPLE_RATE as usize / FS as usize,
        });
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in SEGMENT_FRAMES..=frames {
        for (xb, yb) in xe.iter().zip(&ye) {
            let xs = &xb[m - SEGMENT_FRAMES..m];
            let ys = &yb[m - SEGMENT_FRAMES..m];
            let ex: f64 = xs.iter().map(|v| v * v).sum();
            let ey: f64 = ys.iter().map(|v| v * v).sum();
            let alpha = (ex / ey).sqrt();
            let yp: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(&yv, &xv)| {
                    let a = if alpha.is_finite() { alpha * yv } else { 0.0 };
                    a.min(xv * clip)
                })
                .collect();
            total += correlation(xs, &yp);
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}
