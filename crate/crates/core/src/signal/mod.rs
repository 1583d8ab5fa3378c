//! Time-frequency front end: STFT analysis and weighted overlap-add
//! synthesis, log-magnitude features, phase-sensitive masks and masking.
//!
//! Framing is fixed at 25 ms / 10 ms on 16 kHz audio (400-sample Hann
//! window, 160-sample hop) with a 512-point FFT, giving 257 bins per frame.
//! No centering is applied: frame `t` covers samples `[t*hop, t*hop + 400)`
//! and the trailing partial frame is discarded.

mod resample;
mod wav;

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub use resample::resample;
pub use wav::{read_wav, write_wav};

pub const SAMPLE_RATE: u32 = 16_000;
pub const FRAME_LENGTH: usize = 400;
pub const HOP: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const NUM_BINS: usize = FFT_SIZE / 2 + 1;
/// Floor applied to magnitudes before `ln` and to the PSM denominator.
pub const EPS_FLOOR: f64 = 1e-8;

/// Mono audio at a fixed sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Framing parameters of an STFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_length: FRAME_LENGTH,
            hop: HOP,
            fft_size: FFT_SIZE,
        }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `1 + floor((n - frame_length) / hop)`, or 0 if `n` is shorter than a frame.
    pub fn num_frames(&self, n: usize) -> usize {
        if n < self.frame_length {
            0
        } else {
            1 + (n - self.frame_length) / self.hop
        }
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Complex STFT with everything needed to invert it.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    /// Indexed `(frame, bin)`.
    pub values: Array2<Complex64>,
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Arc<[f64]>,
    pub original_len: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }

    /// Same framing, new values.
    pub fn with_values(&self, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(shape_err("spectrogram values", self.values.dim(), values.dim()));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Replace magnitudes, keeping this spectrogram's phase. Bins with zero
    /// magnitude get phase zero.
    pub fn with_magnitude(&self, magnitude: &Array2<f64>) -> Result<Self> {
        if magnitude.dim() != self.values.dim() {
            return Err(shape_err("magnitude", self.values.dim(), magnitude.dim()));
        }
        let mut values = self.values.clone();
        Zip::from(&mut values).and(magnitude).for_each(|v, &m| {
            let n = v.norm();
            *v = if n > 0.0 {
                *v * (m / n)
            } else {
                Complex64::new(m, 0.0)
            };
        });
        self.with_values(values)
    }

    /// Frames `[start, start + len)` as a stand-alone spectrogram.
    pub fn frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.num_frames() {
            return Err(Error::Invalid(format!(
                "frame range {start}..{} exceeds {} frames",
                start + len,
                self.num_frames()
            )));
        }
        let values = self
            .values
            .slice(ndarray::s![start..start + len, ..])
            .to_owned();
        let original_len = if len == 0 {
            0
        } else {
            (len - 1) * self.hop + self.frame_length
        };
        Ok(Self {
            values,
            original_len,
            ..self.clone()
        })
    }

    fn check_metadata(&self) -> Result<()> {
        let meta = |m: String| Err(Error::Metadata(m));
        if self.hop == 0 {
            return meta("hop is zero".into());
        }
        if self.frame_length == 0 || self.frame_length > self.fft_size {
            return meta(format!(
                "frame length {} incompatible with fft size {}",
                self.frame_length, self.fft_size
            ));
        }
        if self.num_bins() != self.fft_size / 2 + 1 {
            return meta(format!(
                "{} bins for fft size {}",
                self.num_bins(),
                self.fft_size
            ));
        }
        if self.window.len() != self.frame_length {
            return meta(format!(
                "window of {} samples for frame length {}",
                self.window.len(),
                self.frame_length
            ));
        }
        let frames = self.num_frames();
        if frames > 0 && self.original_len < (frames - 1) * self.hop + self.frame_length {
            return meta(format!(
                "original length {} cannot hold {frames} frames",
                self.original_len
            ));
        }
        Ok(())
    }
}

/// Log-magnitude features, `(frame, bin)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMagFeature {
    pub values: Array2<f64>,
}

/// Real-valued T-F mask, `(frame, bin)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTensor {
    pub values: Array2<f64>,
}

impl MaskTensor {
    pub fn constant(frames: usize, bins: usize, value: f64) -> Self {
        Self {
            values: Array2::from_elem((frames, bins), value),
        }
    }
}

fn shape_err(what: &'static str, expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::Shape {
        what,
        expected: vec![expected.0, expected.1],
        got: vec![got.0, got.1],
    }
}

/// STFT with the default 400/160/512 framing. Requires 16 kHz input.
pub fn stft(w: &Waveform) -> Result<Spectrogram> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Invalid(format!(
            "expected {SAMPLE_RATE} Hz input, got {} Hz",
            w.sample_rate
        )));
    }
    stft_with(w, StftConfig::default())
}

/// STFT with explicit framing and a periodic Hann window.
pub fn stft_with(w: &Waveform, cfg: StftConfig) -> Result<Spectrogram> {
    if cfg.hop == 0 || cfg.frame_length == 0 || cfg.frame_length > cfg.fft_size {
        return Err(Error::Invalid(format!("bad STFT config {cfg:?}")));
    }
    let n = w.len();
    if n < cfg.frame_length {
        return Err(Error::TooShort {
            len: n,
            frame: cfg.frame_length,
        });
    }
    let frames = cfg.num_frames(n);
    let bins = cfg.num_bins();
    let window: Arc<[f64]> = hann(cfg.frame_length).into();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut values = Array2::zeros((frames, bins));
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (k, (b, &s)) in buf
            .iter_mut()
            .zip(&w.samples[start..start + cfg.frame_length])
            .enumerate()
        {
            *b = Complex64::new(s * window[k], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..bins {
            values[[t, f]] = buf[f];
        }
    }
    Ok(Spectrogram {
        values,
        frame_length: cfg.frame_length,
        hop: cfg.hop,
        fft_size: cfg.fft_size,
        window,
        original_len: n,
        sample_rate: w.sample_rate,
    })
}

/// Weighted overlap-add inverse: each frame is windowed again and the sum is
/// divided by the per-sample sum of squared windows. Samples not covered by
/// any frame come out as zero.
pub fn istft(spec: &Spectrogram) -> Result<Waveform> {
    spec.check_metadata()?;
    let n = spec.original_len;
    let mut out = vec![0.0; n];
    let mut norm = vec![0.0; n];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(spec.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.fft_size];
    let bins = spec.num_bins();
    let scale = 1.0 / spec.fft_size as f64;
    for t in 0..spec.num_frames() {
        for f in 0..bins {
            buf[f] = spec.values[[t, f]];
        }
        // Hermitian completion; DC and Nyquist must be real.
        buf[0].im = 0.0;
        buf[bins - 1].im = 0.0;
        for f in bins..spec.fft_size {
            buf[f] = buf[spec.fft_size - f].conj();
        }
        ifft.process(&mut buf);
        let start = t * spec.hop;
        for (k, &w) in spec.window.iter().enumerate() {
            out[start + k] += buf[k].re * scale * w;
            norm[start + k] += w * w;
        }
    }
    for (o, &z) in out.iter_mut().zip(&norm) {
        if z > 1e-10 {
            *o /= z;
        } else {
            *o = 0.0;
        }
    }
    Waveform::new(out, spec.sample_rate)
}

pub fn log_magnitude(spec: &Spectrogram) -> LogMagFeature {
    LogMagFeature {
        values: spec.values.mapv(|c| c.norm().max(EPS_FLOOR).ln()),
    }
}

/// Phase-sensitive mask `|s|/|n| cos(theta)` clipped to `[0, 1]`, where
/// `theta` is the clean-minus-noisy phase and `n` is the noisy mixture.
pub fn psm(clean: &Spectrogram, noisy: &Spectrogram) -> Result<MaskTensor> {
    if clean.shape() != noisy.shape() {
        return Err(shape_err("psm inputs", noisy.shape(), clean.shape()));
    }
    let mut values = Array2::zeros(clean.shape());
    Zip::from(&mut values)
        .and(&clean.values)
        .and(&noisy.values)
        .for_each(|m, &s, &n| {
            // Re(s n*) = |s||n| cos(theta)
            let denom = n.norm().max(EPS_FLOOR);
            let v = (s * n.conj()).re / (denom * denom);
            *m = v.clamp(0.0, 1.0);
        });
    Ok(MaskTensor { values })
}

/// Scale each T-F point's magnitude by the mask; the noisy phase is kept.
pub fn apply_mask(noisy: &Spectrogram, mask: &MaskTensor) -> Result<Spectrogram> {
    if mask.values.dim() != noisy.shape() {
        return Err(shape_err("mask", noisy.shape(), mask.values.dim()));
    }
    let mut values = noisy.values.clone();
    Zip::from(&mut values)
        .and(&mask.values)
        .for_each(|v, &m| *v *= m);
    noisy.with_values(values)
}

/// Reconstruction SNR in dB over `[start, end)`.
pub fn snr_db(reference: &[f64], estimate: &[f64], start: usize, end: usize) -> f64 {
    let (mut sig, mut err) = (0.0, 0.0);
    for i in start..end.min(reference.len()).min(estimate.len()) {
        sig += reference[i] * reference[i];
        let d = reference[i] - estimate[i];
        err += d * d;
    }
    if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sig / err).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Waveform {
        Waveform::new((0..n).map(|i| f(i as f64 / 16_000.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn frame_counts() {
        let s = stft(&noise(16_000, 1)).unwrap();
        assert_eq!(s.shape(), (98, 257));
        let s = stft(&noise(400, 1)).unwrap();
        assert_eq!(s.shape(), (1, 257));
        assert!(matches!(
            stft(&noise(399, 1)),
            Err(Error::TooShort { len: 399, .. })
        ));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let w = from_fn(16_000, |t| (2.0 * PI * 1000.0 * t).sin());
        let s = stft(&w).unwrap();
        let mag = s.magnitude();
        for row in mag.rows() {
            let (arg, _) = row
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            assert_eq!(arg, 32);
        }
    }

    #[test]
    fn round_trip_white_noise() {
        let w = noise(16_000, 7);
        let y = istft(&stft(&w).unwrap()).unwrap();
        assert_eq!(y.len(), w.len());
        let snr = snr_db(&w.samples, &y.samples, FRAME_LENGTH, w.len() - FRAME_LENGTH);
        assert!(snr >= 60.0, "snr {snr}");
    }

    #[test]
    fn round_trip_chirp_max_error() {
        let w = from_fn(16_000, |t| 0.8 * (2.0 * PI * (100.0 * t + 1500.0 * t * t)).sin());
        let y = istft(&stft(&w).unwrap()).unwrap();
        let peak = w.peak();
        let end = stft(&w).unwrap().num_frames() * HOP;
        let max_err = (FRAME_LENGTH..end)
            .map(|i| (w.samples[i] - y.samples[i]).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1e-4 * peak, "max err {max_err}");
    }

    #[test]
    fn zero_spectrogram_gives_silence() {
        let mut s = stft(&noise(4000, 3)).unwrap();
        s.values.fill(Complex64::new(0.0, 0.0));
        let y = istft(&s).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn istft_rejects_bad_metadata() {
        let mut s = stft(&noise(4000, 3)).unwrap();
        s.window = hann(300).into();
        assert!(matches!(istft(&s), Err(Error::Metadata(_))));
        let mut s = stft(&noise(4000, 3)).unwrap();
        s.original_len = 100;
        assert!(matches!(istft(&s), Err(Error::Metadata(_))));
    }

    #[test]
    fn log_magnitude_values() {
        let mut s = stft(&noise(800, 3)).unwrap();
        s.values.fill(Complex64::new(0.0, 1.0));
        assert!(log_magnitude(&s).values.iter().all(|&v| v.abs() < 1e-15));
        s.values.fill(Complex64::new(0.0, 0.0));
        assert!(log_magnitude(&s)
            .values
            .iter()
            .all(|&v| v == EPS_FLOOR.ln()));
        s.values.fill(Complex64::new(std::f64::consts::E, 0.0));
        assert!(log_magnitude(&s)
            .values
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn psm_cases() {
        let w = noise(4000, 5);
        let s = stft(&w).unwrap();
        let m = psm(&s, &s).unwrap();
        assert!(m.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let mut zero = s.clone();
        zero.values.fill(Complex64::new(0.0, 0.0));
        assert!(psm(&zero, &s).unwrap().values.iter().all(|&v| v == 0.0));
        // zero-energy noisy bins stay finite
        assert!(psm(&s, &zero).unwrap().values.iter().all(|v| v.is_finite()));

        let mut a = s.clone();
        let mut b = s.clone();
        a.values.fill(Complex64::new(1.0, 0.0));
        b.values.fill(Complex64::new(2.0, 0.0));
        assert!(psm(&a, &b).unwrap().values.iter().all(|&v| v == 0.5));

        let short = stft(&noise(800, 5)).unwrap();
        assert!(matches!(psm(&short, &s), Err(Error::Shape { .. })));
    }

    #[test]
    fn apply_mask_cases() {
        let s = stft(&noise(4000, 9)).unwrap();
        let (t, f) = s.shape();
        let same = apply_mask(&s, &MaskTensor::constant(t, f, 1.0)).unwrap();
        assert_eq!(same.values, s.values);
        let silent = apply_mask(&s, &MaskTensor::constant(t, f, 0.0)).unwrap();
        assert!(silent.values.iter().all(|c| c.norm() == 0.0));
        assert!(apply_mask(&s, &MaskTensor::constant(t + 1, f, 1.0)).is_err());
    }

    #[test]
    fn with_magnitude_keeps_phase() {
        let s = stft(&noise(4000, 11)).unwrap();
        let doubled = s.with_magnitude(&(s.magnitude() * 2.0)).unwrap();
        for (a, b) in s.values.iter().zip(doubled.values.iter()) {
            assert!((a * 2.0 - b).norm() < 1e-9 * (1.0 + a.norm()));
        }
    }
}
