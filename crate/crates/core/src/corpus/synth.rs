//! Speech-like and noise signal generators, and SNR mixing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{derive_seed, NoiseKind};
use crate::error::{Error, Result};
use crate::signal::{Waveform, SAMPLE_RATE};

const FS: f64 = SAMPLE_RATE as f64;
pub const MIN_DURATION_S: f64 = 0.5;
pub const MAX_DURATION_S: f64 = 10.0;
/// Peak level of a normalized mixture pair.
pub const MIX_PEAK: f64 = 0.9;

/// First three formants (Hz) of a few vowel qualities.
const VOWELS: [[f64; 3]; 8] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [660.0, 1720.0, 2410.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [440.0, 1020.0, 2240.0],
    [490.0, 1350.0, 1690.0],
];
const FORMANT_BW: [f64; 3] = [80.0, 110.0, 160.0];
const FORMANT_GAIN: [f64; 3] = [1.0, 0.8, 0.5];

/// Two-pole resonator with coefficients refreshed per sample.
#[derive(Default, Clone, Copy)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64) -> f64 {
        let r = (-PI * bw / FS).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq / FS).cos();
        let a2 = -r * r;
        let y = (1.0 - r) * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Segment {
    len: usize,
    voiced: bool,
    vowel: [f64; 3],
    f0_start: f64,
    f0_end: f64,
    frication: bool,
}

/// Deterministic speech-like signal: a harmonic source with a drifting
/// pitch, shaped by three moving formants, in syllables separated by pauses.
/// Peak level is 0.5.
pub fn synthesize_clean(seed: u64, duration_s: f64) -> Result<Waveform> {
    if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&duration_s) {
        return Err(Error::Invalid(format!(
            "duration {duration_s} s outside [{MIN_DURATION_S}, {MAX_DURATION_S}]"
        )));
    }
    let n = (duration_s * FS).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_f0: f64 = rng.gen_range(95.0..230.0);
    let vt_scale: f64 = rng.gen_range(0.9..1.15);

    let mut plan = Vec::new();
    let mut total = 0usize;
    // short lead-in silence
    let lead = (rng.gen_range(0.02..0.12) * FS) as usize;
    plan.push(Segment {
        len: lead,
        voiced: false,
        vowel: VOWELS[0],
        f0_start: base_f0,
        f0_end: base_f0,
        frication: false,
    });
    total += lead;
    while total < n {
        let voiced = rng.gen_bool(0.78);
        let len = if voiced {
            rng.gen_range(0.10..0.32)
        } else {
            rng.gen_range(0.04..0.28)
        };
        let len = (len * FS) as usize;
        let mut vowel = VOWELS[rng.gen_range(0..VOWELS.len())];
        vowel.iter_mut().for_each(|f| *f *= vt_scale);
        plan.push(Segment {
            len,
            voiced,
            vowel,
            f0_start: base_f0 * rng.gen_range(0.85..1.2),
            f0_end: base_f0 * rng.gen_range(0.8..1.15),
            frication: !voiced && rng.gen_bool(0.35),
        });
        total += len;
    }

    let mut out = Vec::with_capacity(n);
    let mut formants = plan[0].vowel;
    let mut res = [Resonator::default(); 3];
    let mut fric = Resonator::default();
    let mut phase = 0.0f64;
    let ramp = (0.02 * FS) as usize;
    let tilt: Vec<f64> = (0..=64).map(|h| (h.max(1) as f64).powf(-0.8)).collect();
    'outer: for seg in &plan {
        for i in 0..seg.len {
            if out.len() == n {
                break 'outer;
            }
            let frac = i as f64 / seg.len.max(1) as f64;
            let env_edge = (i.min(seg.len - 1 - i) as f64 / ramp as f64).min(1.0);
            let env = 0.5 - 0.5 * (PI * env_edge).cos();
            // formants glide toward the segment's targets
            for k in 0..3 {
                formants[k] += (seg.vowel[k] - formants[k]) * 0.002;
            }
            let mut x = 0.0;
            if seg.voiced {
                let f0 = seg.f0_start + (seg.f0_end - seg.f0_start) * frac;
                phase = (phase + 2.0 * PI * f0 / FS) % (2.0 * PI);
                let harmonics = ((5000.0 / f0) as usize).min(64);
                let mut src = 0.0;
                for h in 1..=harmonics {
                    src += (h as f64 * phase).sin() * tilt[h];
                }
                src += 0.03 * rng.sample::<f64, _>(StandardNormal);
                for k in 0..3 {
                    x += FORMANT_GAIN[k] * res[k].step(src, formants[k], FORMANT_BW[k]);
                }
                x *= env;
            } else {
                for r in res.iter_mut() {
                    r.step(0.0, 1000.0, 100.0);
                }
            }
            if seg.frication {
                let w: f64 = rng.sample(StandardNormal);
                x += 0.15 * env * fric.step(w, 4500.0, 1500.0);
            }
            out.push(x);
        }
    }
    out.resize(n, 0.0);
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(out, SAMPLE_RATE)
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Kellet's economy pink filter over white noise.
fn pink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    white(rng, n)
        .into_iter()
        .map(|w| {
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

/// Noise of the given kind, `len` samples at 16 kHz.
pub fn synthesize_noise(kind: NoiseKind, seed: u64, len: usize) -> Result<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = |i: usize| i as f64 / FS;
    let samples = match kind {
        NoiseKind::White => white(&mut rng, len),
        NoiseKind::Pink => pink(&mut rng, len),
        NoiseKind::TonalHarmonic => {
            let f0: f64 = rng.gen_range(60.0..320.0);
            let wobble: f64 = rng.gen_range(0.1..0.6);
            let mut tones: Vec<(f64, f64, f64)> = (1..=8)
                .map(|h| (f0 * h as f64, 1.0 / h as f64, rng.gen_range(0.0..2.0 * PI)))
                .collect();
            for _ in 0..3 {
                tones.push((rng.gen_range(500.0..3500.0), 0.4, rng.gen_range(0.0..2.0 * PI)));
            }
            let hiss = white(&mut rng, len);
            (0..len)
                .map(|i| {
                    let drift = 1.0 + 0.004 * (2.0 * PI * wobble * t(i)).sin();
                    tones
                        .iter()
                        .map(|&(f, a, p)| a * (2.0 * PI * f * drift * t(i) + p).sin())
                        .sum::<f64>()
                        + 0.02 * hiss[i]
                })
                .collect()
        }
        NoiseKind::Modulated => {
            let fm1: f64 = rng.gen_range(2.0..8.0);
            let fm2: f64 = rng.gen_range(0.3..1.5);
            let base = pink(&mut rng, len);
            base.into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let m = 1.0 + 0.9 * (2.0 * PI * fm1 * t(i)).sin();
                    v * m * (1.0 + 0.5 * (2.0 * PI * fm2 * t(i)).sin())
                })
                .collect()
        }
        NoiseKind::BabbleSurrogate => {
            let talkers = 6;
            let dur = (len as f64 / FS).clamp(MIN_DURATION_S, MAX_DURATION_S);
            let mut acc = vec![0.0; len];
            for k in 0..talkers {
                let v = synthesize_clean(derive_seed(seed, &[0xBABB1E, k]), dur)?;
                let shift = rng.gen_range(0..v.len());
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += v.samples[(i + shift) % v.len()];
                }
            }
            acc
        }
    };
    Waveform::new(samples, SAMPLE_RATE)
}

/// A clean/noisy pair sharing one gain.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub clean: Waveform,
    pub noisy: Waveform,
    /// Gain applied to both signals by peak normalization.
    pub gain: f64,
}

/// Mix `noise` (looped or cropped to the clean length) at `snr_db`, then
/// scale the pair jointly so the larger peak sits at [`MIX_PEAK`].
/// `snr_db = +inf` passes the clean signal through.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture> {
    if clean.energy() == 0.0 {
        return Err(Error::ZeroEnergy("clean"));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Invalid(format!("SNR {snr_db} dB")));
    }
    let n = clean.len();
    let noisy: Vec<f64> = if snr_db == f64::INFINITY {
        clean.samples.clone()
    } else {
        if noise.is_empty() || noise.energy() == 0.0 {
            return Err(Error::ZeroEnergy("noise"));
        }
        let looped: Vec<f64> = (0..n).map(|i| noise.samples[i % noise.len()]).collect();
        let pn = looped.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if pn == 0.0 {
            return Err(Error::ZeroEnergy("noise"));
        }
        let g = (clean.power() / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
        clean.samples.iter().zip(&looped).map(|(c, v)| c + g * v).collect()
    };
    let noisy = Waveform::new(noisy, clean.sample_rate)?;
    let gain = MIX_PEAK / noisy.peak().max(clean.peak());
    Ok(Mixture {
        clean: clean.scaled(gain),
        noisy: noisy.scaled(gain),
        gain,
    })
}
