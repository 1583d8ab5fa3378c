//! Apply the clipped phase-sensitive mask computed from the clean signal.
//! This is the upper bound a mask estimator can reach.

use crgan::corpus::{mix_at_snr, synthesize_clean, synthesize_noise, NoiseKind};
use crgan::quality::{seg_snr, stoi};
use crgan::signal::{apply_mask, istft, psm, stft};

fn main() -> crgan::Result<()> {
    println!("{:<8} {:>12} {:>12} {:>8} {:>8}", "noise", "segSNR in", "segSNR out", "STOI in", "STOI out");
    for (i, kind) in NoiseKind::ALL.into_iter().enumerate() {
        let clean = synthesize_clean(i as u64, 2.0)?;
        let noise = synthesize_noise(kind, 50 + i as u64, clean.len())?;
        let m = mix_at_snr(&clean, &noise, 0.0)?;
        let (cs, ns) = (stft(&m.clean)?, stft(&m.noisy)?);
        let enhanced = istft(&apply_mask(&ns, &psm(&cs, &ns)?)?)?;
        let n = enhanced.len();
        let clean = crgan::signal::Waveform::new(m.clean.samples[..n].to_vec(), m.clean.sample_rate)?;
        let noisy = crgan::signal::Waveform::new(m.noisy.samples[..n].to_vec(), m.noisy.sample_rate)?;
        println!(
            "{:<8} {:>12.2} {:>12.2} {:>8.3} {:>8.3}",
            kind.name(),
            seg_snr(&clean, &noisy)?,
            seg_snr(&clean, &enhanced)?,
            stoi(&clean, &noisy)?,
            stoi(&clean, &enhanced)?
        );
    }
    Ok(())
}
