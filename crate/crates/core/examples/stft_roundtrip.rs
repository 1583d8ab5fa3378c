//! Analysis/synthesis round trip on a synthetic utterance.

use crgan::corpus::synthesize_clean;
use crgan::signal::{istft, snr_db, stft, FRAME_LENGTH};

fn main() -> crgan::Result<()> {
    let clean = synthesize_clean(1, 2.0)?;
    let spec = stft(&clean)?;
    let back = istft(&spec)?;
    let (frames, bins) = spec.shape();
    println!("{} samples -> {frames} frames x {bins} bins -> {} samples", clean.len(), back.len());
    let snr = snr_db(&clean.samples, &back.samples, FRAME_LENGTH, back.len() - FRAME_LENGTH);
    println!("interior reconstruction SNR {snr:.1} dB");
    Ok(())
}
