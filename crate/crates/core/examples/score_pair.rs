//! Score a noisy mixture against its clean reference with every measure.

use crgan::corpus::{mix_at_snr, synthesize_clean, synthesize_noise, NoiseKind};
use crgan::quality::{composite, score_pair, QualitySource};

fn main() -> crgan::Result<()> {
    let clean = synthesize_clean(4, 2.5)?;
    let noise = synthesize_noise(NoiseKind::BabbleSurrogate, 9, clean.len())?;
    for snr in [0.0, 10.0, 20.0] {
        let m = mix_at_snr(&clean, &noise, snr)?;
        let s = score_pair(&QualitySource::Surrogate, &m.clean, &m.noisy)?;
        println!(
            "{snr:>4} dB  PESQ[surrogate] {:.3}  STOI {:.3}  CSIG {:.3}  CBAK {:.3}  COVL {:.3}  segSNR {:.2}",
            s.pesq, s.stoi, s.csig, s.cbak, s.covl, s.segsnr
        );
    }
    let (csig, cbak, covl) = composite(2.0, 1.0, 50.0, 5.0);
    println!("composite(2, 1, 50, 5) = ({csig:.4}, {cbak:.4}, {covl:.4})");
    Ok(())
}
