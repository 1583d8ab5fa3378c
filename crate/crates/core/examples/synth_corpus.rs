//! Render a small synthetic corpus: `cargo run --example synth_corpus -- <dir>`.

use crgan::corpus::{build_manifest, write_corpus, CorpusConfig, Split};

fn main() -> crgan::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic-corpus".into());
    let cfg = CorpusConfig {
        train_clean: 4,
        ..CorpusConfig::default()
    };
    let records = build_manifest(&cfg)?;
    write_corpus(out.as_ref(), &records)?;
    let train = records.iter().filter(|r| r.split == Split::Train).count();
    println!("{} mixtures ({train} train) written to {out}", records.len());
    for r in records.iter().take(5) {
        if let (Some(kind), Some(snr)) = (r.noise_kind, r.snr_db) {
            println!("  {} {kind} {snr} dB", r.id);
        }
    }
    Ok(())
}
