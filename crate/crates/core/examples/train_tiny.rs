//! Train a tiny model for a couple of epochs on an in-memory synthetic
//! corpus: `cargo run --release --example train_tiny -- [VARIANT] [OUT]`.

use crgan::arch::{ArchConfig, ModelVariant};
use crgan::corpus::{build_manifest, CorpusConfig};
use crgan::train::{train, TrainConfig};

fn main() -> crgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: ModelVariant = args.next().as_deref().unwrap_or("R-CRGAN").parse()?;
    let out = args.next().unwrap_or_else(|| "tiny-run".into());
    let records = build_manifest(&CorpusConfig {
        train_clean: 2,
        ..CorpusConfig::default()
    })?;
    let mut cfg = TrainConfig::new(variant);
    cfg.arch = ArchConfig::tiny();
    cfg.epochs = 2;
    cfg.utterances_per_epoch = 8;
    if !cfg.samples_utterances() {
        cfg.batch_size = 4;
    }
    let outcome = train(&cfg, &records, out.as_ref())?;
    for e in &outcome.epochs {
        println!("epoch {} d {:.4} g {:.4} val_q {:?}", e.epoch, e.d_total, e.g_total, e.val_q);
    }
    println!("checkpoint {}", outcome.checkpoint.display());
    Ok(())
}
