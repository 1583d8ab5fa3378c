use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{chunk, mix_at_snr, synthesize_clean, synthesize_noise, Features, NoiseKind, Utterance};

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        encoder_channels: vec![2, 3],
        recurrent_hidden: 3,
        recurrent_layers: 1,
        disc_channels: vec![2, 2],
        lstm_hidden: 3,
        bilstm_hidden: 2,
        baseline_layers: 1,
    }
}

fn config(variant: ModelVariant) -> TrainConfig {
    let mut c = TrainConfig::new(variant);
    c.arch = tiny_arch();
    c.batch_size = if c.samples_utterances() { 1 } else { 2 };
    c.chunk_frames = 8;
    c.seed = 11;
    c
}

fn utterance(seed: u64) -> Utterance {
    let clean = synthesize_clean(seed, 1.5).unwrap();
    let noise = synthesize_noise(NoiseKind::White, seed + 100, clean.len()).unwrap();
    let m = mix_at_snr(&clean, &noise, 5.0).unwrap();
    Utterance {
        id: format!("u{seed}"),
        clean: m.clean,
        noisy: m.noisy,
    }
}

fn batch_for(cfg: &TrainConfig) -> Batch {
    let f = Features::from_utterance(&utterance(3)).unwrap();
    let mut chunks = chunk(&f, cfg.chunk_length(), cfg.partial).unwrap();
    chunks.truncate(cfg.batch_size);
    Batch::new(chunks).unwrap()
}

#[test]
fn incompatible_loss_is_a_config_error() {
    let mut c = config(ModelVariant::CrnMse);
    c.loss = LossConfig::new(Some(LossFamily::Wasserstein));
    assert!(matches!(Trainer::new(c), Err(Error::Config { key, .. }) if key == "loss.family"));
    let mut c = config(ModelVariant::MCrgan);
    c.batch_size = 4;
    assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "train.batch_size"));
}

#[test]
fn defaults_follow_variant() {
    let m = TrainConfig::new(ModelVariant::MCganMse);
    assert_eq!((m.batch_size, m.chunk_length()), (1, None));
    assert_eq!(m.mse_weight(), 4.0);
    let w = TrainConfig::new(ModelVariant::WCrgan);
    assert_eq!((w.batch_size, w.chunk_length(), w.epochs), (60, Some(100), 60));
    assert_eq!(w.mse_weight(), 0.0);
    assert_eq!(w.learning_rate, 0.002);
    let b = TrainConfig::new(ModelVariant::BiLstm);
    assert_eq!(b.optimizer, OptimizerKind::Rmsprop);
    assert_eq!(b.mse_weight(), 1.0);
}

#[test]
fn steps_freeze_the_other_network_and_account_losses() {
    for variant in [
        ModelVariant::WCgan,
        ModelVariant::RCrgan,
        ModelVariant::RaCgan,
        ModelVariant::MCganMse,
        ModelVariant::CnnMse,
    ] {
        let cfg = config(variant);
        let batch = batch_for(&cfg);
        let mut t = Trainer::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g0 = (t.generator.params().digest(), t.generator.buffers().digest());
        if t.discriminator.is_some() {
            let b = t.step_discriminator(&batch, &mut rng).unwrap();
            assert_eq!(g0, (t.generator.params().digest(), t.generator.buffers().digest()), "{variant}");
            let (d, _) = b.resum(cfg.loss.gp_weight(), 0.0, 0.0);
            assert!((d - b.d_total).abs() < 1e-9 * (1.0 + d.abs()), "{variant}");
        }
        let d0 = t.discriminator.as_ref().map(|d| d.params.digest());
        let b = t.step_generator(&batch).unwrap();
        assert_eq!(d0, t.discriminator.as_ref().map(|d| d.params.digest()), "{variant}");
        assert_ne!(g0.0, t.generator.params().digest(), "{variant}");
        let (_, g) = b.resum(0.0, cfg.loss.l1_weight(), cfg.mse_weight());
        assert!((g - b.g_total).abs() < 1e-9 * (1.0 + g.abs()), "{variant}");
        assert_eq!(b.components.contains_key("gp"), false);
    }
}

#[test]
fn discriminator_step_requires_adversarial_variant() {
    let cfg = config(ModelVariant::Lstm);
    let batch = batch_for(&cfg);
    let mut t = Trainer::new(cfg).unwrap();
    assert!(t.step_discriminator(&batch, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn nan_input_aborts_the_step() {
    let cfg = config(ModelVariant::CnnMse);
    let mut batch = batch_for(&cfg);
    batch.target[[0, 0, 0]] = f64::NAN;
    let mut t = Trainer::new(cfg).unwrap();
    let before = t.generator.params().digest();
    assert!(matches!(t.step_generator(&batch), Err(Error::NonFinite { .. })));
    assert_eq!(before, t.generator.params().digest());
}

#[test]
fn padded_frames_do_not_contribute() {
    let mut cfg = config(ModelVariant::CnnMse);
    cfg.partial = PartialPolicy::Pad;
    cfg.chunk_frames = 200;
    let f = Features::from_utterance(&utterance(5)).unwrap();
    let chunks = chunk(&f, cfg.chunk_length(), cfg.partial).unwrap();
    assert!(chunks[0].valid_frames < 200);
    let batch = Batch::new(chunks).unwrap();
    let t = Trainer::new(cfg).unwrap();
    let (mask, _) = t.generate(&batch);
    let v = batch.chunks[0].valid_frames;
    assert!(mask.slice(s![0, v.., ..]).iter().all(|&x| x == 0.0));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let cfg = config(ModelVariant::RaCrgan);
    let batch = batch_for(&cfg);
    let mut t = Trainer::new(cfg.clone()).unwrap();
    t.train_step(&batch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    t.epoch = 3;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&t, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.epoch, 3);
    assert_eq!(back.generator.params(), t.generator.params());
    assert_eq!(back.generator.buffers(), t.generator.buffers());
    assert_eq!(back.discriminator.as_ref().unwrap().params, t.discriminator.as_ref().unwrap().params);
    assert_eq!(back.g_opt, t.g_opt);
    assert_eq!(back.d_opt, t.d_opt);
    assert_eq!(back.config, t.config);

    let mut other = cfg.clone();
    other.arch.encoder_channels = vec![2, 4];
    assert!(matches!(load_checkpoint_for(&path, &other), Err(Error::Checkpoint { .. })));
    assert!(load_checkpoint_for(&path, &cfg).is_ok());

    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { reason, .. }) if reason.contains("checksum")));
    std::fs::write(&path, &bytes[..40]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
    std::fs::write(&path, b"hello").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
    assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io { .. })));
}
