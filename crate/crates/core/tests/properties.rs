use proptest::prelude::*;

use crgan::corpus::{derive_seed, mix_at_snr, synthesize_clean, synthesize_noise, NoiseKind};
use crgan::quality::{denormalize_pesq, normalize_pesq, seg_snr, stoi, surrogate_q};
use crgan::signal::{istft, psm, stft, Waveform, SAMPLE_RATE};

fn wave(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples, SAMPLE_RATE).unwrap()
}

fn kind() -> impl Strategy<Value = NoiseKind> {
    prop::sample::select(NoiseKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixing_hits_the_requested_snr(seed in 0u64..500, k in kind(), snr in -10.0f64..25.0) {
        let clean = synthesize_clean(seed, 1.0).unwrap();
        let noise = synthesize_noise(k, seed + 1, clean.len()).unwrap();
        let m = mix_at_snr(&clean, &noise, snr).unwrap();
        let resid: Vec<f64> = m.noisy.samples.iter().zip(&m.clean.samples).map(|(n, c)| n - c).collect();
        let got = 10.0 * (m.clean.energy() / resid.iter().map(|v| v * v).sum::<f64>()).log10();
        prop_assert!((got - snr).abs() < 1e-6, "{got} vs {snr}");
        prop_assert!(m.noisy.peak().max(m.clean.peak()) <= 1.0);
    }

    #[test]
    fn psm_is_a_clipped_ratio(seed in 0u64..500, k in kind(), snr in -5.0f64..20.0) {
        let clean = synthesize_clean(seed, 0.5).unwrap();
        let noise = synthesize_noise(k, seed + 7, clean.len()).unwrap();
        let m = mix_at_snr(&clean, &noise, snr).unwrap();
        let mask = psm(&stft(&m.clean).unwrap(), &stft(&m.noisy).unwrap()).unwrap();
        prop_assert!(mask.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn stft_is_linear(a in prop::collection::vec(-1.0f64..1.0, 1600), s in -3.0f64..3.0) {
        let x = wave(a.clone());
        let y = wave(a.iter().map(|v| v * s).collect());
        let (sx, sy) = (stft(&x).unwrap(), stft(&y).unwrap());
        for (p, q) in sx.values.iter().zip(sy.values.iter()) {
            prop_assert!((p * s - q).norm() < 1e-9);
        }
        let back = istft(&sy).unwrap();
        prop_assert_eq!(back.len(), y.len());
    }

    #[test]
    fn measures_prefer_the_reference(seed in 0u64..200, k in kind()) {
        let clean = synthesize_clean(seed, 1.5).unwrap();
        let noise = synthesize_noise(k, seed + 3, clean.len()).unwrap();
        let m = mix_at_snr(&clean, &noise, 0.0).unwrap();
        let self_stoi = stoi(&m.clean, &m.clean).unwrap();
        prop_assert!(self_stoi > 0.999);
        prop_assert!(stoi(&m.clean, &m.noisy).unwrap() < self_stoi);
        prop_assert!(seg_snr(&m.clean, &m.noisy).unwrap() < seg_snr(&m.clean, &m.clean).unwrap());
        let q = surrogate_q(&m.noisy, &m.clean).unwrap();
        prop_assert!((0.0..1.0).contains(&q));
    }

    #[test]
    fn pesq_normalization_round_trips(p in -0.5f64..4.5) {
        prop_assert!((denormalize_pesq(normalize_pesq(p)) - p).abs() < 1e-12);
    }

    #[test]
    fn seed_derivation_separates_streams(base in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(base, &[a]), derive_seed(base, &[b]));
        prop_assert_eq!(derive_seed(base, &[a, b]), derive_seed(base, &[a, b]));
    }
}
