use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::metrics::periodogram_psd;
use crate::rng::seeded;
use crate::Error;

fn random_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Fraction of periodogram mass in bins whose frequency satisfies `keep`.
fn mass_fraction(x: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    let psd = periodogram_psd(x).unwrap();
    let df = SAMPLE_RATE / x.len() as f64;
    let total: f64 = psd.iter().sum();
    psd.iter()
        .enumerate()
        .filter(|(k, _)| keep(*k as f64 * df))
        .map(|(_, p)| p)
        .sum::<f64>()
        / total
}

#[test]
fn rms_examples() {
    assert_eq!(rms(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(rms(&[3.0, -3.0]).unwrap(), 3.0);
    assert!((rms(&[1.0, 2.0, 3.0]).unwrap() - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!(matches!(rms(&[]), Err(Error::Contract(_))));
}

#[test]
fn lambda_examples() {
    let x = [1.0, -1.0, 1.0, -1.0];
    let n = [1.0, 1.0, -1.0, -1.0];
    assert!((lambda_for_snr(&x, &n, 0.0).unwrap() - 1.0).abs() < 1e-15);
    assert!((lambda_for_snr(&x, &n, 10.0).unwrap() - 0.1).abs() < 1e-15);
    assert!(matches!(
        lambda_for_snr(&x, &[0.0; 4], 0.0),
        Err(Error::Contract(_))
    ));
}

#[test]
fn measure_snr_examples() {
    let x = [1.0, -1.0, 1.0, -1.0];
    assert!(measure_snr(&x, &[-1.0, 1.0, 1.0, -1.0]).unwrap().abs() < 1e-15);
    assert!((measure_snr(&x, &[10.0, 10.0, -10.0, -10.0]).unwrap() + 10.0).abs() < 1e-12);
    assert!(matches!(
        measure_snr(&x, &[0.0; 4]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn snr_round_trip_over_grid() {
    for seed in 0..20 {
        let x = random_signal(128, seed);
        let n = random_signal(128, seed + 1000);
        for snr in -7..=2 {
            let lambda = lambda_for_snr(&x, &n, snr as f64).unwrap();
            let scaled: Vec<f64> = n.iter().map(|v| lambda * v).collect();
            assert!((measure_snr(&x, &scaled).unwrap() - snr as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn mix_pair_hand_example() {
    let s = mix_pair(&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0], 0).unwrap();
    let r2 = 2f64.sqrt();
    assert!((s.sigma_y - r2).abs() < 1e-15);
    for (a, b) in s.noisy.iter().zip([r2, 0.0, 0.0, -r2]) {
        assert!((a - b).abs() < 1e-15);
    }
    for (a, b) in s.clean.iter().zip([1.0, -1.0, 1.0, -1.0]) {
        assert!((a - b / r2).abs() < 1e-15);
    }
    assert_eq!(s.snr_db, 0);
}

#[test]
fn mix_pair_rejects_silent_noise_and_degenerate_mixtures() {
    assert!(matches!(
        mix_pair(&[1.0, 2.0], &[0.0, 0.0], 0),
        Err(Error::Contract(_))
    ));
    // y = x + n is identically zero
    assert!(matches!(
        mix_pair(&[1.0, -1.0], &[-1.0, 1.0], 0),
        Err(Error::Degenerate(_))
    ));
    assert!(matches!(
        mix_pair(&[1.0, -1.0], &[1.0], 0),
        Err(Error::Dimension(_))
    ));
}

proptest! {
    #[test]
    fn stored_noisy_has_unit_std(seed in 0u64..10_000, snr in -10i32..10, len in 4usize..200) {
        let s = mix_pair(&random_signal(len, seed), &random_signal(len, seed ^ 0xABCD), snr).unwrap();
        prop_assert!((std_pop(&s.noisy).unwrap() - 1.0).abs() < 1e-12);
        // de-normalized noise component reproduces the label
        let x: Vec<f64> = s.clean.iter().map(|v| v * s.sigma_y).collect();
        let ln: Vec<f64> = s.noisy.iter().zip(&s.clean).map(|(y, c)| (y - c) * s.sigma_y).collect();
        prop_assert!((measure_snr(&x, &ln).unwrap() - snr as f64).abs() < 1e-9);
    }
}

#[test]
fn synth_is_deterministic() {
    let cfg = CleanSynthConfig::default();
    assert_eq!(
        synth_clean(300, 7, &cfg).unwrap(),
        synth_clean(300, 7, &cfg).unwrap()
    );
    assert_ne!(
        synth_clean(300, 7, &cfg).unwrap(),
        synth_clean(300, 8, &cfg).unwrap()
    );
    assert_eq!(
        synth_eog_noise(300, 7).unwrap(),
        synth_eog_noise(300, 7).unwrap()
    );
    assert_eq!(
        synth_emg_noise(300, 7).unwrap(),
        synth_emg_noise(300, 7).unwrap()
    );
    assert!(matches!(synth_clean(15, 0, &cfg), Err(Error::Contract(_))));
    assert!(synth_eog_noise(16, 0).is_ok() && synth_emg_noise(16, 0).is_ok());
}

#[test]
fn clean_spectrum_and_mean() {
    let cfg = CleanSynthConfig::default();
    for len in [256, 512] {
        for seed in 0..20 {
            let x = synth_clean(len, seed, &cfg).unwrap();
            assert!(
                mass_fraction(&x, |f| f > 45.0) < 0.05,
                "len {len} seed {seed}"
            );
            let mean = x.iter().sum::<f64>() / len as f64;
            assert!(mean.abs() < 0.1 * rms(&x).unwrap());
        }
    }
}

#[test]
fn eog_mass_is_low_frequency() {
    for len in [256, 512] {
        for seed in 0..20 {
            let n = synth_eog_noise(len, seed).unwrap();
            let frac = mass_fraction(&n, |f| f < 5.0);
            assert!(frac > 0.8, "len {len} seed {seed}: {frac}");
        }
    }
}

#[test]
fn emg_mass_is_high_frequency() {
    for len in [256, 512] {
        for seed in 0..20 {
            let n = synth_emg_noise(len, seed).unwrap();
            let frac = mass_fraction(&n, |f| f > 20.0);
            assert!(frac > 0.8, "len {len} seed {seed}: {frac}");
        }
    }
}

#[test]
fn noise_kind_names() {
    assert_eq!(NoiseKind::parse("EOG").unwrap(), NoiseKind::Eog);
    assert_eq!(
        NoiseKind::parse(NoiseKind::Emg.name()).unwrap(),
        NoiseKind::Emg
    );
    assert!(matches!(NoiseKind::parse("ecg"), Err(Error::Config(_))));
}

fn small_spec(pairs: usize) -> BuildSpec {
    BuildSpec::new(pairs, NoiseKind::Eog, -7, 2, 64, 3)
}

#[test]
fn build_counts_and_labels() {
    let b = build_dataset(&small_spec(10)).unwrap();
    assert_eq!(b.train.len(), 80);
    assert_eq!(b.test.len(), 20);
    assert!(b.skipped.is_empty());
    let grid: Vec<i32> = (-7..=2).collect();
    assert!(b.test.samples.iter().all(|s| grid.contains(&s.snr_db)));
    assert_eq!(
        b.train.counts_per_snr(),
        grid.iter().map(|&g| (g, 8)).collect::<Vec<_>>()
    );
    b.train.validate().unwrap();
    b.test.validate().unwrap();
}

#[test]
fn build_split_hygiene_with_cycling() {
    let mut spec = small_spec(0);
    spec.clean_sources = 4;
    spec.noise_sources = 9;
    let b = build_dataset(&spec).unwrap();
    assert_eq!(b.plans.len(), 9);
    assert!(b
        .plans
        .iter()
        .all(|p| p.clean_index == p.pair % 4 && p.noise_index == p.pair));
    let train = b.clean_indices(Split::Train);
    let test = b.clean_indices(Split::Test);
    assert!(train.iter().all(|i| !test.contains(i)));
    assert_eq!(train.len() + test.len(), 4);
    assert_eq!(b.train.len() + b.test.len(), 90);
}

#[test]
fn build_is_reproducible_and_round_trips_snr() {
    let spec = small_spec(6);
    let a = build_dataset(&spec).unwrap();
    assert_eq!(a, build_dataset(&spec).unwrap());
    let mut other = spec.clone();
    other.seed = 4;
    assert_ne!(a.train, build_dataset(&other).unwrap().train);
    for s in a.train.samples.iter().chain(&a.test.samples) {
        let x: Vec<f64> = s.clean.iter().map(|v| v * s.sigma_y).collect();
        let ln: Vec<f64> = s
            .noisy
            .iter()
            .zip(&s.clean)
            .map(|(y, c)| (y - c) * s.sigma_y)
            .collect();
        assert!((measure_snr(&x, &ln).unwrap() - s.snr_db as f64).abs() < 1e-9);
        assert!((std_pop(&s.noisy).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn build_rejects_bad_specs() {
    let mut spec = small_spec(10);
    spec.split_ratio = 1.0;
    assert!(matches!(build_dataset(&spec), Err(Error::Config(_))));
    let mut spec = small_spec(10);
    spec.snr_grid = vec![];
    assert!(matches!(build_dataset(&spec), Err(Error::Config(_))));
    assert!(matches!(
        build_dataset(&small_spec(1)),
        Err(Error::Config(_))
    ));
}
