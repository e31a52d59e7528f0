use eegdir::{edck, edir, Error, FormatError};
use eegdir_core::data::{Dataset, SamplePair};
use eegdir_core::model::{predict, ModelConfig, ModelParams};
use eegdir_core::rng::{seeded, Rng};
use eegdir_core::train::{AdamW, OptimState};
use proptest::prelude::*;

fn random_dataset(n: usize, len: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let samples = (0..n)
        .map(|i| SamplePair {
            clean: (0..len).map(|_| rng.random_range(-3.0..3.0)).collect(),
            noisy: (0..len).map(|_| rng.random_range(-3.0..3.0)).collect(),
            sigma_y: rng.random_range(0.1..10.0),
            snr_db: (i % 3) as i32 - 1,
        })
        .collect();
    edir::quantize(&Dataset {
        seq_len: len,
        snr_grid: vec![-1, 0, 1],
        samples,
    })
}

#[test]
fn dataset_round_trip_is_bit_identical() {
    let data = random_dataset(5, 40, 1);
    let bytes = edir::encode(&data).unwrap();
    assert_eq!(&bytes[..4], b"EDIR");
    assert_eq!(bytes.len(), 4 + 4 * 4 + 3 * 4 + 5 * (2 * 40 * 4 + 8));
    let back = edir::decode(&bytes).unwrap();
    assert_eq!(back, data);
    assert_eq!(edir::encode(&back).unwrap(), bytes);
}

#[test]
fn dataset_header_layout() {
    let bytes = edir::encode(&random_dataset(2, 16, 2)).unwrap();
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    assert_eq!(
        (u32_at(4), u32_at(8), u32_at(12), u32_at(16)),
        (1, 2, 16, 3)
    );
    assert_eq!(i32::from_le_bytes(bytes[20..24].try_into().unwrap()), -1);
}

#[test]
fn dataset_corruptions_have_distinct_errors() {
    let bytes = edir::encode(&random_dataset(3, 16, 3)).unwrap();

    let mut bad = bytes.clone();
    bad[0] ^= 0xFF;
    let e = edir::decode(&bad).unwrap_err();
    assert!(matches!(e, FormatError::BadMagic { .. }));
    assert!(e.to_string().contains("bad magic"));

    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(
        edir::decode(&bad),
        Err(FormatError::Version { found: 2, .. })
    ));

    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        let e = edir::decode(&bytes[..cut]).unwrap_err();
        assert!(matches!(e, FormatError::Truncated(_)), "cut {cut}: {e}");
        assert!(e.to_string().contains("truncated payload"));
    }

    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(
        edir::decode(&long),
        Err(FormatError::Malformed(_))
    ));

    // a NaN in the payload violates the container invariant
    let mut nan = bytes.clone();
    let at = 4 + 4 * 4 + 3 * 4;
    nan[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(edir::decode(&nan), Err(FormatError::Malformed(_))));
}

#[test]
fn dataset_files_round_trip_and_report_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.edir");
    let data = random_dataset(4, 32, 4);
    edir::write(&path, &data).unwrap();
    assert_eq!(edir::read(&path).unwrap(), data);

    let missing = dir.path().join("nope.edir");
    let e = edir::read(&missing).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
    assert!(e.to_string().contains("nope.edir"));
}

proptest! {
    #[test]
    fn any_dataset_survives_two_cycles(n in 0usize..4, len in 1usize..20, seed in 0u64..1000) {
        let data = random_dataset(n, len, seed);
        let bytes = edir::encode(&data).unwrap();
        let back = edir::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &data);
        prop_assert_eq!(edir::encode(&back).unwrap(), bytes);
    }
}

fn toy() -> (ModelConfig, ModelParams) {
    let cfg = ModelConfig::new(32, 8, 8, 2, 2).unwrap();
    let params = ModelParams::init(&cfg, 4).unwrap();
    (cfg, params)
}

fn stepped_state(params: &mut ModelParams) -> OptimState {
    let mut st = OptimState::new(params, AdamW::default());
    let grads: Vec<Vec<f64>> = params
        .entries()
        .iter()
        .map(|(_, _, t)| vec![-0.3; t.len()])
        .collect();
    st.step(params, &grads.iter().map(Vec::as_slice).collect::<Vec<_>>())
        .unwrap();
    st
}

#[test]
fn checkpoint_round_trip_with_and_without_optimizer() {
    let (mut cfg, mut params) = toy();
    cfg.stabilized_retention = true;
    let st = stepped_state(&mut params);
    for optim in [None, Some(&st)] {
        let bytes = edck::encode(&cfg, &params, optim).unwrap();
        let ck = edck::decode(&bytes).unwrap();
        assert_eq!(ck.config, cfg);
        assert_eq!(ck.params, params);
        assert_eq!(ck.optim.as_ref(), optim);
        assert_eq!(
            edck::encode(&ck.config, &ck.params, ck.optim.as_ref()).unwrap(),
            bytes
        );
    }
}

#[test]
fn reload_gives_bit_identical_forward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.edck");
    let (cfg, params) = toy();
    edck::save(&path, &cfg, &params, None).unwrap();
    let ck = edck::load(&path).unwrap();
    let mut rng = seeded(8);
    let x = eegdir_core::autodiff::Tensor::from_fn([3, 32], |_| rng.random_range(-1.0..1.0));
    let a = predict(&params, &cfg, &x).unwrap();
    let b = predict(&ck.params, &ck.config, &x).unwrap();
    assert!(a
        .data()
        .iter()
        .zip(b.data())
        .all(|(p, q)| p.to_bits() == q.to_bits()));

    let first = std::fs::read(&path).unwrap();
    edck::save(&path, &ck.config, &ck.params, None).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn checkpoint_errors_are_distinct() {
    let (cfg, params) = toy();
    let bytes = edck::encode(&cfg, &params, None).unwrap();

    let mut bad = bytes.clone();
    bad[1] = b'X';
    assert!(matches!(
        edck::decode(&bad),
        Err(FormatError::BadMagic { .. })
    ));

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(
        edck::decode(&bad),
        Err(FormatError::Version {
            what: "checkpoint",
            ..
        })
    ));

    assert!(matches!(
        edck::decode(&bytes[..bytes.len() - 3]),
        Err(FormatError::Truncated(_))
    ));

    // the optimizer section marker is the last word of an optimizer-free file
    let mut bad = bytes.clone();
    let n = bad.len();
    bad[n - 4..].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(
        edck::decode(&bad),
        Err(FormatError::Version {
            what: "optimizer section",
            found: 7,
            ..
        })
    ));

    // first dimension of embed.w lives right after its name and rank
    let name_at = 4 + 4 + 7 * 4 + 3 * 8 + 4;
    let dims_at = name_at + 4 + "embed.w".len() + 4;
    let mut bad = bytes.clone();
    bad[dims_at..dims_at + 4].copy_from_slice(&9u32.to_le_bytes());
    assert!(matches!(edck::decode(&bad), Err(FormatError::Shape { .. })));

    let ck = edck::decode(&bytes).unwrap();
    let other = ModelConfig {
        d_model: 16,
        ..cfg.clone()
    };
    let e = ck.expect_config(&other).unwrap_err();
    assert!(e.to_string().contains("config mismatch"));
    ck.expect_config(&cfg).unwrap();

    // parameters that do not fit the config are refused at save time
    let wide = ModelParams::init(&other, 1).unwrap();
    assert!(matches!(
        edck::encode(&cfg, &wide, None),
        Err(FormatError::ConfigMismatch(_))
    ));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let e = edck::load(std::path::Path::new("/definitely/not/here.edck")).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
    assert!(e.to_string().contains("/definitely/not/here.edck"));
}
