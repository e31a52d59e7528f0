use std::path::{Path, PathBuf};

use clap::Parser;
use eegdir::cli::{Cli, Command};
use eegdir::{csvio, edck, edir, Error};
use eegdir_core::autodiff::Tensor;
use eegdir_core::model::{ModelConfig, ModelParams};

/// Runs one invocation in-process, returning (result, stdout, stderr).
fn run(args: &[&str]) -> (Result<(), Error>, String, String) {
    let cli =
        Cli::try_parse_from(std::iter::once("eegdir").chain(args.iter().copied())).expect("parses");
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let r = eegdir::run(&cli, &mut out, &mut err);
    (
        r,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|r| r.map(|e| e.unwrap().path()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn synth_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let args = [
        "synth",
        "--noise",
        "eog",
        "--pairs",
        "50",
        "--snr-min",
        "-7",
        "--snr-max",
        "2",
        "--seed",
        "1",
        "--out",
    ];
    let (r, stdout, stderr) = run(&[&args[..], &[s(&out)]].concat());
    r.unwrap();
    let train = edir::read(&out.join("train.edir")).unwrap();
    let test = edir::read(&out.join("test.edir")).unwrap();
    assert_eq!((train.len(), test.len()), (400, 100));
    assert_eq!(train.seq_len, 512);
    assert!(stdout.contains("train: 400 samples") && stdout.contains("test: 100 samples"));
    assert!(stdout.contains("  -7 dB: 40"));
    assert!(stderr.starts_with("eegdir synth "));

    let again = dir.path().join("again");
    run(&[&args[..], &[s(&again)]].concat()).0.unwrap();
    let parallel = dir.path().join("parallel");
    run(&[&args[..], &[s(&parallel), "--workers", "4"]].concat())
        .0
        .unwrap();
    for name in ["train.edir", "test.edir"] {
        let a = std::fs::read(out.join(name)).unwrap();
        assert_eq!(a, std::fs::read(again.join(name)).unwrap());
        assert_eq!(a, std::fs::read(parallel.join(name)).unwrap());
    }
}

#[test]
fn synth_usage_errors_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    for bad in [
        vec!["synth", "--snr-min", "3", "--snr-max", "2"],
        vec!["synth", "--pairs", "1"],
        vec!["synth", "--split", "1.0"],
        vec!["synth", "--len", "8"],
    ] {
        let (r, _, _) = run(&[&bad[..], &["--out", s(&out)]].concat());
        let e = r.unwrap_err();
        assert!(matches!(e, Error::Usage(_)), "{bad:?}: {e}");
        assert_eq!(e.exit_code(), 2);
        assert!(!out.exists());
    }
}

fn small_synth(dir: &Path, len: usize, pairs: usize) -> PathBuf {
    let out = dir.join("data");
    let (r, _, _) = run(&[
        "synth",
        "--pairs",
        &pairs.to_string(),
        "--len",
        &len.to_string(),
        "--seed",
        "3",
        "--snr-min",
        "-7",
        "--snr-max",
        "2",
        "--out",
        s(&out),
    ]);
    r.unwrap();
    out
}

#[test]
fn toy_train_eval_denoise_flow() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 64, 5);
    let ckpt = dir.path().join("toy.edck");
    let train_args = [
        "train",
        "--data",
        &format!("{}/train.edir", s(&data)),
        "--out",
        s(&ckpt),
        "--len",
        "64",
        "--patch",
        "8",
        "--dim",
        "32",
        "--heads",
        "4",
        "--layers",
        "2",
        "--epochs",
        "50",
        "--batch",
        "8",
    ];
    let (r, _, stderr) = run(&train_args);
    r.unwrap();
    let log = std::fs::read_to_string(dir.path().join("toy.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,step,loss"));
    // 40 training samples in batches of 8 for 50 epochs
    assert_eq!(lines.count(), 250);
    let ck = edck::load(&ckpt).unwrap();
    assert_eq!(ck.config, ModelConfig::new(64, 8, 32, 4, 2).unwrap());
    assert_eq!(ck.optim.unwrap().t, 250);

    // the echoed line parses back to the resolved command
    let echo = stderr.lines().next().unwrap();
    let reparsed = Cli::try_parse_from(echo.split_whitespace()).unwrap();
    assert_eq!(reparsed.command.echo(), echo);
    match reparsed.command {
        Command::Train(t) => {
            assert_eq!(t.model.len, Some(64));
            assert_eq!(t.log, Some(dir.path().join("toy.csv")));
        }
        other => panic!("{other:?}"),
    }

    let test = format!("{}/test.edir", s(&data));
    let model_csv = dir.path().join("model.csv");
    let base_csv = dir.path().join("base.csv");
    run(&[
        "eval",
        "--model",
        s(&ckpt),
        "--data",
        &test,
        "--out",
        s(&model_csv),
    ])
    .0
    .unwrap();
    run(&[
        "eval",
        "--baseline",
        "identity",
        "--data",
        &test,
        "--out",
        s(&base_csv),
    ])
    .0
    .unwrap();
    let model = csvio::read_report(&model_csv).unwrap();
    let base = csvio::read_report(&base_csv).unwrap();
    assert_eq!(model.rows.len(), 10);
    assert_eq!(
        base.rows
            .iter()
            .map(|r| r.snr_db.unwrap())
            .collect::<Vec<_>>(),
        (-7..=2).collect::<Vec<_>>()
    );
    assert!(
        model.all.cc > base.all.cc,
        "model cc {} vs baseline {}",
        model.all.cc,
        base.all.cc
    );

    // parallel evaluation reproduces the single-worker report
    let par_csv = dir.path().join("par.csv");
    run(&[
        "eval",
        "--model",
        s(&ckpt),
        "--data",
        &test,
        "--out",
        s(&par_csv),
        "--workers",
        "3",
        "--batch",
        "5",
    ])
    .0
    .unwrap();
    assert_eq!(
        std::fs::read(&par_csv).unwrap(),
        std::fs::read(&model_csv).unwrap()
    );

    // report to stdout when no --out is given
    let (r, stdout, _) = run(&["eval", "--baseline", "identity", "--data", &test]);
    r.unwrap();
    assert!(stdout.starts_with("snr_db,rrmse_temporal,rrmse_spectral,cc,n_samples\n"));
    assert_eq!(
        stdout.lines().last().unwrap().split(',').next(),
        Some("all")
    );

    let den = dir.path().join("den.csv");
    run(&[
        "denoise",
        "--model",
        s(&ckpt),
        "--input",
        &test,
        "--out",
        s(&den),
    ])
    .0
    .unwrap();
    let rows = csvio::read_signals(&den).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.len() == 64));
}

#[test]
fn train_usage_errors_come_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.edck");
    let missing = dir.path().join("missing.edir");
    let (r, _, _) = run(&[
        "train",
        "--data",
        s(&missing),
        "--out",
        s(&ckpt),
        "--patch",
        "7",
        "--len",
        "64",
    ]);
    let e = r.unwrap_err();
    assert!(
        matches!(e, Error::Usage(ref m) if m.contains("seq_len not divisible by patch")),
        "{e}"
    );
    let (r, _, _) = run(&[
        "train",
        "--data",
        s(&missing),
        "--out",
        s(&ckpt),
        "--epochs",
        "0",
    ]);
    assert!(matches!(r, Err(Error::Usage(_))));
    assert!(files_in(dir.path()).is_empty());

    let data = small_synth(dir.path(), 64, 3);
    let (r, _, _) = run(&[
        "train",
        "--data",
        &format!("{}/train.edir", s(&data)),
        "--out",
        s(&ckpt),
        "--len",
        "128",
    ]);
    assert!(matches!(r, Err(Error::Usage(ref m)) if m.contains("does not match")));
    assert!(!ckpt.exists());
}

#[test]
fn paper_scale_flags_are_accepted_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 512, 2);
    let ckpt = dir.path().join("big.edck");
    let (r, _, stderr) = run(&[
        "train",
        "--data",
        &format!("{}/test.edir", s(&data)),
        "--out",
        s(&ckpt),
        "--patch",
        "16",
        "--dim",
        "512",
        "--heads",
        "8",
        "--layers",
        "4",
        "--epochs",
        "1",
        "--batch",
        "2",
        "--log-every",
        "0",
    ]);
    r.unwrap();
    let echo = stderr.lines().next().unwrap();
    for f in [
        "--patch=16",
        "--dim=512",
        "--heads=8",
        "--layers=4",
        "--len=512",
    ] {
        assert!(echo.contains(f), "{echo}");
    }
    assert_eq!(edck::load(&ckpt).unwrap().config.d_model, 512);
}

/// Weights that make the network the identity map: embedding and output
/// head copy the patch through the first `p` channels, and every block's
/// output projections are zero.
fn identity_params(cfg: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::init(cfg, 0).unwrap();
    let (patch, d) = (cfg.patch_size, cfg.d_model);
    p.embed_w = Tensor::from_fn([patch, d], |i| if i / d == i % d { 1.0 } else { 0.0 });
    p.out_w = Tensor::from_fn(
        [d, patch],
        |i| if i / patch == i % patch { 1.0 } else { 0.0 },
    );
    for b in &mut p.blocks {
        b.msr.wo = Tensor::zeros([d, d]);
        b.ffn_w2 = Tensor::zeros(b.ffn_w2.shape().to_vec());
        b.ffn_b2 = Tensor::zeros([d]);
    }
    p
}

#[test]
fn denoise_with_identity_weights_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 64, 5);
    let cfg = ModelConfig::new(64, 8, 16, 2, 2).unwrap();
    let ckpt = dir.path().join("id.edck");
    edck::save(&ckpt, &cfg, &identity_params(&cfg), None).unwrap();

    // clean-as-noisy container
    let mut train = edir::read(&data.join("train.edir")).unwrap();
    for smp in &mut train.samples {
        smp.noisy = smp.clean.clone();
    }
    let input = dir.path().join("clean.edir");
    edir::write(&input, &train).unwrap();
    let out = dir.path().join("out.csv");
    run(&[
        "denoise",
        "--model",
        s(&ckpt),
        "--input",
        s(&input),
        "--out",
        s(&out),
    ])
    .0
    .unwrap();
    let rows = csvio::read_signals(&out).unwrap();
    assert_eq!(rows.len(), train.len());
    for (row, smp) in rows.iter().zip(&train.samples) {
        for (a, c) in row.iter().zip(&smp.clean) {
            assert!((a - c * smp.sigma_y).abs() < 1e-6);
        }
    }

    // raw CSV input goes through the same normalization
    let raw: Vec<Vec<f64>> = train
        .samples
        .iter()
        .take(3)
        .map(|x| x.clean.iter().map(|v| v * 7.0 + 0.5).collect())
        .collect();
    let raw_path = dir.path().join("raw.csv");
    csvio::write_signals(&raw_path, &raw).unwrap();
    let out2 = dir.path().join("out2.csv");
    run(&[
        "denoise",
        "--model",
        s(&ckpt),
        "--input",
        s(&raw_path),
        "--out",
        s(&out2),
    ])
    .0
    .unwrap();
    let rows = csvio::read_signals(&out2).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, want) in rows.iter().zip(&raw) {
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "1,2,3\n").unwrap();
    let (r, _, _) = run(&[
        "denoise",
        "--model",
        s(&ckpt),
        "--input",
        s(&short),
        "--out",
        s(&out2),
    ]);
    assert!(r.unwrap_err().to_string().contains("model expects 64"));

    let missing = dir.path().join("absent.edck");
    let (r, _, _) = run(&[
        "denoise",
        "--model",
        s(&missing),
        "--input",
        s(&input),
        "--out",
        s(&out2),
    ]);
    assert!(r.unwrap_err().to_string().contains("absent.edck"));
}

#[test]
fn eval_rejects_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 64, 3);
    let cfg = ModelConfig::new(32, 8, 8, 2, 1).unwrap();
    let ckpt = dir.path().join("m.edck");
    edck::save(&ckpt, &cfg, &ModelParams::init(&cfg, 1).unwrap(), None).unwrap();
    let test = format!("{}/test.edir", s(&data));
    let (r, _, _) = run(&["eval", "--model", s(&ckpt), "--data", &test]);
    assert!(r.unwrap_err().to_string().contains("config mismatch"));
    let (r, _, _) = run(&["eval", "--data", &test]);
    assert!(matches!(r, Err(Error::Usage(_))));
    let (r, _, _) = run(&[
        "eval",
        "--model",
        s(&ckpt),
        "--baseline",
        "identity",
        "--data",
        &test,
    ]);
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn verify_single_suite_and_fault_hook() {
    let (r, stdout, _) = run(&["verify", "--only", "snr"]);
    r.unwrap();
    assert!(stdout.contains("3/3 checks passed"));
    assert!(!stdout.contains("gradcheck"));

    let (r, stdout, _) = run(&[
        "verify",
        "--only",
        "gradcheck",
        "--seeds",
        "1",
        "--inject-fault",
        "retention-backward",
    ]);
    let e = r.unwrap_err();
    assert!(stdout.contains("FAIL   gradcheck: mul_const"));
    assert!(e.to_string().contains("gradcheck: toy model"));

    let (r, _, _) = run(&["verify", "--only", "nonsense"]);
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn echo_round_trips_for_every_subcommand() {
    for line in [
        vec!["synth", "--out", "x", "--snr-min", "-3"],
        vec![
            "train",
            "--data",
            "a.edir",
            "--out",
            "b.edck",
            "--len",
            "64",
            "--stabilized",
            "--lr",
            "0.001",
        ],
        vec![
            "denoise", "--model", "m", "--input", "i.csv", "--out", "o.csv",
        ],
        vec!["eval", "--baseline", "identity", "--data", "d"],
        vec!["verify", "--only", "adamw"],
    ] {
        let cli =
            Cli::try_parse_from(std::iter::once("eegdir").chain(line.iter().copied())).unwrap();
        let echo = cli.command.echo();
        let back = Cli::try_parse_from(echo.split_whitespace()).unwrap();
        assert_eq!(back, cli, "{echo}");
    }
}

#[test]
fn unknown_flags_are_rejected() {
    assert!(Cli::try_parse_from(["eegdir", "synth", "--out", "x", "--bogus", "1"]).is_err());
    assert!(Cli::try_parse_from(["eegdir", "eval", "--data", "d", "--baseline", "mean"]).is_err());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_eegdir");
    let ok = std::process::Command::new(bin)
        .args(["verify", "--only", "metrics"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let usage = std::process::Command::new(bin)
        .args(["synth", "--out", "/nonexistent/x", "--snr-min", "5"])
        .output()
        .unwrap();
    assert_eq!(usage.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&usage.stderr).starts_with("error: "));
    let missing = std::process::Command::new(bin)
        .args([
            "eval",
            "--baseline",
            "identity",
            "--data",
            "/nonexistent/test.edir",
        ])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/test.edir"));
}
