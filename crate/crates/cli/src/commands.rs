//! Subcommand implementations. Every command validates its flags before
//! touching the filesystem, so usage errors leave no output behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eegdir_core::autodiff::{BackwardFault, Tensor};
use eegdir_core::data::{
    assemble, expand_pair, plan_pairs, std_pop, BuildSpec, Dataset, NoiseKind, MIN_LEN,
};
use eegdir_core::metrics::{evaluate_identity, sample_metrics, MetricsReport};
use eegdir_core::model::{predict, ModelConfig, ModelParams};
use eegdir_core::train::{self, AdamW, LogRow, OptimState, TrainConfig, TrainObserver};

use crate::cli::{
    Baseline, Cli, Command, DenoiseArgs, EvalArgs, Fault, Noise, SynthArgs, TrainArgs, VerifyArgs,
};
use crate::error::{Error, FormatError, Result};
use crate::verify::{self, VerifyOptions, SUITES};
use crate::{csvio, edck, edir};

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, out, err),
        Command::Train(a) => train_cmd(a, out, err),
        Command::Denoise(a) => denoise(a, out, err),
        Command::Eval(a) => eval(a, out, err),
        Command::Verify(a) => verify_cmd(a, out, err),
    }
}

/// Configuration problems detected by the core are usage errors here.
fn usage(e: eegdir_core::Error) -> Error {
    match e {
        eegdir_core::Error::Config(m) => Error::Usage(m),
        other => Error::Core(other),
    }
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(msg()))
    }
}

/// Maps `f` over `items` on up to `workers` threads, preserving order.
fn parallel_map<T: Sync, U: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> eegdir_core::Result<U> + Sync,
) -> eegdir_core::Result<Vec<U>> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<eegdir_core::Result<Vec<U>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

fn synth(a: &SynthArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    require(a.snr_min <= a.snr_max, || {
        format!(
            "empty SNR grid: --snr-min {} > --snr-max {}",
            a.snr_min, a.snr_max
        )
    })?;
    require(a.pairs >= 2, || {
        format!("--pairs must be at least 2, got {}", a.pairs)
    })?;
    require(a.split > 0.0 && a.split < 1.0, || {
        format!("--split must lie in (0, 1), got {}", a.split)
    })?;
    require(a.len >= MIN_LEN, || {
        format!("--len must be at least {MIN_LEN}, got {}", a.len)
    })?;
    require(a.workers >= 1, || "--workers must be at least 1".into())?;
    writeln!(err, "{}", Command::Synth(a.clone()).echo()).ok();

    let kind = match a.noise {
        Noise::Eog => NoiseKind::Eog,
        Noise::Emg => NoiseKind::Emg,
    };
    let mut spec = BuildSpec::new(a.pairs, kind, a.snr_min, a.snr_max, a.len, a.seed);
    spec.split_ratio = a.split;
    let plans = plan_pairs(&spec).map_err(usage)?;
    let expanded = parallel_map(&plans, a.workers, |p| expand_pair(&spec, p))?;
    let built = assemble(&spec, plans, expanded)?;
    for (pair, snr) in &built.skipped {
        writeln!(
            err,
            "warning: pair {pair} at {snr} dB has a constant mixture; skipped"
        )
        .ok();
    }

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for (name, data) in [("train", &built.train), ("test", &built.test)] {
        let path = a.out.join(format!("{name}.edir"));
        edir::write(&path, data)?;
        writeln!(out, "{name}: {} samples -> {}", data.len(), path.display()).ok();
        for (snr, n) in data.counts_per_snr() {
            writeln!(out, "  {snr:>4} dB: {n}").ok();
        }
    }
    Ok(())
}

fn model_config(m: &crate::cli::ModelArgs, len: usize) -> eegdir_core::Result<ModelConfig> {
    let cfg = ModelConfig {
        seq_len: len,
        patch_size: m.patch,
        d_model: m.dim,
        heads: m.heads,
        layers: m.layers,
        ffn_mult: m.ffn_mult,
        stabilized_retention: m.stabilized,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Writes checkpoints and the log as training proceeds. IO failures are
/// parked here and reported once the core loop has stopped.
struct FileObserver<'a> {
    cfg: &'a ModelConfig,
    checkpoint: &'a Path,
    log: &'a Path,
    rows: Vec<LogRow>,
    saved_epoch: Option<usize>,
    failure: Option<Error>,
}

impl TrainObserver for FileObserver<'_> {
    fn on_step(&mut self, row: &LogRow) -> eegdir_core::Result<()> {
        self.rows.push(*row);
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        epoch: usize,
        params: &ModelParams,
        state: &OptimState,
    ) -> eegdir_core::Result<()> {
        let res = edck::save(self.checkpoint, self.cfg, params, Some(state))
            .and_then(|_| csvio::write_log(self.log, &self.rows));
        match res {
            Ok(()) => {
                self.saved_epoch = Some(epoch);
                Ok(())
            }
            Err(e) => {
                self.failure = Some(e);
                Err(eegdir_core::Error::Contract(
                    "checkpoint write failed".into(),
                ))
            }
        }
    }
}

fn train_cmd(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if let Some(len) = a.model.len {
        model_config(&a.model, len).map_err(usage)?;
    }
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        optim: AdamW {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
        },
        log_every: a.log_every,
    };
    tc.validate().map_err(usage)?;

    let data = edir::read(&a.data)?;
    let len = a.model.len.unwrap_or(data.seq_len);
    require(len == data.seq_len, || {
        format!(
            "--len {len} does not match the dataset's seq_len {} ({})",
            data.seq_len,
            a.data.display()
        )
    })?;
    let cfg = model_config(&a.model, len).map_err(usage)?;
    require(!data.is_empty(), || {
        format!("{} holds no samples", a.data.display())
    })?;
    let log = a.log.clone().unwrap_or_else(|| default_log_path(&a.out));
    let mut resolved = a.clone();
    resolved.model.len = Some(len);
    resolved.log = Some(log.clone());
    writeln!(err, "{}", Command::Train(resolved).echo()).ok();

    let mut params = ModelParams::init(&cfg, a.seed)?;
    let mut state = OptimState::new(&params, tc.optim);
    writeln!(
        err,
        "model: {} parameters, {} training samples",
        params.num_scalars(),
        data.len()
    )
    .ok();
    let mut obs = FileObserver {
        cfg: &cfg,
        checkpoint: &a.out,
        log: &log,
        rows: Vec::new(),
        saved_epoch: None,
        failure: None,
    };
    let started = Instant::now();
    let result = train::train(&mut params, &mut state, &cfg, &data, &tc, &mut obs);
    if let Some(e) = obs.failure {
        return Err(e);
    }
    match result {
        Ok(summary) => {
            writeln!(
                out,
                "trained {} steps in {:.1}s, final batch loss {}; checkpoint {} log {}",
                summary.steps,
                started.elapsed().as_secs_f64(),
                summary.final_loss,
                a.out.display(),
                log.display()
            )
            .ok();
            Ok(())
        }
        Err(e @ eegdir_core::Error::NonFinite(_)) => {
            csvio::write_log(&log, &obs.rows)?;
            let kept = match obs.saved_epoch {
                Some(ep) => format!(
                    "last good checkpoint (epoch {ep}) kept at {}",
                    a.out.display()
                ),
                None => "no checkpoint had been written yet".into(),
            };
            Err(Error::Failed(format!("training diverged: {e}; {kept}")))
        }
        Err(e) => Err(e.into()),
    }
}

fn denoise(a: &DenoiseArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    require(a.batch >= 1, || "--batch must be at least 1".into())?;
    writeln!(err, "{}", Command::Denoise(a.clone()).echo()).ok();
    let ck = edck::load(&a.model)?;
    let len = ck.config.seq_len;
    let is_csv = a
        .input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (normalized, sigmas): (Vec<Vec<f64>>, Vec<f64>) = if is_csv {
        let rows = csvio::read_signals(&a.input)?;
        let mut pairs = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != len {
                return Err(Error::Failed(format!(
                    "{}: row {} has {} samples but the model expects {len}",
                    a.input.display(),
                    i + 1,
                    row.len()
                )));
            }
            let sigma = std_pop(&row)?;
            if !(sigma > 0.0) {
                return Err(Error::Failed(format!(
                    "{}: row {} is constant and cannot be normalized",
                    a.input.display(),
                    i + 1
                )));
            }
            pairs.push((row.iter().map(|v| v / sigma).collect(), sigma));
        }
        pairs.into_iter().unzip()
    } else {
        let data = edir::read(&a.input)?;
        if data.seq_len != len {
            return Err(Error::format(
                &a.input,
                FormatError::ConfigMismatch(format!(
                    "segments have {} samples, checkpoint expects {len}",
                    data.seq_len
                )),
            ));
        }
        data.samples
            .into_iter()
            .map(|s| (s.noisy, s.sigma_y))
            .unzip()
    };

    let mut denoised = Vec::with_capacity(normalized.len());
    for (chunk, sig) in normalized.chunks(a.batch).zip(sigmas.chunks(a.batch)) {
        let flat: Vec<f64> = chunk.concat();
        let pred = predict(
            &ck.params,
            &ck.config,
            &Tensor::new([chunk.len(), len], flat)?,
        )?;
        for (row, s) in pred.data().chunks(len).zip(sig) {
            denoised.push(row.iter().map(|v| v * s).collect::<Vec<f64>>());
        }
    }
    csvio::write_signals(&a.out, &denoised)?;
    writeln!(
        out,
        "denoised {} signals -> {}",
        denoised.len(),
        a.out.display()
    )
    .ok();
    Ok(())
}

/// Per-sample metrics on up to `workers` threads over a shared read-only
/// parameter snapshot.
pub fn evaluate_parallel(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &Dataset,
    batch: usize,
    workers: usize,
) -> Result<MetricsReport> {
    let chunk = data.len().div_ceil(workers.max(1)).max(1);
    let parts: Vec<Dataset> = data
        .samples
        .chunks(chunk)
        .map(|c| Dataset {
            seq_len: data.seq_len,
            snr_grid: data.snr_grid.clone(),
            samples: c.to_vec(),
        })
        .collect();
    let per = parallel_map(&parts, workers, |d| sample_metrics(params, cfg, d, batch))?;
    Ok(MetricsReport::aggregate(&per.concat())?)
}

fn eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    require(a.workers >= 1 && a.batch >= 1, || {
        "--workers and --batch must be at least 1".into()
    })?;
    let model = match (&a.model, a.baseline) {
        (Some(_), Some(_)) => {
            return Err(Error::Usage(
                "--model and --baseline are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Usage(
                "either --model or --baseline identity is required".into(),
            ))
        }
        (m, _) => m.clone(),
    };
    writeln!(err, "{}", Command::Eval(a.clone()).echo()).ok();
    let data = edir::read(&a.data)?;
    let report = match model {
        None => {
            let Some(Baseline::Identity) = a.baseline else {
                unreachable!("checked above")
            };
            evaluate_identity(&data)?
        }
        Some(path) => {
            let ck = edck::load(&path)?;
            if ck.config.seq_len != data.seq_len {
                return Err(Error::format(
                    &path,
                    FormatError::ConfigMismatch(format!(
                        "checkpoint seq_len {} but {} holds segments of {}",
                        ck.config.seq_len,
                        a.data.display(),
                        data.seq_len
                    )),
                ));
            }
            evaluate_parallel(&ck.params, &ck.config, &data, a.batch, a.workers)?
        }
    };
    match &a.out {
        Some(p) => {
            csvio::write_report(p, &report)?;
            let all = &report.all;
            writeln!(
                out,
                "all: rrmse_temporal {:.4} rrmse_spectral {:.4} cc {:.4} over {} samples -> {}",
                all.rrmse_temporal,
                all.rrmse_spectral,
                all.cc,
                all.n_samples,
                p.display()
            )
            .ok();
        }
        None => {
            out.write_all(&csvio::report_bytes(&report)).ok();
        }
    }
    Ok(())
}

fn verify_cmd(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let suites: Vec<&str> = match &a.only {
        Some(name) => {
            let s = SUITES
                .iter()
                .find(|s| **s == name.as_str())
                .ok_or_else(|| {
                    Error::Usage(format!(
                        "unknown suite {name:?} (known: {})",
                        SUITES.join(", ")
                    ))
                })?;
            vec![*s]
        }
        None => SUITES.to_vec(),
    };
    require(a.seeds >= 1, || "--seeds must be at least 1".into())?;
    writeln!(err, "{}", Command::Verify(a.clone()).echo()).ok();
    let opts = VerifyOptions {
        seeds: a.seeds,
        fault: a.inject_fault.map(|f| match f {
            Fault::RetentionBackward => BackwardFault::DecayMask,
            Fault::SwishBackward => BackwardFault::Swish,
        }),
    };
    let mut outcomes = Vec::new();
    for s in suites {
        let started = Instant::now();
        outcomes.extend(verify::run_suite(s, &opts)?);
        writeln!(err, "suite {s}: {:.1}s", started.elapsed().as_secs_f64()).ok();
    }
    out.write_all(verify::render_table(&outcomes).as_bytes())
        .ok();
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{}: {}", o.suite, o.name))
        .collect();
    writeln!(
        out,
        "{}/{} checks passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    )
    .ok();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Failed(format!(
            "failing checks: {}",
            failed.join("; ")
        )))
    }
}

/// Default log location for a checkpoint path.
pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("csv")
}
