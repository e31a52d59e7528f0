//! The self-verification suite behind `eegdir verify`.
//!
//! Every check measures one number (an error, a deviation or a count of
//! violations) and compares it against a fixed tolerance. Reference values
//! come from direct re-implementations written here, not from the library
//! code under test.

use std::f64::consts::PI;

use eegdir_core::autodiff::cases::primitive_cases;
use eegdir_core::autodiff::{BackwardFault, Tape, Tensor, DEFAULT_STEP};
use eegdir_core::data::{lambda_for_snr, measure_snr, mix_pair, std_pop, Dataset, SamplePair};
use eegdir_core::metrics::SampleMetrics;
use eegdir_core::model::{
    decay_matrix, forward, gradcheck_model, predict, retention, retention_scores, HeadWeights,
    ModelConfig, ModelParams, ParamKind,
};
use eegdir_core::rng::{seeded, Rng};
use eegdir_core::train::{adamw_update, AdamW, OptimState};

use crate::error::Result;
use crate::{edck, edir};

pub const SUITES: [&str; 9] = [
    "gradcheck",
    "decay",
    "retention",
    "causality",
    "relative-position",
    "snr",
    "metrics",
    "adamw",
    "persistence",
];

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(suite: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        // NaN never passes
        let passed = measured <= tolerance;
        Self {
            suite,
            name: name.into(),
            measured,
            tolerance,
            passed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Seeds per gradient check.
    pub seeds: u64,
    /// Backward corruption for mutation testing of the checker itself.
    pub fault: Option<BackwardFault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 20,
            fault: None,
        }
    }
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    Ok(match name {
        "gradcheck" => gradcheck(opts)?,
        "decay" => decay()?,
        "retention" => retention_oracle()?,
        "causality" => causality()?,
        "relative-position" => relative_position()?,
        "snr" => snr()?,
        "metrics" => metrics()?,
        "adamw" => adamw()?,
        "persistence" => persistence()?,
        other => {
            return Err(crate::Error::Usage(format!(
                "unknown suite {other:?} (known: {})",
                SUITES.join(", ")
            )))
        }
    })
}

fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Tiny model used by the gradient and causality checks.
pub fn toy_config() -> ModelConfig {
    ModelConfig::new(32, 8, 8, 2, 2).expect("valid toy config")
}

fn gradcheck(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    const TOL: f64 = 1e-4;
    let mut out = Vec::new();
    for case in primitive_cases() {
        let mut worst = 0.0f64;
        for seed in 0..opts.seeds {
            worst = worst.max(case.check(seed, opts.fault)?.max_rel_err);
        }
        out.push(CheckOutcome::new("gradcheck", case.name, worst, TOL));
    }
    let cfg = toy_config();
    let mut worst = 0.0f64;
    for seed in 0..opts.seeds {
        let params = ModelParams::init(&cfg, seed)?;
        let signal = uniform(&[2, cfg.seq_len], -1.0, 1.0, 1000 + seed);
        let target = uniform(&[2, cfg.seq_len], -1.0, 1.0, 2000 + seed);
        worst = worst.max(
            gradcheck_model(&params, &cfg, &signal, &target, DEFAULT_STEP, opts.fault)?.max_rel_err,
        );
    }
    out.push(CheckOutcome::new(
        "gradcheck",
        "toy model (32/8/8/2/2)",
        worst,
        TOL,
    ));
    Ok(out)
}

fn decay() -> Result<Vec<CheckOutcome>> {
    let mut rng = seeded(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let gamma = rng.random_range(0.01..0.999);
        let t = rng.random_range(1..=64usize);
        let d = decay_matrix(gamma, t)?;
        for n in 0..t {
            for m in 0..t {
                let want = if n >= m {
                    gamma.powf((n - m) as f64)
                } else {
                    0.0
                };
                let got = d.data()[n * t + m];
                // relative to the entry so tiny powers count as much as large ones
                let err = if want == 0.0 {
                    got.abs()
                } else {
                    ((got - want) / want).abs()
                };
                worst = worst.max(err);
            }
        }
    }
    Ok(vec![CheckOutcome::new(
        "decay",
        "decay matrix vs γ^(n−m), 100 draws (relative)",
        worst,
        1e-15,
    )])
}

/// Rotation of channel pairs by `sign·n·θ_j`, the reference for scores.
fn rotate_ref(x: &[f64], d: usize, n: usize, sign: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    for j in 0..d / 2 {
        let theta = 10_000f64.powf(-2.0 * j as f64 / d as f64);
        let (s, c) = (sign * n as f64 * theta).sin_cos();
        let (a, b) = (x[2 * j], x[2 * j + 1]);
        out[2 * j] = a * c - b * s;
        out[2 * j + 1] = a * s + b * c;
    }
    out
}

fn vecmat(x: &[f64], w: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| (0..d).map(|i| x[i] * w[i * d + j]).sum())
        .collect()
}

/// Real part of the non-conjugating complex product of rotated q and k.
fn score_ref(q: &[f64], k: &[f64]) -> f64 {
    q.chunks(2)
        .zip(k.chunks(2))
        .map(|(a, b)| a[0] * b[0] - a[1] * b[1])
        .sum()
}

fn head(d: usize, seed: u64) -> HeadWeights<Tensor> {
    HeadWeights {
        wq: uniform(&[d, d], -0.5, 0.5, seed),
        wk: uniform(&[d, d], -0.5, 0.5, seed + 1),
        wv: uniform(&[d, d], -0.5, 0.5, seed + 2),
    }
}

fn bind_head(tape: &mut Tape, h: &HeadWeights<Tensor>) -> HeadWeights<eegdir_core::autodiff::Var> {
    HeadWeights {
        wq: tape.constant(h.wq.clone()),
        wk: tape.constant(h.wk.clone()),
        wv: tape.constant(h.wv.clone()),
    }
}

fn retention_oracle() -> Result<Vec<CheckOutcome>> {
    let mut worst = 0.0f64;
    let cfg = ModelConfig::default();
    for seed in 0..40u64 {
        let t = 1 + (seed as usize % 8);
        let d = 2 * (1 + (seed as usize / 8) % 4);
        let gamma = 0.5 + 0.45 * ((seed % 7) as f64 / 6.0);
        let x = uniform(&[t, d], -1.0, 1.0, 100 + seed);
        let hw = head(d, 200 + 3 * seed);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone().reshaped([1, t, d])?);
        let hv = bind_head(&mut tape, &hw);
        let y = retention(&mut tape, xv, &hv, gamma, &cfg)?;
        let got = tape.value(y).clone();

        let rows: Vec<&[f64]> = x.data().chunks(d).collect();
        let q: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(n, r)| rotate_ref(&vecmat(r, hw.wq.data(), d), d, n, 1.0))
            .collect();
        let k: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(m, r)| rotate_ref(&vecmat(r, hw.wk.data(), d), d, m, -1.0))
            .collect();
        let v: Vec<Vec<f64>> = rows.iter().map(|r| vecmat(r, hw.wv.data(), d)).collect();
        let mut want = vec![0.0; t * d];
        for n in 0..t {
            for m in 0..=n {
                let w = gamma.powi((n - m) as i32) * score_ref(&q[n], &k[m]);
                for j in 0..d {
                    want[n * d + j] += w * v[m][j];
                }
            }
        }
        worst = worst.max(max_abs_diff(got.data(), &want));
    }
    Ok(vec![CheckOutcome::new(
        "retention",
        "retention vs Σ γ^(n−m)(q_n·k_m)v_m, T ≤ 8",
        worst,
        1e-12,
    )])
}

fn causality() -> Result<Vec<CheckOutcome>> {
    let cfg = toy_config();
    let params = ModelParams::init(&cfg, 5)?;
    let (len, p) = (cfg.seq_len, cfg.patch_size);
    let mut violations = 0.0;
    for seed in 0..10u64 {
        let x = uniform(&[1, len], -1.0, 1.0, 300 + seed);
        let base = predict(&params, &cfg, &x)?;
        for prefix in 1..cfg.tokens() {
            let mut y = x.clone();
            let mut rng = seeded(400 + seed * 64 + prefix as u64);
            y.data_mut()[prefix * p..]
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-3.0..3.0));
            let out = predict(&params, &cfg, &y)?;
            if out.data()[..prefix * p] != base.data()[..prefix * p] {
                violations += 1.0;
            }
        }
    }
    Ok(vec![CheckOutcome::new(
        "causality",
        "prefix outputs unchanged by later tokens (violations)",
        violations,
        0.0,
    )])
}

fn relative_position() -> Result<Vec<CheckOutcome>> {
    let cfg = ModelConfig::default();
    let (t, d) = (16, 8);
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let token = uniform(&[d], -1.0, 1.0, 500 + seed);
        let x = Tensor::from_fn([1, t, d], |i| token.data()[i % d]);
        let hw = head(d, 600 + 3 * seed);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let hv = bind_head(&mut tape, &hw);
        let (scores, _) = retention_scores(&mut tape, xv, &hv, &cfg)?;
        let s = tape.value(scores).data().to_vec();
        for n in 0..t {
            for m in 0..t {
                // compare every entry with the first entry of its diagonal
                let (n0, m0) = if n >= m { (n - m, 0) } else { (0, m - n) };
                worst = worst.max((s[n * t + m] - s[n0 * t + m0]).abs());
            }
        }
    }
    Ok(vec![CheckOutcome::new(
        "relative-position",
        "diagonal spread of scores, identical tokens (T=16)",
        worst,
        1e-10,
    )])
}

fn rms_ref(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn snr() -> Result<Vec<CheckOutcome>> {
    let (mut snr_err, mut std_err, mut lambda_err) = (0.0f64, 0.0f64, 0.0f64);
    for pair in 0..50u64 {
        let x = uniform(&[256], -1.0, 1.0, 700 + pair);
        let n = uniform(&[256], -2.0, 2.0, 800 + pair);
        for snr in -7..=2 {
            let lambda = lambda_for_snr(x.data(), n.data(), snr as f64)?;
            let expect = rms_ref(x.data()) / (rms_ref(n.data()) * 10f64.powf(snr as f64 / 10.0));
            lambda_err = lambda_err.max(((lambda - expect) / expect).abs());
            let s = mix_pair(x.data(), n.data(), snr)?;
            let clean: Vec<f64> = s.clean.iter().map(|v| v * s.sigma_y).collect();
            let noise: Vec<f64> = s
                .noisy
                .iter()
                .zip(&s.clean)
                .map(|(y, c)| (y - c) * s.sigma_y)
                .collect();
            snr_err = snr_err.max((measure_snr(&clean, &noise)? - snr as f64).abs());
            std_err = std_err.max((std_pop(&s.noisy)? - 1.0).abs());
        }
    }
    Ok(vec![
        CheckOutcome::new(
            "snr",
            "λ vs RMS(x)/(RMS(n)·10^(snr/10)) (relative)",
            lambda_err,
            1e-12,
        ),
        CheckOutcome::new(
            "snr",
            "re-measured SNR after mixing (dB), 50 pairs × 10 levels",
            snr_err,
            1e-9,
        ),
        CheckOutcome::new("snr", "|std(stored noisy) − 1|", std_err, 1e-12),
    ])
}

fn psd_ref(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let ang = 2.0 * PI * ((k * j) % n) as f64 / n as f64;
                re += v * ang.cos();
                im -= v * ang.sin();
            }
            (re * re + im * im) / n as f64
        })
        .collect()
}

fn cc_ref(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>();
    let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>();
    let vb = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>();
    cov / (va * vb).sqrt()
}

fn metrics() -> Result<Vec<CheckOutcome>> {
    let (mut t_err, mut s_err, mut c_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut ident = 0.0f64;
    for pair in 0..100u64 {
        let x = uniform(&[512], -1.0, 1.0, 900 + pair);
        let xhat = uniform(&[512], -1.0, 1.0, 1900 + pair);
        let (x, xhat) = (x.data(), xhat.data());
        let m = SampleMetrics::compute(xhat, x)?;
        let diff: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| a - b).collect();
        t_err = t_err.max((m.rrmse_temporal - rms_ref(&diff) / rms_ref(x)).abs());
        let (px, ph) = (psd_ref(x), psd_ref(xhat));
        let pd: Vec<f64> = ph.iter().zip(&px).map(|(a, b)| a - b).collect();
        s_err = s_err.max((m.rrmse_spectral - rms_ref(&pd) / rms_ref(&px)).abs());
        c_err = c_err.max((m.cc - cc_ref(xhat, x)).abs());

        let same = SampleMetrics::compute(x, x)?;
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let double = SampleMetrics::compute(&twice, x)?;
        for (got, want) in [
            (same.rrmse_temporal, 0.0),
            (same.rrmse_spectral, 0.0),
            (same.cc, 1.0),
            (double.rrmse_temporal, 1.0),
            (double.rrmse_spectral, 3.0),
            (double.cc, 1.0),
        ] {
            ident = ident.max((got - want).abs());
        }
    }
    Ok(vec![
        CheckOutcome::new(
            "metrics",
            "rrmse_temporal vs direct formula, 100 pairs × 512",
            t_err,
            1e-10,
        ),
        CheckOutcome::new("metrics", "rrmse_spectral vs O(N²) DFT", s_err, 1e-10),
        CheckOutcome::new("metrics", "cc vs two-pass covariance", c_err, 1e-10),
        CheckOutcome::new(
            "metrics",
            "identities x̂=x → (0,0,1), x̂=2x → (1,3,1)",
            ident,
            1e-12,
        ),
    ])
}

/// Hand-rolled AdamW on f(θ) = θ², starting at θ = 1.5.
pub fn quadratic_reference(wd: f64, steps: i32) -> Vec<f64> {
    let (lr, b1, b2, eps) = (5e-4, 0.5f64, 0.9f64, 1e-8);
    let (mut th, mut m, mut v) = (1.5f64, 0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = 2.0 * th;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        th -= lr * wd * th;
        th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        out.push(th);
    }
    out
}

fn adamw() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for wd in [0.0, 0.01] {
        let h = AdamW {
            weight_decay: wd,
            ..AdamW::default()
        };
        let (mut th, mut m, mut v) = ([1.5], [0.0], [0.0]);
        let mut worst = 0.0f64;
        for (t, want) in (1..=10).zip(quadratic_reference(wd, 10)) {
            let g = [2.0 * th[0]];
            adamw_update(&mut th, &g, &mut m, &mut v, t, &h, true);
            worst = worst.max((th[0] - want).abs());
        }
        out.push(CheckOutcome::new(
            "adamw",
            format!("10 steps on θ², wd = {wd}"),
            worst,
            1e-12,
        ));
    }

    // zero gradients: weights shrink by (1 − lr·wd) per step, the rest stays put
    let cfg = toy_config();
    let mut params = ModelParams::init(&cfg, 9)?;
    let before = params.clone();
    let mut state = OptimState::new(&params, AdamW::default());
    let zeros: Vec<Vec<f64>> = params
        .entries()
        .iter()
        .map(|(_, _, t)| vec![0.0; t.len()])
        .collect();
    let refs: Vec<&[f64]> = zeros.iter().map(Vec::as_slice).collect();
    for _ in 0..3 {
        state.step(&mut params, &refs)?;
    }
    let factor = (1.0 - 5e-4 * 1e-2f64).powi(3);
    let (mut weight_err, mut other_moved) = (0.0f64, 0.0);
    for ((_, kind, a), (_, _, b)) in before.entries().into_iter().zip(params.entries()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            match kind {
                ParamKind::Weight => weight_err = weight_err.max((x * factor - y).abs()),
                _ if x.to_bits() != y.to_bits() => other_moved += 1.0,
                _ => {}
            }
        }
    }
    out.push(CheckOutcome::new(
        "adamw",
        "pure decay of weight matrices",
        weight_err,
        1e-15,
    ));
    out.push(CheckOutcome::new(
        "adamw",
        "biases/norms changed under pure decay (count)",
        other_moved,
        0.0,
    ));
    Ok(out)
}

fn persistence() -> Result<Vec<CheckOutcome>> {
    let mismatch = |same: bool| if same { 0.0 } else { 1.0 };
    let samples = (0..5u64)
        .map(|i| {
            let clean = uniform(&[64], -1.0, 1.0, 3000 + i).into_data();
            let noisy = uniform(&[64], -2.0, 2.0, 3100 + i).into_data();
            SamplePair {
                clean,
                noisy,
                sigma_y: 0.5 + i as f64,
                snr_db: i as i32 - 2,
            }
        })
        .collect();
    let data = Dataset {
        seq_len: 64,
        snr_grid: (-2..=2).collect(),
        samples,
    };
    let bytes = edir::encode(&data)?;
    let back = edir::decode(&bytes)?;
    let again = edir::encode(&back)?;

    let cfg = toy_config();
    let params = ModelParams::init(&cfg, 11)?;
    let mut state = OptimState::new(&params, AdamW::default());
    let grads: Vec<Vec<f64>> = params
        .entries()
        .iter()
        .map(|(_, _, t)| vec![0.25; t.len()])
        .collect();
    let mut stepped = params.clone();
    state.step(
        &mut stepped,
        &grads.iter().map(Vec::as_slice).collect::<Vec<_>>(),
    )?;
    let ck = edck::encode(&cfg, &stepped, Some(&state))?;
    let loaded = edck::decode(&ck)?;
    let ck2 = edck::encode(&loaded.config, &loaded.params, loaded.optim.as_ref())?;
    let x = uniform(&[2, cfg.seq_len], -1.0, 1.0, 3200);
    let y1 = predict(&stepped, &cfg, &x)?;
    let y2 = predict(&loaded.params, &loaded.config, &x)?;
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();

    let mut tape = Tape::new();
    let w = loaded.params.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let y3 = forward(&mut tape, xv, &w, &loaded.config)?;
    let y3 = tape.value(y3).clone();

    Ok(vec![
        CheckOutcome::new(
            "persistence",
            "dataset decode == f32-rounded original",
            mismatch(back == edir::quantize(&data)),
            0.0,
        ),
        CheckOutcome::new(
            "persistence",
            "dataset encode∘decode∘encode byte-identical",
            mismatch(bytes == again),
            0.0,
        ),
        CheckOutcome::new(
            "persistence",
            "checkpoint save∘load∘save byte-identical",
            mismatch(ck == ck2),
            0.0,
        ),
        CheckOutcome::new(
            "persistence",
            "checkpoint restores config, params and optimizer state",
            mismatch(
                loaded.config == cfg
                    && loaded.params == stepped
                    && loaded.optim.as_ref() == Some(&state),
            ),
            0.0,
        ),
        CheckOutcome::new(
            "persistence",
            "forward outputs bit-identical after reload",
            mismatch(bits(&y1) == bits(&y2) && bits(&y1) == bits(&y3)),
            0.0,
        ),
    ])
}

/// Fixed-width pass/fail table.
pub fn render_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes
        .iter()
        .map(|o| o.suite.len() + o.name.chars().count() + 2)
        .max()
        .unwrap_or(10);
    let mut s = format!(
        "{:<6} {:<width$} {:>12} {:>10}\n",
        "status", "check", "measured", "tolerance"
    );
    for o in outcomes {
        let label = format!("{}: {}", o.suite, o.name);
        s.push_str(&format!(
            "{:<6} {:<width$} {:>12.3e} {:>10.0e}\n",
            if o.passed { "PASS" } else { "FAIL" },
            label,
            o.measured,
            o.tolerance
        ));
    }
    s
}
