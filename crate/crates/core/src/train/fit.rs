use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::mse_loss;
use super::optim::{AdamW, OptimState};
use crate::autodiff::{Tape, Tensor};
use crate::data::Dataset;
use crate::model::{forward, ModelConfig, ModelParams};
use crate::rng::derive;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optim: AdamW,
    /// Checkpoint cadence in epochs; 0 means only at the end.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            seed: 42,
            optim: AdamW::default(),
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "epochs and batch size must be at least 1 (got {} and {})",
                self.epochs, self.batch_size
            )));
        }
        self.optim.validate()
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
}

/// Receives log rows and checkpoint requests while [`train`] runs.
pub trait TrainObserver {
    fn on_step(&mut self, _row: &LogRow) -> Result<()> {
        Ok(())
    }

    /// Called every `log_every` epochs and once after the last epoch.
    fn on_checkpoint(
        &mut self,
        _epoch: usize,
        _params: &ModelParams,
        _state: &OptimState,
    ) -> Result<()> {
        Ok(())
    }
}

/// Collects every log row in memory.
#[derive(Clone, Debug, Default)]
pub struct LossLog {
    pub rows: Vec<LogRow>,
}

impl TrainObserver for LossLog {
    fn on_step(&mut self, row: &LogRow) -> Result<()> {
        self.rows.push(*row);
        Ok(())
    }
}

/// Forward, MSE, backward and one AdamW update on a single batch.
/// Returns the pre-update loss. Parameters are untouched when the loss or
/// any gradient is non-finite.
pub fn train_step(
    params: &mut ModelParams,
    state: &mut OptimState,
    cfg: &ModelConfig,
    inputs: &Tensor,
    targets: &Tensor,
) -> Result<f64> {
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, true);
    let x = tape.constant(inputs.clone());
    let y = tape.constant(targets.clone());
    let pred = forward(&mut tape, x, &w, cfg)?;
    let loss = mse_loss(&mut tape, pred, y)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss {value}")));
    }
    let grads = tape.backward(loss)?;
    let flat: Vec<&[f64]> = w
        .entries()
        .into_iter()
        .map(|(name, _, v)| {
            grads
                .get(*v)
                .ok_or_else(|| Error::Contract(format!("no gradient for {name}")))
        })
        .collect::<Result<_>>()?;
    state.step(params, &flat)?;
    Ok(value)
}

/// Stacks the selected samples into `[B, |s|]` input and target tensors.
pub fn gather_batch(data: &Dataset, indices: &[usize]) -> Result<(Tensor, Tensor)> {
    let len = data.seq_len;
    let mut noisy = Vec::with_capacity(indices.len() * len);
    let mut clean = Vec::with_capacity(indices.len() * len);
    for &i in indices {
        let s = data
            .samples
            .get(i)
            .ok_or_else(|| Error::Contract(format!("sample index {i} out of range")))?;
        noisy.extend_from_slice(&s.noisy);
        clean.extend_from_slice(&s.clean);
    }
    Ok((
        Tensor::new([indices.len(), len], noisy)?,
        Tensor::new([indices.len(), len], clean)?,
    ))
}

/// Order in which `epoch` visits the samples: a permutation seeded by
/// `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derive(seed, epoch as u64));
    order
}

/// Summary of a finished run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
}

/// Mini-batch AdamW over `epochs` passes (epochs are numbered from 1). The
/// last batch of an epoch may be short. Aborts on a non-finite loss, leaving
/// `params` and `state` at their last good values.
pub fn train(
    params: &mut ModelParams,
    state: &mut OptimState,
    cfg: &ModelConfig,
    data: &Dataset,
    tc: &TrainConfig,
    observer: &mut impl TrainObserver,
) -> Result<TrainSummary> {
    tc.validate()?;
    cfg.validate()?;
    params.validate(cfg)?;
    state.validate(params)?;
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if data.seq_len != cfg.seq_len {
        return Err(Error::Config(format!(
            "model seq_len {} does not match dataset seq_len {}",
            cfg.seq_len, data.seq_len
        )));
    }
    state.hyper = tc.optim;
    let mut summary = TrainSummary {
        steps: 0,
        final_loss: f64::NAN,
    };
    for epoch in 1..=tc.epochs {
        for batch in epoch_order(data.len(), tc.seed, epoch).chunks(tc.batch_size) {
            let (x, y) = gather_batch(data, batch)?;
            let loss = train_step(params, state, cfg, &x, &y).map_err(|e| match e {
                Error::NonFinite(m) => {
                    Error::NonFinite(format!("{m} (epoch {epoch}, step {})", state.t + 1))
                }
                other => other,
            })?;
            summary.steps += 1;
            summary.final_loss = loss;
            observer.on_step(&LogRow {
                epoch,
                step: state.t,
                loss,
            })?;
        }
        if epoch == tc.epochs || (tc.log_every > 0 && epoch % tc.log_every == 0) {
            observer.on_checkpoint(epoch, params, state)?;
        }
    }
    Ok(summary)
}
