use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::rng::streams;
use crate::math::{AdamConfig, AdamState, Rng};

use super::backward::batch_loss;
use super::{forward_batch, loss_and_grads, Batch, GateMode, LossKind, ModelParams, Targets};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub gate_mode: GateMode,
    pub loss: LossKind,
    /// Epochs whose parameters are retained; epoch 0 is the initialization.
    pub snapshot_epochs: Vec<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64, gate_mode: GateMode, loss: LossKind) -> Self {
        TrainConfig {
            epochs,
            adam: AdamConfig::with_lr(lr),
            batch_size: None,
            gate_mode,
            loss,
            snapshot_epochs: vec![0, epochs],
            seed: 0,
        }
    }
}

/// Metrics after an epoch, evaluated on the whole training set.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Value of the training objective.
    pub loss: f64,
    /// Mean squared error `mean (ŷ - y)²` (regression only).
    pub mse: Option<f64>,
    /// Fraction classified correctly (classification only).
    pub accuracy: Option<f64>,
    /// Mini-batch losses of the optimizer steps taken during this epoch.
    pub step_losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub snapshots: Vec<(usize, ModelParams)>,
}

impl TrainOutcome {
    /// First epoch whose training MSE falls below `threshold`.
    pub fn first_epoch_below(&self, threshold: f64) -> Option<usize> {
        self.history
            .iter()
            .find(|r| r.mse.is_some_and(|m| m < threshold))
            .map(|r| r.epoch)
    }

    pub fn snapshot(&self, epoch: usize) -> Option<&ModelParams> {
        self.snapshots.iter().find(|(e, _)| *e == epoch).map(|(_, p)| p)
    }
}

pub fn evaluate(params: &ModelParams, data: &Batch, mode: GateMode, loss: LossKind) -> Result<EpochRecord> {
    let out = forward_batch(params, &data.inputs, mode)?.output;
    let value = batch_loss(&out, &data.targets, loss)?;
    let (mse, accuracy) = match &data.targets {
        Targets::Values(y) => {
            let sq: f64 = out
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            (Some(sq / out.as_slice().len() as f64), None)
        }
        Targets::Classes(labels) => {
            let correct = labels
                .iter()
                .enumerate()
                .filter(|(a, &label)| argmax(out.row(*a)) == label)
                .count();
            (None, Some(correct as f64 / labels.len() as f64))
        }
    };
    Ok(EpochRecord {
        epoch: 0,
        loss: value,
        mse,
        accuracy,
        step_losses: Vec::new(),
    })
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

/// Adam training. `observer` runs after initialization (epoch 0) and after
/// every epoch, with the metrics and current parameters.
pub fn train<F>(mut params: ModelParams, data: &Batch, config: &TrainConfig, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &ModelParams) -> Result<()>,
{
    params.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let batch_size = config.batch_size.unwrap_or(data.len()).clamp(1, data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = Rng::stream(config.seed, streams::SHUFFLE);

    let trainable: Vec<bool> = params.tensors().iter().map(|t| params.is_trainable(t.group)).collect();
    let mut states: Vec<AdamState> = params
        .tensors()
        .iter()
        .map(|t| AdamState::new(t.data.len(), config.adam))
        .collect();

    let mut history = Vec::with_capacity(config.epochs + 1);
    let mut snapshots = Vec::new();

    let mut record = evaluate(&params, data, config.gate_mode, config.loss)?;
    if !record.loss.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    observer(&record, &params)?;
    if config.snapshot_epochs.contains(&0) {
        snapshots.push((0, params.clone()));
    }
    history.push(record);

    let full_batch = batch_size == data.len();
    for epoch in 1..=config.epochs {
        if !full_batch {
            shuffle_rng.shuffle(&mut order);
        }
        let mut step_losses = Vec::with_capacity(data.len().div_ceil(batch_size));
        for chunk in order.chunks(batch_size) {
            let (step_loss, grads) = if full_batch {
                loss_and_grads(&params, data, config.gate_mode, config.loss)?
            } else {
                loss_and_grads(&params, &data.select(chunk), config.gate_mode, config.loss)?
            };
            if !step_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            step_losses.push(step_loss);
            let grad_tensors = grads.tensors();
            for (((p, g), state), &on) in params
                .tensors_mut()
                .into_iter()
                .zip(&grad_tensors)
                .zip(&mut states)
                .zip(&trainable)
            {
                if on {
                    state.step(p.data, g.data)?;
                }
            }
        }
        record = evaluate(&params, data, config.gate_mode, config.loss)?;
        if !record.loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        record.epoch = epoch;
        record.step_losses = step_losses;
        observer(&record, &params)?;
        if config.snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, params.clone()));
        }
        history.push(record);
    }

    Ok(TrainOutcome {
        params,
        history,
        snapshots,
    })
}
