use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{joint_loss, sample_loss_var, LossConfig};
use super::metrics::{predict_all, Metrics, MetricsAccumulator};
use crate::data::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Normalizer, PredictorModel};
use crate::numeric::{Seed, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub seed: Seed,
    /// Feed ground truth to the decoder during training.
    pub teacher_forcing: bool,
    /// Rescale the batch gradient to at most this norm.
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without a lower validation loss and
    /// restore the best parameters. Ignored without validation data.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            adam: AdamConfig::default(),
            epochs: 100,
            seed: Seed(0),
            teacher_forcing: true,
            clip_norm: None,
            patience: Some(10),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_mse_cm2: Option<f64>,
}

pub fn write_loss_log(log: &[EpochLog], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in log {
        w.serialize(row).map_err(|e| Error::Config(format!("writing loss log: {e}")))?;
    }
    if log.is_empty() {
        w.write_record(["epoch", "train_loss", "val_loss", "val_accuracy", "val_mse_cm2"])
            .map_err(|e| Error::Config(format!("writing loss log: {e}")))?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing loss log: {e}")))
}

/// Fresh model whose input standardisation is fitted on `train`.
pub fn init_model(config: ModelConfig, seed: Seed, train: &[TrajectoryWindow]) -> Result<PredictorModel> {
    let norm = Normalizer::fit(train.iter().map(|w| &w.inputs))?;
    Ok(PredictorModel::new(config, seed)?.with_normalizer(norm))
}

fn sample_gradient(
    model: &PredictorModel,
    window: &TrajectoryWindow,
    loss: &LossConfig,
    teacher_forcing: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let out = sample_loss_var(
        &mut tape,
        model,
        &vars,
        &window.inputs,
        &window.target,
        window.label,
        loss,
        teacher_forcing,
    )?;
    let value = tape.value(out).item();
    let grads = tape.backward(out, Tensor::scalar(1.0))?;
    let mut flat = Vec::with_capacity(model.num_params());
    for (v, (_, t)) in vars.leaves().into_iter().zip(model.named_params()) {
        match grads.get(v) {
            Some(g) => flat.extend_from_slice(g.data()),
            None => flat.extend(std::iter::repeat(0.0).take(t.len())),
        }
    }
    Ok((value, flat))
}

/// Mean joint loss (autoregressive decoding) and metrics over `windows`.
pub fn validation_pass(
    model: &PredictorModel,
    windows: &[TrajectoryWindow],
    loss: &LossConfig,
) -> Result<(f64, Metrics)> {
    if windows.is_empty() {
        return Err(Error::Empty("validation windows"));
    }
    let outputs = predict_all(model, windows)?;
    let mut acc = MetricsAccumulator::default();
    let mut total = 0.0;
    for (out, w) in outputs.iter().zip(windows) {
        total += joint_loss(out, &w.target, w.label, loss)?;
        acc.add(out, w)?;
    }
    Ok((total / windows.len() as f64, acc.finish()))
}

/// Minibatch Adam over seeded shuffles of `train`. Per-sample gradients are
/// computed in parallel and summed in sample order, so a fixed seed gives
/// bit-identical results. Returns one log row per epoch run.
pub fn train(
    model: &mut PredictorModel,
    train: &[TrajectoryWindow],
    val: &[TrajectoryWindow],
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let n_params = model.num_params();
    let mut state = AdamState::new(n_params);
    let mut rng = cfg.seed.derive(0x7EA1_0001).rng();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| sample_gradient(model, &train[i], loss, cfg.teacher_forcing))
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "training diverged at epoch {epoch}, batch {}: batch loss {}",
                    b + 1,
                    batch_loss * scale
                )));
            }
            if let Some(max) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    grad.iter_mut().for_each(|g| *g *= max / norm);
                }
            }
            epoch_loss += batch_loss;
            let mut flat = model.flat();
            adam_step(&mut flat, &grad, &mut state, &cfg.adam)?;
            model.set_flat(&flat)?;
        }

        let mut row = EpochLog {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_loss: None,
            val_accuracy: None,
            val_mse_cm2: None,
        };
        if !val.is_empty() {
            let (vl, m) = validation_pass(model, val, loss)?;
            row.val_loss = Some(vl);
            row.val_accuracy = m.accuracy;
            row.val_mse_cm2 = m.mse_cm2;
        }
        log.push(row);

        if let (Some(patience), Some(vl)) = (cfg.patience, log.last().and_then(|r| r.val_loss)) {
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, model.flat()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.set_flat(&params)?;
    }
    Ok(log)
}
