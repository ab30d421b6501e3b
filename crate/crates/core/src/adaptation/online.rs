use std::time::Instant;

use serde::Serialize;

use super::{adapt_step, init, AdapterConfig, ModelTarget, StackedPair};
use crate::data::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::model::{PredictionOutput, Predictor, PredictorModel};
use crate::numeric::Tensor;
use crate::training::{predict_all, trajectory_mse, Metrics};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub frozen_mse: f64,
    pub adapted_mse: f64,
    pub frozen_intent_correct: Option<bool>,
    pub adapted_intent_correct: Option<bool>,
    /// Euclidean norm of `Y − Ŷ`; absent before the first update.
    pub innovation_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptationSummary {
    pub n_windows: usize,
    pub n_updates: u64,
    pub n_adapted_params: usize,
    pub frozen: Metrics,
    pub adapted: Metrics,
    /// `100·(frozen − adapted)/frozen` on trajectory MSE.
    pub mse_improvement_pct: f64,
    pub accuracy_delta: Option<f64>,
}

/// Wall-clock measurements; not reproducible across runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub adapt_step_ms: Vec<f64>,
    pub mean_adapt_step_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptationReport {
    pub config: AdapterConfig,
    pub steps: Vec<StepRecord>,
    pub summary: AdaptationSummary,
    pub timing: Timing,
}

fn correct(out: &PredictionOutput, label: usize) -> Option<bool> {
    out.predicted_intent().map(|p| p == label)
}

fn metrics_of(records: &[StepRecord], pick: impl Fn(&StepRecord) -> (f64, Option<bool>)) -> Metrics {
    let n = records.len();
    let mse = records.iter().map(|r| pick(r).0).sum::<f64>() / n as f64;
    let flags: Vec<bool> = records.iter().filter_map(|r| pick(r).1).collect();
    let accuracy = (!flags.is_empty()).then(|| flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64);
    Metrics {
        n_samples: n,
        accuracy,
        mse_cm2: Some(mse),
        per_intent_confusion: None,
    }
}

/// Replays a time-ordered stream with prequential evaluation.
///
/// At window `t` both the frozen and the adapted model predict first; then
/// the first `horizon` target positions of window `t − horizon` count as
/// observed, and one update is made from the `k` newest observed windows.
/// `model` ends up holding the adapted weights.
pub fn run_online(model: &mut PredictorModel, stream: &[TrajectoryWindow], cfg: &AdapterConfig) -> Result<AdaptationReport> {
    cfg.validate()?;
    let needed = cfg.k + cfg.horizon;
    if stream.len() < needed {
        return Err(Error::Config(format!(
            "stream has {} windows, adaptation with k={} and horizon={} needs at least {needed}",
            stream.len(),
            cfg.k,
            cfg.horizon
        )));
    }
    for w in stream {
        if w.target.rows() < cfg.horizon {
            return Err(Error::shape("stream target", &[cfg.horizon, 3], w.target.shape()));
        }
    }
    let frozen_out = predict_all(&*model, stream)?;
    let mut state = init(&ModelTarget::new(model), cfg)?;
    let n_params = state.n();

    let mut steps = Vec::with_capacity(stream.len());
    let mut times = Vec::new();
    for (t, w) in stream.iter().enumerate() {
        let adapted = model.predict(&w.inputs)?;
        let frozen = &frozen_out[t];
        let traj = |o: &PredictionOutput| -> Result<f64> {
            let p = o
                .trajectory
                .as_ref()
                .ok_or_else(|| Error::Config("model variant has no trajectory decoder".into()))?;
            trajectory_mse(p, &w.target)
        };
        let mut record = StepRecord {
            step: t,
            frozen_mse: traj(frozen)?,
            adapted_mse: traj(&adapted)?,
            frozen_intent_correct: correct(frozen, w.label),
            adapted_intent_correct: correct(&adapted, w.label),
            innovation_norm: None,
        };

        if t + 1 >= needed {
            let newest = t - cfg.horizon;
            let window = &stream[newest + 1 - cfg.k..=newest];
            let y: Vec<f64> = window
                .iter()
                .flat_map(|s| s.target.data()[..3 * cfg.horizon].to_vec())
                .collect();
            let pair = StackedPair {
                inputs: window.iter().map(|s| s.inputs.clone()).collect(),
                y: Tensor::vector(y),
            };
            let start = Instant::now();
            let innovation = adapt_step(&mut state, &mut ModelTarget::new(model), &pair, cfg)?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
            record.innovation_norm = Some(innovation.data().iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        steps.push(record);
    }

    let frozen = metrics_of(&steps, |r| (r.frozen_mse, r.frozen_intent_correct));
    let adapted = metrics_of(&steps, |r| (r.adapted_mse, r.adapted_intent_correct));
    let (fm, am) = (frozen.mse_cm2.unwrap_or(0.0), adapted.mse_cm2.unwrap_or(0.0));
    let mse_improvement_pct = if fm > 0.0 { 100.0 * (fm - am) / fm } else { 0.0 };
    let accuracy_delta = match (frozen.accuracy, adapted.accuracy) {
        (Some(f), Some(a)) => Some(a - f),
        _ => None,
    };
    let mean = times.iter().sum::<f64>() / times.len().max(1) as f64;
    Ok(AdaptationReport {
        config: cfg.clone(),
        summary: AdaptationSummary {
            n_windows: stream.len(),
            n_updates: state.step_count,
            n_adapted_params: n_params,
            frozen,
            adapted,
            mse_improvement_pct,
            accuracy_delta,
        },
        steps,
        timing: Timing {
            adapt_step_ms: times,
            mean_adapt_step_ms: mean,
        },
    })
}
