use rayon::prelude::*;
use serde::Serialize;

use crate::data::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::model::{PredictionOutput, Predictor};
use crate::numeric::Tensor;

/// Evaluation summary. Fields a predictor cannot produce stay empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub n_samples: usize,
    pub accuracy: Option<f64>,
    pub mse_cm2: Option<f64>,
    /// Rows are true intents, columns predicted intents.
    pub per_intent_confusion: Option<Vec<Vec<u64>>>,
}

/// Mean over time steps of the squared Euclidean position error.
pub fn trajectory_mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() || pred.ndim() != 2 {
        return Err(Error::shape("trajectory_mse", pred.shape(), target.shape()));
    }
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.rows() as f64)
}

/// Accumulates metrics from predictions in sample order.
#[derive(Default)]
pub(crate) struct MetricsAccumulator {
    n: usize,
    mse_sum: f64,
    mse_n: usize,
    correct: usize,
    cls_n: usize,
    confusion: Option<Vec<Vec<u64>>>,
}

impl MetricsAccumulator {
    pub fn add(&mut self, out: &PredictionOutput, window: &TrajectoryWindow) -> Result<()> {
        self.n += 1;
        if let Some(traj) = &out.trajectory {
            self.mse_sum += trajectory_mse(traj, &window.target)?;
            self.mse_n += 1;
        }
        if let (Some(proba), Some(pred)) = (&out.intent_proba, out.predicted_intent()) {
            let k = proba.len();
            if window.label == 0 || window.label > k {
                return Err(Error::LabelOutOfRange { label: window.label, n: k });
            }
            let conf = self.confusion.get_or_insert_with(|| vec![vec![0; k]; k]);
            if conf.len() != k {
                return Err(Error::shape("intent distribution", &[conf.len()], &[k]));
            }
            conf[window.label - 1][pred - 1] += 1;
            self.correct += usize::from(pred == window.label);
            self.cls_n += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> Metrics {
        Metrics {
            n_samples: self.n,
            accuracy: (self.cls_n > 0).then(|| self.correct as f64 / self.cls_n as f64),
            mse_cm2: (self.mse_n > 0).then(|| self.mse_sum / self.mse_n as f64),
            per_intent_confusion: self.confusion,
        }
    }
}

/// Predictions for every window, computed in parallel, returned in order.
pub fn predict_all<P: Predictor>(predictor: &P, windows: &[TrajectoryWindow]) -> Result<Vec<PredictionOutput>> {
    windows.par_iter().map(|w| predictor.predict(&w.inputs)).collect()
}

/// Accuracy (argmax, ties to the lowest intent) and mean per-sample
/// trajectory MSE in cm².
pub fn evaluate<P: Predictor>(predictor: &P, windows: &[TrajectoryWindow]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Empty("evaluation windows"));
    }
    let outputs = predict_all(predictor, windows)?;
    let mut acc = MetricsAccumulator::default();
    for (out, w) in outputs.iter().zip(windows) {
        acc.add(out, w)?;
    }
    Ok(acc.finish())
}
