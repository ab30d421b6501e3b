use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DecodeMode, ModelVars, PredictionOutput, PredictorModel};
use crate::numeric::{log_softmax, Tape, Tensor, Var};

/// Weighting between the classification and regression terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossConfig {
    gamma: f64,
}

impl LossConfig {
    /// `gamma` must lie strictly inside `(0, 1)`.
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("loss weight gamma must be in (0, 1), got {gamma}")));
        }
        Ok(LossConfig { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { gamma: 0.5 }
    }
}

/// Mean squared error over all entries.
pub fn regression_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("regression_loss", pred.shape(), target.shape()));
    }
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

fn check_label(label: usize, n: usize) -> Result<usize> {
    if label == 0 || label > n {
        return Err(Error::LabelOutOfRange { label, n });
    }
    Ok(label - 1)
}

/// `−ln proba[label]`, label 1-based.
pub fn classification_loss(proba: &Tensor, label: usize) -> Result<f64> {
    let i = check_label(label, proba.len())?;
    Ok(-proba.data()[i].ln())
}

/// Cross-entropy from unnormalised scores via log-softmax.
pub fn classification_loss_from_logits(logits: &Tensor, label: usize) -> Result<f64> {
    let i = check_label(label, logits.len())?;
    Ok(-log_softmax(logits)?.data()[i])
}

fn combine(cls: Option<f64>, reg: Option<f64>, cfg: &LossConfig) -> Result<f64> {
    match (cls, reg) {
        (Some(c), Some(r)) => Ok(cfg.gamma * c + (1.0 - cfg.gamma) * r),
        (Some(c), None) => Ok(c),
        (None, Some(r)) => Ok(r),
        (None, None) => Err(Error::Config("prediction has neither trajectory nor intent output".into())),
    }
}

/// `γ·CE + (1 − γ)·MSE`. Outputs that carry only one task contribute that
/// task's loss alone.
pub fn joint_loss(output: &PredictionOutput, target: &Tensor, label: usize, cfg: &LossConfig) -> Result<f64> {
    let cls = match (&output.intent_logits, &output.intent_proba) {
        (Some(logits), _) => Some(classification_loss_from_logits(logits, label)?),
        (None, Some(proba)) => Some(classification_loss(proba, label)?),
        (None, None) => None,
    };
    let reg = match &output.trajectory {
        Some(traj) => Some(regression_loss(traj, target)?),
        None => None,
    };
    combine(cls, reg, cfg)
}

/// Scalar training loss of one window as a tape node.
pub(crate) fn sample_loss_var(
    tape: &mut Tape,
    model: &PredictorModel,
    vars: &ModelVars,
    inputs: &Tensor,
    target: &Tensor,
    label: usize,
    cfg: &LossConfig,
    teacher_forcing: bool,
) -> Result<Var> {
    let mode = if teacher_forcing {
        DecodeMode::TeacherForced(target)
    } else {
        DecodeMode::Autoregressive
    };
    let out = crate::model::forward_var(tape, model, vars, inputs, mode)?;
    let reg = match out.trajectory {
        Some(traj) => {
            let want = [model.config.m_future, 3];
            if target.shape() != want {
                return Err(Error::shape("target trajectory", &want, target.shape()));
            }
            let t = tape.leaf(target.clone());
            let d = tape.sub(traj, t)?;
            let sq = tape.mul(d, d)?;
            let s = tape.sum(sq);
            Some(tape.affine(s, 1.0 / target.len() as f64, 0.0))
        }
        None => None,
    };
    let cls = match out.logits {
        Some(logits) => {
            let i = check_label(label, model.config.n_intents)?;
            let ls = tape.log_softmax(logits)?;
            let p = tape.pick(ls, i)?;
            Some(tape.affine(p, -1.0, 0.0))
        }
        None => None,
    };
    match (cls, reg) {
        (Some(c), Some(r)) => {
            let c = tape.affine(c, cfg.gamma, 0.0);
            let r = tape.affine(r, 1.0 - cfg.gamma, 0.0);
            tape.add(c, r)
        }
        (Some(c), None) => Ok(c),
        (None, Some(r)) => Ok(r),
        (None, None) => Err(Error::Config("model has neither decoder nor classifier".into())),
    }
}

/// Training loss of one window as an expression of every model parameter,
/// with leaves in [`PredictorModel::named_params`] order. Suitable for
/// [`crate::numeric::gradient`] and [`crate::numeric::finite_diff_check`].
pub fn loss_expression<'a>(
    model: &'a PredictorModel,
    inputs: &'a Tensor,
    target: &'a Tensor,
    label: usize,
    cfg: LossConfig,
    teacher_forcing: bool,
) -> impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'a {
    move |tape, leaves| {
        let vars = ModelVars::from_leaves(model, leaves)?;
        sample_loss_var(tape, model, &vars, inputs, target, label, &cfg, teacher_forcing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_cases() {
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(regression_loss(&t, &t).unwrap(), 0.0);
        let p = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        let q = Tensor::matrix(1, 3, vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(regression_loss(&p, &q).unwrap(), 3.0);
        assert!(regression_loss(&p, &t).is_err());
    }

    #[test]
    fn classification_cases() {
        let uniform = Tensor::vector(vec![1.0 / 12.0; 12]);
        assert!((classification_loss(&uniform, 5).unwrap() - 2.484_906_6).abs() < 1e-7);
        let mut sure = vec![0.0; 12];
        sure[2] = 1.0;
        assert_eq!(classification_loss(&Tensor::vector(sure), 3).unwrap(), 0.0);
        assert!(classification_loss(&uniform, 0).is_err());
        assert!(classification_loss(&uniform, 13).is_err());
        let logits = Tensor::vector(vec![0.0; 12]);
        assert!((classification_loss_from_logits(&logits, 12).unwrap() - 12f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gamma_bounds() {
        assert!(LossConfig::new(0.0).is_err());
        assert!(LossConfig::new(1.0).is_err());
        assert!(LossConfig::new(f64::NAN).is_err());
        assert_eq!(LossConfig::new(0.3).unwrap().gamma(), 0.3);
    }

    #[test]
    fn joint_combination() {
        assert_eq!(combine(Some(2.0), Some(4.0), &LossConfig::default()).unwrap(), 3.0);
        assert_eq!(combine(Some(2.0), None, &LossConfig::default()).unwrap(), 2.0);
        assert!(combine(None, None, &LossConfig::default()).is_err());
    }
}
