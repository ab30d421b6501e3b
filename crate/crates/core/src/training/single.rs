use crate::error::{Error, Result};
use crate::model::{ClassifierParams, ModelConfig, PredictorModel, Variant};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Intent,
    Trajectory,
}

/// Single-task counterpart sharing the source model's weights.
///
/// The intent variant keeps the encoder and a classifier pooled over
/// encoder states only (the encoder half of the first classifier layer);
/// the trajectory variant keeps encoder and decoder and drops the
/// classifier.
pub fn build_single_task(model: &PredictorModel, which: Task) -> Result<PredictorModel> {
    let h = model.config.hidden;
    match which {
        Task::Trajectory => {
            let decoder = model
                .decoder
                .clone()
                .ok_or_else(|| Error::Config("source model has no decoder".into()))?;
            Ok(PredictorModel {
                config: ModelConfig {
                    variant: Variant::Trajectory,
                    ..model.config.clone()
                },
                norm: model.norm.clone(),
                encoder: model.encoder.clone(),
                decoder: Some(decoder),
                classifier: None,
            })
        }
        Task::Intent => {
            let c = model
                .classifier
                .as_ref()
                .ok_or_else(|| Error::Config("source model has no classifier".into()))?;
            let w = &c.layer1_w;
            let layer1_w = if w.cols() == h {
                w.clone()
            } else {
                let data = (0..w.rows()).flat_map(|i| w.row(i)[..h].to_vec()).collect();
                Tensor::matrix(w.rows(), h, data)?
            };
            Ok(PredictorModel {
                config: ModelConfig {
                    variant: Variant::Intent,
                    ..model.config.clone()
                },
                norm: model.norm.clone(),
                encoder: model.encoder.clone(),
                decoder: None,
                classifier: Some(ClassifierParams {
                    pool_enc: c.pool_enc.clone(),
                    pool_dec: None,
                    layer1_w,
                    layer1_b: c.layer1_b.clone(),
                    layer2_w: c.layer2_w.clone(),
                    layer2_b: c.layer2_b.clone(),
                }),
            })
        }
    }
}
