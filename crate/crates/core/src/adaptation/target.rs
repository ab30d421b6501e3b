use super::AdapterConfig;
use crate::error::{Error, Result};
use crate::model::{trajectory_prefix_var, ModelVars, PredictorModel, OUTPUT_DIM};
use crate::numeric::{jacobian, ParamVector, Tensor};

/// A model whose selected parameters can be adapted.
pub trait AdaptTarget {
    /// Current values of the parameters named in `cfg.subset`.
    fn select(&self, cfg: &AdapterConfig) -> Result<ParamVector>;

    fn write_back(&mut self, theta: &ParamVector) -> Result<()>;

    /// Outputs compared against one observation.
    fn output_dim(&self, cfg: &AdapterConfig) -> usize;

    /// Output `[d]` and Jacobian `[d × n]` with respect to `theta` for one
    /// input, where `d = output_dim(cfg)`.
    fn output_and_jacobian(&self, input: &Tensor, theta: &ParamVector, cfg: &AdapterConfig) -> Result<(Tensor, Tensor)>;
}

/// Adapts a [`PredictorModel`] on its first `horizon` predicted positions.
#[derive(Debug)]
pub struct ModelTarget<'a> {
    pub model: &'a mut PredictorModel,
}

impl<'a> ModelTarget<'a> {
    pub fn new(model: &'a mut PredictorModel) -> Self {
        ModelTarget { model }
    }
}

impl AdaptTarget for ModelTarget<'_> {
    fn select(&self, cfg: &AdapterConfig) -> Result<ParamVector> {
        if self.model.decoder.is_none() {
            return Err(Error::Config("adaptation needs a model with a trajectory decoder".into()));
        }
        if cfg.horizon > self.model.config.m_future {
            return Err(Error::Config(format!(
                "horizon {} exceeds prediction length {}",
                cfg.horizon, self.model.config.m_future
            )));
        }
        self.model.select_params(&cfg.subset)
    }

    fn write_back(&mut self, theta: &ParamVector) -> Result<()> {
        self.model.write_params(theta)
    }

    fn output_dim(&self, cfg: &AdapterConfig) -> usize {
        OUTPUT_DIM * cfg.horizon
    }

    fn output_and_jacobian(&self, input: &Tensor, theta: &ParamVector, cfg: &AdapterConfig) -> Result<(Tensor, Tensor)> {
        let model = &*self.model;
        let names: Vec<String> = theta.names().map(str::to_string).collect();
        let f = |tape: &mut crate::numeric::Tape, leaves: &[crate::numeric::Var]| {
            let vars = ModelVars::bind_with(model, tape, &names, leaves)?;
            trajectory_prefix_var(tape, model, &vars, input, cfg.horizon)
        };
        jacobian(f, theta, self.output_dim(cfg))
    }
}
