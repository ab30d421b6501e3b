//! Multi-task trajectory and intention predictor.
//!
//! A GRU encoder reads the past `n_past` frames of wrist position and
//! velocity. An attention GRU decoder, seeded with the final encoder state and
//! the last observed position, rolls out `m_future` positions through a linear
//! output projection. A classifier pools the encoder and decoder state
//! sequences with learned attention and outputs a distribution over intents.
//!
//! GRU convention (fixed so checkpoints are portable):
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! ĥ  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ ĥ
//! ```
//!
//! Inputs are standardised by a [`Normalizer`] stored with the model; the
//! decoder works in the same standardised position frame and its outputs are
//! mapped back to centimetres, so every public entry point speaks cm.

mod checkpoint;
mod forward;
mod gru;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ParamVector, Seed, Tape, Tensor, Var};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use forward::{attend, classify, decode, encode, predict_model};
pub(crate) use forward::{forward_var, trajectory_prefix_var, DecodeMode};
pub use gru::{gru_step, GruCellParams};

/// Per-frame input features: position (x, y, z) then velocity (x, y, z).
pub const INPUT_DIM: usize = 6;
/// Predicted wrist position (x, y, z).
pub const OUTPUT_DIM: usize = 3;

/// Attention score between the previous decoder state and encoder states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFn {
    /// Bilinear `h_decᵀ A h_enc`.
    General,
    /// Cosine similarity; no learned weights involved.
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Encoder, decoder and classifier pooled over both state sequences.
    Multi,
    /// Encoder and classifier pooled over encoder states only.
    Intent,
    /// Encoder and decoder; no classifier.
    Trajectory,
}

impl Variant {
    pub fn has_decoder(self) -> bool {
        !matches!(self, Variant::Intent)
    }

    pub fn has_classifier(self) -> bool {
        !matches!(self, Variant::Trajectory)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub n_past: usize,
    pub m_future: usize,
    pub n_intents: usize,
    pub classifier_hidden: usize,
    pub score: ScoreFn,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            n_past: 20,
            m_future: 10,
            n_intents: 12,
            classifier_hidden: 64,
            score: ScoreFn::General,
            variant: Variant::Multi,
        }
    }
}

impl ModelConfig {
    pub fn with_hidden(hidden: usize) -> Self {
        ModelConfig {
            hidden,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden", self.hidden),
            ("n_past", self.n_past),
            ("m_future", self.m_future),
            ("n_intents", self.n_intents),
            ("classifier_hidden", self.classifier_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Per-dimension input standardisation. Positions share the first three
/// entries with the decoder's output frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; INPUT_DIM],
    pub std: [f64; INPUT_DIM],
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            mean: [0.0; INPUT_DIM],
            std: [1.0; INPUT_DIM],
        }
    }
}

impl Normalizer {
    /// Statistics over every input row of the given windows. Dimensions with
    /// (near) zero spread keep unit scale.
    pub fn fit<'a>(inputs: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; INPUT_DIM];
        let mut sq = [0.0; INPUT_DIM];
        for t in inputs {
            if t.cols() != INPUT_DIM {
                return Err(Error::shape("normalizer fit", &[INPUT_DIM], t.shape()));
            }
            for i in 0..t.rows() {
                for (d, &x) in t.row(i).iter().enumerate() {
                    sum[d] += x;
                    sq[d] += x * x;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Empty("normalizer fit"));
        }
        let n = count as f64;
        let mut out = Normalizer::default();
        for d in 0..INPUT_DIM {
            let mean = sum[d] / n;
            let var = (sq[d] / n - mean * mean).max(0.0);
            out.mean[d] = mean;
            out.std[d] = if var.sqrt() > 1e-8 { var.sqrt() } else { 1.0 };
        }
        Ok(out)
    }

    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(d, &x)| (x - self.mean[d]) / self.std[d])
            .collect()
    }

    pub fn normalize_position(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(d, &x)| (x - self.mean[d]) / self.std[d])
            .collect()
    }

    pub fn position_scale(&self) -> Tensor {
        Tensor::vector(self.std[..OUTPUT_DIM].to_vec())
    }

    pub fn position_offset(&self) -> Tensor {
        Tensor::vector(self.mean[..OUTPUT_DIM].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub cell: GruCellParams,
    /// `[H × H]`, bilinear attention weights (unused by the cosine score).
    pub attn_score: Tensor,
    /// `[3 × H]`
    pub out_proj: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub pool_enc: Tensor,
    pub pool_dec: Option<Tensor>,
    pub layer1_w: Tensor,
    pub layer1_b: Tensor,
    pub layer2_w: Tensor,
    pub layer2_b: Tensor,
}

/// Output of one forward pass. Single-task variants leave the part they do
/// not model empty.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionOutput {
    /// `[m × 3]`, centimetres.
    pub trajectory: Option<Tensor>,
    pub intent_logits: Option<Tensor>,
    /// Softmax of the logits over the intents.
    pub intent_proba: Option<Tensor>,
}

impl PredictionOutput {
    /// Predicted intent, 1-based.
    pub fn predicted_intent(&self) -> Option<usize> {
        self.intent_proba.as_ref().map(|p| p.argmax() + 1)
    }
}

/// Anything that maps a window of raw inputs to a prediction.
pub trait Predictor: Sync {
    fn predict(&self, inputs: &Tensor) -> Result<PredictionOutput>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorModel {
    pub config: ModelConfig,
    pub norm: Normalizer,
    pub encoder: GruCellParams,
    pub decoder: Option<DecoderParams>,
    pub classifier: Option<ClassifierParams>,
}

fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

impl PredictorModel {
    /// Randomly initialised model: every tensor drawn from
    /// `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new(config: ModelConfig, seed: Seed) -> Result<Self> {
        config.validate()?;
        let mut rng = seed.rng();
        let init = |rng: &mut rand_chacha::ChaCha8Rng, shape: &[usize], fan_in: usize| {
            uniform_tensor(rng, shape, fan_in)
        };
        Self::build(config, |shape, fan_in| init(&mut rng, shape, fan_in))
    }

    /// Model with every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Self::build(config, |shape, _| Tensor::zeros(shape))
    }

    fn build(config: ModelConfig, mut make: impl FnMut(&[usize], usize) -> Tensor) -> Result<Self> {
        let h = config.hidden;
        let encoder = GruCellParams::build(INPUT_DIM, h, &mut make);
        let decoder = if config.variant.has_decoder() {
            Some(DecoderParams {
                cell: GruCellParams::build(OUTPUT_DIM + h, h, &mut make),
                attn_score: make(&[h, h], h),
                out_proj: make(&[OUTPUT_DIM, h], h),
            })
        } else {
            None
        };
        let classifier = if config.variant.has_classifier() {
            let with_dec = config.variant == Variant::Multi;
            let feat = if with_dec { 2 * h } else { h };
            let c = config.classifier_hidden;
            Some(ClassifierParams {
                pool_enc: make(&[h], h),
                pool_dec: with_dec.then(|| make(&[h], h)),
                layer1_w: make(&[c, feat], feat),
                layer1_b: make(&[c], feat),
                layer2_w: make(&[config.n_intents, c], c),
                layer2_b: make(&[config.n_intents], c),
            })
        } else {
            None
        };
        Ok(PredictorModel {
            config,
            norm: Normalizer::default(),
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn with_normalizer(mut self, norm: Normalizer) -> Self {
        self.norm = norm;
        self
    }

    /// Every parameter tensor with its stable dotted name, in canonical
    /// order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.encoder.push_named("encoder", &mut out);
        if let Some(d) = &self.decoder {
            d.cell.push_named("decoder", &mut out);
            out.push(("attn_score".into(), &d.attn_score));
            out.push(("out_proj".into(), &d.out_proj));
        }
        if let Some(c) = &self.classifier {
            out.push(("pool_enc".into(), &c.pool_enc));
            if let Some(p) = &c.pool_dec {
                out.push(("pool_dec".into(), p));
            }
            out.push(("classifier.layer1.weight".into(), &c.layer1_w));
            out.push(("classifier.layer1.bias".into(), &c.layer1_b));
            out.push(("classifier.layer2.weight".into(), &c.layer2_w));
            out.push(("classifier.layer2.bias".into(), &c.layer2_b));
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.encoder.push_named_mut("encoder", &mut out);
        if let Some(d) = &mut self.decoder {
            d.cell.push_named_mut("decoder", &mut out);
            out.push(("attn_score".into(), &mut d.attn_score));
            out.push(("out_proj".into(), &mut d.out_proj));
        }
        if let Some(c) = &mut self.classifier {
            out.push(("pool_enc".into(), &mut c.pool_enc));
            if let Some(p) = &mut c.pool_dec {
                out.push(("pool_dec".into(), p));
            }
            out.push(("classifier.layer1.weight".into(), &mut c.layer1_w));
            out.push(("classifier.layer1.bias".into(), &mut c.layer1_b));
            out.push(("classifier.layer2.weight".into(), &mut c.layer2_w));
            out.push(("classifier.layer2.bias".into(), &mut c.layer2_b));
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }

    pub fn params(&self) -> ParamVector {
        let entries = self
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        ParamVector::new(entries).expect("model parameter names are unique")
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copies every entry of `values` into the parameter of the same name.
    pub fn write_params(&mut self, values: &ParamVector) -> Result<()> {
        let mut targets = self.named_params_mut();
        for (name, t) in values.entries() {
            let (_, slot) = targets
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::UnknownParam(name.clone()))?;
            if slot.shape() != t.shape() {
                return Err(Error::shape("write_params", slot.shape(), t.shape()));
            }
            slot.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }

    /// Overwrites all parameters from a flat vector in canonical order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        let total = self.num_params();
        if flat.len() != total {
            return Err(Error::shape("set_flat", &[total], &[flat.len()]));
        }
        for (_, t) in self.named_params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.named_params() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Resolves group names to concrete parameter names. A group name
    /// selects the parameter with exactly that name or every parameter
    /// nested under it (`"encoder"` selects all encoder tensors,
    /// `"classifier.layer2"` its weight and bias).
    pub fn resolve_subset<S: AsRef<str>>(&self, subset: &[S]) -> Result<Vec<String>> {
        let names = self.param_names();
        let mut out: Vec<String> = Vec::new();
        for group in subset {
            let group = group.as_ref();
            let prefix = format!("{group}.");
            let matched: Vec<&String> = names
                .iter()
                .filter(|n| n.as_str() == group || n.starts_with(&prefix))
                .collect();
            if matched.is_empty() {
                return Err(Error::UnknownParam(group.to_string()));
            }
            for m in matched {
                if !out.contains(m) {
                    out.push(m.clone());
                }
            }
        }
        Ok(out)
    }

    /// Snapshot of the named parameter groups as one flat-viewable vector.
    /// Write it back with [`PredictorModel::write_params`].
    pub fn select_params<S: AsRef<str>>(&self, subset: &[S]) -> Result<ParamVector> {
        let names = self.resolve_subset(subset)?;
        let all = self.named_params();
        let entries = names
            .into_iter()
            .map(|n| {
                let t = all.iter().find(|(m, _)| *m == n).expect("resolved name exists").1;
                (n, t.clone())
            })
            .collect();
        ParamVector::new(entries)
    }

    /// Places every parameter on `tape` as a leaf.
    pub(crate) fn bind(&self, tape: &mut Tape) -> ModelVars {
        let encoder = self.encoder.bind(tape);
        let decoder = self.decoder.as_ref().map(|d| DecoderVars {
            cell: d.cell.bind(tape),
            attn_score: tape.leaf(d.attn_score.clone()),
            out_proj: tape.leaf(d.out_proj.clone()),
        });
        let classifier = self.classifier.as_ref().map(|c| ClassifierVars {
            pool_enc: tape.leaf(c.pool_enc.clone()),
            pool_dec: c.pool_dec.as_ref().map(|p| tape.leaf(p.clone())),
            layer1_w: tape.leaf(c.layer1_w.clone()),
            layer1_b: tape.leaf(c.layer1_b.clone()),
            layer2_w: tape.leaf(c.layer2_w.clone()),
            layer2_b: tape.leaf(c.layer2_b.clone()),
        });
        ModelVars {
            encoder,
            decoder,
            classifier,
        }
    }
}

impl Predictor for PredictorModel {
    fn predict(&self, inputs: &Tensor) -> Result<PredictionOutput> {
        predict_model(self, inputs)
    }
}

pub(crate) struct DecoderVars {
    pub cell: gru::GruVars,
    pub attn_score: Var,
    pub out_proj: Var,
}

pub(crate) struct ClassifierVars {
    pub pool_enc: Var,
    pub pool_dec: Option<Var>,
    pub layer1_w: Var,
    pub layer1_b: Var,
    pub layer2_w: Var,
    pub layer2_b: Var,
}

pub(crate) struct ModelVars {
    pub encoder: gru::GruVars,
    pub decoder: Option<DecoderVars>,
    pub classifier: Option<ClassifierVars>,
}

impl ModelVars {
    /// Rebuilds the structure from leaves given in
    /// [`PredictorModel::named_params`] order.
    pub fn from_leaves(model: &PredictorModel, leaves: &[Var]) -> Result<Self> {
        if leaves.len() != model.named_params().len() {
            return Err(Error::Config(format!(
                "expected {} parameter leaves, got {}",
                model.named_params().len(),
                leaves.len()
            )));
        }
        let mut it = leaves.iter().copied();
        let mut next = || it.next().expect("length checked");
        let cell = |next: &mut dyn FnMut() -> Var| gru::GruVars {
            w_z: next(),
            w_r: next(),
            w_h: next(),
            u_z: next(),
            u_r: next(),
            u_h: next(),
            b_z: next(),
            b_r: next(),
            b_h: next(),
        };
        let encoder = cell(&mut next);
        let decoder = model.decoder.as_ref().map(|_| DecoderVars {
            cell: cell(&mut next),
            attn_score: next(),
            out_proj: next(),
        });
        let classifier = model.classifier.as_ref().map(|c| ClassifierVars {
            pool_enc: next(),
            pool_dec: c.pool_dec.as_ref().map(|_| next()),
            layer1_w: next(),
            layer1_b: next(),
            layer2_w: next(),
            layer2_b: next(),
        });
        Ok(ModelVars {
            encoder,
            decoder,
            classifier,
        })
    }

    /// Binds the model with the named parameters taken from `subset`
    /// (matched by position with `names`) and everything else as fresh
    /// constants.
    pub fn bind_with(model: &PredictorModel, tape: &mut Tape, names: &[String], subset: &[Var]) -> Result<Self> {
        let leaves: Vec<Var> = model
            .named_params()
            .into_iter()
            .map(|(name, t)| match names.iter().position(|n| *n == name) {
                Some(i) => subset[i],
                None => tape.leaf(t.clone()),
            })
            .collect();
        Self::from_leaves(model, &leaves)
    }

    /// Leaves in the same order as [`PredictorModel::named_params`].
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = self.encoder.leaves().to_vec();
        if let Some(d) = &self.decoder {
            out.extend_from_slice(&d.cell.leaves());
            out.push(d.attn_score);
            out.push(d.out_proj);
        }
        if let Some(c) = &self.classifier {
            out.push(c.pool_enc);
            out.extend(c.pool_dec);
            out.extend([c.layer1_w, c.layer1_b, c.layer2_w, c.layer2_b]);
        }
        out
    }
}
