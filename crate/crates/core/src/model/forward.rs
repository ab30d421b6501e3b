//! Forward passes. Everything runs on a [`Tape`] so the same code serves
//! inference, training and Jacobians for adaptation.

use super::{
    ClassifierVars, DecoderVars, ModelVars, PredictionOutput, PredictorModel, ScoreFn, INPUT_DIM,
    OUTPUT_DIM,
};
use crate::error::{Error, Result};
use crate::numeric::{softmax, Tape, Tensor, Var};

/// How the decoder obtains its previous output.
#[derive(Clone, Copy, Debug)]
pub(crate) enum DecodeMode<'a> {
    /// Feed back the model's own prediction.
    Autoregressive,
    /// Feed back ground truth `[m × 3]` (cm), i.e. teacher forcing.
    TeacherForced(&'a Tensor),
}

/// Output nodes of one forward pass.
pub(crate) struct ForwardVars {
    /// `[steps × 3]`, centimetres.
    pub trajectory: Option<Var>,
    pub logits: Option<Var>,
}

fn check_window(model: &PredictorModel, inputs: &Tensor) -> Result<()> {
    let want = [model.config.n_past, INPUT_DIM];
    if inputs.shape() != want {
        return Err(Error::shape("input window", &want, inputs.shape()));
    }
    Ok(())
}

fn normalized_rows(tape: &mut Tape, model: &PredictorModel, inputs: &Tensor) -> Vec<Var> {
    (0..inputs.rows())
        .map(|i| tape.leaf(Tensor::vector(model.norm.normalize_row(inputs.row(i)))))
        .collect()
}

fn encode_var(tape: &mut Tape, model: &PredictorModel, vars: &ModelVars, rows: &[Var]) -> Result<Vec<Var>> {
    let mut h = tape.leaf(Tensor::zeros(&[model.config.hidden]));
    let mut states = Vec::with_capacity(rows.len());
    for &x in rows {
        h = vars.encoder.step(tape, h, x)?;
        states.push(h);
    }
    Ok(states)
}

fn attend_var(tape: &mut Tape, score: ScoreFn, dec: &DecoderVars, h_prev: Var, enc: Var) -> Result<(Var, Var)> {
    let raw = match score {
        ScoreFn::General => {
            let q = tape.matvec_t(dec.attn_score, h_prev)?;
            tape.matvec(enc, q)?
        }
        ScoreFn::Cosine => tape.cosine_rows(enc, h_prev)?,
    };
    let weights = tape.softmax(raw)?;
    let context = tape.matvec_t(enc, weights)?;
    Ok((context, weights))
}

/// Decoder rollout in the standardised position frame.
fn decode_var(
    tape: &mut Tape,
    score: ScoreFn,
    dec: &DecoderVars,
    enc: Var,
    h0: Var,
    y0: Var,
    steps: usize,
    teacher: Option<&[Var]>,
) -> Result<(Vec<Var>, Vec<Var>)> {
    let mut h = h0;
    let mut y_prev = y0;
    let mut ys = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    for s in 0..steps {
        let (context, _) = attend_var(tape, score, dec, h, enc)?;
        let x = tape.concat(&[y_prev, context])?;
        h = dec.cell.step(tape, h, x)?;
        let y = tape.matvec(dec.out_proj, h)?;
        ys.push(y);
        states.push(h);
        y_prev = match teacher {
            Some(tf) => tf[s],
            None => y,
        };
    }
    Ok((ys, states))
}

/// Attention pooling `Σ_t softmax_t(u·h_t) h_t` over the rows of `states`.
fn pool_var(tape: &mut Tape, states: Var, u: Var) -> Result<Var> {
    let scores = tape.matvec(states, u)?;
    let w = tape.softmax(scores)?;
    tape.matvec_t(states, w)
}

fn logits_var(tape: &mut Tape, cls: &ClassifierVars, enc: Var, dec: Option<Var>) -> Result<Var> {
    let pooled_enc = pool_var(tape, enc, cls.pool_enc)?;
    let features = match (dec, cls.pool_dec) {
        (Some(d), Some(u)) => {
            let pooled_dec = pool_var(tape, d, u)?;
            tape.concat(&[pooled_enc, pooled_dec])?
        }
        (None, None) => pooled_enc,
        _ => {
            return Err(Error::Config(
                "classifier decoder pooling does not match the decoder".into(),
            ))
        }
    };
    let hidden_pre = tape.linear(cls.layer1_w, features, cls.layer1_b)?;
    let hidden = tape.tanh(hidden_pre);
    tape.linear(cls.layer2_w, hidden, cls.layer2_b)
}

/// Maps standardised decoder outputs back to centimetres and stacks them.
fn to_cm(tape: &mut Tape, model: &PredictorModel, ys: &[Var]) -> Result<Var> {
    let scale = tape.leaf(model.norm.position_scale());
    let offset = tape.leaf(model.norm.position_offset());
    let rows = ys
        .iter()
        .map(|&y| {
            let s = tape.mul(y, scale)?;
            tape.add(s, offset)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.stack_rows(&rows)
}

fn last_position(inputs: &Tensor) -> Vec<f64> {
    inputs.row(inputs.rows() - 1)[..OUTPUT_DIM].to_vec()
}

fn teacher_rows(tape: &mut Tape, model: &PredictorModel, target: &Tensor, steps: usize) -> Result<Vec<Var>> {
    if target.rows() < steps || target.cols() != OUTPUT_DIM {
        return Err(Error::shape("teacher target", &[steps, OUTPUT_DIM], target.shape()));
    }
    Ok((0..steps)
        .map(|i| tape.leaf(Tensor::vector(model.norm.normalize_position(target.row(i)))))
        .collect())
}

/// Full forward pass on `tape` using already-bound parameters.
pub(crate) fn forward_var(
    tape: &mut Tape,
    model: &PredictorModel,
    vars: &ModelVars,
    inputs: &Tensor,
    mode: DecodeMode<'_>,
) -> Result<ForwardVars> {
    check_window(model, inputs)?;
    let rows = normalized_rows(tape, model, inputs);
    let enc_states = encode_var(tape, model, vars, &rows)?;
    let enc = tape.stack_rows(&enc_states)?;
    let h_last = *enc_states.last().expect("n_past > 0");

    let mut trajectory = None;
    let mut dec_mat = None;
    if let Some(dec) = &vars.decoder {
        let steps = model.config.m_future;
        let y0 = tape.leaf(Tensor::vector(model.norm.normalize_position(&last_position(inputs))));
        let teacher = match mode {
            DecodeMode::Autoregressive => None,
            DecodeMode::TeacherForced(target) => Some(teacher_rows(tape, model, target, steps)?),
        };
        let (ys, states) = decode_var(tape, model.config.score, dec, enc, h_last, y0, steps, teacher.as_deref())?;
        trajectory = Some(to_cm(tape, model, &ys)?);
        dec_mat = Some(tape.stack_rows(&states)?);
    }

    let logits = match &vars.classifier {
        Some(cls) => Some(logits_var(tape, cls, enc, dec_mat)?),
        None => None,
    };
    Ok(ForwardVars { trajectory, logits })
}

/// First `steps` predicted positions, flattened `[steps·3]` (cm). Only the
/// encoder and `steps` decoder iterations are placed on the tape.
pub(crate) fn trajectory_prefix_var(
    tape: &mut Tape,
    model: &PredictorModel,
    vars: &ModelVars,
    inputs: &Tensor,
    steps: usize,
) -> Result<Var> {
    check_window(model, inputs)?;
    let dec = vars
        .decoder
        .as_ref()
        .ok_or_else(|| Error::Config("model variant has no trajectory decoder".into()))?;
    let rows = normalized_rows(tape, model, inputs);
    let enc_states = encode_var(tape, model, vars, &rows)?;
    let enc = tape.stack_rows(&enc_states)?;
    let h_last = *enc_states.last().expect("n_past > 0");
    let y0 = tape.leaf(Tensor::vector(model.norm.normalize_position(&last_position(inputs))));
    let (ys, _) = decode_var(tape, model.config.score, dec, enc, h_last, y0, steps, None)?;
    let scale = tape.leaf(model.norm.position_scale());
    let offset = tape.leaf(model.norm.position_offset());
    let mut parts = Vec::with_capacity(steps);
    for y in ys {
        let s = tape.mul(y, scale)?;
        parts.push(tape.add(s, offset)?);
    }
    tape.concat(&parts)
}

/// Encoder hidden states `[n × H]` for a raw input window `[n × 6]`, starting
/// from a zero state.
pub fn encode(model: &PredictorModel, inputs: &Tensor) -> Result<Tensor> {
    check_window(model, inputs)?;
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let rows = normalized_rows(&mut tape, model, inputs);
    let states = encode_var(&mut tape, model, &vars, &rows)?;
    let stacked = tape.stack_rows(&states)?;
    Ok(tape.value(stacked).clone())
}

fn decoder_or_err(model: &PredictorModel) -> Result<()> {
    if model.decoder.is_none() {
        return Err(Error::Config("model variant has no trajectory decoder".into()));
    }
    Ok(())
}

fn check_states(model: &PredictorModel, states: &Tensor, what: &'static str) -> Result<()> {
    if states.ndim() != 2 || states.cols() != model.config.hidden {
        return Err(Error::shape(what, &[states.rows(), model.config.hidden], states.shape()));
    }
    Ok(())
}

/// Attention context and weights for one decoder step.
pub fn attend(model: &PredictorModel, h_dec_prev: &Tensor, enc_states: &Tensor) -> Result<(Tensor, Tensor)> {
    decoder_or_err(model)?;
    check_states(model, enc_states, "attend encoder states")?;
    if h_dec_prev.shape() != [model.config.hidden] {
        return Err(Error::shape("attend decoder state", &[model.config.hidden], h_dec_prev.shape()));
    }
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let dec = vars.decoder.as_ref().expect("checked above");
    let h = tape.leaf(h_dec_prev.clone());
    let enc = tape.leaf(enc_states.clone());
    let (c, w) = attend_var(&mut tape, model.config.score, dec, h, enc)?;
    Ok((tape.value(c).clone(), tape.value(w).clone()))
}

/// Autoregressive decoder rollout. `h0` is normally the final encoder state
/// and `y0` the last observed position (cm). Returns the trajectory
/// `[m × 3]` (cm) and decoder states `[m × H]`.
pub fn decode(model: &PredictorModel, enc_states: &Tensor, h0: &Tensor, y0: &Tensor) -> Result<(Tensor, Tensor)> {
    decoder_or_err(model)?;
    check_states(model, enc_states, "decode encoder states")?;
    if h0.shape() != [model.config.hidden] {
        return Err(Error::shape("decode h0", &[model.config.hidden], h0.shape()));
    }
    if y0.shape() != [OUTPUT_DIM] {
        return Err(Error::shape("decode y0", &[OUTPUT_DIM], y0.shape()));
    }
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let dec = vars.decoder.as_ref().expect("checked above");
    let enc = tape.leaf(enc_states.clone());
    let h = tape.leaf(h0.clone());
    let y = tape.leaf(Tensor::vector(model.norm.normalize_position(y0.data())));
    let (ys, states) = decode_var(&mut tape, model.config.score, dec, enc, h, y, model.config.m_future, None)?;
    let traj = to_cm(&mut tape, model, &ys)?;
    let states = tape.stack_rows(&states)?;
    Ok((tape.value(traj).clone(), tape.value(states).clone()))
}

/// Intent distribution from encoder states and (for the multi-task variant)
/// decoder states.
pub fn classify(model: &PredictorModel, enc_states: &Tensor, dec_states: Option<&Tensor>) -> Result<Tensor> {
    check_states(model, enc_states, "classify encoder states")?;
    if let Some(d) = dec_states {
        check_states(model, d, "classify decoder states")?;
    }
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let cls = vars
        .classifier
        .as_ref()
        .ok_or_else(|| Error::Config("model variant has no classifier".into()))?;
    let enc = tape.leaf(enc_states.clone());
    let dec = dec_states.map(|d| tape.leaf(d.clone()));
    let logits = logits_var(&mut tape, cls, enc, dec)?;
    softmax(tape.value(logits))
}

/// Encode, decode and classify one raw input window.
pub fn predict_model(model: &PredictorModel, inputs: &Tensor) -> Result<PredictionOutput> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let out = forward_var(&mut tape, model, &vars, inputs, DecodeMode::Autoregressive)?;
    let trajectory = out.trajectory.map(|v| tape.value(v).clone());
    let intent_logits = out.logits.map(|v| tape.value(v).clone());
    let intent_proba = intent_logits.as_ref().map(softmax).transpose()?;
    Ok(PredictionOutput {
        trajectory,
        intent_logits,
        intent_proba,
    })
}
