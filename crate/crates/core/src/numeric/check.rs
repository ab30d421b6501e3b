//! Gradients, Jacobians and finite-difference checks for expressions built on
//! a [`Tape`].
//!
//! An expression is any closure that receives a fresh tape plus one leaf per
//! [`ParamVector`] entry (in entry order) and returns its output node.

use super::{ParamVector, Tape, Tensor, Var};
use crate::error::{Error, Result};

fn bind(tape: &mut Tape, at: &ParamVector) -> Vec<Var> {
    at.entries().iter().map(|(_, t)| tape.leaf(t.clone())).collect()
}

/// Value of a scalar expression.
pub fn evaluate<F>(f: &F, at: &ParamVector) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves = bind(&mut tape, at);
    let out = f(&mut tape, &leaves)?;
    scalar_value(&tape, out)
}

fn scalar_value(tape: &Tape, out: Var) -> Result<f64> {
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::shape("scalar expression output", &[1], v.shape()));
    }
    Ok(v.item())
}

/// Value and exact reverse-mode gradient of a scalar expression with respect
/// to every entry of `at`.
pub fn gradient<F>(f: F, at: &ParamVector) -> Result<(f64, ParamVector)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves = bind(&mut tape, at);
    let out = f(&mut tape, &leaves)?;
    let value = scalar_value(&tape, out)?;
    let grads = tape.backward(out, Tensor::scalar(1.0))?;
    let entries = at
        .entries()
        .iter()
        .zip(&leaves)
        .map(|((name, t), &v)| (name.clone(), grads.get_or_zeros(v, t)))
        .collect();
    Ok((value, ParamVector::new(entries)?))
}

/// Output value and `[out_dim × n]` Jacobian of a vector expression, where
/// `n` is `at.total_len()`. Row `i` is the gradient of output component `i`.
pub fn jacobian<F>(f: F, at: &ParamVector, out_dim: usize) -> Result<(Tensor, Tensor)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves = bind(&mut tape, at);
    let out = f(&mut tape, &leaves)?;
    let value = tape.value(out).clone();
    if value.len() != out_dim {
        return Err(Error::shape("jacobian output", &[out_dim], value.shape()));
    }
    let n = at.total_len();
    let mut jac = vec![0.0; out_dim * n];
    for i in 0..out_dim {
        let mut seed = Tensor::zeros(value.shape());
        seed.data_mut()[i] = 1.0;
        let grads = tape.backward(out, seed)?;
        let row = &mut jac[i * n..(i + 1) * n];
        let mut offset = 0;
        for ((_, t), &v) in at.entries().iter().zip(&leaves) {
            if let Some(g) = grads.get(v) {
                row[offset..offset + t.len()].copy_from_slice(g.data());
            }
            offset += t.len();
        }
    }
    Ok((value, Tensor::matrix(out_dim, n, jac)?))
}

/// Denominator floor for relative errors.
pub const REL_ERR_FLOOR: f64 = 1e-12;

/// Relative discrepancy between an analytic and a numerical derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the reverse-mode gradient of `f` at `at` against central
/// differences with step `h` and returns the worst relative error over all
/// entries.
///
/// `f` must be differentiable in a neighbourhood of radius `h` around `at`;
/// kinks inside that ball make the numerical side meaningless.
pub fn finite_diff_check<F>(f: F, at: &ParamVector, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    worst_error(f, at, h, |g| (g(h) - g(-h)) / (2.0 * h))
}

/// Same as [`finite_diff_check`] with the five-point central stencil
/// `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`. Its O(h⁴) truncation
/// error allows a larger step, which keeps rounding noise in the loss from
/// swamping very small gradient entries.
pub fn finite_diff_check_five_point<F>(f: F, at: &ParamVector, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    worst_error(f, at, h, |g| (8.0 * (g(h) - g(-h)) - (g(2.0 * h) - g(-2.0 * h))) / (12.0 * h))
}

fn worst_error<F, D>(f: F, at: &ParamVector, h: f64, derivative: D) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    D: Fn(&mut dyn FnMut(f64) -> f64) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let (_, grad) = gradient(&f, at)?;
    let analytic = grad.flatten();
    let base = at.flatten();
    let mut probe = base.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut failure = None;
        let mut shifted = |d: f64| {
            probe[i] = base[i] + d;
            let v = at.unflatten(&probe).and_then(|p| evaluate(&f, &p));
            probe[i] = base[i];
            v.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        };
        let numeric = derivative(&mut shifted);
        if let Some(e) = failure {
            return Err(e);
        }
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
