use rayon::prelude::*;

use super::{AdaptTarget, AdapterConfig};
use crate::error::{Error, Result};
use crate::numeric::linalg::{cholesky, cholesky_solve};
use crate::numeric::{ParamVector, Tensor};

/// Adapted parameters θ and the covariance-like matrix P.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterState {
    pub theta: ParamVector,
    /// `[n × n]`, symmetric positive definite.
    pub p: Tensor,
    pub step_count: u64,
}

impl AdapterState {
    pub fn n(&self) -> usize {
        self.theta.total_len()
    }
}

/// `k` consecutive inputs, oldest first, and their stacked observations.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedPair {
    pub inputs: Vec<Tensor>,
    /// `[k·d]`
    pub y: Tensor,
}

/// `θ₀` from the target's current weights and `P₀ = p0·I`.
pub fn init<T: AdaptTarget>(target: &T, cfg: &AdapterConfig) -> Result<AdapterState> {
    cfg.validate()?;
    let theta = target.select(cfg)?;
    let n = theta.total_len();
    let mut p = Tensor::zeros(&[n, n]);
    for i in 0..n {
        p.set2(i, i, cfg.p0);
    }
    Ok(AdapterState {
        theta,
        p,
        step_count: 0,
    })
}

/// One measurement update. Returns the innovation `Y − Ŷ`. The state and
/// target are left untouched when an error is returned.
pub fn adapt_step<T: AdaptTarget>(
    state: &mut AdapterState,
    target: &mut T,
    pair: &StackedPair,
    cfg: &AdapterConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let n = state.n();
    let d = target.output_dim(cfg);
    let q = d * pair.inputs.len();
    if pair.inputs.is_empty() || pair.y.len() != q {
        return Err(Error::shape("stacked observations", &[q], pair.y.shape()));
    }
    if state.p.shape() != [n, n] {
        return Err(Error::shape("adapter covariance", &[n, n], state.p.shape()));
    }

    let mut y_hat = Vec::with_capacity(q);
    let mut h = Vec::with_capacity(q * n);
    for x in &pair.inputs {
        let (out, jac) = target.output_and_jacobian(x, &state.theta, cfg)?;
        if jac.shape() != [d, n] {
            return Err(Error::shape("adaptation jacobian", &[d, n], jac.shape()));
        }
        y_hat.extend_from_slice(out.data());
        h.extend_from_slice(jac.data());
    }
    let innovation: Vec<f64> = pair.y.data().iter().zip(&y_hat).map(|(y, f)| y - f).collect();

    // P Hᵀ, n × q
    let p = state.p.data();
    let mut pht = vec![0.0; n * q];
    pht.par_chunks_mut(q).enumerate().for_each(|(i, row)| {
        let p_row = &p[i * n..(i + 1) * n];
        for (j, v) in row.iter_mut().enumerate() {
            *v = crate::numeric::dot(p_row, &h[j * n..(j + 1) * n]);
        }
    });
    // S = H P Hᵀ + r I, q × q
    let mut s = vec![0.0; q * q];
    for a in 0..q {
        for b in 0..q {
            s[a * q + b] = (0..n).map(|i| h[a * n + i] * pht[i * q + b]).sum();
        }
    }
    for a in 0..q {
        for b in 0..a {
            let avg = 0.5 * (s[a * q + b] + s[b * q + a]);
            s[a * q + b] = avg;
            s[b * q + a] = avg;
        }
        s[a * q + a] += cfg.r;
    }
    let l = cholesky(&s, q)?;
    // K = P Hᵀ S⁻¹, one solve per row since S is symmetric.
    let mut k = pht.clone();
    k.par_chunks_mut(q).for_each(|row| cholesky_solve(&l, q, row));

    let delta: Vec<f64> = (0..n)
        .map(|i| crate::numeric::dot(&k[i * q..(i + 1) * q], &innovation))
        .collect();
    let theta_flat: Vec<f64> = state.theta.flatten().iter().zip(&delta).map(|(t, d)| t + d).collect();
    if theta_flat.iter().any(|v| !v.is_finite()) || k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "adaptation step {} produced a non-finite gain or parameter update",
            state.step_count + 1
        )));
    }
    let theta = state.theta.unflatten(&theta_flat)?;
    target.write_back(&theta)?;
    state.theta = theta;

    // Row i of the update only reads P_ij itself, so it can run in place.
    let inv_lambda = 1.0 / cfg.lambda;
    let p = state.p.data_mut();
    p.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let k_row = &k[i * q..(i + 1) * q];
        for (j, v) in row.iter_mut().enumerate() {
            // (K H P)_ij = K_i · (P Hᵀ)_j
            let khp = crate::numeric::dot(k_row, &pht[j * q..(j + 1) * q]);
            let eps = if i == j { cfg.epsilon } else { 0.0 };
            *v = (*v - khp + eps) * inv_lambda;
        }
    });
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (p[i * n + j] + p[j * n + i]);
            p[i * n + j] = avg;
            p[j * n + i] = avg;
        }
    }
    state.step_count += 1;
    Tensor::new(vec![q], innovation)
}
