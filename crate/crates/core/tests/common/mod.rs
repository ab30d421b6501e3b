#![allow(dead_code)]

use hrc_predict::numeric::{ParamVector, Seed, Tensor};
use rand::Rng;

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn pv(entries: Vec<(&str, Tensor)>) -> ParamVector {
    ParamVector::new(entries.into_iter().map(|(n, t)| (n.to_string(), t)).collect()).unwrap()
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    Seed(seed).rng()
}

pub fn naive_matvec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get2(i, j) * v[j]).sum())
        .collect()
}

pub fn naive_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn synth_windows(profile: hrc_predict::data::SubjectProfile, trials: usize, seed: u64) -> Vec<hrc_predict::data::TrajectoryWindow> {
    use hrc_predict::data::{prepare_windows, synth_generate, SmoothingConfig, M_FUTURE, N_PAST};
    let trajs = synth_generate(&[profile], trials, Seed(seed)).unwrap();
    prepare_windows(&trajs, Some(SmoothingConfig::default()), N_PAST, M_FUTURE, 1).unwrap()
}

/// Every `step`-th window, so tiny training sets still cover all actions.
pub fn thin(windows: &[hrc_predict::data::TrajectoryWindow], step: usize) -> Vec<hrc_predict::data::TrajectoryWindow> {
    windows.iter().step_by(step).cloned().collect()
}

/// `y = H θ` where the input tensor is `H` itself (`[d × n]`).
pub struct LinearTarget {
    pub theta: ParamVector,
}

impl LinearTarget {
    pub fn new(theta: Vec<f64>) -> Self {
        LinearTarget {
            theta: pv(vec![("theta", Tensor::vector(theta))]),
        }
    }
}

impl hrc_predict::adaptation::AdaptTarget for LinearTarget {
    fn select(&self, _: &hrc_predict::adaptation::AdapterConfig) -> hrc_predict::Result<ParamVector> {
        Ok(self.theta.clone())
    }

    fn write_back(&mut self, theta: &ParamVector) -> hrc_predict::Result<()> {
        self.theta = theta.clone();
        Ok(())
    }

    fn output_dim(&self, cfg: &hrc_predict::adaptation::AdapterConfig) -> usize {
        let _ = cfg;
        LINEAR_D
    }

    fn output_and_jacobian(
        &self,
        input: &Tensor,
        theta: &ParamVector,
        _: &hrc_predict::adaptation::AdapterConfig,
    ) -> hrc_predict::Result<(Tensor, Tensor)> {
        let y = naive_matvec(input, &theta.flatten());
        Ok((Tensor::vector(y), input.clone()))
    }
}

pub const LINEAR_D: usize = 3;

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Weighted regularised least squares that a recursive estimator with
/// forgetting `lambda` reproduces after seeing `(hs[i], ys[i])` in order:
/// the prior `(θ₀, p0·I)` carries weight `λᵗ`, observation `i` carries
/// `λ^(t−i)` with noise variance `r`. Returns `(θ, information matrix)`.
pub fn weighted_ridge(
    hs: &[Tensor],
    ys: &[Vec<f64>],
    theta0: &[f64],
    p0: f64,
    r: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = theta0.len();
    let t = hs.len();
    let prior_w = lambda.powi(t as i32) / p0;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        a[i][i] = prior_w;
        b[i] = prior_w * theta0[i];
    }
    for (s, (h, y)) in hs.iter().zip(ys).enumerate() {
        let w = lambda.powi((t - s) as i32) / r;
        for row in 0..h.rows() {
            let hr = h.row(row);
            for i in 0..n {
                b[i] += w * hr[i] * y[row];
                for j in 0..n {
                    a[i][j] += w * hr[i] * hr[j];
                }
            }
        }
    }
    (solve(a.clone(), b), a)
}

pub mod graph_oracle;
