mod common;

use common::{LinearTarget, LINEAR_D};
use hrc_predict::adaptation::*;
use hrc_predict::data::{SplitScheme, SplitTag, SubjectProfile};
use hrc_predict::model::{ModelConfig, PredictorModel};
use hrc_predict::numeric::linalg::cholesky;
use hrc_predict::numeric::{Seed, Tensor};
use hrc_predict::training::{init_model, train, LossConfig, TrainConfig};
use proptest::prelude::*;
use rand::Rng;

fn cfg(p0: f64, lambda: f64, r: f64, k: usize) -> AdapterConfig {
    AdapterConfig {
        p0,
        lambda,
        r,
        k,
        ..AdapterConfig::default()
    }
}

fn random_h(rng: &mut impl Rng, n: usize) -> Tensor {
    common::random_tensor(rng, &[LINEAR_D, n], 1.0)
}

fn pair(hs: &[Tensor], ys: &[Vec<f64>]) -> StackedPair {
    StackedPair {
        inputs: hs.to_vec(),
        y: Tensor::vector(ys.concat()),
    }
}

struct Scalar {
    theta: f64,
}

impl AdaptTarget for Scalar {
    fn select(&self, _: &AdapterConfig) -> hrc_predict::Result<hrc_predict::numeric::ParamVector> {
        Ok(common::pv(vec![("w", Tensor::scalar(self.theta))]))
    }
    fn write_back(&mut self, theta: &hrc_predict::numeric::ParamVector) -> hrc_predict::Result<()> {
        self.theta = theta.flatten()[0];
        Ok(())
    }
    fn output_dim(&self, _: &AdapterConfig) -> usize {
        1
    }
    fn output_and_jacobian(
        &self,
        x: &Tensor,
        theta: &hrc_predict::numeric::ParamVector,
        _: &AdapterConfig,
    ) -> hrc_predict::Result<(Tensor, Tensor)> {
        let w = theta.flatten()[0];
        Ok((Tensor::scalar(w * x.item()), Tensor::matrix(1, 1, vec![x.item()])?))
    }
}

fn scalar_step(lambda: f64) -> (AdapterState, Scalar, Tensor) {
    let c = cfg(1.0, lambda, 1.0, 1);
    let mut target = Scalar { theta: 0.0 };
    let mut state = init(&target, &c).unwrap();
    let p = StackedPair {
        inputs: vec![Tensor::scalar(1.0)],
        y: Tensor::scalar(1.0),
    };
    let innov = adapt_step(&mut state, &mut target, &p, &c).unwrap();
    (state, target, innov)
}

#[test]
fn scalar_update_by_hand() {
    // K = 1/(1+1), θ = 0 + K·1, P = 1 − K·1
    let (state, target, innov) = scalar_step(1.0);
    assert_eq!(innov.data(), &[1.0]);
    assert!((state.theta.flatten()[0] - 0.5).abs() < 1e-15);
    assert_eq!(target.theta, state.theta.flatten()[0]);
    assert!((state.p.data()[0] - 0.5).abs() < 1e-15);
    assert_eq!(state.step_count, 1);
}

#[test]
fn forgetting_divides_covariance() {
    let (state, _, _) = scalar_step(0.5);
    assert!((state.p.data()[0] - 1.0).abs() < 1e-15);
    assert!((state.theta.flatten()[0] - 0.5).abs() < 1e-15);
}

#[test]
fn matches_weighted_ridge_oracle() {
    let n = 6;
    for (lambda, seed) in [(1.0, 1), (0.97, 2)] {
        let mut rng = common::rng(seed);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let theta0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let c = cfg(0.3, lambda, 0.8, 1);
        let mut target = LinearTarget::new(theta0.clone());
        let mut state = init(&target, &c).unwrap();
        let (mut hs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..10 {
            let h = random_h(&mut rng, n);
            let y: Vec<f64> = common::naive_matvec(&h, &truth)
                .iter()
                .map(|v| v + rng.random_range(-0.1..0.1))
                .collect();
            adapt_step(&mut state, &mut target, &pair(&[h.clone()], &[y.clone()]), &c).unwrap();
            hs.push(h);
            ys.push(y);
        }
        let (oracle, info) = common::weighted_ridge(&hs, &ys, &theta0, c.p0, c.r, lambda);
        let got = state.theta.flatten();
        assert!(common::max_abs_diff(&got, &oracle) < 1e-10, "lambda {lambda}");
        // P is the inverse of the accumulated information.
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|l| state.p.get2(i, l) * info[l][j]).sum();
                assert!((v - f64::from(u8::from(i == j))).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn stacked_update_equals_sequential_without_forgetting() {
    let n = 5;
    let mut rng = common::rng(9);
    let hs: Vec<Tensor> = (0..4).map(|_| random_h(&mut rng, n)).collect();
    let ys: Vec<Vec<f64>> = (0..4).map(|_| (0..LINEAR_D).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let c1 = cfg(0.5, 1.0, 0.9, 1);
    let mut seq = LinearTarget::new(vec![0.1; n]);
    let mut s1 = init(&seq, &c1).unwrap();
    for (h, y) in hs.iter().zip(&ys) {
        adapt_step(&mut s1, &mut seq, &pair(&[h.clone()], &[y.clone()]), &c1).unwrap();
    }
    let c4 = cfg(0.5, 1.0, 0.9, 4);
    let mut stacked = LinearTarget::new(vec![0.1; n]);
    let mut s4 = init(&stacked, &c4).unwrap();
    adapt_step(&mut s4, &mut stacked, &pair(&hs, &ys), &c4).unwrap();

    assert!(common::max_abs_diff(&s1.theta.flatten(), &s4.theta.flatten()) < 1e-12);
    assert!(common::max_abs_diff(s1.p.data(), s4.p.data()) < 1e-12);
}

#[test]
fn zero_innovation_keeps_theta() {
    let n = 4;
    let mut rng = common::rng(3);
    let theta0 = vec![0.3, -0.2, 0.9, 0.0];
    let c = cfg(0.1, 0.99, 0.95, 1);
    let mut target = LinearTarget::new(theta0.clone());
    let mut state = init(&target, &c).unwrap();
    let p_before = state.p.clone();
    let h = random_h(&mut rng, n);
    let y = common::naive_matvec(&h, &theta0);
    let innov = adapt_step(&mut state, &mut target, &pair(&[h], &[y]), &c).unwrap();
    assert!(innov.data().iter().all(|v| *v == 0.0));
    assert_eq!(state.theta.flatten(), theta0);
    // the covariance still contracts along the observed directions
    assert!(state.p.data()[0] < p_before.data()[0] / c.lambda);
}

#[test]
fn update_reduces_residual_on_the_observed_pair() {
    let n = 8;
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let c = cfg(0.05, 0.999, 0.95, 1);
        let mut target = LinearTarget::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut state = init(&target, &c).unwrap();
        let h = random_h(&mut rng, n);
        let y: Vec<f64> = (0..LINEAR_D).map(|_| rng.random_range(-3.0..3.0)).collect();
        let resid = |theta: &[f64]| -> f64 {
            common::naive_matvec(&h, theta).iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum()
        };
        let before = resid(&state.theta.flatten());
        adapt_step(&mut state, &mut target, &pair(&[h.clone()], &[y.clone()]), &c).unwrap();
        assert!(resid(&state.theta.flatten()) < before);
    }
}

#[test]
fn mismatched_observation_is_rejected_without_mutation() {
    let c = cfg(0.1, 0.99, 0.95, 1);
    let mut target = LinearTarget::new(vec![1.0, 2.0]);
    let mut state = init(&target, &c).unwrap();
    let before = state.clone();
    let bad = StackedPair {
        inputs: vec![Tensor::zeros(&[LINEAR_D, 2])],
        y: Tensor::vector(vec![0.0; LINEAR_D + 1]),
    };
    assert!(adapt_step(&mut state, &mut target, &bad, &c).is_err());
    assert_eq!(state, before);
    assert_eq!(target.theta.flatten(), vec![1.0, 2.0]);
}

#[test]
fn invalid_configs_rejected() {
    let target = LinearTarget::new(vec![0.0]);
    for bad in [cfg(0.0, 0.99, 1.0, 1), cfg(0.1, 0.0, 1.0, 1), cfg(0.1, 0.99, -1.0, 1), cfg(0.1, 0.99, 1.0, 0)] {
        assert!(init(&target, &bad).is_err());
    }
    let empty = AdapterConfig {
        subset: Vec::new(),
        ..AdapterConfig::default()
    };
    assert!(empty.validate().is_err());
}

#[test]
fn default_init_on_full_size_model() {
    let model = PredictorModel::new(ModelConfig::with_hidden(64), Seed(1)).unwrap();
    let c = AdapterConfig::default();
    assert_eq!((c.p0, c.lambda, c.r, c.epsilon), (0.01, 0.999, 0.95, 0.0));
    let mut m = model.clone();
    let state = init(&ModelTarget::new(&mut m), &c).unwrap();
    assert_eq!(state.n(), 12288);
    assert_eq!(state.p.shape(), &[12288, 12288]);
    for i in (0..12288).step_by(997) {
        assert_eq!(state.p.get2(i, i), 0.01);
        assert_eq!(state.p.get2(i, (i + 1) % 12288), 0.0);
    }
    assert_eq!(state.theta.get("encoder.U_z"), Some(&model.encoder.u_z));
}

fn small_trained(seed: u64) -> (PredictorModel, Vec<hrc_predict::data::TrajectoryWindow>) {
    let a = common::synth_windows(SubjectProfile::reference("A", 1), 6, seed);
    let ds = hrc_predict::data::split(a, &"ratio:0.7:0.1:0.2".parse::<SplitScheme>().unwrap(), Seed(seed)).unwrap();
    let train_set = common::thin(&ds.get(SplitTag::Train), 2);
    let mut model = init_model(ModelConfig::with_hidden(8), Seed(seed), &train_set).unwrap();
    let tc = TrainConfig {
        epochs: 15,
        batch_size: 16,
        seed: Seed(seed),
        patience: None,
        ..TrainConfig::default()
    };
    train(&mut model, &train_set, &[], &tc, &LossConfig::default()).unwrap();
    (model, ds.get(SplitTag::Test))
}

#[test]
fn online_run_bookkeeping() {
    let (model, stream) = small_trained(4);
    let c = AdapterConfig { k: 2, ..AdapterConfig::default() };
    let mut adapted = model.clone();
    let report = run_online(&mut adapted, &stream, &c).unwrap();
    let s = &report.summary;
    assert_eq!(s.n_windows, stream.len());
    assert_eq!(s.n_updates as usize, stream.len() - c.k - c.horizon + 1);
    assert_eq!(s.n_adapted_params, 3 * 8 * 8);
    assert_eq!(report.timing.adapt_step_ms.len(), s.n_updates as usize);
    assert!(report.steps[..c.k + c.horizon - 1].iter().all(|r| r.innovation_norm.is_none()));
    assert!(report.steps[c.k + c.horizon - 1..].iter().all(|r| r.innovation_norm.is_some()));
    // before the first update the adapted model is the frozen one
    assert_eq!(report.steps[0].frozen_mse, report.steps[0].adapted_mse);
    let mean = |f: fn(&StepRecord) -> f64| report.steps.iter().map(f).sum::<f64>() / report.steps.len() as f64;
    assert!((mean(|r| r.frozen_mse) - s.frozen.mse_cm2.unwrap()).abs() < 1e-12);
    assert!((mean(|r| r.adapted_mse) - s.adapted.mse_cm2.unwrap()).abs() < 1e-12);
    let pct = 100.0 * (s.frozen.mse_cm2.unwrap() - s.adapted.mse_cm2.unwrap()) / s.frozen.mse_cm2.unwrap();
    assert!((pct - s.mse_improvement_pct).abs() < 1e-9);
    assert_ne!(adapted, model);
    assert_eq!(adapted.decoder, model.decoder);
    assert_eq!(adapted.encoder.w_z, model.encoder.w_z);
}

#[test]
fn online_errors_leave_model_untouched() {
    let (model, stream) = small_trained(5);
    let mut m = model.clone();
    let c = AdapterConfig { k: 5, ..AdapterConfig::default() };
    assert!(run_online(&mut m, &stream[..5], &c).is_err());
    let bad = AdapterConfig {
        subset: vec!["encoder.nope".into()],
        ..AdapterConfig::default()
    };
    assert!(run_online(&mut m, &stream, &bad).is_err());
    let intent_only = hrc_predict::training::build_single_task(&model, hrc_predict::training::Task::Intent).unwrap();
    let mut io = intent_only.clone();
    assert!(run_online(&mut io, &stream, &AdapterConfig::default()).is_err());
    assert_eq!(m, model);
    assert_eq!(io, intent_only);
}

#[test]
fn adaptation_on_shifted_and_reference_streams() {
    let (model, a_stream) = small_trained(6);
    let b_stream = common::synth_windows(SubjectProfile::shifted("B", 2), 2, 6);
    let c = AdapterConfig { k: 2, ..AdapterConfig::default() };
    let rb = run_online(&mut model.clone(), &b_stream, &c).unwrap();
    assert!(rb.summary.mse_improvement_pct > 0.0, "{}", rb.summary.mse_improvement_pct);
    // small gain: adaptation on data like the training set barely moves
    let small = AdapterConfig { p0: 1e-4, ..c };
    let ra = run_online(&mut model.clone(), &a_stream, &small).unwrap();
    let (f, a) = (ra.summary.frozen.mse_cm2.unwrap(), ra.summary.adapted.mse_cm2.unwrap());
    assert!(a <= 1.05 * f, "in-distribution frozen {f} adapted {a}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_stays_symmetric_positive_definite(
        seed in 0u64..1000,
        n in 1usize..10,
        k in 1usize..4,
        lambda in 0.9f64..1.0,
    ) {
        let mut rng = common::rng(seed);
        let c = cfg(0.01, lambda, 0.95, k);
        let mut target = LinearTarget::new(vec![0.0; n]);
        let mut state = init(&target, &c).unwrap();
        for _ in 0..30 {
            let hs: Vec<Tensor> = (0..k).map(|_| random_h(&mut rng, n)).collect();
            let ys: Vec<Vec<f64>> = (0..k).map(|_| (0..LINEAR_D).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            adapt_step(&mut state, &mut target, &pair(&hs, &ys), &c).unwrap();
        }
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(state.p.get2(i, j), state.p.get2(j, i));
            }
        }
        prop_assert!(cholesky(state.p.data(), n).is_ok());
        prop_assert!(state.theta.flatten().iter().all(|v| v.is_finite()));
    }
}
