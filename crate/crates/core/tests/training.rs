mod common;

use common::{random_tensor, rng, synth_windows, thin};
use hrc_predict::data::{SubjectProfile, TrajectoryWindow, WindowSource};
use hrc_predict::model::{write_checkpoint, ModelConfig, PredictionOutput, Predictor, PredictorModel, Variant};
use hrc_predict::numeric::{finite_diff_check_five_point, gradient, softmax, Seed, Tensor};
use hrc_predict::training::{
    adam_step, build_single_task, classification_loss_from_logits, evaluate, init_model, joint_loss,
    loss_expression, regression_loss, train, AdamConfig, AdamState, LossConfig, Task, TrainConfig,
};
use hrc_predict::Result;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn regression_loss_against_double_loop() {
    let mut r = rng(1);
    for _ in 0..20 {
        let a = random_tensor(&mut r, &[10, 3], 50.0);
        let b = random_tensor(&mut r, &[10, 3], 50.0);
        let mut s = 0.0;
        for i in 0..10 {
            for j in 0..3 {
                s += (a.get2(i, j) - b.get2(i, j)).powi(2);
            }
        }
        assert!((regression_loss(&a, &b).unwrap() - s / 30.0).abs() < 1e-9);
    }
    assert!(regression_loss(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3, 3])).is_err());
}

/// `−ln softmax(l)[y]` from the largest logit outwards: the dominant term is
/// exact and the remainder goes through `ln_1p` with compensated summation.
fn precise_nll(logits: &[f64], label: usize) -> f64 {
    let (imax, &lmax) = logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let mut terms: Vec<f64> = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imax)
        .map(|(_, l)| (l - lmax).exp())
        .collect();
    terms.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    (lmax - logits[label - 1]) + sum.ln_1p()
}

#[test]
fn cross_entropy_against_precise_oracle() {
    let mut r = rng(2);
    for case in 0..200 {
        let scale = [0.1, 1.0, 10.0, 100.0][case % 4];
        let logits: Vec<f64> = (0..12).map(|_| r.random_range(-scale..scale)).collect();
        let label = 1 + case % 12;
        let got = classification_loss_from_logits(&Tensor::vector(logits.clone()), label).unwrap();
        let want = precise_nll(&logits, label);
        assert!((got - want).abs() < 1e-10, "case {case}: {got} vs {want}");
    }
    assert!(classification_loss_from_logits(&Tensor::vector(vec![0.0; 12]), 13).is_err());
    assert!(classification_loss_from_logits(&Tensor::vector(vec![0.0; 12]), 0).is_err());
}

#[test]
fn joint_loss_recomputation() {
    let mut r = rng(3);
    for _ in 0..50 {
        let gamma = r.random_range(0.01..0.99);
        let cfg = LossConfig::new(gamma).unwrap();
        let traj = random_tensor(&mut r, &[10, 3], 20.0);
        let target = random_tensor(&mut r, &[10, 3], 20.0);
        let logits = random_tensor(&mut r, &[12], 5.0);
        let label = r.random_range(1..=12);
        let out = PredictionOutput {
            trajectory: Some(traj.clone()),
            intent_proba: Some(softmax(&logits).unwrap()),
            intent_logits: Some(logits.clone()),
        };
        let want = gamma * classification_loss_from_logits(&logits, label).unwrap()
            + (1.0 - gamma) * regression_loss(&traj, &target).unwrap();
        let got = joint_loss(&out, &target, label, &cfg).unwrap();
        assert!((got - want).abs() < 1e-12 * want.max(1.0));
        assert!(got >= 0.0);
    }
    assert!(LossConfig::new(0.0).is_err());
    assert!(LossConfig::new(1.0).is_err());
}

/// Textbook Adam, written independently of the library.
fn reference_adam(theta: &mut [f64], grad: impl Fn(&[f64]) -> Vec<f64>, steps: usize) {
    let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    for t in 1..=steps {
        let g = grad(theta);
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - f64::powi(b1, t as i32));
            let vh = v[i] / (1.0 - f64::powi(b2, t as i32));
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

#[test]
fn adam_matches_reference_on_quadratic() {
    let a = [3.0, 0.5, 10.0, 1.0];
    let c = [1.0, -2.0, 0.3, 4.0];
    let grad = |x: &[f64]| -> Vec<f64> { (0..4).map(|i| 2.0 * a[i] * (x[i] - c[i])).collect() };
    let start = vec![0.2, 0.1, -0.4, 2.0];

    let mut want = start.clone();
    reference_adam(&mut want, grad, 10);

    let mut got = start;
    let mut state = AdamState::new(4);
    for _ in 0..10 {
        let g = grad(&got);
        adam_step(&mut got, &g, &mut state, &AdamConfig::default()).unwrap();
    }
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
    assert_eq!(state.t, 10);
}

fn tiny_set() -> Vec<TrajectoryWindow> {
    let all = synth_windows(SubjectProfile::reference("A", 1), 1, 4);
    let step = all.len() / 40;
    thin(&all, step).into_iter().take(40).collect()
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed: Seed(7),
        patience: None,
        ..TrainConfig::default()
    }
}

#[test]
fn tiny_set_converges() {
    let data = tiny_set();
    assert_eq!(data.len(), 40);
    let mut model = init_model(ModelConfig::with_hidden(8), Seed(1), &data).unwrap();
    let log = train(&mut model, &data, &[], &tiny_config(30), &LossConfig::default()).unwrap();
    assert_eq!(log.len(), 30);
    let (first, last) = (log[0].train_loss, log[29].train_loss);
    assert!(last < 0.5 * first, "loss went from {first} to {last}");
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let data = tiny_set();
    let mut model = init_model(ModelConfig::with_hidden(4), Seed(1), &data).unwrap();
    let before = model.clone();
    let log = train(&mut model, &data, &data, &tiny_config(0), &LossConfig::default()).unwrap();
    assert!(log.is_empty());
    assert_eq!(model, before);
}

#[test]
fn fixed_seed_training_is_bit_identical() {
    let data = tiny_set();
    let run = || {
        let mut model = init_model(ModelConfig::with_hidden(6), Seed(3), &data).unwrap();
        let log = train(&mut model, &data, &data[..10], &tiny_config(3), &LossConfig::default()).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&model, &mut bytes).unwrap();
        (log, bytes)
    };
    let (log_a, ckpt_a) = run();
    let (log_b, ckpt_b) = run();
    let bits = |l: &[hrc_predict::training::EpochLog]| -> Vec<u64> {
        l.iter()
            .flat_map(|r| [r.train_loss.to_bits(), r.val_loss.unwrap().to_bits()])
            .collect()
    };
    assert_eq!(bits(&log_a), bits(&log_b));
    assert_eq!(ckpt_a, ckpt_b);
}

#[test]
fn empty_training_set_rejected() {
    let mut model = PredictorModel::new(ModelConfig::with_hidden(4), Seed(0)).unwrap();
    assert!(train(&mut model, &[], &[], &tiny_config(1), &LossConfig::default()).is_err());
}

#[test]
fn single_task_variants_train() {
    let data = tiny_set();
    let multi = init_model(ModelConfig::with_hidden(8), Seed(2), &data).unwrap();
    for task in [Task::Intent, Task::Trajectory] {
        let mut model = build_single_task(&multi, task).unwrap();
        let log = train(&mut model, &data, &[], &tiny_config(15), &LossConfig::default()).unwrap();
        assert!(log[14].train_loss < log[0].train_loss, "{task:?} did not improve");
        let m = evaluate(&model, &data).unwrap();
        assert_eq!(m.accuracy.is_some(), task == Task::Intent);
        assert_eq!(m.mse_cm2.is_some(), task == Task::Trajectory);
    }
}

#[test]
fn intent_variant_has_no_decoder_dependence() {
    let data = tiny_set();
    let multi = PredictorModel::new(ModelConfig::with_hidden(4), Seed(5)).unwrap();
    let intent = build_single_task(&multi, Task::Intent).unwrap();
    assert!(intent.param_names().iter().all(|n| !n.starts_with("decoder") && n != "out_proj"));

    // In the multi-task model the decoder does reach the classification loss.
    let w = &data[0];
    let cfg = LossConfig::new(0.999_999).unwrap();
    let (_, g) = gradient(loss_expression(&multi, &w.inputs, &w.target, w.label, cfg, false), &multi.params()).unwrap();
    assert!(g.get("decoder.U_h").unwrap().max_abs() > 0.0);
    let traj = build_single_task(&multi, Task::Trajectory).unwrap();
    assert_eq!(traj.config.variant, Variant::Trajectory);
    assert!(traj.predict(&w.inputs).unwrap().intent_proba.is_none());
}

#[test]
fn joint_loss_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        hidden: 3,
        n_past: 4,
        m_future: 3,
        classifier_hidden: 5,
        ..ModelConfig::default()
    };
    let mut r = rng(8);
    for seed in 0..3 {
        let model = PredictorModel::new(cfg.clone(), Seed(seed)).unwrap();
        let inputs = random_tensor(&mut r, &[4, 6], 2.0);
        let target = random_tensor(&mut r, &[3, 3], 2.0);
        for tf in [false, true] {
            let f = loss_expression(&model, &inputs, &target, 1 + seed as usize, LossConfig::default(), tf);
            let err = finite_diff_check_five_point(f, &model.params(), 1e-3).unwrap();
            assert!(err < 1e-5, "seed {seed} teacher forcing {tf}: {err}");
        }
    }
}

struct Fixed(Vec<Tensor>);

impl Predictor for Fixed {
    fn predict(&self, inputs: &Tensor) -> Result<PredictionOutput> {
        let logits = self.0[inputs.get2(0, 0) as usize].clone();
        Ok(PredictionOutput {
            trajectory: None,
            intent_proba: Some(softmax(&logits)?),
            intent_logits: Some(logits),
        })
    }
}

fn indexed_windows(labels: &[usize]) -> Vec<TrajectoryWindow> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut inputs = Tensor::zeros(&[1, 6]);
            inputs.set2(0, 0, i as f64);
            TrajectoryWindow {
                inputs,
                target: Tensor::zeros(&[1, 3]),
                label,
                source: WindowSource {
                    subject: "S".into(),
                    trial: format!("{i}"),
                    start: 0,
                },
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn accuracy_invariant_under_monotone_logit_maps(seed in any::<u64>()) {
        let mut r = rng(seed);
        let logits: Vec<Tensor> = (0..30).map(|_| random_tensor(&mut r, &[12], 3.0)).collect();
        let labels: Vec<usize> = (0..30).map(|_| r.random_range(1..=12)).collect();
        let windows = indexed_windows(&labels);
        let base = evaluate(&Fixed(logits.clone()), &windows).unwrap();
        let mapped: Vec<Tensor> = logits.iter().map(|l| l.map(|x| 2.0 * x.powi(3) + x - 7.0)).collect();
        let other = evaluate(&Fixed(mapped), &windows).unwrap();
        prop_assert_eq!(base.accuracy, other.accuracy);
        prop_assert_eq!(base.per_intent_confusion.clone(), other.per_intent_confusion);
        let conf = base.per_intent_confusion.unwrap();
        for k in 1..=12 {
            let row: u64 = conf[k - 1].iter().sum();
            prop_assert_eq!(row as usize, labels.iter().filter(|&&l| l == k).count());
        }
    }
}
