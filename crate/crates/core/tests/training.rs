use stnn_core::baselines::{dmd_fit, ffnn_init, ffnn_train_lm, havok_fit, FfnnConfig};
use stnn_core::dynsys::{generate_lorenz_trajectories, pairs_from_trajectories};
use stnn_core::rollout::{mse, RolloutPolicy};
use stnn_core::scaling::{PairScaling, TargetKind};
use stnn_core::stnn::{count_flops, init, train_lm, StnnConfig, StnnParams, TrainOptions};
use stnn_core::{FlopCounter, Matrix};

fn padded(m: &Matrix) -> Matrix {
    Matrix::from_fn(4, m.cols(), |i, j| if i < 3 { m[(i, j)] } else { 0.0 })
}

fn zero_pattern(net: &StnnParams) -> Vec<Vec<bool>> {
    (1..=4)
        .flat_map(|l| (0..net.p()).map(move |b| (l, b)))
        .map(|(l, b)| net.materialize(l, b).as_slice().iter().map(|v| *v == 0.0).collect())
        .collect()
}

fn lorenz_pairs(n_traj: usize, t_final: f64) -> (Matrix, Matrix) {
    let trajs = generate_lorenz_trajectories(n_traj, 1.0, 7, 0.01, t_final, 1e-10).unwrap();
    let (x, xp) = pairs_from_trajectories(&trajs);
    (padded(&x), padded(&xp))
}

#[test]
fn training_keeps_frozen_structure() {
    let (x, xp) = lorenz_pairs(2, 1.0);
    let scaling = PairScaling::fit(&x, &xp, 3, TargetKind::Increment);
    let (u, y) = scaling.encode(&x, &xp);
    let mut net = init(&StnnConfig::with_p(2)).unwrap();
    let before = zero_pattern(&net);
    let fixed: Vec<Matrix> = (0..2).map(|b| net.materialize(3, b)).collect();
    let opts = TrainOptions {
        epochs: 2,
        batch_size: 100,
        steps_per_batch: 3,
        ..TrainOptions::default()
    };
    let empty = Matrix::zeros(4, 0);
    let report = train_lm(&mut net, (&u, &y), (&empty, &empty), &opts).unwrap();
    assert!(report.final_train_loss < report.initial_loss);
    let after = zero_pattern(&net);
    for (b, a) in before.iter().zip(&after) {
        for (zb, za) in b.iter().zip(a) {
            assert!(!zb || *za, "a structural zero became nonzero");
        }
    }
    for (b, m) in fixed.iter().enumerate() {
        let now = net.materialize(3, b);
        assert!(m.as_slice().iter().zip(now.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn counts_follow_branch_formula() {
    for p in [1, 2, 4, 6, 8] {
        let cfg = StnnConfig::with_p(p);
        let net = init(&cfg).unwrap();
        let mut c = FlopCounter::with_bias_adds();
        net.forward(&[0.1, 0.2, 0.3, 0.0], Some(&mut c)).unwrap();
        assert_eq!(net.theta.len(), 64 * p);
        assert_eq!(c.total() as usize, 148 * p - 4);
        assert_eq!(count_flops(&cfg), 148 * p - 4);
    }
    let ffnn = ffnn_init(&FfnnConfig::default()).unwrap();
    let mut c = FlopCounter::new();
    ffnn.forward(&[0.1, 0.2, 0.3], Some(&mut c)).unwrap();
    assert_eq!(c.total(), 3960);
}

#[test]
fn short_training_beats_linear_baseline_one_step() {
    let (x, xp) = lorenz_pairs(3, 2.0);
    let scaling = PairScaling::fit(&x, &xp, 3, TargetKind::Increment);
    let (u, y) = scaling.encode(&x, &xp);
    let mut net = init(&StnnConfig::with_p(2)).unwrap();
    let opts = TrainOptions {
        epochs: 3,
        batch_size: 200,
        steps_per_batch: 5,
        ..TrainOptions::default()
    };
    let empty = Matrix::zeros(4, 0);
    train_lm(&mut net, (&u, &y), (&empty, &empty), &opts).unwrap();

    let x3 = Matrix::from_fn(3, x.cols(), |i, j| x[(i, j)]);
    let xp3 = Matrix::from_fn(3, x.cols(), |i, j| xp[(i, j)]);
    let dmd = dmd_fit(&x3, &xp3, None).unwrap();
    let (mut e_net, mut e_dmd) = (0.0, 0.0);
    for j in 0..x.cols() {
        let col = x.column(j);
        let out = net.forward(&scaling.encode_input(&col), None).unwrap();
        let next = scaling.decode_step(&col, &out);
        let lin = dmd.predict(&x3.column(j));
        for i in 0..3 {
            e_net += (next[i] - xp[(i, j)]).powi(2);
            e_dmd += (lin[i] - xp[(i, j)]).powi(2);
        }
    }
    assert!(e_net < e_dmd, "stnn {e_net} vs dmd {e_dmd}");
}

#[test]
fn ffnn_fits_a_linear_map() {
    let a = Matrix::from_rows(&[[0.9, 0.1, 0.0], [-0.1, 0.9, 0.0], [0.0, 0.0, 0.5]]);
    let x = Matrix::from_fn(3, 60, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    let y = a.matmul(&x);
    let mut net = ffnn_init(&FfnnConfig {
        sizes: vec![3, 8, 3],
        activations: vec![stnn_core::stnn::Activation::Tanh, stnn_core::stnn::Activation::Identity],
        alpha: vec![0.0, 0.0],
        seed: 1,
    })
    .unwrap();
    let opts = TrainOptions {
        epochs: 20,
        batch_size: 60,
        steps_per_batch: 10,
        ..TrainOptions::default()
    };
    let empty = Matrix::zeros(3, 0);
    let report = ffnn_train_lm(&mut net, (&x, &y), (&empty, &empty), &opts).unwrap();
    assert!(report.final_train_loss < 1e-3 * report.initial_loss, "{report:?}");
    let r = net.rollout(&[0.3, -0.2, 0.1], 5, &RolloutPolicy::Free).unwrap();
    let mut truth = vec![vec![0.3, -0.2, 0.1]];
    for _ in 0..5 {
        let next = a.matvec(truth.last().unwrap());
        truth.push(next);
    }
    assert!(mse(&r.states, &truth, 3) < 1e-3);
}

#[test]
fn havok_forecasts_a_sinusoid() {
    let series: Vec<f64> = (0..400).map(|k| (0.05 * k as f64).sin()).collect();
    let model = havok_fit(&series[..300], 20, 2).unwrap();
    let pred = model.predict(&series[280..300], 50).unwrap();
    for (k, v) in pred.iter().enumerate() {
        assert!((v - series[300 + k]).abs() < 1e-6, "step {k}");
    }
}
