use std::sync::Arc;

use jumpfbsde::kernels::{Purpose, RngStream};
use jumpfbsde::nn::{adam_step, mlp_forward, parameter_count, AdamState, Matrix, MlpParams, Tape};
use jumpfbsde::Error;
use proptest::prelude::*;
use rand::Rng;

fn rng(index: u64) -> rand_chacha::ChaCha8Rng {
    RngStream::new(17, index, 0, Purpose::Init).rng()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[test]
fn zero_weights_return_final_bias() {
    let mut net = MlpParams::zeros(&[2, 21, 1]).unwrap();
    net.biases_mut()[1].set(0, 0, 0.37);
    for x in [[0.0, 0.0], [1.0, -3.0], [100.0, 7.5]] {
        assert_eq!(mlp_forward(&net, &x).unwrap(), vec![0.37]);
    }
}

#[test]
fn pricing_network_has_85_parameters() {
    assert_eq!(parameter_count(2, 21, 2, 1), 85);
    assert_eq!(MlpParams::zeros(&MlpParams::sizes(2, 21, 2, 1)).unwrap().param_count(), 85);
}

#[test]
fn forward_rejects_wrong_dimension() {
    let net = MlpParams::zeros(&[2, 4, 1]).unwrap();
    assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    assert!(MlpParams::zeros(&[2, 1]).is_err());
    assert!(MlpParams::zeros(&[2, 3, 4, 1]).is_err());
}

#[test]
fn forward_matches_hand_composition() {
    let mut r = rng(1);
    let net = MlpParams::glorot(&[2, 3, 3, 1], &mut r).unwrap();
    let x = [0.4, -1.2];
    let mut h = x.to_vec();
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        let mut out = vec![0.0; w.cols()];
        for (c, o) in out.iter_mut().enumerate() {
            *o = b.get(0, c) + (0..w.rows()).map(|k| h[k] * w.get(k, c)).sum::<f64>();
            if l + 1 < net.weights().len() {
                *o = o.tanh();
            }
        }
        h = out;
    }
    let got = mlp_forward(&net, &x).unwrap();
    assert!((got[0] - h[0]).abs() < 1e-14);
}

/// Central differences of the scalar output with respect to every parameter.
#[test]
fn output_gradient_matches_finite_differences() {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let mut r = rng(100 + draw);
        let d0 = r.random_range(1..4);
        let m = r.random_range(2..8);
        let layers = r.random_range(2..4);
        let mut net = MlpParams::glorot(&MlpParams::sizes(d0, m, layers, 1), &mut r).unwrap();
        let mut flat = net.to_flat();
        for v in flat.iter_mut() {
            *v += r.random_range(-0.3..0.3);
        }
        net.set_flat(&flat).unwrap();
        let x: Vec<f64> = (0..d0).map(|_| r.random_range(-2.0..2.0)).collect();

        let mut tape = Tape::new();
        let nodes = net.register(&mut tape);
        let input = tape.leaf(Matrix::from_vec(1, d0, x.clone()));
        let out = nodes.apply(&mut tape, input);
        let grads = nodes.gradients(&tape.backprop(out).unwrap()).to_flat();

        for k in 0..flat.len() {
            let mut p = flat.clone();
            p[k] += h;
            let mut up = net.clone();
            up.set_flat(&p).unwrap();
            p[k] -= 2.0 * h;
            let mut dn = net.clone();
            dn.set_flat(&p).unwrap();
            let fd = (mlp_forward(&up, &x).unwrap()[0] - mlp_forward(&dn, &x).unwrap()[0]) / (2.0 * h);
            worst = worst.max(rel_err(grads[k], fd));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn batch_mse_gradient_matches_finite_differences() {
    let mut r = rng(7);
    let net = MlpParams::glorot(&[2, 6, 6, 1], &mut r).unwrap();
    let n = 16;
    let xs: Vec<f64> = (0..2 * n).map(|_| r.random_range(-1.5..1.5)).collect();
    let ys: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let x = Matrix::from_vec(n, 2, xs);
    let target = Arc::new(Matrix::column(ys.clone()));
    let loss_of = |p: &MlpParams| -> f64 {
        let out = p.forward_batch(&x).unwrap();
        (0..n).map(|i| (out.get(i, 0) - ys[i]).powi(2)).sum::<f64>() / n as f64
    };
    let mut tape = Tape::new();
    let nodes = net.register(&mut tape);
    let input = tape.leaf(x.clone());
    let out = nodes.apply(&mut tape, input);
    let neg = tape.scale(out, -1.0);
    let diff = tape.add_const(neg, target);
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    assert!((tape.scalar(loss) - loss_of(&net)).abs() < 1e-14);
    let grads = nodes.gradients(&tape.backprop(loss).unwrap()).to_flat();
    let flat = net.to_flat();
    let h = 1e-5;
    for k in 0..flat.len() {
        let mut p = flat.clone();
        p[k] += h;
        let mut up = net.clone();
        up.set_flat(&p).unwrap();
        p[k] -= 2.0 * h;
        let mut dn = net.clone();
        dn.set_flat(&p).unwrap();
        let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
        assert!(rel_err(grads[k], fd) <= 1e-5, "coordinate {k}: {} vs {fd}", grads[k]);
    }
}

#[test]
fn sum_of_squares_gradient_is_twice_theta() {
    let theta = vec![0.5, -1.25, 3.0, 0.0, 2e-3];
    let mut tape = Tape::new();
    let leaf = tape.leaf(Matrix::column(theta.clone()));
    let sq = tape.square(leaf);
    let loss = tape.sum(sq);
    let g = tape.backprop(loss).unwrap().wrt(leaf);
    for (gi, ti) in g.as_slice().iter().zip(&theta) {
        assert_eq!(*gi, 2.0 * ti);
    }
}

#[test]
fn loss_independent_of_parameters_has_zero_gradient() {
    let mut tape = Tape::new();
    let leaf = tape.leaf(Matrix::column(vec![1.0, 2.0]));
    let c = tape.constant(3, 1, 4.0);
    let sq = tape.square(c);
    let loss = tape.mean(sq);
    let g = tape.backprop(loss).unwrap().wrt(leaf);
    assert!(g.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn abs_and_max_subgradients_at_kink_are_zero() {
    let mut tape = Tape::new();
    let leaf = tape.leaf(Matrix::column(vec![0.0, 0.0]));
    let a = tape.abs(leaf);
    let loss = tape.sum(a);
    assert_eq!(tape.backprop(loss).unwrap().wrt(leaf).as_slice(), &[0.0, 0.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let leaf = tape.leaf(Matrix::column(vec![1.0, 2.0]));
    let sq = tape.square(leaf);
    assert!(matches!(tape.backprop(sq), Err(Error::NonScalarLoss { rows: 2, cols: 1 })));
}

#[test]
fn replay_reproduces_recorded_values_bitwise() {
    let mut r = rng(3);
    let net = MlpParams::glorot(&[2, 5, 5, 1], &mut r).unwrap();
    let x = Matrix::from_vec(4, 2, (0..8).map(|_| r.random_range(-1.0..1.0)).collect());
    let mut tape = Tape::new();
    let nodes = net.register(&mut tape);
    let input = tape.leaf(x.clone());
    let out = nodes.apply(&mut tape, input);
    let a = tape.abs(out);
    let loss = tape.mean(a);
    let recorded = tape.scalar(loss);
    let g1 = tape.backprop(loss).unwrap().wrt(input);
    tape.replay();
    assert_eq!(tape.scalar(loss).to_bits(), recorded.to_bits());
    let g2 = tape.backprop(loss).unwrap().wrt(input);
    assert_eq!(g1, g2);
}

#[test]
fn adam_single_scalar_step() {
    let mut theta = [1.0];
    let mut state = AdamState::new(1);
    adam_step(&mut theta, &[1.0], &mut state, 0.1).unwrap();
    assert!((theta[0] - 0.9000000316).abs() < 1e-10, "{}", theta[0]);
    assert_eq!(state.step_count, 1);
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut theta = vec![0.3, -2.0, 5.0];
    let mut state = AdamState::new(3);
    assert_eq!(state.first_moment, vec![0.0; 3]);
    assert_eq!(state.second_moment, vec![0.0; 3]);
    adam_step(&mut theta, &[0.0; 3], &mut state, 0.01).unwrap();
    assert_eq!(theta, vec![0.3, -2.0, 5.0]);
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut theta = vec![0.1, 0.2, -0.3];
        let mut state = AdamState::new(3);
        for k in 0..5 {
            let g = [0.5 - k as f64, 1e-3, (k as f64).sin()];
            adam_step(&mut theta, &g, &mut state, 0.05).unwrap();
        }
        (theta, state)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(sa, sb);
}

#[test]
fn adam_rejects_bad_input() {
    let mut theta = [1.0, 2.0];
    let mut state = AdamState::new(2);
    assert!(matches!(adam_step(&mut theta, &[f64::NAN, 0.0], &mut state, 0.1), Err(Error::NonFinite { .. })));
    assert_eq!(state.step_count, 0);
    assert_eq!(theta, [1.0, 2.0]);
    assert!(adam_step(&mut theta, &[1.0, 0.0], &mut state, 0.0).is_err());
    assert!(adam_step(&mut theta, &[1.0], &mut state, 0.1).is_err());
}

proptest! {
    #[test]
    fn parameter_count_formula_holds(d0 in 1usize..6, m in 1usize..12, layers in 2usize..5, d1 in 1usize..4) {
        let net = MlpParams::zeros(&MlpParams::sizes(d0, m, layers, d1)).unwrap();
        prop_assert_eq!(net.param_count(), (d0 + 1) * m + (layers - 2) * m * (1 + m) + (m + 1) * d1);
        prop_assert_eq!(net.to_flat().len(), net.param_count());
    }

    #[test]
    fn flat_round_trip(d0 in 1usize..4, m in 1usize..6, layers in 2usize..4, seed in 0u64..1000) {
        let mut r = RngStream::new(seed, 0, 0, Purpose::Init).rng();
        let net = MlpParams::glorot(&MlpParams::sizes(d0, m, layers, 1), &mut r).unwrap();
        let mut copy = MlpParams::zeros(net.layer_sizes()).unwrap();
        copy.set_flat(&net.to_flat()).unwrap();
        prop_assert_eq!(copy, net);
    }
}
