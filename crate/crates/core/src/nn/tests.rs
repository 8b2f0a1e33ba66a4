use super::presets::{self, Family};
use super::*;
use crate::pose::Pose;
use crate::wiometrics::WiometricKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn small_cnn(padding: Padding) -> NetworkSpec {
    presets::cnn("t", [2, 9, 8], &[3], &[5], padding)
}

/// Scalar objective used for gradient checks: a fixed random projection of the head.
fn objective(net: &Network, x: &[f64], proj: &[f64; 4]) -> f64 {
    let out = net.forward(x).unwrap();
    out.iter().zip(proj).map(|(a, b)| a * b).sum()
}

fn check_gradients(spec: NetworkSpec, seed: u64) {
    let mut net = Network::zeros(spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.init_he_uniform(&mut rng);
    // Non-zero biases so every branch is exercised.
    for p in net.params.iter_mut() {
        if *p == 0.0 {
            *p = rng.random_range(-0.1..0.1);
        }
    }
    let x = random_vec(net.spec.input_len(), seed + 1);
    let proj = [0.7, -1.3, 0.4, 2.0];
    let trace = net.forward_trace(&x).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    let gin = net.backward(&trace, &proj, &mut grads);

    let h = 1e-6;
    let check = |analytic: f64, numeric: f64, what: &str| {
        let scale = analytic.abs().max(numeric.abs()).max(1e-3);
        assert!(
            (analytic - numeric).abs() / scale < 1e-4,
            "{what}: analytic {analytic} numeric {numeric}"
        );
    };
    for i in 0..net.num_params() {
        let mut plus = net.clone();
        plus.params[i] += h;
        let mut minus = net.clone();
        minus.params[i] -= h;
        let numeric = (objective(&plus, &x, &proj) - objective(&minus, &x, &proj)) / (2.0 * h);
        check(grads[i], numeric, &format!("param {i}"));
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let numeric = (objective(&net, &xp, &proj) - objective(&net, &xm, &proj)) / (2.0 * h);
        check(gin[i], numeric, &format!("input {i}"));
    }
}

#[test]
fn gradients_match_finite_differences_valid() {
    check_gradients(small_cnn(Padding::Valid), 3);
}

#[test]
fn gradients_match_finite_differences_same() {
    check_gradients(small_cnn(Padding::Same), 4);
}

#[test]
fn gradients_match_finite_differences_two_conv_stages() {
    check_gradients(presets::cnn("t", [1, 12, 11], &[2, 3], &[6, 5], Padding::Same), 5);
}

#[test]
fn gradients_match_finite_differences_dense_only() {
    check_gradients(presets::fcnn("t", [1, 3, 4], &[7, 6]), 6);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let out = [0.3, -0.2, 0.5, 0.9];
    let target = [0.1, 0.4, -0.6, 0.8];
    let (_, g) = pose_loss(&out, &target, 2.0, 0.5);
    for i in 0..4 {
        let h = 1e-6;
        let mut p = out;
        p[i] += h;
        let mut m = out;
        m[i] -= h;
        let numeric = (pose_loss(&p, &target, 2.0, 0.5).0 - pose_loss(&m, &target, 2.0, 0.5).0) / (2.0 * h);
        assert!((numeric - g[i]).abs() < 1e-7);
    }
}

#[test]
fn loss_value() {
    let (l, _) = pose_loss(&[1.0, 2.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 0.0], 1.0, 1.0);
    assert!((l - (5.0 / 2.0 + 2.0 / 2.0)).abs() < 1e-12);
}

/// Direct nested-loop convolution with explicit zero padding.
fn naive_conv(x: &[f64], c: usize, h: usize, w: usize, wts: &[f64], bias: &[f64], f: usize, k: usize, same: bool) -> (Vec<f64>, usize, usize) {
    let (pt, pl) = if same { ((k - 1) / 2, (k - 1) / 2) } else { (0, 0) };
    let (oh, ow) = if same { (h, w) } else { (h - k + 1, w - k + 1) };
    let mut out = vec![0.0; f * oh * ow];
    for fo in 0..f {
        for y in 0..oh {
            for xx in 0..ow {
                let mut s = bias[fo];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as isize + ky as isize - pt as isize;
                            let ix = xx as isize + kx as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            s += wts[((fo * c + ci) * k + ky) * k + kx] * x[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(fo * oh + y) * ow + xx] = s;
            }
        }
    }
    (out, oh, ow)
}

#[test]
fn conv_matches_naive_oracle() {
    for same in [false, true] {
        let padding = if same { Padding::Same } else { Padding::Valid };
        let spec = NetworkSpec {
            name: "conv".into(),
            input_shape: [2, 8, 8],
            layers: vec![
                LayerSpec::Conv2d { filters: 3, kernel: 4, padding },
                LayerSpec::Flatten,
                LayerSpec::Dense { nodes: 4 },
            ],
        };
        let plan = spec.plan().unwrap();
        let mut net = Network::zeros(spec).unwrap();
        net.params = random_vec(net.num_params(), 11);
        let x = random_vec(128, 12);
        let trace = net.forward_trace(&x).unwrap();
        let conv_len = plan[0].param_len;
        let (wts, bias) = net.params[..conv_len].split_at(3 * 2 * 16);
        let (expect, oh, ow) = naive_conv(&x, 2, 8, 8, wts, bias, 3, 4, same);
        assert_eq!((oh, ow), if same { (8, 8) } else { (5, 5) });
        for (a, b) in trace[1].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn maxpool_drops_odd_edges() {
    let spec = NetworkSpec {
        name: "pool".into(),
        input_shape: [1, 3, 5],
        layers: vec![LayerSpec::MaxPool, LayerSpec::Flatten, LayerSpec::Dense { nodes: 4 }],
    };
    let net = Network::zeros(spec).unwrap();
    let x: Vec<f64> = (0..15).map(|v| v as f64).collect();
    let trace = net.forward_trace(&x).unwrap();
    assert_eq!(trace[1], vec![6.0, 8.0]);
}

#[test]
fn zero_weights_give_zero_output() {
    let net = Network::zeros(small_cnn(Padding::Valid)).unwrap();
    let x = random_vec(net.spec.input_len(), 1);
    assert_eq!(net.forward(&x).unwrap(), [0.0; 4]);
}

#[test]
fn identity_dense_reproduces_input() {
    let spec = presets::fcnn("id", [1, 1, 4], &[]);
    let mut params = vec![0.0; 20];
    for i in 0..4 {
        params[i * 4 + i] = 1.0;
    }
    let net = Network::from_params(spec, params).unwrap();
    assert_eq!(net.forward(&[1.0, -2.0, 3.5, 0.25]).unwrap(), [1.0, -2.0, 3.5, 0.25]);
}

#[test]
fn plan_rejects_bad_specs() {
    let no_head = NetworkSpec {
        name: "x".into(),
        input_shape: [1, 4, 4],
        layers: vec![LayerSpec::Flatten, LayerSpec::Dense { nodes: 3 }],
    };
    assert!(matches!(no_head.validate(), Err(Error::Shape(_))));
    let conv_after_flat = NetworkSpec {
        name: "x".into(),
        input_shape: [1, 4, 4],
        layers: vec![LayerSpec::Flatten, LayerSpec::Conv2d { filters: 1, kernel: 2, padding: Padding::Valid }],
    };
    assert!(conv_after_flat.validate().is_err());
    let too_small = presets::cnn("x", [1, 3, 3], &[2], &[], Padding::Valid);
    assert!(too_small.validate().is_err());
    let net = Network::zeros(small_cnn(Padding::Same)).unwrap();
    assert!(matches!(net.forward(&[0.0; 3]), Err(Error::Shape(_))));
    assert!(Network::from_params(small_cnn(Padding::Same), vec![0.0; 2]).is_err());
}

#[test]
fn preset_table_counts_match_names() {
    for name in presets::table_names() {
        let spec = presets::preset(name, (0, 0)).unwrap();
        spec.validate().unwrap();
        // Double-station rows were sized for a different convolution layout.
        if spec.input_shape[0] > 1 {
            continue;
        }
        let count = spec.parameter_count().unwrap() as f64 / 1e6;
        let listed: f64 = name.rsplit('-').next().unwrap().trim_end_matches('M').parse().unwrap();
        println!("{name}: {count:.3}M");
        // Listed sizes are rounded and a few entries are off by one digit.
        assert!((count - listed).abs() / listed < 0.05, "{name}: {count:.3}M");
    }
}

#[test]
fn desk_presets_follow_dataset_shape() {
    let spec = presets::preset("cnn-mfad-s-desk", (36, 24)).unwrap();
    assert_eq!(spec.input_shape, [1, 36, 24]);
    assert!(spec.name.starts_with("CNN-MFAD-S-"));
    assert!(spec.name.ends_with("-desk"));
    let d = presets::preset("CNN-BDIR-D-desk", (8, 32)).unwrap();
    assert_eq!(d.input_shape[0], 2);
    assert_eq!(presets::describe("fcnn-acsi-s-desk"), Some((Family::Fcnn, WiometricKind::Acsi, 1)));
    assert!(matches!(presets::preset("cnn-foo-s-desk", (8, 8)), Err(Error::Config(_))));
}

#[test]
fn second_station_only_grows_first_conv() {
    let one = presets::preset("cnn-mfad-s-desk", (36, 24)).unwrap();
    let two = one.with_channels(2);
    let p1 = one.plan().unwrap();
    let p2 = two.plan().unwrap();
    let diff = two.parameter_count().unwrap() - one.parameter_count().unwrap();
    assert_eq!(diff, presets::DESK_CNN_FILTERS[0] * DEFAULT_KERNEL * DEFAULT_KERNEL);
    for (a, b) in p1.iter().zip(&p2).skip(1) {
        assert_eq!(a.param_len, b.param_len);
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let cfg = TrainConfig::default();
    let mut p = vec![1.0, -1.0, 0.5];
    let mut st = AdamState::new(3);
    adam_step(&mut p, &[0.3, -2.0, 0.0], &mut st, &cfg);
    assert!((p[0] - (1.0 - cfg.learning_rate)).abs() < 1e-9);
    assert!((p[1] - (-1.0 + cfg.learning_rate)).abs() < 1e-9);
    assert_eq!(p[2], 0.5);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let cfg = TrainConfig { learning_rate: 0.05, ..Default::default() };
    let mut p = vec![3.0, -2.0];
    let mut st = AdamState::new(2);
    for _ in 0..2000 {
        let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
        adam_step(&mut p, &g, &mut st, &cfg);
    }
    assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
}

fn toy_set(n: usize, seed: u64) -> TrainingSet {
    // Position and heading are smooth functions of a 2x3 input.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TrainingSet::default();
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let g: f64 = rng.random_range(-180.0..180.0);
        let gr = g.to_radians();
        set.inputs.push(vec![a, b, gr.sin(), gr.cos(), a * b, 1.0]);
        set.poses.push(Pose::new(50.0 + 30.0 * a, 50.0 - 20.0 * b, g));
    }
    set
}

#[test]
fn zero_epochs_returns_initialization() {
    let spec = presets::fcnn("f", [1, 2, 3], &[8]);
    let cfg = TrainConfig { epochs: 0, seed: 9, ..Default::default() };
    let data = toy_set(20, 1);
    let m = train(spec.clone(), &data, None, &cfg).unwrap();
    let init = Model::init(spec, &cfg, m.position_center).unwrap();
    assert_eq!(m.network.params, init.network.params);
    assert!(m.history.is_empty());
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let spec = presets::fcnn("f", [1, 2, 3], &[32, 16]);
    let cfg = TrainConfig { epochs: 40, batch_size: 16, learning_rate: 0.01, seed: 2, ..Default::default() };
    let data = toy_set(200, 1);
    let val = toy_set(50, 2);
    let a = train(spec.clone(), &data, Some(&val), &cfg).unwrap();
    let b = train(spec, &data, Some(&val), &cfg).unwrap();
    assert_eq!(a.network.params, b.network.params);
    assert_eq!(a.history.len(), 40);
    let first = a.history[0].train_loss;
    let last = a.history.last().unwrap().train_loss;
    assert!(last < 0.2 * first, "{first} -> {last}");
    assert!(a.history.last().unwrap().val_loss.unwrap() < a.history[0].val_loss.unwrap());
}

#[test]
fn divergence_is_reported() {
    let spec = presets::fcnn("f", [1, 2, 3], &[8]);
    let cfg = TrainConfig { epochs: 3, learning_rate: 1e300, ..Default::default() };
    let mut data = toy_set(10, 1);
    data.inputs[0][0] = 1e300;
    match train(spec, &data, None, &cfg) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|m| m.history)),
    }
}

#[test]
fn decode_examples() {
    let p = train::decode_pose(&[0.5, -0.25, 1.0, 0.0], [10.0, 20.0], 100.0);
    assert_eq!((p.x_e, p.x_n), (60.0, -5.0));
    assert!((p.gamma - 90.0).abs() < 1e-12);
    let p = train::decode_pose(&[0.0, 0.0, 0.0, -1.0], [0.0, 0.0], 1.0);
    assert_eq!(p.gamma, -180.0);
    let p = train::decode_pose(&[0.0, 0.0, -0.5, 0.5], [0.0, 0.0], 1.0);
    assert!((p.gamma + 45.0).abs() < 1e-12);
}

#[test]
fn target_round_trips_through_decode() {
    let pose = Pose::new(12.0, -7.5, 135.0);
    let t = train::pose_target(&pose, [3.0, 4.0], 50.0);
    let back = train::decode_pose(&t, [3.0, 4.0], 50.0);
    assert!((back.x_e - pose.x_e).abs() < 1e-12 && (back.x_n - pose.x_n).abs() < 1e-12);
    assert!((back.gamma - pose.gamma).abs() < 1e-9);
}

#[test]
fn config_validation() {
    assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { w_pos: -1.0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
    let spec = presets::fcnn("f", [1, 2, 3], &[8]);
    assert!(matches!(train(spec, &TrainingSet::default(), None, &TrainConfig::default()), Err(Error::Empty(_))));
}

#[test]
fn batches_spanning_several_conv_chunks_match_single_samples() {
    // 4 channels at 64x64 with a 3x3 kernel fit three samples per im2col buffer.
    let spec = presets::cnn("t", [4, 64, 64], &[2], &[3], Padding::Same);
    let mut net = Network::zeros(spec).unwrap();
    net.init_he_uniform(&mut ChaCha8Rng::seed_from_u64(21));
    let n = 7;
    let xs: Vec<Vec<f64>> = (0..n).map(|i| random_vec(net.spec.input_len(), 100 + i as u64)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let trace = net.forward_batch(&refs).unwrap();
    let head = trace.last().unwrap();
    let proj = [0.3, -0.8, 1.1, 0.5];

    let mut single_grads = vec![0.0; net.num_params()];
    let mut single_inputs = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        let out = net.forward(x).unwrap();
        for (a, b) in out.iter().zip(head.row(i)) {
            assert!((a - b).abs() < 1e-10);
        }
        let t = net.forward_trace(x).unwrap();
        single_inputs.push(net.backward(&t, &proj, &mut single_grads));
    }

    let g = ndarray::Array2::from_shape_fn((n, 4), |(_, j)| proj[j]);
    let mut batch_grads = vec![0.0; net.num_params()];
    let gin = net.backward_batch(&trace, g, &mut batch_grads, true).unwrap();
    for (a, b) in single_grads.iter().zip(&batch_grads) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
    for (i, row) in gin.outer_iter().enumerate() {
        for (a, b) in single_inputs[i].iter().zip(row) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
