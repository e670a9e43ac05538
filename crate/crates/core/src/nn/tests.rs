use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense { in_dim, out_dim, activation }
}

fn random_net(layers: Vec<LayerSpec>, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetworkParams::init(layers, &mut rng).unwrap();
    // non-zero biases so their gradients are exercised too
    for i in 0..net.layers().len() {
        for b in net.biases_mut(i) {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    net
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// `mean_n sum_k g[n][k] * z[n][k]`, the scalar whose gradient `backward` returns.
struct LinearProbe {
    x: Matrix,
    g: Matrix,
}

impl Objective for LinearProbe {
    fn value(&self, net: &NetworkParams) -> crate::Result<f64> {
        let z = net.forward(&self.x)?;
        let dot: f64 = z.as_slice().iter().zip(self.g.as_slice()).map(|(a, b)| a * b).sum();
        Ok(dot / self.x.rows() as f64)
    }
    fn gradient(&self, net: &NetworkParams) -> crate::Result<ParamGrads> {
        net.backward(&self.x, &self.g)
    }
}

#[test]
fn identity_dense_forward() {
    let net = NetworkParams::from_parts(
        vec![dense(2, 2, Activation::Identity)],
        vec![vec![1.0, 0.0, 0.0, 1.0]],
        vec![vec![0.0, 0.0]],
    )
    .unwrap();
    let z = net.forward(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
    assert_eq!(z.row(0), &[1.0, 2.0]);
}

#[test]
fn zero_network_gives_zero_logits() {
    let net = NetworkParams::zeros(mlp_layers(3, &[5, 4], 3)).unwrap();
    let z = net.forward(&random_matrix(4, 3, 1)).unwrap();
    assert!(z.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn two_layer_forward_matches_straight_line_oracle() {
    // W1 (3x2), b1, relu, W2 (2x3), b2
    let w1 = [0.5, -0.2, 0.1, 0.3, -0.4, 0.7];
    let b1 = [0.05, -0.1, 0.2];
    let w2 = [0.3, -0.6, 0.9, -0.1, 0.2, 0.4];
    let b2 = [0.01, -0.02];
    let net = NetworkParams::from_parts(
        mlp_layers(2, &[3], 2),
        vec![w1.to_vec(), w2.to_vec()],
        vec![b1.to_vec(), b2.to_vec()],
    )
    .unwrap();

    let x = [1.0, 0.0];
    let h0 = (w1[0] * x[0] + w1[1] * x[1] + b1[0]).max(0.0);
    let h1 = (w1[2] * x[0] + w1[3] * x[1] + b1[1]).max(0.0);
    let h2 = (w1[4] * x[0] + w1[5] * x[1] + b1[2]).max(0.0);
    let z0 = w2[0] * h0 + w2[1] * h1 + w2[2] * h2 + b2[0];
    let z1 = w2[3] * h0 + w2[4] * h1 + w2[5] * h2 + b2[1];

    let z = net.forward(&Matrix::from_rows(&[x]).unwrap()).unwrap();
    assert!((z.row(0)[0] - z0).abs() < 1e-15);
    assert!((z.row(0)[1] - z1).abs() < 1e-15);
    // h1 = relu(0.1 - 0.1) hits the kink exactly; the oracle agrees that it is dead
    assert_eq!(h1, 0.0);
}

#[test]
fn conv_forward_matches_direct_sum() {
    let layers = vec![
        LayerSpec::Conv2d {
            in_channels: 1,
            in_height: 3,
            in_width: 3,
            out_channels: 1,
            kernel: 2,
            stride: 1,
            activation: Activation::Identity,
        },
        dense(4, 2, Activation::Identity),
    ];
    let kernel = vec![1.0, 2.0, 3.0, 4.0];
    let net = NetworkParams::from_parts(
        layers,
        vec![kernel, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]],
        vec![vec![0.5], vec![0.0, 0.0]],
    )
    .unwrap();
    let img = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
    let z = net.forward(&Matrix::from_rows(&[img]).unwrap()).unwrap();
    // top-left window [1,2;4,5], bottom-right window [5,6;8,9]
    assert_eq!(z.row(0)[0], 1.0 + 4.0 + 12.0 + 20.0 + 0.5);
    assert_eq!(z.row(0)[1], 5.0 + 12.0 + 24.0 + 36.0 + 0.5);
}

#[test]
fn forward_rejects_bad_width_and_names_layer() {
    let net = NetworkParams::zeros(mlp_layers(3, &[4], 2)).unwrap();
    let err = net.forward(&Matrix::zeros(2, 5)).unwrap_err();
    assert!(matches!(err, crate::Error::Shape { layer: Some(0), .. }), "{err}");
}

#[test]
fn incompatible_layer_stack_is_rejected() {
    let err = NetworkParams::zeros(vec![dense(3, 4, Activation::Relu), dense(5, 2, Activation::Identity)])
        .unwrap_err();
    assert!(matches!(err, crate::Error::Shape { layer: Some(1), .. }), "{err}");
}

#[test]
fn init_respects_glorot_bound() {
    let net = random_net(mlp_layers(10, &[30], 4), 3);
    let bound = (6.0f64 / 40.0).sqrt();
    assert!(net.weights(0).iter().all(|w| w.abs() <= bound));
    assert!(net.weights(0).iter().any(|w| w.abs() > bound * 0.5));
}

#[test]
fn zero_logit_grads_give_zero_param_grads() {
    let net = random_net(mlp_layers(3, &[5], 3), 4);
    let g = net.backward(&random_matrix(6, 3, 5), &Matrix::zeros(6, 3)).unwrap();
    assert!(g.is_zero());
}

#[test]
fn linear_layer_weight_grad_is_outer_product() {
    let net = random_net(vec![dense(3, 2, Activation::Identity)], 6);
    let x = [0.2, -1.5, 3.0];
    let gz = [0.7, -0.4];
    let grads = net
        .backward(&Matrix::from_rows(&[x]).unwrap(), &Matrix::from_rows(&[gz]).unwrap())
        .unwrap();
    for o in 0..2 {
        for i in 0..3 {
            assert_eq!(grads.weights[0][o * 3 + i], gz[o] * x[i]);
        }
        assert_eq!(grads.biases[0][o], gz[o]);
    }
}

#[test]
fn backward_averages_over_batch() {
    let net = random_net(vec![dense(2, 2, Activation::Identity)], 7);
    let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
    let g = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
    let grads = net.backward(&x, &g).unwrap();
    assert_eq!(grads.weights[0][..2], [2.0, 0.5]);
    assert_eq!(grads.biases[0], vec![1.0, 0.0]);
}

#[test]
fn backward_rejects_mismatched_logit_grads() {
    let net = random_net(mlp_layers(3, &[4], 2), 8);
    assert!(net.backward(&random_matrix(2, 3, 1), &Matrix::zeros(2, 3)).is_err());
    assert!(net.backward(&random_matrix(2, 3, 1), &Matrix::zeros(3, 2)).is_err());
}

#[test]
fn mlp_backward_matches_finite_differences() {
    for seed in 0..5 {
        let net = random_net(mlp_layers(4, &[6, 5], 3), seed);
        let probe = LinearProbe { x: random_matrix(5, 4, 100 + seed), g: random_matrix(5, 3, 200 + seed) };
        let report = grad_check(&net, &probe, 1e-4).unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let layers = vec![
        LayerSpec::Conv2d {
            in_channels: 2,
            in_height: 5,
            in_width: 5,
            out_channels: 3,
            kernel: 3,
            stride: 2,
            activation: Activation::Relu,
        },
        dense(12, 3, Activation::Identity),
    ];
    for seed in 0..3 {
        let net = random_net(layers.clone(), seed);
        let probe = LinearProbe { x: random_matrix(3, 50, 300 + seed), g: random_matrix(3, 3, 400 + seed) };
        let report = grad_check(&net, &probe, 1e-4).unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

/// `(w - 3)^2 + (b + 1)^2` on a 1x1 dense layer.
struct Quadratic;

impl Objective for Quadratic {
    fn value(&self, net: &NetworkParams) -> crate::Result<f64> {
        Ok((net.weights(0)[0] - 3.0).powi(2) + (net.biases(0)[0] + 1.0).powi(2))
    }
    fn gradient(&self, net: &NetworkParams) -> crate::Result<ParamGrads> {
        let mut g = ParamGrads::zeros_like(net);
        g.weights[0][0] = 2.0 * (net.weights(0)[0] - 3.0);
        g.biases[0][0] = 2.0 * (net.biases(0)[0] + 1.0);
        Ok(g)
    }
}

#[test]
fn grad_check_quadratic_is_essentially_exact() {
    let net = NetworkParams::from_parts(vec![dense(1, 1, Activation::Identity)], vec![vec![0.5]], vec![vec![0.25]])
        .unwrap();
    let report = grad_check(&net, &Quadratic, 1e-6).unwrap();
    assert!(report.max_rel_error() < 1e-6, "{report:?}");
}

/// Mean softmax cross-entropy with hard labels, written independently of the library's loss code.
struct SoftmaxCe {
    x: Matrix,
    labels: Vec<usize>,
    corrupt: f64,
}

impl SoftmaxCe {
    fn probs(z: &[f64]) -> Vec<f64> {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
}

impl Objective for SoftmaxCe {
    fn value(&self, net: &NetworkParams) -> crate::Result<f64> {
        let z = net.forward(&self.x)?;
        let total: f64 = z.iter_rows().zip(&self.labels).map(|(r, &y)| -Self::probs(r)[y].ln()).sum();
        Ok(total / self.labels.len() as f64)
    }
    fn gradient(&self, net: &NetworkParams) -> crate::Result<ParamGrads> {
        let z = net.forward(&self.x)?;
        let mut gz = Matrix::zeros(z.rows(), z.cols());
        for (n, &y) in self.labels.iter().enumerate() {
            let p = Self::probs(z.row(n));
            for k in 0..p.len() {
                gz.row_mut(n)[k] = p[k] - if k == y { 1.0 } else { 0.0 };
            }
        }
        let mut g = net.backward(&self.x, &gz)?;
        if self.corrupt != 1.0 {
            g.weights[0].iter_mut().for_each(|v| *v *= self.corrupt);
        }
        Ok(g)
    }
}

#[test]
fn grad_check_softmax_ce_two_class() {
    let net = random_net(vec![dense(3, 2, Activation::Identity)], 9);
    let obj = SoftmaxCe { x: random_matrix(8, 3, 10), labels: vec![0, 1, 1, 0, 1, 0, 0, 1], corrupt: 1.0 };
    let report = grad_check(&net, &obj, 1e-4).unwrap();
    assert!(report.passed() && report.max_rel_error() < 1e-4, "{report:?}");
}

#[test]
fn grad_check_flags_corrupted_layer() {
    let net = random_net(mlp_layers(3, &[4], 2), 11);
    let obj = SoftmaxCe { x: random_matrix(8, 3, 12), labels: vec![0, 1, 1, 0, 1, 0, 0, 1], corrupt: 2.0 };
    let report = grad_check(&net, &obj, 1e-4).unwrap();
    assert_eq!(report.flagged_layers(), vec![0]);
}

struct Exploding;

impl Objective for Exploding {
    fn value(&self, _: &NetworkParams) -> crate::Result<f64> {
        Ok(f64::NAN)
    }
    fn gradient(&self, net: &NetworkParams) -> crate::Result<ParamGrads> {
        Ok(ParamGrads::zeros_like(net))
    }
}

#[test]
fn grad_check_rejects_non_finite_loss() {
    let net = random_net(vec![dense(1, 2, Activation::Identity)], 1);
    assert!(matches!(grad_check(&net, &Exploding, 1e-4), Err(crate::Error::Numeric { .. })));
}

fn scalar_net(v: f64) -> NetworkParams {
    NetworkParams::from_parts(vec![dense(1, 1, Activation::Identity)], vec![vec![v]], vec![vec![0.0]]).unwrap()
}

fn scalar_grad(net: &NetworkParams, g: f64) -> ParamGrads {
    let mut grads = ParamGrads::zeros_like(net);
    grads.weights[0][0] = g;
    grads
}

#[test]
fn zero_grads_leave_params_bit_identical() {
    let mut net = random_net(mlp_layers(3, &[4], 2), 12);
    let before = net.clone();
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let cfg = OptimizerConfig { kind, lr: 0.1, momentum: 0.0, weight_decay: 0.0 };
        let mut opt = OptimizerState::new(cfg, &net);
        let zeros = ParamGrads::zeros_like(&net);
        opt.step(&mut net, &zeros).unwrap();
        assert_eq!(net, before);
    }
}

#[test]
fn plain_sgd_single_step() {
    let mut net = scalar_net(1.0);
    let cfg = OptimizerConfig { kind: OptimizerKind::Sgd, lr: 0.1, momentum: 0.0, weight_decay: 0.0 };
    let mut opt = OptimizerState::new(cfg, &net);
    { let g = scalar_grad(&net, 0.5); opt.step(&mut net, &g) }.unwrap();
    assert!((net.weights(0)[0] - 0.95).abs() < 1e-15);
}

#[test]
fn momentum_two_steps_match_scalar_trace() {
    // v1 = 0.5, p1 = 1 - 0.05 = 0.95; v2 = 0.9 * 0.5 + 0.3 = 0.75, p2 = 0.95 - 0.075 = 0.875
    let mut net = scalar_net(1.0);
    let cfg = OptimizerConfig { kind: OptimizerKind::Sgd, lr: 0.1, momentum: 0.9, weight_decay: 0.0 };
    let mut opt = OptimizerState::new(cfg, &net);
    { let g = scalar_grad(&net, 0.5); opt.step(&mut net, &g) }.unwrap();
    { let g = scalar_grad(&net, 0.3); opt.step(&mut net, &g) }.unwrap();
    assert!((net.weights(0)[0] - 0.875).abs() < 1e-12);
    assert!((opt.first_moment().weights[0][0] - 0.75).abs() < 1e-12);
}

#[test]
fn adam_steps_match_scalar_trace() {
    let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
    let grads = [0.5, -0.2, 0.1];
    let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for (t, g) in grads.iter().enumerate() {
        let g = g + 1e-4 * p;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32 + 1));
        let vh = v / (1.0 - b2.powi(t as i32 + 1));
        p -= lr * mh / (vh.sqrt() + eps);
    }

    let mut net = scalar_net(1.0);
    let cfg = OptimizerConfig { kind: OptimizerKind::Adam, lr, momentum: b1, weight_decay: 1e-4 };
    let mut opt = OptimizerState::new(cfg, &net);
    for g in grads {
        { let g = scalar_grad(&net, g); opt.step(&mut net, &g) }.unwrap();
    }
    assert!((net.weights(0)[0] - p).abs() < 1e-14);
}

#[test]
fn step_rejects_non_finite_gradient_without_mutating() {
    let mut net = random_net(mlp_layers(2, &[3], 2), 13);
    let before = net.clone();
    let mut opt = OptimizerState::new(OptimizerConfig::default(), &net);
    let mut g = ParamGrads::zeros_like(&net);
    g.biases[1][0] = f64::INFINITY;
    let err = opt.step(&mut net, &g).unwrap_err();
    assert!(matches!(err, crate::Error::Numeric { layer: Some(1), .. }), "{err}");
    assert_eq!(net, before);
    assert_eq!(opt.steps(), 0);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let net = random_net(mlp_layers(4, &[7, 3], 3), 14);
    let mut buf = Vec::new();
    write_checkpoint(&net, &mut buf).unwrap();
    assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), net);

    let truncated = &buf[..buf.len() - 3];
    assert!(matches!(read_checkpoint(truncated), Err(crate::Error::Format { .. })));
    assert!(matches!(read_checkpoint(&b"garbage"[..]), Err(crate::Error::Format { offset: 0, .. })));
}

#[test]
fn forward_is_deterministic() {
    let net = random_net(mlp_layers(5, &[8, 8], 4), 15);
    let x = random_matrix(9, 5, 16);
    assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_is_linear_in_logit_grads(seed in 0u64..10_000, a in -4.0f64..4.0) {
        let net = random_net(mlp_layers(3, &[5], 3), seed);
        let x = random_matrix(4, 3, seed + 1);
        let g = random_matrix(4, 3, seed + 2);
        let mut scaled = g.clone();
        scaled.as_mut_slice().iter_mut().for_each(|v| *v *= a);
        let base = net.backward(&x, &g).unwrap();
        let lhs = net.backward(&x, &scaled).unwrap();
        for ((_, w1, b1), (_, w2, b2)) in lhs.layers().zip(base.layers()) {
            for (l, r) in w1.iter().chain(b1).zip(w2.iter().chain(b2)) {
                prop_assert!((l - a * r).abs() <= 1e-12 * (1.0 + r.abs()));
            }
        }
    }
}
