//! Backpropagation against central finite differences, plus forward-pass
//! oracles for convolution and dropout.

use lottery::nn::{build_network, forward, loss_and_grads, InitSpec, LayerParams, LayerSpec, Mode, NetworkSpec, ParamSet};
use lottery::pruning::{LayerMask, Mask};
use lottery::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;

fn random_batch(spec: &NetworkSpec, batch: usize, seed: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = vec![batch];
    shape.extend(&spec.input_shape);
    let data = (0..batch * spec.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = (0..batch).map(|_| rng.gen_range(0..spec.classes())).collect();
    (Tensor::new(shape, data).unwrap(), labels)
}

/// Gaussian parameters with non-zero biases so bias gradients are exercised.
fn random_params(spec: &NetworkSpec, seed: u64) -> ParamSet<f64> {
    let base: ParamSet<f64> = build_network(spec, InitSpec::Gaussian { std: 0.5 }, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let layers = base
        .layers()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.bias.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
            l
        })
        .collect();
    base.with_layers(layers).unwrap()
}

fn random_mask(spec: &NetworkSpec, keep: f64, seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = Mask::full(spec);
    Mask::new(
        full.layers()
            .iter()
            .map(|l| {
                let bits = (0..l.len()).map(|_| rng.gen_bool(keep)).collect();
                LayerMask::new(l.name(), l.shape().to_vec(), bits).unwrap()
            })
            .collect(),
    )
}

fn loss_at(spec: &NetworkSpec, params: &ParamSet<f64>, mask: &Mask, x: &Tensor<f64>, y: &[usize], mode: Mode) -> f64 {
    // The same generator seed reproduces the same dropout pattern.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    loss_and_grads(spec, params, mask, x, y, mode, &mut rng).unwrap().0
}

/// Worst relative error between analytic and central-difference gradients
/// over every weight and bias.
fn worst_relative_error(spec: &NetworkSpec, params: &ParamSet<f64>, mask: &Mask, mode: Mode) -> f64 {
    assert!(spec.param_count() <= 200, "finite differences are checked on small nets");
    let (x, y) = random_batch(spec, 4, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (_, grads) = loss_and_grads(spec, params, mask, &x, &y, mode, &mut rng).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..params.layers().len() {
        for bias in [false, true] {
            let n = if bias { params.layers()[l].bias.len() } else { params.layers()[l].weights.len() };
            for i in 0..n {
                let shifted = |delta: f64| {
                    let mut layers: Vec<LayerParams<f64>> = params.layers().to_vec();
                    let t = if bias { &mut layers[l].bias } else { &mut layers[l].weights };
                    t.data_mut()[i] += delta;
                    params.with_layers(layers).unwrap()
                };
                let numeric = (loss_at(spec, &shifted(H), mask, &x, &y, mode)
                    - loss_at(spec, &shifted(-H), mask, &x, &y, mode))
                    / (2.0 * H);
                let g = &grads.layers[l];
                let analytic = if bias { g.bias.data()[i] } else { g.weights.data()[i] };
                let scale = analytic.abs().max(numeric.abs());
                if scale > 1e-7 {
                    worst = worst.max((analytic - numeric).abs() / scale);
                } else {
                    assert!((analytic - numeric).abs() < 1e-9, "layer {l} index {i}: {analytic} vs {numeric}");
                }
            }
        }
    }
    worst
}

fn small_conv() -> NetworkSpec {
    NetworkSpec {
        name: "small-conv".into(),
        input_shape: vec![2, 4, 4],
        layers: vec![
            LayerSpec::conv3x3(2, 3),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::conv3x3(3, 2),
            LayerSpec::Relu,
            LayerSpec::AvgPoolGlobal,
            LayerSpec::dense(2, 3),
        ],
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let spec = NetworkSpec::mlp(6, &[8, 5], 3);
    let params = random_params(&spec, 1);
    let err = worst_relative_error(&spec, &params, &Mask::full(&spec), Mode::Eval);
    assert!(err <= MAX_REL_ERR, "relative error {err}");
}

#[test]
fn masked_mlp_gradients_match_finite_differences() {
    let spec = NetworkSpec::mlp(6, &[8, 5], 3);
    let params = random_params(&spec, 2);
    let err = worst_relative_error(&spec, &params, &random_mask(&spec, 0.6, 3), Mode::Eval);
    assert!(err <= MAX_REL_ERR, "relative error {err}");
}

#[test]
fn conv_gradients_match_finite_differences() {
    let spec = small_conv();
    let params = random_params(&spec, 4);
    let err = worst_relative_error(&spec, &params, &Mask::full(&spec), Mode::Eval);
    assert!(err <= MAX_REL_ERR, "relative error {err}");
    let err = worst_relative_error(&spec, &params, &random_mask(&spec, 0.7, 5), Mode::Eval);
    assert!(err <= MAX_REL_ERR, "relative error under a mask {err}");
}

#[test]
fn vgg_module_gradients_match_finite_differences() {
    let spec = NetworkSpec::vgg_like([1, 4, 4], &[2], &[4], 2);
    let params = random_params(&spec, 6);
    let err = worst_relative_error(&spec, &params, &Mask::full(&spec), Mode::Eval);
    assert!(err <= MAX_REL_ERR, "relative error {err}");
}

#[test]
fn dropout_gradients_match_finite_differences_for_a_fixed_pattern() {
    let spec = NetworkSpec::mlp(5, &[8, 6], 3).with_dropout(0.3);
    let params = random_params(&spec, 7);
    let err = worst_relative_error(&spec, &params, &Mask::full(&spec), Mode::Train);
    assert!(err <= MAX_REL_ERR, "relative error {err}");
}

fn delta_net(kernel_index: usize) -> (NetworkSpec, ParamSet<f64>) {
    let spec = NetworkSpec {
        name: "delta".into(),
        input_shape: vec![1, 3, 3],
        layers: vec![LayerSpec::conv3x3(1, 1), LayerSpec::dense(9, 9)],
    };
    let base: ParamSet<f64> = build_network(&spec, InitSpec::GaussianGlorot, 0).unwrap();
    let mut kernel = vec![0.0; 9];
    kernel[kernel_index] = 1.0;
    let identity = (0..81).map(|i| if i / 9 == i % 9 { 1.0 } else { 0.0 }).collect();
    let layers = vec![
        LayerParams {
            weights: Tensor::new(vec![1, 1, 3, 3], kernel).unwrap(),
            bias: Tensor::new(vec![1], vec![0.0]).unwrap(),
        },
        LayerParams {
            weights: Tensor::new(vec![9, 9], identity).unwrap(),
            bias: Tensor::new(vec![9], vec![0.0; 9]).unwrap(),
        },
    ];
    let params = base.with_layers(layers).unwrap();
    (spec, params)
}

#[test]
fn centre_delta_kernel_is_the_identity() {
    let (spec, params) = delta_net(4);
    let input: Vec<f64> = (1..=9).map(f64::from).collect();
    let x = Tensor::new(vec![1, 1, 3, 3], input.clone()).unwrap();
    let out = forward(&spec, &params, &Mask::full(&spec), &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.logits.data(), input.as_slice());
}

#[test]
fn offset_delta_kernel_shifts_with_zero_padding() {
    // Kernel tap (0, 0) reads the input at (y - 1, x - 1).
    let (spec, params) = delta_net(0);
    let x = Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
    let out = forward(&spec, &params, &Mask::full(&spec), &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.logits.data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
}

#[test]
fn dropout_preserves_the_expected_activation() {
    let spec = NetworkSpec::mlp(4, &[6], 2).with_dropout(0.5);
    let params = random_params(&spec, 8);
    let mask = Mask::full(&spec);
    let x = Tensor::new(vec![1, 4], vec![0.3, -0.7, 0.9, 0.1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let expected = forward(&spec, &params, &mask, &x, Mode::Eval, &mut rng).unwrap().logits;
    let n = 10_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..n {
        let out = forward(&spec, &params, &mask, &x, Mode::Train, &mut rng).unwrap().logits;
        for k in 0..2 {
            sum[k] += out.data()[k];
            sq[k] += out.data()[k] * out.data()[k];
        }
    }
    for k in 0..2 {
        let mean = sum[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(var > 0.0, "dropout must perturb the output");
        assert!(
            (mean - expected.data()[k]).abs() <= 3.0 * se,
            "logit {k}: mean {mean} vs eval {} (se {se})",
            expected.data()[k]
        );
    }
}

#[test]
fn eval_mode_is_deterministic_and_ignores_pruned_values() {
    let spec = NetworkSpec::mlp(5, &[7], 3).with_dropout(0.5);
    let params = random_params(&spec, 9);
    let mask = random_mask(&spec, 0.5, 10);
    let (x, _) = random_batch(&spec, 3, 12);
    let run = |p: &ParamSet<f64>, seed| {
        forward(&spec, p, &mask, &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .logits
    };
    let mut scrambled: Vec<LayerParams<f64>> = params.layers().to_vec();
    for (layer, keep) in scrambled.iter_mut().zip(mask.layers()) {
        for (w, &k) in layer.weights.data_mut().iter_mut().zip(keep.bits()) {
            if !k {
                *w = 1e3;
            }
        }
    }
    let scrambled = params.with_layers(scrambled).unwrap();
    assert_eq!(run(&params, 1), run(&params, 2));
    assert_eq!(run(&params, 1), run(&scrambled, 3));
}
