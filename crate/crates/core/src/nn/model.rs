//! Forward pass, softmax cross-entropy and reverse-mode gradients.
//!
//! Every weight-carrying layer uses the effective weights `mask ⊙ θ`, and the
//! returned weight gradients are multiplied by the mask, so a pruned weight
//! neither contributes to the output nor receives an update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{col2im_add, im2col};
use super::params::{Gradients, LayerParams, ParamSet};
use super::spec::{LayerSpec, NetworkSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pruning::{LayerMask, Mask};
use crate::tensor::{gemm, Real, Tensor, Trans};

/// Dropout is active in `Train` only; `Eval` is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Cache<F> {
    Dense { input: Vec<F>, weights: Vec<F> },
    Conv { input: Vec<F>, weights: Vec<F> },
    MaxPool { argmax: Vec<usize>, input_len: usize },
    AvgPool,
    Relu { output: Vec<F> },
    Dropout { scale: Vec<F> },
    Identity,
}

/// Logits plus whatever the backward pass needs.
pub struct Forward<F> {
    pub logits: Tensor<F>,
    caches: Vec<Cache<F>>,
    batch: usize,
}

fn masked_weights<F: Real>(layer: &LayerParams<F>, keep: &LayerMask) -> Vec<F> {
    layer
        .weights
        .data()
        .iter()
        .zip(keep.bits())
        .map(|(&w, &k)| if k { w } else { F::zero() })
        .collect()
}

fn check_inputs<F: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    input: &Tensor<F>,
) -> Result<(Vec<Vec<usize>>, usize)> {
    let shapes = spec.shapes()?;
    let prunable = spec.prunable_layers();
    if prunable.len() != params.layers().len()
        || prunable
            .iter()
            .zip(params.layers())
            .any(|(p, l)| p.weight_shape != l.weights.shape() || l.bias.len() != p.bias_len)
    {
        return Err(Error::shape(format!(
            "parameters do not match network '{}'",
            spec.name
        )));
    }
    mask.check_params(params)?;
    let dims = input.shape();
    if dims.is_empty() || dims[0] == 0 {
        return Err(Error::shape("input batch must be non-empty"));
    }
    let per_example: usize = dims[1..].iter().product();
    if per_example != spec.input_len() {
        return Err(Error::shape(format!(
            "input examples have {per_example} values, network expects {:?}",
            spec.input_shape
        )));
    }
    input.ensure_finite("network input")?;
    Ok((shapes, dims[0]))
}

/// Runs the network on a batch `[batch, ...input_shape]`.
pub fn forward<F: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    input: &Tensor<F>,
    mode: Mode,
    rng: &mut R,
) -> Result<Forward<F>> {
    let (shapes, batch) = check_inputs(spec, params, mask, input)?;
    let mut act = input.data().to_vec();
    let mut in_shape = spec.input_shape.clone();
    let mut caches = Vec::with_capacity(spec.layers.len());
    let mut p = 0;

    for (layer, out_shape) in spec.layers.iter().zip(&shapes) {
        let out_len: usize = out_shape.iter().product();
        let (next, cache) = match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                let lp = &params.layers()[p];
                let weights = masked_weights(lp, &mask.layers()[p]);
                p += 1;
                let mut out = vec![F::zero(); batch * outputs];
                gemm(Trans::No, Trans::Yes, batch, inputs, outputs, &act, &weights, F::zero(), &mut out);
                let bias = lp.bias.data();
                for row in out.chunks_exact_mut(outputs) {
                    for (o, &b) in row.iter_mut().zip(bias) {
                        *o += b;
                    }
                }
                (out, Cache::Dense { input: act, weights })
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let lp = &params.layers()[p];
                let weights = masked_weights(lp, &mask.layers()[p]);
                p += 1;
                let (h, w) = (in_shape[1], in_shape[2]);
                let hw = h * w;
                let k = in_channels * 9;
                let mut cols = vec![F::zero(); k * hw];
                let mut out = vec![F::zero(); batch * out_len];
                let bias = lp.bias.data();
                for b in 0..batch {
                    im2col(&act[b * in_channels * hw..][..in_channels * hw], in_channels, h, w, &mut cols);
                    let o = &mut out[b * out_len..][..out_len];
                    gemm(Trans::No, Trans::No, out_channels, k, hw, &weights, &cols, F::zero(), o);
                    for (plane, &bv) in o.chunks_exact_mut(hw).zip(bias) {
                        for v in plane {
                            *v += bv;
                        }
                    }
                }
                (out, Cache::Conv { input: act, weights })
            }
            LayerSpec::MaxPool2 => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h / 2, w / 2);
                let in_len = c * h * w;
                let mut out = vec![F::zero(); batch * out_len];
                let mut argmax = vec![0usize; batch * out_len];
                for b in 0..batch {
                    for ch in 0..c {
                        let base = b * in_len + ch * h * w;
                        for y in 0..oh {
                            for x in 0..ow {
                                let mut best = base + 2 * y * w + 2 * x;
                                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                                    if act[idx] > act[best] {
                                        best = idx;
                                    }
                                }
                                let o = b * out_len + ch * oh * ow + y * ow + x;
                                out[o] = act[best];
                                argmax[o] = best;
                            }
                        }
                    }
                }
                (out, Cache::MaxPool { argmax, input_len: batch * in_len })
            }
            LayerSpec::AvgPoolGlobal => {
                let (c, hw) = (in_shape[0], in_shape[1] * in_shape[2]);
                let scale = F::one() / F::from_f64_lossy(hw as f64);
                let out = act
                    .chunks_exact(hw)
                    .map(|plane| plane.iter().copied().sum::<F>() * scale)
                    .collect::<Vec<_>>();
                debug_assert_eq!(out.len(), batch * c);
                (out, Cache::AvgPool)
            }
            LayerSpec::Relu => {
                for v in act.iter_mut() {
                    if *v < F::zero() {
                        *v = F::zero();
                    }
                }
                (act.clone(), Cache::Relu { output: act })
            }
            LayerSpec::Dropout { rate } if mode == Mode::Train && rate > 0.0 => {
                let keep = F::from_f64_lossy(1.0 / (1.0 - rate));
                let scale: Vec<F> = (0..act.len())
                    .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
                    .collect();
                for (v, &s) in act.iter_mut().zip(&scale) {
                    *v *= s;
                }
                (act, Cache::Dropout { scale })
            }
            LayerSpec::Dropout { .. } => (act, Cache::Identity),
        };
        act = next;
        caches.push(cache);
        in_shape = out_shape.clone();
    }

    let logits = Tensor::new(vec![batch, spec.classes()], act)?;
    Ok(Forward {
        logits,
        caches,
        batch,
    })
}

/// Reverse pass from `d loss / d logits` to per-layer gradients.
fn backward<F: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    fwd: &Forward<F>,
    dlogits: Vec<F>,
) -> Result<Gradients<F>> {
    let shapes = spec.shapes()?;
    let batch = fwd.batch;
    let mut grads = Gradients::zeros_like(params);
    let mut p = params.layers().len();
    let mut g = dlogits;

    for i in (0..spec.layers.len()).rev() {
        let in_shape: &[usize] = if i == 0 { &spec.input_shape } else { &shapes[i - 1] };
        let first = i == 0;
        g = match (&spec.layers[i], &fwd.caches[i]) {
            (&LayerSpec::Dense { inputs, outputs }, Cache::Dense { input, weights }) => {
                p -= 1;
                let lg = &mut grads.layers[p];
                gemm(Trans::Yes, Trans::No, outputs, batch, inputs, &g, input, F::zero(), lg.weights.data_mut());
                let db = lg.bias.data_mut();
                for row in g.chunks_exact(outputs) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                if first {
                    Vec::new()
                } else {
                    let mut dx = vec![F::zero(); batch * inputs];
                    gemm(Trans::No, Trans::No, batch, outputs, inputs, &g, weights, F::zero(), &mut dx);
                    dx
                }
            }
            (
                &LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                },
                Cache::Conv { input, weights },
            ) => {
                p -= 1;
                let (h, w) = (in_shape[1], in_shape[2]);
                let hw = h * w;
                let k = in_channels * 9;
                let in_len = in_channels * hw;
                let out_len = out_channels * hw;
                let mut cols = vec![F::zero(); k * hw];
                let mut dcols = vec![F::zero(); k * hw];
                let mut dx = if first { Vec::new() } else { vec![F::zero(); batch * in_len] };
                let lg = &mut grads.layers[p];
                for b in 0..batch {
                    let gb = &g[b * out_len..][..out_len];
                    im2col(&input[b * in_len..][..in_len], in_channels, h, w, &mut cols);
                    gemm(Trans::No, Trans::Yes, out_channels, hw, k, gb, &cols, F::one(), lg.weights.data_mut());
                    for (d, plane) in lg.bias.data_mut().iter_mut().zip(gb.chunks_exact(hw)) {
                        *d += plane.iter().copied().sum::<F>();
                    }
                    if !first {
                        gemm(Trans::Yes, Trans::No, k, out_channels, hw, weights, gb, F::zero(), &mut dcols);
                        col2im_add(&dcols, in_channels, h, w, &mut dx[b * in_len..][..in_len]);
                    }
                }
                dx
            }
            (LayerSpec::MaxPool2, Cache::MaxPool { argmax, input_len }) => {
                let mut dx = vec![F::zero(); *input_len];
                for (&src, &v) in argmax.iter().zip(&g) {
                    dx[src] += v;
                }
                dx
            }
            (LayerSpec::AvgPoolGlobal, Cache::AvgPool) => {
                let hw = in_shape[1] * in_shape[2];
                let scale = F::one() / F::from_f64_lossy(hw as f64);
                g.iter()
                    .flat_map(|&v| std::iter::repeat_n(v * scale, hw))
                    .collect()
            }
            (LayerSpec::Relu, Cache::Relu { output }) => {
                for (d, &o) in g.iter_mut().zip(output) {
                    if o <= F::zero() {
                        *d = F::zero();
                    }
                }
                g
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { scale }) => {
                for (d, &s) in g.iter_mut().zip(scale) {
                    *d *= s;
                }
                g
            }
            (LayerSpec::Dropout { .. }, Cache::Identity) => g,
            _ => unreachable!("cache kind always matches its layer"),
        };
    }

    for (lg, keep) in grads.layers.iter_mut().zip(mask.layers()) {
        for (d, &k) in lg.weights.data_mut().iter_mut().zip(keep.bits()) {
            if !k {
                *d = F::zero();
            }
        }
    }
    Ok(grads)
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn softmax_cross_entropy<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> Result<(F, Vec<F>)> {
    let (batch, classes) = logits_dims(logits, labels)?;
    let inv_batch = F::one() / F::from_f64_lossy(batch as f64);
    let mut total = F::zero();
    let mut grad = vec![F::zero(); batch * classes];
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(classes)
        .zip(grad.chunks_exact_mut(classes))
        .zip(labels)
    {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp();
            sum += *gi;
        }
        total += sum.ln() + max - row[label];
        for gi in g.iter_mut() {
            *gi = *gi / sum * inv_batch;
        }
        g[label] -= inv_batch;
    }
    Ok((total * inv_batch, grad))
}

fn logits_dims<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> Result<(usize, usize)> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::shape(format!(
            "logits {:?} do not match {} labels",
            shape,
            labels.len()
        )));
    }
    let classes = shape[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
    }
    Ok((shape[0], classes))
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> Result<f64> {
    let (batch, classes) = logits_dims(logits, labels)?;
    if batch == 0 {
        return Err(Error::invalid("accuracy of an empty batch"));
    }
    Ok(count_correct(logits.data(), classes, labels) as f64 / batch as f64)
}

fn count_correct<F: Real>(logits: &[F], classes: usize, labels: &[usize]) -> usize {
    logits
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count()
}

fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and gradients for one mini-batch. Weight gradients come back
/// already multiplied by the mask.
pub fn loss_and_grads<F: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    input: &Tensor<F>,
    labels: &[usize],
    mode: Mode,
    rng: &mut R,
) -> Result<(F, Gradients<F>)> {
    let fwd = forward(spec, params, mask, input, mode, rng)?;
    let (loss, dlogits) = softmax_cross_entropy(&fwd.logits, labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let grads = backward(spec, params, mask, &fwd, dlogits)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 1000;

/// Mean loss and accuracy over a whole dataset in eval mode.
pub fn evaluate<F: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    data: &Dataset,
) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    // Eval mode never draws from the generator.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.gather::<F>(chunk)?;
        let fwd = forward(spec, params, mask, &x, Mode::Eval, &mut rng)?;
        let (loss, _) = softmax_cross_entropy(&fwd.logits, &y)?;
        loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
        correct += count_correct(fwd.logits.data(), spec.classes(), &y);
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
    })
}
