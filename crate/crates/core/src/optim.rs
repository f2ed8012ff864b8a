//! Update rules and learning-rate schedules.

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamSet};
use crate::pruning::Mask;
use crate::tensor::Real;

/// Learning rate as a function of the iteration.
///
/// Warmup and step decay compose: the rate ramps linearly from 0 over
/// `warmup_iters`, then is divided by `decay_factor` once for every boundary
/// in `decay_at` that has been reached.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_rate: f64,
    pub warmup_iters: u64,
    pub decay_at: Vec<u64>,
    pub decay_factor: f64,
}

impl LrSchedule {
    pub fn constant(base_rate: f64) -> Self {
        LrSchedule {
            base_rate,
            warmup_iters: 0,
            decay_at: Vec::new(),
            decay_factor: 1.0,
        }
    }

    pub fn warmup(base_rate: f64, k: u64) -> Self {
        LrSchedule {
            warmup_iters: k,
            ..Self::constant(base_rate)
        }
    }

    pub fn step(base_rate: f64, decay_at: Vec<u64>, factor: f64) -> Self {
        LrSchedule {
            decay_at,
            decay_factor: factor,
            ..Self::constant(base_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_rate > 0.0 && self.base_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.base_rate)));
        }
        if !(self.decay_factor >= 1.0 && self.decay_factor.is_finite()) {
            return Err(Error::invalid(format!(
                "decay factor {} must be at least 1",
                self.decay_factor
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        let mut lr = self.base_rate;
        if iteration < self.warmup_iters {
            lr *= iteration as f64 / self.warmup_iters as f64;
        }
        let steps = self.decay_at.iter().filter(|&&b| b <= iteration).count();
        lr / self.decay_factor.powi(steps as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Momentum { coefficient: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub const MOMENTUM: OptimizerKind = OptimizerKind::Momentum { coefficient: 0.9 };
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum { .. } => "momentum",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

/// Coupled L2 penalty: `λθ` is added to weight gradients (never biases).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightDecay(pub f64);

/// Optimizer kind plus its per-parameter buffers.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerKind,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
    step: u64,
}

impl<F: Real> Optimizer<F> {
    /// Zeroed buffers shaped like `params`; buffers are laid out per layer as
    /// weights followed by bias.
    pub fn new(kind: OptimizerKind, params: &ParamSet<F>) -> Self {
        let zeros = || -> Vec<Vec<F>> {
            params
                .layers()
                .iter()
                .map(|l| vec![F::zero(); l.weights.len() + l.bias.len()])
                .collect()
        };
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Momentum { .. } => (zeros(), Vec::new()),
            OptimizerKind::Adam { .. } => (zeros(), zeros()),
        };
        Optimizer {
            kind,
            first,
            second,
            step: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Pruned weights are left at exactly zero whatever the
    /// buffers hold; biases always update.
    pub fn apply_update(
        &mut self,
        params: &mut ParamSet<F>,
        grads: &Gradients<F>,
        mask: &Mask,
        lr: f64,
        decay: WeightDecay,
    ) -> Result<()> {
        mask.check_params(params)?;
        if grads.layers.len() != params.layers().len()
            || grads.layers.iter().zip(params.layers()).any(|(g, p)| {
                g.weights.shape() != p.weights.shape() || g.bias.shape() != p.bias.shape()
            })
        {
            return Err(Error::shape("gradients do not match parameters"));
        }
        self.step += 1;
        let t = self.step as i32;
        let lr_f = F::from_f64_lossy(lr);
        let lambda = F::from_f64_lossy(decay.0);
        let kind = self.kind;

        for (li, ((layer, g), keep)) in params
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(mask.layers())
            .enumerate()
        {
            let nw = layer.weights.len();
            let slots = layer
                .weights
                .data_mut()
                .iter_mut()
                .zip(g.weights.data())
                .zip(keep.bits().iter().copied())
                .map(|((w, &g), k)| (w, g, k, true))
                .chain(
                    layer
                        .bias
                        .data_mut()
                        .iter_mut()
                        .zip(g.bias.data())
                        .map(|(b, &g)| (b, g, true, false)),
                );
            for (j, (theta, mut g, kept, is_weight)) in slots.enumerate() {
                if !kept {
                    *theta = F::zero();
                    continue;
                }
                if is_weight && decay.0 != 0.0 {
                    g += lambda * *theta;
                }
                let delta = match kind {
                    OptimizerKind::Sgd => g,
                    OptimizerKind::Momentum { coefficient } => {
                        let v = &mut self.first[li][j];
                        *v = F::from_f64_lossy(coefficient) * *v + g;
                        *v
                    }
                    OptimizerKind::Adam {
                        beta1,
                        beta2,
                        epsilon,
                    } => {
                        let m = &mut self.first[li][j];
                        *m = F::from_f64_lossy(beta1) * *m + F::from_f64_lossy(1.0 - beta1) * g;
                        let m = *m;
                        let v = &mut self.second[li][j];
                        *v = F::from_f64_lossy(beta2) * *v + F::from_f64_lossy(1.0 - beta2) * g * g;
                        let m_hat = m / F::from_f64_lossy(1.0 - beta1.powi(t));
                        let v_hat = *v / F::from_f64_lossy(1.0 - beta2.powi(t));
                        m_hat / (v_hat.sqrt() + F::from_f64_lossy(epsilon))
                    }
                };
                *theta -= lr_f * delta;
                if !theta.is_finite() {
                    let what = if j < nw { "weight" } else { "bias" };
                    return Err(Error::NonFinite(format!("{what} update in layer {li}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerParams, LayerSpec, NetworkSpec};
    use crate::pruning::LayerMask;
    use crate::tensor::Tensor;

    fn scalar(theta: f64) -> (ParamSet<f64>, Mask) {
        let params = ParamSet::from_initial(
            vec![LayerParams {
                weights: Tensor::new(vec![1, 1], vec![theta]).unwrap(),
                bias: Tensor::zeros(vec![1]),
            }],
            vec![1.0],
        );
        let spec = NetworkSpec {
            name: "s".into(),
            input_shape: vec![1],
            layers: vec![LayerSpec::dense(1, 1)],
        };
        (params, Mask::full(&spec))
    }

    fn grad(g: f64) -> Gradients<f64> {
        Gradients {
            layers: vec![LayerParams {
                weights: Tensor::new(vec![1, 1], vec![g]).unwrap(),
                bias: Tensor::zeros(vec![1]),
            }],
        }
    }

    fn w(p: &ParamSet<f64>) -> f64 {
        p.layers()[0].weights.data()[0]
    }

    #[test]
    fn schedules() {
        let warm = LrSchedule::warmup(0.1, 10_000);
        assert_eq!(warm.lr_at(0), 0.0);
        assert!((warm.lr_at(5_000) - 0.05).abs() < 1e-15);
        assert_eq!(warm.lr_at(10_000), 0.1);
        assert_eq!(warm.lr_at(50_000), 0.1);
        let step = LrSchedule::step(0.1, vec![20_000, 25_000], 10.0);
        assert_eq!(step.lr_at(19_999), 0.1);
        assert!((step.lr_at(20_000) - 0.01).abs() < 1e-15);
        assert!((step.lr_at(25_000) - 0.001).abs() < 1e-15);
        assert_eq!(LrSchedule::constant(0.0012).lr_at(123_456), 0.0012);
        let mut prev = f64::INFINITY;
        for it in (0..30_000).step_by(500) {
            assert!(step.lr_at(it) <= prev);
            prev = step.lr_at(it);
        }
        assert!(LrSchedule::constant(0.0).validate().is_err());
        assert!(LrSchedule::step(0.1, vec![1], 0.5).validate().is_err());
    }

    #[test]
    fn sgd_step() {
        let (mut p, m) = scalar(1.0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p);
        opt.apply_update(&mut p, &grad(0.5), &m, 0.1, WeightDecay(0.0)).unwrap();
        assert!((w(&p) - 0.95).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn momentum_two_steps() {
        let (mut p, m) = scalar(0.0);
        let mut opt = Optimizer::new(OptimizerKind::MOMENTUM, &p);
        for _ in 0..2 {
            opt.apply_update(&mut p, &grad(1.0), &m, 0.1, WeightDecay(0.0)).unwrap();
        }
        assert!((w(&p) + 0.29).abs() < 1e-12);
    }

    /// Textbook scalar Adam, written out independently of the optimizer.
    fn adam_oracle(theta0: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut m, mut v, mut theta) = (0.0, 0.0, theta0);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as f64;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powf(t));
            let vh = v / (1.0 - b2.powf(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        theta
    }

    #[test]
    fn adam_matches_scalar_oracle() {
        let grads = [0.3, -1.7, 0.02, 4.0, -0.5];
        let (mut p, m) = scalar(0.25);
        let mut opt = Optimizer::new(OptimizerKind::ADAM, &p);
        for (i, &g) in grads.iter().enumerate() {
            opt.apply_update(&mut p, &grad(g), &m, 1.2e-3, WeightDecay(0.0)).unwrap();
            assert!((w(&p) - adam_oracle(0.25, &grads[..=i], 1.2e-3)).abs() < 1e-12);
        }
        // First step moves by almost exactly lr, whatever g is.
        let (mut p, m) = scalar(0.0);
        let mut opt = Optimizer::new(OptimizerKind::ADAM, &p);
        opt.apply_update(&mut p, &grad(0.5), &m, 0.01, WeightDecay(0.0)).unwrap();
        assert!((w(&p) + 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let (mut p, m) = scalar(0.7);
        let mut opt = Optimizer::new(OptimizerKind::ADAM, &p);
        for _ in 0..10 {
            opt.apply_update(&mut p, &grad(0.0), &m, 0.1, WeightDecay(0.0)).unwrap();
        }
        assert_eq!(w(&p), 0.7);
    }

    #[test]
    fn weight_decay_is_coupled_and_skips_bias() {
        let (mut p, m) = scalar(2.0);
        p.layers_mut()[0].bias.data_mut()[0] = 2.0;
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p);
        opt.apply_update(&mut p, &grad(0.0), &m, 0.1, WeightDecay(0.5)).unwrap();
        assert!((w(&p) - 1.9).abs() < 1e-15);
        assert_eq!(p.layers()[0].bias.data()[0], 2.0);
    }

    #[test]
    fn pruned_weights_stay_zero() {
        let (mut p, _) = scalar(0.0);
        let m = Mask::new(vec![LayerMask::new("fc1", vec![1, 1], vec![false]).unwrap()]);
        for kind in [OptimizerKind::Sgd, OptimizerKind::MOMENTUM, OptimizerKind::ADAM] {
            let mut opt = Optimizer::new(kind, &p);
            for i in 0..1000 {
                opt.apply_update(&mut p, &grad(i as f64 - 500.0), &m, 0.1, WeightDecay(0.1))
                    .unwrap();
                assert_eq!(w(&p), 0.0);
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (mut p, m) = scalar(1.0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p);
        let err = opt
            .apply_update(&mut p, &grad(f64::MAX), &m, -10.0, WeightDecay(0.0))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
