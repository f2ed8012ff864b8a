use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::params::{LayerParams, ParamSet};
use super::spec::{NetworkSpec, PrunableLayer};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Standard deviation of the Gaussian Glorot initialization,
/// `sqrt(2 / (fan_in + fan_out))`.
pub fn glorot_std(fan_in: usize, fan_out: usize) -> Result<f64> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(format!(
            "glorot fans must be positive, got ({fan_in}, {fan_out})"
        )));
    }
    Ok((2.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Zero-mean Gaussian weight initialization. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    GaussianGlorot,
    Gaussian { std: f64 },
}

impl InitSpec {
    pub fn std_for(&self, layer: &PrunableLayer) -> Result<f64> {
        match *self {
            InitSpec::GaussianGlorot => glorot_std(layer.fan_in, layer.fan_out),
            InitSpec::Gaussian { std } if std > 0.0 && std.is_finite() => Ok(std),
            InitSpec::Gaussian { std } => Err(Error::invalid(format!(
                "gaussian init std must be positive, got {std}"
            ))),
        }
    }
}

/// Samples a fresh parameter set. The same `(spec, init, seed)` always yields
/// bit-identical parameters, and the values are drawn in `f64` so the `f32`
/// and `f64` builds of one seed agree up to rounding.
pub fn build_network<F: Real>(spec: &NetworkSpec, init: InitSpec, seed: u64) -> Result<ParamSet<F>> {
    spec.shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut stds = Vec::new();
    for layer in spec.prunable_layers() {
        let std = init.std_for(&layer)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let weights = (0..layer.weight_count())
            .map(|_| F::from_f64_lossy(normal.sample(&mut rng)))
            .collect();
        layers.push(LayerParams {
            weights: Tensor::new(layer.weight_shape.clone(), weights)?,
            bias: Tensor::zeros(vec![layer.bias_len]),
        });
        stds.push(std);
    }
    Ok(ParamSet::from_initial(layers, stds))
}
