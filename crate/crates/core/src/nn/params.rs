use std::sync::Arc;

use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::pruning::Mask;
use crate::tensor::{Real, Tensor};

const MAGIC: &[u8; 7] = b"LTPARAM";
const VERSION: u16 = 1;

/// Weights and bias of one prunable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Real> LayerParams<F> {
    pub fn zeros_like(&self) -> Self {
        LayerParams {
            weights: Tensor::zeros(self.weights.shape().to_vec()),
            bias: Tensor::zeros(self.bias.shape().to_vec()),
        }
    }
}

/// Current parameters plus an immutable snapshot of the values they were
/// created with (the rewind target).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    layers: Vec<LayerParams<F>>,
    init: Arc<Vec<LayerParams<F>>>,
    init_std: Vec<f64>,
}

impl<F: Real> ParamSet<F> {
    /// Takes `layers` as both the current values and the initialization
    /// snapshot. `init_std` is the per-layer std of the distribution they
    /// were drawn from.
    pub fn from_initial(layers: Vec<LayerParams<F>>, init_std: Vec<f64>) -> Self {
        assert_eq!(layers.len(), init_std.len(), "one init std per layer");
        ParamSet {
            init: Arc::new(layers.clone()),
            layers,
            init_std,
        }
    }

    pub fn layers(&self) -> &[LayerParams<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<F>] {
        &mut self.layers
    }

    pub fn init_snapshot(&self) -> &[LayerParams<F>] {
        &self.init
    }

    pub fn init_std(&self) -> &[f64] {
        &self.init_std
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    /// Replaces the current values, keeping the snapshot. Shapes must match.
    pub fn with_layers(&self, layers: Vec<LayerParams<F>>) -> Result<Self> {
        self.check_same_shapes(&layers)?;
        Ok(ParamSet {
            layers,
            init: Arc::clone(&self.init),
            init_std: self.init_std.clone(),
        })
    }

    fn check_same_shapes(&self, layers: &[LayerParams<F>]) -> Result<()> {
        if layers.len() != self.layers.len()
            || layers.iter().zip(&self.layers).any(|(a, b)| {
                a.weights.shape() != b.weights.shape() || a.bias.shape() != b.bias.shape()
            })
        {
            return Err(Error::shape("parameter layers do not match this network"));
        }
        Ok(())
    }

    /// Zeroes every weight the mask removes.
    pub fn apply_mask(&mut self, mask: &Mask) -> Result<()> {
        mask.check_params(self)?;
        for (layer, keep) in self.layers.iter_mut().zip(mask.layers()) {
            for (w, &k) in layer.weights.data_mut().iter_mut().zip(keep.bits()) {
                if !k {
                    *w = F::zero();
                }
            }
        }
        Ok(())
    }

    /// The snapshot values restricted to `mask`: every surviving weight and
    /// every bias equals its initial value bit-for-bit, pruned weights are 0.
    pub fn rewound(&self, mask: &Mask) -> Result<Self> {
        let mut out = ParamSet {
            layers: self.init.as_ref().clone(),
            init: Arc::clone(&self.init),
            init_std: self.init_std.clone(),
        };
        out.apply_mask(mask)?;
        Ok(out)
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        let cast_layers = |ls: &[LayerParams<F>]| -> Vec<LayerParams<G>> {
            ls.iter()
                .map(|l| LayerParams {
                    weights: l.weights.cast(),
                    bias: l.bias.cast(),
                })
                .collect()
        };
        ParamSet {
            layers: cast_layers(&self.layers),
            init: Arc::new(cast_layers(&self.init)),
            init_std: self.init_std.clone(),
        }
    }
}

impl<F: Real> ParamSet<F> {
    /// Checkpoint bytes: magic, version, layer count, then for each layer
    /// its init std and the current and initial weights and biases, all as
    /// little-endian `f64` (lossless for both precisions).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend(VERSION.to_le_bytes());
        out.extend((self.layers.len() as u32).to_le_bytes());
        for (i, (cur, init)) in self.layers.iter().zip(self.init.iter()).enumerate() {
            out.extend(self.init_std[i].to_le_bytes());
            for t in [&cur.weights, &cur.bias, &init.weights, &init.bias] {
                for v in t.data() {
                    out.extend(v.to_f64_lossy().to_le_bytes());
                }
            }
        }
        out
    }

    /// Inverse of [`ParamSet::to_bytes`]; shapes come from `spec`.
    pub fn from_bytes(bytes: &[u8], spec: &NetworkSpec) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if bytes.len() - pos < n {
                return Err(Error::format(pos as u64, "truncated parameter file"));
            }
            pos += n;
            Ok(&bytes[pos - n..pos])
        };
        if take(MAGIC.len())? != MAGIC {
            return Err(Error::format(0, "bad parameter magic"));
        }
        if u16::from_le_bytes(take(2)?.try_into().unwrap()) != VERSION {
            return Err(Error::format(7, "unsupported parameter file version"));
        }
        let layers = spec.prunable_layers();
        if u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize != layers.len() {
            return Err(Error::format(9, "layer count does not match the network"));
        }
        let mut current = Vec::with_capacity(layers.len());
        let mut init = Vec::with_capacity(layers.len());
        let mut stds = Vec::with_capacity(layers.len());
        for l in &layers {
            stds.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            let mut tensor = |shape: Vec<usize>| -> Result<Tensor<F>> {
                let n: usize = shape.iter().product();
                let raw = take(8 * n)?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| F::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())))
                    .collect();
                Tensor::new(shape, data)
            };
            current.push(LayerParams {
                weights: tensor(l.weight_shape.clone())?,
                bias: tensor(vec![l.bias_len])?,
            });
            init.push(LayerParams {
                weights: tensor(l.weight_shape.clone())?,
                bias: tensor(vec![l.bias_len])?,
            });
        }
        if pos != bytes.len() {
            return Err(Error::format(pos as u64, "trailing bytes after parameters"));
        }
        Ok(ParamSet {
            layers: current,
            init: Arc::new(init),
            init_std: stds,
        })
    }
}

/// Gradient of the loss with respect to each layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<LayerParams<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(params: &ParamSet<F>) -> Self {
        Gradients {
            layers: params.layers().iter().map(LayerParams::zeros_like).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }
}
