//! Parameter transforms for the control subnetworks. None of them touches
//! the mask; each returns a fresh [`ParamSet`] whose snapshot is its own
//! starting point.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{build_network, InitSpec, NetworkSpec, ParamSet};
use crate::pruning::Mask;
use crate::tensor::Real;

/// A new initialization from `seed`, restricted to `mask`.
pub fn control_reinit<F: Real>(mask: &Mask, spec: &NetworkSpec, init: InitSpec, seed: u64) -> Result<ParamSet<F>> {
    let fresh = build_network::<F>(spec, init, seed)?;
    fresh.rewound(mask)
}

fn restart<F: Real>(base: &ParamSet<F>, mask: &Mask) -> Result<ParamSet<F>> {
    let start = base.rewound(mask)?;
    Ok(ParamSet::from_initial(start.layers().to_vec(), base.init_std().to_vec()))
}

/// Every surviving weight redrawn uniformly, with replacement, from the
/// initial values of that layer's survivors.
pub fn control_dm_resample<F: Real>(theta0: &ParamSet<F>, mask: &Mask, seed: u64) -> Result<ParamSet<F>> {
    let mut out = restart(theta0, mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (layer, keep) in out.layers_mut().iter_mut().zip(mask.layers()) {
        let pool: Vec<F> = layer
            .weights
            .data()
            .iter()
            .zip(keep.bits())
            .filter(|(_, &k)| k)
            .map(|(&w, _)| w)
            .collect();
        if pool.is_empty() {
            return Err(Error::invalid(format!("layer {} has no survivors to resample", keep.name())));
        }
        for (w, &k) in layer.weights.data_mut().iter_mut().zip(keep.bits()) {
            if k {
                *w = pool[rng.gen_range(0..pool.len())];
            }
        }
    }
    Ok(out)
}

/// Surviving weights plus `N(0, (multiple * σ_layer)²)`, σ_layer being the
/// std the layer was initialized with.
pub fn control_noise<F: Real>(theta0: &ParamSet<F>, mask: &Mask, multiple: f64, seed: u64) -> Result<ParamSet<F>> {
    if !(multiple >= 0.0 && multiple.is_finite()) {
        return Err(Error::invalid(format!("noise multiple {multiple} must be non-negative")));
    }
    let mut out = restart(theta0, mask)?;
    if multiple == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stds = theta0.init_std().to_vec();
    for ((layer, keep), std) in out.layers_mut().iter_mut().zip(mask.layers()).zip(stds) {
        let noise = Normal::new(0.0, multiple * std).map_err(|e| Error::invalid(e.to_string()))?;
        for (w, &k) in layer.weights.data_mut().iter_mut().zip(keep.bits()) {
            if k {
                *w = F::from_f64_lossy(w.to_f64_lossy() + noise.sample(&mut rng));
            }
        }
    }
    Ok(out)
}
