//! Magnitude pruning, random masks and sparsity accounting.
//!
//! Counting rule shared by every operation: a layer (or a global scope) with
//! `s` surviving weights at rate `r` loses `round(r * s)` of them, rounding
//! half away from zero. Candidates are ordered by `|w|`, then by lowest flat
//! index, and no layer is ever emptied: the largest surviving weight stays.

use log::warn;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mask::{LayerMask, Mask};
use crate::error::{Error, Result};
use crate::nn::{LayerClass, LayerParams, NetworkSpec, ParamSet};
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum PruneMode {
    /// Each layer loses its own class rate of its own survivors.
    Layerwise,
    /// Layers whose class is in `scope` are pruned collectively at `rate`;
    /// the remaining layers still use their layer-wise class rates.
    Global { scope: Vec<LayerClass>, rate: f64 },
}

/// Per-round pruning rates and the number of rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    pub fc_rate: f64,
    pub conv_rate: f64,
    pub output_rate: f64,
    pub mode: PruneMode,
    pub rounds: u32,
}

impl PruneConfig {
    /// Layer-wise rates with connections to the outputs pruned at half the
    /// fully-connected rate.
    pub fn layerwise(fc_rate: f64, conv_rate: f64, rounds: u32) -> Self {
        PruneConfig {
            fc_rate,
            conv_rate,
            output_rate: fc_rate / 2.0,
            mode: PruneMode::Layerwise,
            rounds,
        }
    }

    /// Default rates for the named presets: fc 20% (Lenet), conv 10% fc 20%
    /// (Conv-2, Conv-4), conv 15% fc 20% (Conv-6).
    pub fn for_preset(name: &str, rounds: u32) -> Result<Self> {
        match name {
            "lenet-300-100" | "lenet" => Ok(Self::layerwise(0.2, 0.0, rounds)),
            "conv-2" | "conv-4" => Ok(Self::layerwise(0.2, 0.1, rounds)),
            "conv-6" => Ok(Self::layerwise(0.2, 0.15, rounds)),
            other => Err(Error::invalid(format!("no pruning preset for '{other}'"))),
        }
    }

    /// Per-round rate that reaches `target_remaining` after `rounds` rounds:
    /// `1 - target^(1/rounds)`.
    pub fn rate_for_target(target_remaining: f64, rounds: u32) -> Result<f64> {
        if !(target_remaining > 0.0 && target_remaining <= 1.0) || rounds == 0 {
            return Err(Error::invalid(format!(
                "target {target_remaining} over {rounds} rounds is not reachable"
            )));
        }
        Ok(1.0 - target_remaining.powf(1.0 / rounds as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let mut rates = vec![
            ("fc_rate", self.fc_rate),
            ("conv_rate", self.conv_rate),
            ("output_rate", self.output_rate),
        ];
        if let PruneMode::Global { scope, rate } = &self.mode {
            if scope.is_empty() {
                return Err(Error::invalid("global pruning scope is empty"));
            }
            rates.push(("global_rate", *rate));
        }
        for (name, r) in rates {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} = {r} is outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn rate_for(&self, class: LayerClass) -> f64 {
        match class {
            LayerClass::Conv => self.conv_rate,
            LayerClass::Fc => self.fc_rate,
            LayerClass::Output => self.output_rate,
        }
    }

    /// Rates that remove, in one step, what `rounds` rounds of this config
    /// would: `1 - (1 - r)^rounds` for every rate. `rounds` may be
    /// fractional.
    pub fn compounded(&self, rounds: f64) -> Self {
        // Exactly one round must reproduce the rates bit-for-bit; 1 - (1 - r)
        // need not equal r.
        let c = |r: f64| if rounds == 1.0 { r } else { 1.0 - (1.0 - r).powf(rounds) };
        PruneConfig {
            fc_rate: c(self.fc_rate),
            conv_rate: c(self.conv_rate),
            output_rate: c(self.output_rate),
            mode: match &self.mode {
                PruneMode::Layerwise => PruneMode::Layerwise,
                PruneMode::Global { scope, rate } => PruneMode::Global {
                    scope: scope.clone(),
                    rate: c(*rate),
                },
            },
            rounds: 1,
        }
    }
}

/// A layer whose requested prune count would have emptied it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneWarning {
    pub layer: String,
    pub requested: usize,
    pub applied: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub mask: Mask,
    pub warnings: Vec<PruneWarning>,
}

/// `round(rate * survivors)`, half away from zero.
pub fn prune_count(rate: f64, survivors: usize) -> usize {
    (rate * survivors as f64).round() as usize
}

fn magnitudes<F: Real>(layers: &[LayerParams<F>]) -> Vec<Vec<f64>> {
    layers
        .iter()
        .map(|l| l.weights.data().iter().map(|w| w.to_f64_lossy().abs()).collect())
        .collect()
}

fn check(spec: &NetworkSpec, mask: &Mask, rates: &PruneConfig) -> Result<Vec<LayerClass>> {
    rates.validate()?;
    let layers = spec.prunable_layers();
    if layers.len() != mask.layers().len()
        || layers
            .iter()
            .zip(mask.layers())
            .any(|(l, m)| l.weight_shape != m.shape())
    {
        return Err(Error::shape("mask does not match network"));
    }
    Ok(layers.into_iter().map(|l| l.class).collect())
}

fn ordered_survivors(mags: &[f64], keep: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    idx.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]).then(a.cmp(&b)));
    idx
}

fn prune_one_layer(mags: &[f64], layer: &mut LayerMask, rate: f64) -> Option<PruneWarning> {
    let order = ordered_survivors(mags, layer.bits());
    let requested = prune_count(rate, order.len());
    let applied = requested.min(order.len().saturating_sub(1));
    for &i in &order[..applied] {
        layer.bits_mut()[i] = false;
    }
    (applied < requested).then(|| PruneWarning {
        layer: layer.name().to_string(),
        requested,
        applied,
    })
}

fn layerwise_with(
    classes: &[LayerClass],
    mags: &[Vec<f64>],
    mask: &Mask,
    config: &PruneConfig,
    skip: &[usize],
) -> Pruned {
    let mut out = mask.clone();
    let mut warnings = Vec::new();
    for (i, layer) in out.layers_mut().iter_mut().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        warnings.extend(prune_one_layer(&mags[i], layer, config.rate_for(classes[i])));
    }
    Pruned {
        mask: out,
        warnings,
    }
}

fn global_with(mags: &[Vec<f64>], mask: &Mask, rate: f64, scope: &[usize]) -> Result<Pruned> {
    if scope.is_empty() {
        return Err(Error::invalid("global pruning scope is empty"));
    }
    if let Some(&bad) = scope.iter().find(|&&i| i >= mask.layers().len()) {
        return Err(Error::invalid(format!("scope layer {bad} does not exist")));
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("global rate {rate} is outside [0, 1)")));
    }
    let mut scope = scope.to_vec();
    scope.sort_unstable();
    scope.dedup();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for &l in &scope {
        let bits = mask.layers()[l].bits();
        candidates.extend((0..bits.len()).filter(|&i| bits[i]).map(|i| (mags[l][i], l, i)));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let k = prune_count(rate, candidates.len());

    let mut out = mask.clone();
    for &(_, l, i) in &candidates[..k] {
        out.layers_mut()[l].bits_mut()[i] = false;
    }
    let mut warnings = Vec::new();
    for &l in &scope {
        let before = mask.layers()[l].ones();
        if before > 0 && out.layers()[l].ones() == 0 {
            // Restore the largest weight this layer had before the round.
            let largest = candidates
                .iter()
                .rev()
                .find(|c| c.1 == l)
                .expect("layer had survivors");
            out.layers_mut()[l].bits_mut()[largest.2] = true;
            warnings.push(PruneWarning {
                layer: out.layers()[l].name().to_string(),
                requested: before,
                applied: before - 1,
            });
        }
    }
    Ok(Pruned {
        mask: out,
        warnings,
    })
}

fn log_warnings(p: &Pruned) {
    for w in &p.warnings {
        warn!(
            "pruning layer {} would remove all {} survivors; kept its largest weight",
            w.layer, w.requested
        );
    }
}

fn prune_by(spec: &NetworkSpec, mags: &[Vec<f64>], mask: &Mask, config: &PruneConfig) -> Result<Pruned> {
    let classes = check(spec, mask, config)?;
    let pruned = match &config.mode {
        PruneMode::Layerwise => layerwise_with(&classes, mags, mask, config, &[]),
        PruneMode::Global { scope, rate } => {
            let in_scope: Vec<usize> = (0..classes.len())
                .filter(|&i| scope.contains(&classes[i]))
                .collect();
            if in_scope.is_empty() {
                return Err(Error::invalid("global scope matches no layer in this network"));
            }
            let global = global_with(mags, mask, *rate, &in_scope)?;
            let mut rest = layerwise_with(&classes, mags, &global.mask, config, &in_scope);
            rest.warnings.splice(0..0, global.warnings);
            rest
        }
    };
    log_warnings(&pruned);
    Ok(pruned)
}

/// Removes, within each layer, the class rate of its surviving weights with
/// the smallest trained magnitudes.
pub fn prune_layerwise<F: Real>(
    spec: &NetworkSpec,
    trained: &ParamSet<F>,
    mask: &Mask,
    config: &PruneConfig,
) -> Result<Pruned> {
    mask.check_params(trained)?;
    let config = PruneConfig {
        mode: PruneMode::Layerwise,
        ..config.clone()
    };
    prune_by(spec, &magnitudes(trained.layers()), mask, &config)
}

/// Removes `round(rate * survivors)` of the smallest-magnitude surviving
/// weights pooled across the `scope` layers (prunable-layer indices). Other
/// layers are untouched.
pub fn prune_global<F: Real>(trained: &ParamSet<F>, mask: &Mask, rate: f64, scope: &[usize]) -> Result<Pruned> {
    mask.check_params(trained)?;
    let pruned = global_with(&magnitudes(trained.layers()), mask, rate, scope)?;
    log_warnings(&pruned);
    Ok(pruned)
}

/// Applies `config` (layer-wise or global) using the trained magnitudes.
pub fn prune<F: Real>(spec: &NetworkSpec, trained: &ParamSet<F>, mask: &Mask, config: &PruneConfig) -> Result<Pruned> {
    mask.check_params(trained)?;
    prune_by(spec, &magnitudes(trained.layers()), mask, config)
}

/// Same as [`prune`] but ranks weights by their initial magnitudes, i.e.
/// pruning before any training has happened.
pub fn prune_at_init<F: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    config: &PruneConfig,
) -> Result<Pruned> {
    mask.check_params(params)?;
    prune_by(spec, &magnitudes(params.init_snapshot()), mask, config)
}

/// A mask shaped like `template` with `round(keep[i] * n_i)` ones in layer
/// `i` (at least one), positions uniform without replacement.
pub fn random_mask(template: &Mask, keep: &[f64], seed: u64) -> Result<Mask> {
    if keep.len() != template.layers().len() {
        return Err(Error::invalid(format!(
            "{} keep fractions for {} layers",
            keep.len(),
            template.layers().len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = template
        .layers()
        .iter()
        .zip(keep)
        .map(|(layer, &frac)| {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::invalid(format!("keep fraction {frac} outside (0, 1]")));
            }
            let n = layer.len();
            let ones = ((frac * n as f64).round() as usize).clamp(1.min(n), n);
            let mut bits = vec![false; n];
            for i in index::sample(&mut rng, n, ones) {
                bits[i] = true;
            }
            LayerMask::new(layer.name(), layer.shape().to_vec(), bits)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mask::new(layers))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSparsity {
    pub name: String,
    pub remaining: usize,
    pub total: usize,
}

impl LayerSparsity {
    pub fn fraction(&self) -> f64 {
        self.remaining as f64 / self.total as f64
    }
}

/// `P_m`: surviving weights over all weights, plus the per-layer breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub remaining: usize,
    pub total: usize,
    pub layers: Vec<LayerSparsity>,
}

impl SparsityReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.remaining as f64 / self.total as f64
        }
    }

    pub fn layer_fractions(&self) -> Vec<f64> {
        self.layers.iter().map(LayerSparsity::fraction).collect()
    }
}

pub fn sparsity(mask: &Mask) -> SparsityReport {
    let layers: Vec<LayerSparsity> = mask
        .layers()
        .iter()
        .map(|l| LayerSparsity {
            name: l.name().to_string(),
            remaining: l.ones(),
            total: l.len(),
        })
        .collect();
    SparsityReport {
        remaining: layers.iter().map(|l| l.remaining).sum(),
        total: layers.iter().map(|l| l.total).sum(),
        layers,
    }
}
