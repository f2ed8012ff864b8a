//! Post-hoc views of a ticket: where its initial values sit, how far its
//! weights travel during training, and how its connections are spread over
//! units.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::pruning::Mask;
use crate::tensor::Real;

pub const DEFAULT_BINS: usize = 50;

/// Uniform-bin density estimate with unit area.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// Sample count per bin.
    pub counts: Vec<usize>,
    pub count: usize,
    pub mean: f64,
}

impl Histogram {
    /// Bins spanning `[min, max]` of `values`; a degenerate range becomes
    /// `[c - 0.5, c + 0.5]`.
    pub fn new(values: &[f64], bins: usize) -> Result<Histogram> {
        Self::with_range(values, bins, None)
    }

    /// Like [`Histogram::new`] with an explicit `(lo, hi)` range, e.g. to
    /// share bins between two samples. Values outside are rejected.
    pub fn with_range(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
        if bins < 2 {
            return Err(Error::invalid(format!("{bins} bins; need at least 2")));
        }
        if values.is_empty() {
            return Err(Error::invalid("histogram of an empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("histogram sample".into()));
        }
        let (mut lo, mut hi) = range.unwrap_or_else(|| {
            values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
        });
        if values.iter().any(|&v| v < lo || v > hi) {
            return Err(Error::invalid("sample outside the histogram range"));
        }
        if hi <= lo {
            let c = lo;
            lo = c - 0.5;
            hi = c + 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let n = values.len() as f64;
        let density = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 / (n * (edges[i + 1] - edges[i])))
            .collect();
        Ok(Histogram {
            edges,
            density,
            counts,
            count: values.len(),
            mean: values.iter().sum::<f64>() / n,
        })
    }

    pub fn area(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| d * (self.edges[i + 1] - self.edges[i]))
            .sum()
    }

    /// Fraction of the sample in bins lying entirely above `x`.
    pub fn mass_above(&self, x: f64) -> f64 {
        let above: usize = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| self.edges[*i] >= x)
            .map(|(_, c)| c)
            .sum();
        above as f64 / self.count as f64
    }

    /// `bin_left,bin_right,density` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,density\n");
        for (i, d) in self.density.iter().enumerate() {
            let _ = writeln!(s, "{:?},{:?},{:?}", self.edges[i], self.edges[i + 1], d);
        }
        s
    }
}

fn layer_index<F: Real>(params: &ParamSet<F>, layer: usize) -> Result<()> {
    if layer >= params.layers().len() {
        return Err(Error::invalid(format!("no prunable layer {layer}")));
    }
    Ok(())
}

/// Initial values of the surviving weights of one layer.
pub fn init_histogram<F: Real>(params: &ParamSet<F>, mask: &Mask, layer: usize, bins: usize) -> Result<Histogram> {
    mask.check_params(params)?;
    layer_index(params, layer)?;
    let values: Vec<f64> = params.init_snapshot()[layer]
        .weights
        .data()
        .iter()
        .zip(mask.layers()[layer].bits())
        .filter(|(_, &k)| k)
        .map(|(w, _)| w.to_f64_lossy())
        .collect();
    if values.is_empty() {
        return Err(Error::invalid(format!("layer {layer} has no survivors")));
    }
    Histogram::new(&values, bins)
}

/// Per-weight statistics split by mask membership. Either side is `None`
/// when it is empty (a full mask leaves nothing outside the ticket).
#[derive(Debug, Clone, PartialEq)]
pub struct Partitioned {
    pub in_ticket: Option<Histogram>,
    pub out_of_ticket: Option<Histogram>,
    pub in_count: usize,
    pub out_count: usize,
}

fn partition<F: Real>(
    theta0: &ParamSet<F>,
    trained: &ParamSet<F>,
    mask: &Mask,
    bins: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Partitioned> {
    mask.check_params(theta0)?;
    mask.check_params(trained)?;
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for ((l0, l1), keep) in theta0.layers().iter().zip(trained.layers()).zip(mask.layers()) {
        for ((a, b), &k) in l0.weights.data().iter().zip(l1.weights.data()).zip(keep.bits()) {
            let v = f(a.to_f64_lossy(), b.to_f64_lossy());
            if k {
                inside.push(v);
            } else {
                outside.push(v);
            }
        }
    }
    // Shared bins so the two densities are directly comparable.
    let all = inside.iter().chain(&outside);
    let range = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let hist = |v: &[f64]| (!v.is_empty()).then(|| Histogram::with_range(v, bins, Some(range))).transpose();
    Ok(Partitioned {
        in_ticket: hist(&inside)?,
        out_of_ticket: hist(&outside)?,
        in_count: inside.len(),
        out_count: outside.len(),
    })
}

/// `|θ_final − θ₀|` for weights inside and outside the ticket. Both
/// parameter sets hold the current values to compare (`theta0` is typically
/// a freshly built network, `trained` the dense network after training).
pub fn weight_movement<F: Real>(theta0: &ParamSet<F>, trained: &ParamSet<F>, mask: &Mask, bins: usize) -> Result<Partitioned> {
    partition(theta0, trained, mask, bins, |a, b| (b - a).abs())
}

/// `|θ_final| − |θ₀|`: positive when a weight moved away from zero.
pub fn movement_from_zero<F: Real>(theta0: &ParamSet<F>, trained: &ParamSet<F>, mask: &Mask, bins: usize) -> Result<Partitioned> {
    partition(theta0, trained, mask, bins, |a, b| b.abs() - a.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Incoming,
    Outgoing,
}

/// Fraction of each unit's connections that survive.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityProfile {
    pub fractions: Vec<f64>,
    pub kept: Vec<usize>,
    pub per_unit: usize,
}

impl ConnectivityProfile {
    /// Mean fraction, computed from the integer counts.
    pub fn mean(&self) -> f64 {
        self.kept.iter().sum::<usize>() as f64 / (self.kept.len() * self.per_unit) as f64
    }
}

/// Weights are `[out, in, ...]`: a unit's incoming connections are its row
/// (including the kernel taps), its outgoing connections the column of an
/// input unit in the next layer.
pub fn connectivity(mask: &Mask, layer: usize, direction: Direction) -> Result<ConnectivityProfile> {
    let m = mask
        .layers()
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("no prunable layer {layer}")))?;
    let shape = m.shape();
    if shape.len() < 2 {
        return Err(Error::shape("connectivity needs weights of rank >= 2"));
    }
    let (outs, ins) = (shape[0], shape[1]);
    let taps: usize = shape[2..].iter().product();
    let bits = m.bits();
    let kept: Vec<usize> = match direction {
        Direction::Incoming => bits.chunks(ins * taps).map(|row| row.iter().filter(|&&b| b).count()).collect(),
        Direction::Outgoing => (0..ins)
            .map(|i| {
                (0..outs)
                    .map(|o| bits[(o * ins + i) * taps..][..taps].iter().filter(|&&b| b).count())
                    .sum()
            })
            .collect(),
    };
    let per_unit = match direction {
        Direction::Incoming => ins * taps,
        Direction::Outgoing => outs * taps,
    };
    Ok(ConnectivityProfile {
        fractions: kept.iter().map(|&k| k as f64 / per_unit as f64).collect(),
        kept,
        per_unit,
    })
}

/// `unit,kept,fraction` rows.
pub fn connectivity_csv(profile: &ConnectivityProfile) -> String {
    let mut s = String::from("unit,kept,fraction\n");
    for (i, (k, f)) in profile.kept.iter().zip(&profile.fractions).enumerate() {
        let _ = writeln!(s, "{i},{k},{f:?}");
    }
    s
}
