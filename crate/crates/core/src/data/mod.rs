//! Datasets, splits and mini-batch order.

mod formats;

pub use formats::{load_cifar10, load_idx, parse_cifar10, parse_idx, write_cifar10, write_idx};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tensor};

/// Labelled examples. Inputs are stored in single precision and widened on
/// demand by [`Dataset::gather`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    example_shape: Vec<usize>,
    inputs: Vec<f32>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(example_shape: Vec<usize>, inputs: Vec<f32>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let per: usize = example_shape.iter().product();
        if per == 0 || inputs.len() != per * labels.len() {
            return Err(Error::shape(format!(
                "{} input values for {} examples of shape {:?}",
                inputs.len(),
                labels.len(),
                example_shape
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset inputs".into()));
        }
        Ok(Dataset {
            example_shape,
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn example_shape(&self) -> &[usize] {
        &self.example_shape
    }

    pub fn example_len(&self) -> usize {
        self.example_shape.iter().product()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    /// The batch `[indices.len(), ...example_shape]` and its labels.
    pub fn gather<F: Real>(&self, indices: &[usize]) -> Result<(Tensor<F>, Vec<usize>)> {
        let per = self.example_len();
        let mut data = Vec::with_capacity(per * indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("example {i} of {}", self.len())));
            }
            data.extend(self.inputs[i * per..(i + 1) * per].iter().map(|&v| F::from_f64_lossy(v as f64)));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend(&self.example_shape);
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// A new dataset holding the given examples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let (x, labels) = self.gather::<f32>(indices)?;
        Ok(Dataset {
            example_shape: self.example_shape.clone(),
            inputs: x.into_data(),
            labels,
            classes: self.classes,
        })
    }

    pub fn reshape(self, example_shape: Vec<usize>) -> Result<Dataset> {
        if example_shape.iter().product::<usize>() != self.example_len() {
            return Err(Error::shape(format!(
                "cannot view {:?} examples as {:?}",
                self.example_shape, example_shape
            )));
        }
        Ok(Dataset {
            example_shape,
            ..self
        })
    }

    /// Keeps only examples whose label is in `keep`, relabelled to the
    /// position of their label in `keep`.
    pub fn filter_classes(&self, keep: &[usize]) -> Result<Dataset> {
        if keep.is_empty() || keep.iter().any(|&c| c >= self.classes) {
            return Err(Error::invalid(format!("class list {keep:?} for {} classes", self.classes)));
        }
        let per = self.example_len();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(pos) = keep.iter().position(|&c| c == l) {
                inputs.extend_from_slice(&self.inputs[i * per..(i + 1) * per]);
                labels.push(pos);
            }
        }
        Dataset::new(self.example_shape.clone(), inputs, labels, keep.len())
    }

    /// Block-averages `[c, h, w]` images down by an integer `factor`.
    pub fn downsample(&self, factor: usize) -> Result<Dataset> {
        let &[c, h, w] = self.example_shape.as_slice() else {
            return Err(Error::shape("downsampling needs [c, h, w] examples"));
        };
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::invalid(format!("cannot downsample {h}x{w} by {factor}")));
        }
        let (oh, ow) = (h / factor, w / factor);
        let scale = 1.0 / (factor * factor) as f32;
        let mut out = Vec::with_capacity(self.len() * c * oh * ow);
        for img in self.inputs.chunks(c * h * w) {
            for plane in img.chunks(h * w) {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = 0.0f32;
                        for dy in 0..factor {
                            let row = &plane[(oy * factor + dy) * w + ox * factor..][..factor];
                            s += row.iter().sum::<f32>();
                        }
                        out.push(s * scale);
                    }
                }
            }
        }
        Dataset::new(vec![c, oh, ow], out, self.labels.clone(), self.classes)
    }
}

/// Train, validation and test sets for one experiment.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Index sets of a seeded train/validation split. Both are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Draws `validation_size` examples uniformly for validation; the rest are
/// the training set.
pub fn split_indices(n: usize, validation_size: usize, seed: u64) -> Result<SplitIndices> {
    if validation_size > n {
        return Err(Error::invalid(format!(
            "validation size {validation_size} exceeds {n} examples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::label::SPLIT]));
    let mut validation = order[..validation_size].to_vec();
    let mut train = order[validation_size..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, validation })
}

/// `(train, validation)` subsets of `data`.
pub fn split(data: &Dataset, validation_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(data.len(), validation_size, seed)?;
    Ok((data.subset(&idx.train)?, data.subset(&idx.validation)?))
}

/// Mini-batches of one epoch: a seeded permutation of `0..n` cut into
/// `batch_size` chunks, the last one possibly short.
pub fn epoch_batches(n: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// An endless sequence of mini-batches, reshuffling the full set at the
/// start of each epoch. Epoch `e` uses the seed `derive(seed, [e])`.
#[derive(Debug, Clone)]
pub struct BatchStream {
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    batches: Vec<Vec<usize>>,
    next: usize,
}

impl BatchStream {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot batch an empty training set"));
        }
        Ok(BatchStream {
            n,
            batch_size,
            seed,
            epoch: 0,
            batches: epoch_batches(n, batch_size, rng::derive(seed, &[0]))?,
            next: 0,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.next == self.batches.len() {
            self.epoch += 1;
            self.batches = epoch_batches(self.n, self.batch_size, rng::derive(self.seed, &[self.epoch]))
                .expect("batch size checked at construction");
            self.next = 0;
        }
        self.next += 1;
        &self.batches[self.next - 1]
    }
}

/// Gaussian class clusters: class `c` is centred at `separation * u_c` with
/// `u_c` a random unit vector, and every example adds unit-variance noise.
/// Examples are interleaved by class.
pub fn synthetic_blobs(classes: usize, per_class: usize, dims: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || dims == 0 {
        return Err(Error::invalid("blobs need at least one class and one dimension"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::invalid(format!("separation {separation} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dims).map(|_| normal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| separation * x / norm).collect()
        })
        .collect();
    let mut inputs = Vec::with_capacity(classes * per_class * dims);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (c, centre) in centres.iter().enumerate() {
            inputs.extend(centre.iter().map(|&m| (m + normal.sample(&mut rng)) as f32));
            labels.push(c);
        }
    }
    Dataset::new(vec![dims], inputs, labels, classes)
}
