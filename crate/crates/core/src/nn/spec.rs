//! Layer and network descriptions, plus the named presets.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Fully connected. Weights are stored `[outputs, inputs]`; any
    /// multi-dimensional input is flattened first.
    Dense { inputs: usize, outputs: usize },
    /// 3×3 convolution, stride 1, zero "same" padding. Weights are stored
    /// `[out_channels, in_channels, 3, 3]`.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    /// 2×2 max pooling with stride 2.
    MaxPool2,
    /// Mean over the spatial dimensions, `[c, h, w] -> [c]`.
    AvgPoolGlobal,
    Relu,
    /// Inverted dropout: active in training mode only.
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv3x3 {
            in_channels,
            out_channels,
        }
    }

    pub fn is_prunable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv3x3 { .. })
    }
}

/// How a prunable layer is treated by the per-class pruning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerClass {
    Conv,
    Fc,
    /// The final fully-connected layer (connections to the outputs).
    Output,
}

impl fmt::Display for LayerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerClass::Conv => "conv",
            LayerClass::Fc => "fc",
            LayerClass::Output => "output",
        })
    }
}

/// Static facts about one prunable (weight-carrying) layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunableLayer {
    /// Index into [`NetworkSpec::layers`].
    pub layer_index: usize,
    pub name: String,
    pub class: LayerClass,
    pub weight_shape: Vec<usize>,
    pub bias_len: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl PrunableLayer {
    pub fn weight_count(&self) -> usize {
        self.weight_shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    /// Per-example input shape: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Fully-connected network with ReLU hidden layers.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in hidden {
            layers.push(LayerSpec::dense(width, h));
            layers.push(LayerSpec::Relu);
            width = h;
        }
        layers.push(LayerSpec::dense(width, classes));
        NetworkSpec {
            name: "mlp".into(),
            input_shape: vec![input],
            layers,
        }
    }

    /// VGG-style network: each module is two 3×3 convolutions of the given
    /// width followed by a max pool, then ReLU fully-connected layers.
    pub fn vgg_like(input_chw: [usize; 3], modules: &[usize], fc: &[usize], classes: usize) -> Self {
        let [mut c, mut h, mut w] = input_chw;
        let mut layers = Vec::new();
        for &width in modules {
            layers.push(LayerSpec::conv3x3(c, width));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::conv3x3(width, width));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2);
            c = width;
            h /= 2;
            w /= 2;
        }
        let mut features = c * h * w;
        for &units in fc {
            layers.push(LayerSpec::dense(features, units));
            layers.push(LayerSpec::Relu);
            features = units;
        }
        layers.push(LayerSpec::dense(features, classes));
        NetworkSpec {
            name: "vgg-like".into(),
            input_shape: input_chw.to_vec(),
            layers,
        }
    }

    /// Lenet-300-100 for 28×28 MNIST digits.
    pub fn lenet_300_100() -> Self {
        NetworkSpec {
            name: "lenet-300-100".into(),
            ..Self::mlp(784, &[300, 100], 10)
        }
    }

    pub fn conv2() -> Self {
        NetworkSpec {
            name: "conv-2".into(),
            ..Self::vgg_like([3, 32, 32], &[64], &[256, 256], 10)
        }
    }

    pub fn conv4() -> Self {
        NetworkSpec {
            name: "conv-4".into(),
            ..Self::vgg_like([3, 32, 32], &[64, 128], &[256, 256], 10)
        }
    }

    pub fn conv6() -> Self {
        NetworkSpec {
            name: "conv-6".into(),
            ..Self::vgg_like([3, 32, 32], &[64, 128, 256], &[256, 256], 10)
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "lenet-300-100" | "lenet" => Ok(Self::lenet_300_100()),
            "conv-2" => Ok(Self::conv2()),
            "conv-4" => Ok(Self::conv4()),
            "conv-6" => Ok(Self::conv6()),
            other => Err(Error::invalid(format!("unknown network preset '{other}'"))),
        }
    }

    /// Inserts a dropout layer after every hidden fully-connected ReLU.
    /// Convolutional layers are left alone.
    pub fn with_dropout(mut self, rate: f64) -> Self {
        if rate <= 0.0 {
            return self;
        }
        let mut layers = Vec::with_capacity(self.layers.len() + 4);
        let mut after_dense = false;
        for layer in self.layers.drain(..) {
            let is_relu = matches!(layer, LayerSpec::Relu);
            let is_dense = matches!(layer, LayerSpec::Dense { .. });
            layers.push(layer);
            if is_relu && after_dense {
                layers.push(LayerSpec::Dropout { rate });
            }
            after_dense = is_dense;
        }
        self.layers = layers;
        self
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Per-example output shape of every layer, after validating that the
    /// layer sequence is dimension-compatible.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::invalid(format!(
                "input shape {:?} must be non-empty and positive",
                self.input_shape
            )));
        }
        let mut current = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            current = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let flat: usize = current.iter().product();
                    if inputs == 0 || outputs == 0 {
                        return Err(Error::invalid(format!("layer {i}: dense sizes must be positive")));
                    }
                    if flat != inputs {
                        return Err(Error::shape(format!(
                            "layer {i}: dense expects {inputs} inputs, previous layer yields {flat}"
                        )));
                    }
                    vec![outputs]
                }
                LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                } => {
                    if current.len() != 3 {
                        return Err(Error::shape(format!(
                            "layer {i}: conv needs [c, h, w] input, got {current:?}"
                        )));
                    }
                    if in_channels == 0 || out_channels == 0 {
                        return Err(Error::invalid(format!("layer {i}: conv channels must be positive")));
                    }
                    if current[0] != in_channels {
                        return Err(Error::shape(format!(
                            "layer {i}: conv expects {in_channels} channels, got {}",
                            current[0]
                        )));
                    }
                    vec![out_channels, current[1], current[2]]
                }
                LayerSpec::MaxPool2 => {
                    if current.len() != 3 || current[1] < 2 || current[2] < 2 {
                        return Err(Error::shape(format!(
                            "layer {i}: max pool needs [c, h>=2, w>=2], got {current:?}"
                        )));
                    }
                    vec![current[0], current[1] / 2, current[2] / 2]
                }
                LayerSpec::AvgPoolGlobal => {
                    if current.len() != 3 {
                        return Err(Error::shape(format!(
                            "layer {i}: global average pool needs [c, h, w], got {current:?}"
                        )));
                    }
                    vec![current[0]]
                }
                LayerSpec::Relu => current,
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::invalid(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    current
                }
            };
            shapes.push(current.clone());
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { .. }) => Ok(shapes),
            _ => Err(Error::invalid("network must end in a dense output layer")),
        }
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { outputs, .. }) => *outputs,
            _ => 0,
        }
    }

    /// The weight-carrying layers in order, with their pruning class.
    pub fn prunable_layers(&self) -> Vec<PrunableLayer> {
        let last_dense = self
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }));
        let (mut n_conv, mut n_fc) = (0, 0);
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    n_fc += 1;
                    let class = if Some(i) == last_dense {
                        LayerClass::Output
                    } else {
                        LayerClass::Fc
                    };
                    out.push(PrunableLayer {
                        layer_index: i,
                        name: format!("fc{n_fc}"),
                        class,
                        weight_shape: vec![outputs, inputs],
                        bias_len: outputs,
                        fan_in: inputs,
                        fan_out: outputs,
                    });
                }
                LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                } => {
                    n_conv += 1;
                    out.push(PrunableLayer {
                        layer_index: i,
                        name: format!("conv{n_conv}"),
                        class: LayerClass::Conv,
                        weight_shape: vec![out_channels, in_channels, 3, 3],
                        bias_len: out_channels,
                        fan_in: in_channels * 9,
                        fan_out: out_channels * 9,
                    });
                }
                _ => {}
            }
        }
        out
    }

    pub fn weight_count(&self) -> usize {
        self.prunable_layers().iter().map(|l| l.weight_count()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.prunable_layers()
            .iter()
            .map(|l| l.weight_count() + l.bias_len)
            .sum()
    }
}
