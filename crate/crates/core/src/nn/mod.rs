//! Feed-forward networks: definitions, initialization, forward and backward
//! passes under a weight mask.

mod conv;
mod init;
mod model;
mod params;
mod spec;

pub use init::{build_network, glorot_std, InitSpec};
pub use model::{
    accuracy, evaluate, forward, loss_and_grads, softmax_cross_entropy, Evaluation, Forward, Mode,
};
pub use params::{Gradients, LayerParams, ParamSet};
pub use spec::{LayerClass, LayerSpec, NetworkSpec, PrunableLayer};
