//! Lottery-ticket experiments on small feed-forward networks.
//!
//! The crate trains fully-connected and small convolutional networks, prunes
//! them by weight magnitude (layer-wise or globally, one-shot or iteratively),
//! rewinds the surviving weights to their initial values and retrains them,
//! measuring the early-stopping iteration and accuracy of every subnetwork
//! against the dense network and a battery of control subnetworks.
//!
//! Module map:
//!
//! - [`tensor`]: dense arrays and the GEMM kernels everything else sits on.
//! - [`nn`]: layer specs, presets, initialization, forward/backward passes.
//! - [`optim`]: SGD, momentum, Adam, weight decay and learning-rate schedules.
//! - [`pruning`]: masks, magnitude pruning, random masks, sparsity accounting.
//! - [`data`]: MNIST IDX and CIFAR-10 loaders, splits, batching, synthetic data.
//! - [`experiment`]: training runs, early stopping, the iterative and one-shot
//!   protocols, controls and trial aggregation.
//! - [`analysis`]: initialization histograms, weight movement, connectivity.
//! - [`cli`]: the config-driven runner behind the `lottery` binary.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod optim;
pub mod pruning;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
