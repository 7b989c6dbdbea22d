//! Spiking convolutional networks trained by reward propagation.
//!
//! The label of each sample is projected through fixed random matrices
//! straight into every hidden layer, where it becomes a target for the
//! layer's mean membrane potential. Each layer then minimizes its own squared
//! error with Adam, so no error signal travels layer by layer. Surrogate
//! gradient backpropagation and error/sign target variants are provided for
//! comparison.
//!
//! - [`neuron`]: discrete LIF dynamics and the surrogate derivative
//! - [`encode`]: rate encoding, label trains, firerates
//! - [`topology`], [`layers`], [`network`]: spiking conv/pool/fc layers and
//!   the windowed forward pass
//! - [`learn`]: target signals, feedback projection, local gradients, Adam,
//!   the surrogate-gradient baseline and the epoch loop
//! - [`data`]: IDX, CIFAR-10 and event-stream readers, synthetic tasks,
//!   batching
//! - [`metrics`]: operation counters, silent-neuron fractions, CSV logs

pub mod data;
pub mod encode;
pub mod error;
pub mod layers;
pub mod learn;
pub mod metrics;
pub mod network;
pub mod neuron;
pub mod rng;
pub mod spikes;
pub mod topology;

pub use error::{Error, Result};
pub use network::{forward_batch, network_forward, Network, Trace};
pub use neuron::{LifParams, LifState};
pub use spikes::SpikeTrain;
pub use topology::{Shape, Topology};
