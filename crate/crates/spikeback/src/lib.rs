//! Event-driven simulation and training of deep spiking neural networks.
//!
//! The crate simulates layers of leaky integrate-and-fire neurons with
//! refractory dynamic weights and winner-take-all lateral inhibition purely
//! from timestamped spike events, and trains them by backpropagating errors
//! through a differentiable rate model of the same dynamics: spike traces
//! act as activations, layer-normalized errors keep gradients balanced
//! across depths, and weight/threshold regularizers keep every neuron in
//! its responsive regime.
//!
//! Entry points:
//!
//! * [`network`]: parameters, initialization, the event-driven forward pass.
//! * [`learning`]: the rate model, its derivatives, and the backward pass.
//! * [`optim`] and [`regularizer`]: SGD/ADAM updates and the two penalties.
//! * [`data`]: MNIST images, Poisson encoding, event-camera streams.
//! * [`trainer`]: the full training loop with metrics and checkpoints.
//! * [`oracle`]: slow reference implementations used to validate the fast
//!   paths (clock-driven simulation, finite-difference gradients).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod learning;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod regularizer;
pub mod trainer;

pub use error::{Error, Result};
