//! Grid-discretised autoregressive trajectory forecasting.
//!
//! Trajectories live on an `H × W` pixel grid. [`model::Stcnn`] maps a window
//! of `s` observed points, rendered as one-hot frames, to a categorical
//! distribution over the next cell. Continuations are sampled one step at a
//! time ([`forecast`]) and scored exactly by the chain rule. [`metrics`]
//! implements the cross-entropy, L2 and top-k% oracle measures, and
//! [`baselines`] the uniform, LSTM-Gaussian, mean-point and shotgun methods
//! they are compared against.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod distribution;
mod error;
pub mod evaluate;
pub mod forecast;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod provider;
pub mod trainer;

pub use error::{Error, Result};
pub use distribution::GridDistribution;
pub use grid::{GridSpec, Point};
pub use model::{ArchConfig, Stcnn};
pub use provider::{Conditioning, GridModel};
pub use stcnn_tensor as tensor;
