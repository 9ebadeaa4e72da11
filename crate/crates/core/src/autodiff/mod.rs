//! Minimal reverse-mode differentiation: tensors on a tape, the handful of
//! layer kernels the embedding network needs, and the Adam optimizer.

mod adam;
mod graph;
pub mod kernels;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, NodeId};
pub use kernels::{conv1d_forward, linear_forward, maxpool1d_forward, ConvGeometry};
pub use params::{ParamGrads, ParamId, ParamStore};
