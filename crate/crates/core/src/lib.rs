//! Perceptual metric learning from triplet comparisons.
//!
//! Signals are summarised as constant-Q filter-bank spectra ([`features`]),
//! ground-truth distances produce high- and low-margin triplets ([`data`]),
//! and an embedding model ([`models`]) is trained with a dual-margin triplet
//! loss and evaluated on held-out triplets and pairs ([`train`]).

pub mod autodiff;
pub mod data;
pub mod error;
pub mod features;
pub mod io;
pub mod models;
pub mod par;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use par::Execution;
pub use tensor::Tensor;
