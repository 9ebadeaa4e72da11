//! Ground-truth distances, margins, triplet sampling and train/test splits.

mod confusion;
mod metric;
mod split;
mod synth;
mod triplets;

pub use confusion::{normalize_confusion, ConfusionMatrix};
pub use metric::{compute_xi_star, GroundTruthMetric, Metric};
pub use split::{held_out_class_count, make_split, Protocol, Split, SplitSpec, TripletCounts};
pub use synth::{
    cayley_klein_gt, gen_synthetic_signals, mahalanobis_gt, synthetic_class_dataset,
    training_threshold_synthetic, ClassDatasetSpec,
};
pub use triplets::{
    classify_triplet, sample_triplets, Classification, MarginClass, Triplet, TripletKey,
};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Identity of one signal: its class and its index within the class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignalId {
    pub class_id: u32,
    pub sample_index: u32,
}

impl SignalId {
    pub fn new(class_id: u32, sample_index: u32) -> Self {
        Self {
            class_id,
            sample_index,
        }
    }
}

impl fmt::Display for SignalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.class_id, self.sample_index)
    }
}

/// A signal as seen by the models: an identity and its input vector
/// (filter-bank features, or raw coordinates for synthetic data).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SignalId,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(id: SignalId, values: Vec<f64>) -> Self {
        Self { id, values }
    }
}

/// Deterministic sub-seed for a named stream of a base seed (SplitMix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
