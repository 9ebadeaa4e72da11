use super::metric::GroundTruthMetric;
use super::triplets::{sample_triplets, Triplet, TripletKey};
use super::{derive_seed, Sample};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

/// How test data is held out from training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Disjoint triplet sets over the same signals.
    HeldOutTriplets,
    /// A fixed number of signals per class are reserved for testing.
    HeldOutSamples,
    /// A fraction of whole classes is reserved for testing.
    HeldOutClasses,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::HeldOutTriplets => "held-out-triplets",
            Protocol::HeldOutSamples => "held-out-samples",
            Protocol::HeldOutClasses => "held-out-classes",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "held-out-triplets" | "triplets" | "a" => Ok(Protocol::HeldOutTriplets),
            "held-out-samples" | "samples" | "b" => Ok(Protocol::HeldOutSamples),
            "held-out-classes" | "classes" | "c" => Ok(Protocol::HeldOutClasses),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Numbers of high- and low-margin triplets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCounts {
    pub hm: usize,
    pub lm: usize,
}

impl TripletCounts {
    pub fn new(hm: usize, lm: usize) -> Self {
        Self { hm, lm }
    }

    pub fn total(&self) -> usize {
        self.hm + self.lm
    }
}

impl Default for TripletCounts {
    fn default() -> Self {
        Self::new(10_000, 10_000)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub protocol: Protocol,
    pub fold_seed: u64,
    pub train: TripletCounts,
    pub test: TripletCounts,
    /// Signals per class reserved for testing under [`Protocol::HeldOutSamples`].
    pub held_out_per_class: usize,
    /// Fraction of classes reserved for testing under [`Protocol::HeldOutClasses`].
    pub held_out_class_fraction: f64,
}

impl SplitSpec {
    pub fn new(protocol: Protocol, fold_seed: u64) -> Self {
        Self {
            protocol,
            fold_seed,
            train: TripletCounts::default(),
            test: TripletCounts::default(),
            held_out_per_class: 2,
            held_out_class_fraction: 0.2,
        }
    }
}

/// Train and test triplets plus the signals each side may use.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<Triplet>,
    pub test: Vec<Triplet>,
    pub train_signals: Vec<usize>,
    pub test_signals: Vec<usize>,
}

fn by_class(samples: &[Sample]) -> BTreeMap<u32, Vec<usize>> {
    let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        classes.entry(s.id.class_id).or_default().push(i);
    }
    for members in classes.values_mut() {
        members.sort_by_key(|&i| samples[i].id);
    }
    classes
}

/// Number of classes held out: `round(fraction · classes)`, at least one.
pub fn held_out_class_count(classes: usize, fraction: f64) -> usize {
    ((fraction * classes as f64).round() as usize).max(1)
}

/// Builds train and test triplets under `spec.protocol`.
pub fn make_split(samples: &[Sample], gt: &GroundTruthMetric, spec: &SplitSpec) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.fold_seed, 0));
    let train_seed = derive_seed(spec.fold_seed, 1);
    let test_seed = derive_seed(spec.fold_seed, 2);
    let all: Vec<usize> = (0..samples.len()).collect();

    let (train_signals, test_signals) = match spec.protocol {
        Protocol::HeldOutTriplets => (all.clone(), all),
        Protocol::HeldOutSamples => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (class, mut members) in by_class(samples) {
                if members.len() <= spec.held_out_per_class {
                    return Err(Error::Data(format!(
                        "class {class} has {} signals; holding out {} leaves none for training",
                        members.len(),
                        spec.held_out_per_class
                    )));
                }
                members.shuffle(&mut rng);
                let (t, r) = members.split_at(spec.held_out_per_class);
                test.extend_from_slice(t);
                train.extend_from_slice(r);
            }
            (train, test)
        }
        Protocol::HeldOutClasses => {
            if !(0.0..1.0).contains(&spec.held_out_class_fraction) {
                return Err(Error::Config(format!(
                    "held-out class fraction {} must lie in [0, 1)",
                    spec.held_out_class_fraction
                )));
            }
            let classes = by_class(samples);
            let mut ids: Vec<u32> = classes.keys().copied().collect();
            let held = held_out_class_count(ids.len(), spec.held_out_class_fraction);
            if held >= ids.len() {
                return Err(Error::Data(format!(
                    "holding out {held} of {} classes leaves none for training",
                    ids.len()
                )));
            }
            ids.shuffle(&mut rng);
            let test_classes: HashSet<u32> = ids[..held].iter().copied().collect();
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (class, members) in classes {
                if test_classes.contains(&class) {
                    test.extend(members);
                } else {
                    train.extend(members);
                }
            }
            (train, test)
        }
    };

    let train = sample_triplets(
        samples,
        gt,
        &train_signals,
        spec.train.hm,
        spec.train.lm,
        train_seed,
        &HashSet::new(),
    )
    .map_err(|e| Error::Data(format!("{} training triplets: {e}", spec.protocol)))?;
    let exclude: HashSet<TripletKey> = match spec.protocol {
        Protocol::HeldOutTriplets => train.iter().map(Triplet::key).collect(),
        _ => HashSet::new(),
    };
    let test = sample_triplets(
        samples,
        gt,
        &test_signals,
        spec.test.hm,
        spec.test.lm,
        test_seed,
        &exclude,
    )
    .map_err(|e| Error::Data(format!("{} test triplets: {e}", spec.protocol)))?;
    Ok(Split {
        train,
        test,
        train_signals,
        test_signals,
    })
}
