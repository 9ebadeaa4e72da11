use super::metric::GroundTruthMetric;
use super::Sample;
use crate::error::{Error, Result};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarginClass {
    /// Orderable: `d*(base, far) − d*(base, near) ≥ ξ*`.
    #[serde(rename = "HM")]
    High,
    /// Unorderable: `|d*(base, far) − d*(base, near)| < ξ*`.
    #[serde(rename = "LM")]
    Low,
}

impl fmt::Display for MarginClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginClass::High => "HM",
            MarginClass::Low => "LM",
        })
    }
}

impl FromStr for MarginClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "HM" | "hm" => Ok(MarginClass::High),
            "LM" | "lm" => Ok(MarginClass::Low),
            other => Err(Error::Input(format!("unknown margin class `{other}`"))),
        }
    }
}

/// Indices of three distinct samples. High-margin triplets are stored with
/// `near` and `far` already ordered by ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub base: usize,
    pub near: usize,
    pub far: usize,
    pub margin: MarginClass,
}

impl Triplet {
    pub fn key(&self) -> TripletKey {
        TripletKey {
            base: self.base,
            near: self.near,
            far: self.far,
        }
    }
}

/// Canonical identity of a triplet: `(base, near, far)` for high-margin
/// triplets and `(base, lower-id member, higher-id member)` for low-margin ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletKey {
    pub base: usize,
    pub near: usize,
    pub far: usize,
}

/// Outcome of [`classify_triplet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    High { near: usize, far: usize },
    Low,
}

/// Classifies `(i, j, k)` from its ground-truth distances `d*(i,j)` and `d*(i,k)`.
pub fn classify_triplet(j: usize, k: usize, d_ij: f64, d_ik: f64, xi_star: f64) -> Classification {
    let diff = d_ik - d_ij;
    if diff.abs() < xi_star {
        Classification::Low
    } else if diff >= 0.0 {
        Classification::High { near: j, far: k }
    } else {
        Classification::High { near: k, far: j }
    }
}

/// Builds the canonical triplet for an ordered draw of sample indices.
fn canonical(samples: &[Sample], gt: &GroundTruthMetric, i: usize, j: usize, k: usize) -> Triplet {
    // Resolve ties and LM ordering by signal id so results do not depend on input order.
    let (j, k) = if samples[j].id <= samples[k].id { (j, k) } else { (k, j) };
    let d_ij = gt.distance(&samples[i], &samples[j]);
    let d_ik = gt.distance(&samples[i], &samples[k]);
    match classify_triplet(j, k, d_ij, d_ik, gt.xi_star) {
        Classification::High { near, far } => Triplet {
            base: i,
            near,
            far,
            margin: MarginClass::High,
        },
        Classification::Low => Triplet {
            base: i,
            near: j,
            far: k,
            margin: MarginClass::Low,
        },
    }
}

/// Triplet spaces at most this large are enumerated exactly; larger ones use
/// rejection sampling.
const ENUMERATION_LIMIT: usize = 2_000_000;

/// Samples `n_hm` high-margin and `n_lm` low-margin triplets uniformly without
/// replacement from triplets whose members all lie in `pool`, skipping keys in
/// `exclude`. High-margin triplets come first in the result.
pub fn sample_triplets(
    samples: &[Sample],
    gt: &GroundTruthMetric,
    pool: &[usize],
    n_hm: usize,
    n_lm: usize,
    seed: u64,
    exclude: &HashSet<TripletKey>,
) -> Result<Vec<Triplet>> {
    gt.metric.check_samples(samples)?;
    let mut pool: Vec<usize> = pool.to_vec();
    pool.sort_by_key(|&i| samples[i].id);
    pool.dedup();
    if let Some(&bad) = pool.iter().find(|&&i| i >= samples.len()) {
        return Err(Error::Config(format!("pool index {bad} outside {} signals", samples.len())));
    }
    if n_hm + n_lm == 0 {
        return Ok(Vec::new());
    }
    let p = pool.len();
    if p < 3 {
        return Err(Error::Data(format!("triplets need at least 3 signals, pool has {p}")));
    }
    let space = p * (p - 1) / 2 * (p - 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if space <= ENUMERATION_LIMIT {
        let mut high = Vec::new();
        let mut low = Vec::new();
        for &i in &pool {
            for (a, &j) in pool.iter().enumerate() {
                if j == i {
                    continue;
                }
                for &k in &pool[a + 1..] {
                    if k == i {
                        continue;
                    }
                    let t = canonical(samples, gt, i, j, k);
                    if exclude.contains(&t.key()) {
                        continue;
                    }
                    match t.margin {
                        MarginClass::High => high.push(t),
                        MarginClass::Low => low.push(t),
                    }
                }
            }
        }
        if high.len() < n_hm || low.len() < n_lm {
            return Err(Error::Data(format!(
                "requested {n_hm} HM + {n_lm} LM triplets but only {} HM and {} LM are available",
                high.len(),
                low.len()
            )));
        }
        let mut out: Vec<Triplet> = index::sample(&mut rng, high.len(), n_hm)
            .into_iter()
            .map(|i| high[i])
            .collect();
        out.extend(index::sample(&mut rng, low.len(), n_lm).into_iter().map(|i| low[i]));
        return Ok(out);
    }

    let mut seen: HashSet<TripletKey> = HashSet::with_capacity(n_hm + n_lm);
    let mut high = Vec::with_capacity(n_hm);
    let mut low = Vec::with_capacity(n_lm);
    let budget = 200 * (n_hm + n_lm) + 1_000_000;
    let mut attempts = 0usize;
    while high.len() < n_hm || low.len() < n_lm {
        if attempts == budget {
            return Err(Error::Data(format!(
                "requested {n_hm} HM + {n_lm} LM triplets but found only {} HM and {} LM in {budget} draws",
                high.len(),
                low.len()
            )));
        }
        attempts += 1;
        let i = pool[rng.random_range(0..p)];
        let j = pool[rng.random_range(0..p)];
        let k = pool[rng.random_range(0..p)];
        if i == j || j == k || i == k {
            continue;
        }
        let t = canonical(samples, gt, i, j, k);
        let bucket = match t.margin {
            MarginClass::High if high.len() < n_hm => &mut high,
            MarginClass::Low if low.len() < n_lm => &mut low,
            _ => continue,
        };
        let key = t.key();
        if exclude.contains(&key) || !seen.insert(key) {
            continue;
        }
        bucket.push(t);
    }
    high.extend(low);
    Ok(high)
}
