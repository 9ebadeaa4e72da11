//! Synthetic signals and ground-truth metrics.

use super::confusion::{normalize_confusion, ConfusionMatrix};
use super::metric::Metric;
use super::{derive_seed, Sample, SignalId};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()
}

/// `AᵀA` for a row-major `rows × cols` matrix `A`.
fn gram(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    for r in 0..cols {
        for c in 0..cols {
            g[r * cols + c] = (0..rows).map(|k| a[k * cols + r] * a[k * cols + c]).sum();
        }
    }
    g
}

/// Whether a symmetric matrix admits a Cholesky factorisation.
fn is_positive_definite(m: &[f64], n: usize) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = m[i * n + i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return false;
                }
                l[i * n + j] = d.sqrt();
            } else {
                l[i * n + j] = (m[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    true
}

/// `n` i.i.d. standard-normal vectors of length `dim`, one class per signal.
pub fn gen_synthetic_signals(n: usize, dim: usize, seed: u64) -> Result<Vec<Sample>> {
    if n < 3 || dim == 0 {
        return Err(Error::Config(format!(
            "synthetic data needs n ≥ 3 and dim ≥ 1, got n={n}, dim={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let values = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            Sample::new(SignalId::new(i as u32, 0), values)
        })
        .collect())
}

/// Mahalanobis metric with `M = AᵀA`, `A` standard normal.
pub fn mahalanobis_gt(dim: usize, seed: u64) -> Result<Metric> {
    if dim == 0 {
        return Err(Error::Config("metric dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = normal_matrix(dim, dim, &mut rng);
    Ok(Metric::Mahalanobis {
        dim,
        m: gram(&a, dim, dim),
    })
}

/// Elliptic Cayley-Klein metric with `Ψ = BᵀB + 0.1·I` over homogeneous
/// coordinates; redrawn in the (measure-zero) event Ψ is not positive definite.
pub fn cayley_klein_gt(dim: usize, seed: u64) -> Result<Metric> {
    if dim == 0 {
        return Err(Error::Config("metric dimension must be positive".into()));
    }
    let n = dim + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let b = normal_matrix(n, n, &mut rng);
        let mut psi = gram(&b, n, n);
        for i in 0..n {
            psi[i * n + i] += 0.1;
        }
        if is_positive_definite(&psi, n) {
            return Ok(Metric::CayleyKlein { dim, psi });
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Number of random triplets inspected by [`training_threshold_synthetic`].
pub const THRESHOLD_PROBE_TRIPLETS: usize = 100_000;

/// Random ξ* drawn uniformly between the 25th and 75th percentile of
/// `|d*(i,k) − d*(i,j)|` over random triplets, so both margin classes occur.
pub fn training_threshold_synthetic(metric: &Metric, samples: &[Sample], seed: u64) -> Result<f64> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Data(format!("threshold needs at least 3 signals, got {n}")));
    }
    metric.check_samples(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(THRESHOLD_PROBE_TRIPLETS);
    while margins.len() < THRESHOLD_PROBE_TRIPLETS {
        let (i, j, k) = (
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        );
        if i == j || j == k || i == k {
            continue;
        }
        let m = metric.distance(&samples[i], &samples[k]) - metric.distance(&samples[i], &samples[j]);
        margins.push(m.abs());
    }
    margins.sort_by(f64::total_cmp);
    let lo = percentile(&margins, 0.25);
    let hi = percentile(&margins, 0.75);
    if !(hi > 0.0 && hi > lo) {
        return Err(Error::Data(
            "triplet margins are degenerate; no threshold separates the margin classes".into(),
        ));
    }
    // Open interval keeps both classes non-empty within the probe sample.
    let mut xi = rng.random_range(lo..hi);
    if xi <= 0.0 {
        xi = 0.5 * (lo + hi);
    }
    Ok(xi)
}

/// Layout of a synthetic class-structured dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDatasetSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Standard deviation of the within-class scatter around each prototype.
    pub spread: f64,
    pub seed: u64,
}

/// Class prototypes drawn from a standard normal, signals scattered around
/// them, and a confusion matrix derived from a random Cayley-Klein distance
/// between prototypes (min-max normalised, zero diagonal).
pub fn synthetic_class_dataset(spec: &ClassDatasetSpec) -> Result<(Vec<Sample>, ConfusionMatrix)> {
    if spec.classes < 3 || spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::Config(format!(
            "class dataset needs ≥ 3 classes, ≥ 1 signal per class and dim ≥ 1, got {spec:?}"
        )));
    }
    let prototypes = gen_synthetic_signals(spec.classes, spec.dim, derive_seed(spec.seed, 10))?;
    let metric = cayley_klein_gt(spec.dim, derive_seed(spec.seed, 11))?;
    let c = spec.classes;
    let mut raw = vec![0.0; c * c];
    for a in 0..c {
        for b in 0..c {
            if a != b {
                raw[a * c + b] = metric.distance(&prototypes[a], &prototypes[b]);
            }
        }
    }
    let matrix = normalize_confusion(c, &raw)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 12));
    let mut samples = Vec::with_capacity(c * spec.per_class);
    for (a, proto) in prototypes.iter().enumerate() {
        for i in 0..spec.per_class {
            let values = proto
                .values
                .iter()
                .map(|v| v + spec.spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(Sample::new(SignalId::new(a as u32, i as u32), values));
        }
    }
    Ok((samples, matrix))
}
