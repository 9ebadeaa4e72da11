use super::confusion::ConfusionMatrix;
use super::Sample;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A ground-truth dissimilarity between samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Metric {
    /// Class-level distances looked up in a confusion matrix; within-class
    /// pairs use the diagonal.
    Confusion { matrix: ConfusionMatrix },
    /// `sqrt((x−y)ᵀ M (x−y))` for a PSD `M` stored row-major.
    Mahalanobis { dim: usize, m: Vec<f64> },
    /// Elliptic Cayley-Klein distance on homogeneous coordinates `(x, 1)`
    /// with a symmetric positive-definite `Ψ` of size `dim + 1`.
    CayleyKlein { dim: usize, psi: Vec<f64> },
}

fn quad_form(matrix: &[f64], n: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for r in 0..n {
        let row = &matrix[r * n..(r + 1) * n];
        let mv: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
        acc += u[r] * mv;
    }
    acc
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Confusion { .. } => "confusion",
            Metric::Mahalanobis { .. } => "mahalanobis",
            Metric::CayleyKlein { .. } => "cayley-klein",
        }
    }

    pub fn distance(&self, a: &Sample, b: &Sample) -> f64 {
        match self {
            Metric::Confusion { matrix } => {
                matrix.get(a.id.class_id as usize, b.id.class_id as usize)
            }
            Metric::Mahalanobis { dim, m } => {
                let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
                quad_form(m, *dim, &d, &d).max(0.0).sqrt()
            }
            Metric::CayleyKlein { dim, psi } => {
                if a.values == b.values {
                    return 0.0;
                }
                let lift = |v: &[f64]| {
                    let mut h = v.to_vec();
                    h.push(1.0);
                    h
                };
                // Fixed argument order keeps the distance bitwise symmetric.
                let (a, b) = if a.values.iter().map(|v| v.to_bits()).le(b.values.iter().map(|v| v.to_bits())) {
                    (a, b)
                } else {
                    (b, a)
                };
                let (x, y) = (lift(&a.values), lift(&b.values));
                let n = dim + 1;
                let xy = quad_form(psi, n, &x, &y);
                let xx = quad_form(psi, n, &x, &x);
                let yy = quad_form(psi, n, &y, &y);
                let cos = (xy.abs() / (xx * yy).sqrt()).min(1.0);
                cos.acos()
            }
        }
    }

    /// Checks that every sample is addressable by this metric.
    pub fn check_samples(&self, samples: &[Sample]) -> Result<()> {
        for s in samples {
            match self {
                Metric::Confusion { matrix } => {
                    if s.id.class_id as usize >= matrix.size() {
                        return Err(Error::Input(format!(
                            "signal {} has class {} but the confusion matrix covers {} classes",
                            s.id,
                            s.id.class_id,
                            matrix.size()
                        )));
                    }
                }
                Metric::Mahalanobis { dim, .. } | Metric::CayleyKlein { dim, .. } => {
                    if s.values.len() != *dim {
                        return Err(Error::Input(format!(
                            "signal {} has {} values, metric is {dim}-dimensional",
                            s.id,
                            s.values.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A ground-truth metric together with the margin ξ* separating high- from
/// low-margin triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMetric {
    pub metric: Metric,
    pub xi_star: f64,
}

impl GroundTruthMetric {
    pub fn new(metric: Metric, xi_star: f64) -> Result<Self> {
        if !(xi_star.is_finite() && xi_star >= 0.0) {
            return Err(Error::Config(format!("margin ξ* must be finite and ≥ 0, got {xi_star}")));
        }
        Ok(Self { metric, xi_star })
    }

    pub fn distance(&self, a: &Sample, b: &Sample) -> f64 {
        self.metric.distance(a, b)
    }

    /// Same metric with a different margin.
    pub fn with_xi(&self, xi_star: f64) -> Result<Self> {
        Self::new(self.metric.clone(), xi_star)
    }
}

/// One tenth of the largest margin `d*(i,k) − d*(i,j)` over all ordered
/// triplets of distinct samples.
pub fn compute_xi_star(metric: &Metric, samples: &[Sample]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::Data(format!(
            "margin needs at least 3 signals, got {}",
            samples.len()
        )));
    }
    metric.check_samples(samples)?;
    let max_margin = match metric {
        Metric::Confusion { matrix } => {
            let mut counts = vec![0usize; matrix.size()];
            for s in samples {
                counts[s.id.class_id as usize] += 1;
            }
            let classes: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
            let mut best = f64::NEG_INFINITY;
            for &a in &classes {
                let avail = |c: usize| counts[c] - usize::from(c == a);
                for &b in &classes {
                    if avail(b) == 0 {
                        continue;
                    }
                    for &c in &classes {
                        if avail(c) == 0 || (b == c && avail(b) < 2) {
                            continue;
                        }
                        best = best.max(matrix.get(a, c) - matrix.get(a, b));
                    }
                }
            }
            best
        }
        _ => {
            // For each base the best pair is (farthest, nearest) among the others.
            let mut best = f64::NEG_INFINITY;
            for (i, base) in samples.iter().enumerate() {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for (j, other) in samples.iter().enumerate() {
                    if i != j {
                        let d = metric.distance(base, other);
                        lo = lo.min(d);
                        hi = hi.max(d);
                    }
                }
                best = best.max(hi - lo);
            }
            best
        }
    };
    if max_margin <= 0.0 {
        return Err(Error::Data(
            "all triplet margins are zero; the metric cannot order any triplet".into(),
        ));
    }
    Ok(0.1 * max_margin)
}
