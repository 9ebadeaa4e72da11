use super::loss::check_triplets;
use crate::data::{MarginClass, Sample, Triplet};
use crate::error::{Error, Result};
use crate::models::{euclidean, EmbeddingModel};
use crate::par::Execution;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Predicted margins `d(base, far) − d(base, near)` of a triplet set, split by
/// ground-truth class. High-margin values keep their sign.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TripletMargins {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

impl TripletMargins {
    pub fn from_triplets(
        model: &EmbeddingModel,
        samples: &[Sample],
        triplets: &[Triplet],
        exec: Execution,
    ) -> Result<Self> {
        check_triplets(samples, triplets)?;
        let embeddings = embed_referenced(model, samples, triplets, exec)?;
        let mut out = Self::default();
        for t in triplets {
            let e = |i: usize| embeddings[i].as_deref().expect("referenced signal embedded");
            let m = euclidean(e(t.base), e(t.far)) - euclidean(e(t.base), e(t.near));
            match t.margin {
                MarginClass::High => out.high.push(m),
                MarginClass::Low => out.low.push(m),
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.high.len() + self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 0, midpoints between consecutive distinct `|margin|` values, and one
    /// above the largest, in ascending order.
    pub fn candidates(&self) -> Vec<f64> {
        let mut abs: Vec<f64> = self.high.iter().chain(&self.low).map(|m| m.abs()).collect();
        abs.sort_by(f64::total_cmp);
        abs.dedup();
        let mut out = Vec::with_capacity(abs.len() + 1);
        out.push(0.0);
        out.extend(abs.windows(2).map(|w| 0.5 * (w[0] + w[1])).filter(|&c| c > 0.0));
        out.push(abs.last().map_or(1.0, |m| m + 1.0));
        out.dedup();
        out
    }

    /// Counts of satisfied high- and low-margin triplets at threshold `xi`.
    pub fn counts_at(&self, xi: f64) -> (usize, usize) {
        let high = self.high.iter().filter(|&&m| m >= xi).count();
        let low = self.low.iter().filter(|&&m| m.abs() < xi).count();
        (high, low)
    }
}

/// Embeds every signal referenced by `triplets`; other slots stay `None`.
pub(crate) fn embed_referenced(
    model: &EmbeddingModel,
    samples: &[Sample],
    triplets: &[Triplet],
    exec: Execution,
) -> Result<Vec<Option<Vec<f64>>>> {
    let mut used = vec![false; samples.len()];
    for t in triplets {
        used[t.base] = true;
        used[t.near] = true;
        used[t.far] = true;
    }
    let wanted: Vec<usize> = (0..samples.len()).filter(|&i| used[i]).collect();
    embed_signals(model, samples, &wanted, exec)
}

pub(crate) fn embed_signals(
    model: &EmbeddingModel,
    samples: &[Sample],
    signals: &[usize],
    exec: Execution,
) -> Result<Vec<Option<Vec<f64>>>> {
    let vectors = exec.try_map(signals, |&i| model.embed(&samples[i].values))?;
    let mut out = vec![None; samples.len()];
    for (&i, v) in signals.iter().zip(vectors) {
        out[i] = Some(v);
    }
    Ok(out)
}

/// Learned margin and the training fractions it achieves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub xi: f64,
    pub f_high: f64,
    pub f_low: f64,
}

/// Sorted views used for counting in `O(log n)` per candidate.
struct Counter {
    high: Vec<f64>,
    low_abs: Vec<f64>,
}

impl Counter {
    fn new(margins: &TripletMargins) -> Self {
        let mut high = margins.high.clone();
        high.sort_by(f64::total_cmp);
        let mut low_abs: Vec<f64> = margins.low.iter().map(|m| m.abs()).collect();
        low_abs.sort_by(f64::total_cmp);
        Self { high, low_abs }
    }

    fn counts(&self, xi: f64) -> (usize, usize) {
        let high = self.high.len() - self.high.partition_point(|&m| m < xi);
        let low = self.low_abs.partition_point(|&m| m < xi);
        (high, low)
    }
}

/// Chooses ξ minimising `|f_H − f_L|`, then maximising `f_H + f_L`, then the
/// smallest ξ. Fractions are compared exactly as integers over the common
/// denominator `n_H · n_L`.
pub fn estimate_threshold_from_margins(margins: &TripletMargins) -> Result<ThresholdEstimate> {
    let (n_h, n_l) = (margins.high.len() as u128, margins.low.len() as u128);
    if n_h == 0 || n_l == 0 {
        return Err(Error::Data(format!(
            "threshold estimation needs both triplet classes, got {n_h} HM and {n_l} LM"
        )));
    }
    let counter = Counter::new(margins);
    let mut best: Option<(u128, u128, f64, usize, usize)> = None;
    for xi in margins.candidates() {
        let (h, l) = counter.counts(xi);
        let (a, b) = (h as u128 * n_l, l as u128 * n_h);
        let gap = a.abs_diff(b);
        let sum = a + b;
        let better = match best {
            None => true,
            Some((g, s, _, _, _)) => match gap.cmp(&g) {
                Ordering::Less => true,
                Ordering::Equal => sum > s,
                Ordering::Greater => false,
            },
        };
        if better {
            best = Some((gap, sum, xi, h, l));
        }
    }
    let (_, _, xi, h, l) = best.expect("at least two candidates");
    Ok(ThresholdEstimate {
        xi,
        f_high: h as f64 / n_h as f64,
        f_low: l as f64 / n_l as f64,
    })
}

/// Estimates the test-time margin from the model's training-set predictions.
pub fn estimate_threshold(
    model: &EmbeddingModel,
    samples: &[Sample],
    triplets: &[Triplet],
    exec: Execution,
) -> Result<ThresholdEstimate> {
    estimate_threshold_from_margins(&TripletMargins::from_triplets(model, samples, triplets, exec)?)
}
