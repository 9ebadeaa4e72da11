use super::threshold::{embed_signals, TripletMargins};
use crate::data::{ConfusionMatrix, GroundTruthMetric, Sample};
use crate::error::{Error, Result};
use crate::models::{euclidean, EmbeddingModel};
use crate::par::Execution;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Triplet generalisation accuracy at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tga {
    pub total: f64,
    pub high: f64,
    pub low: f64,
    /// Fraction of high-margin triplets ordered correctly, ignoring the margin.
    pub ordering: f64,
}

fn fraction(count: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        count as f64 / of as f64
    }
}

/// High-margin triplets count when `margin ≥ ξ`; low-margin ones when `|margin| < ξ`.
pub fn tga(margins: &TripletMargins, xi: f64) -> Result<Tga> {
    if margins.is_empty() {
        return Err(Error::Data("no test triplets to evaluate".into()));
    }
    if xi.is_nan() || xi < 0.0 {
        return Err(Error::Config(format!("threshold must be ≥ 0, got {xi}")));
    }
    let (h, l) = margins.counts_at(xi);
    let ordered = margins.high.iter().filter(|&&m| m > 0.0).count();
    Ok(Tga {
        total: fraction(h + l, margins.len()),
        high: fraction(h, margins.high.len()),
        low: fraction(l, margins.low.len()),
        ordering: fraction(ordered, margins.high.len()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub xi: f64,
    pub lm_recall: f64,
    pub accuracy: f64,
}

/// Total accuracy at every candidate threshold from 0 to above the largest
/// `|margin|`, indexed by the low-margin recall reached there.
pub fn threshold_sweep(margins: &TripletMargins) -> Result<Vec<SweepPoint>> {
    if margins.high.is_empty() || margins.low.is_empty() {
        return Err(Error::Data(format!(
            "a threshold sweep needs both triplet classes, got {} HM and {} LM",
            margins.high.len(),
            margins.low.len()
        )));
    }
    let mut high = margins.high.clone();
    high.sort_by(f64::total_cmp);
    let mut low: Vec<f64> = margins.low.iter().map(|m| m.abs()).collect();
    low.sort_by(f64::total_cmp);
    Ok(margins
        .candidates()
        .into_iter()
        .map(|xi| {
            let h = high.len() - high.partition_point(|&m| m < xi);
            let l = low.partition_point(|&m| m < xi);
            SweepPoint {
                xi,
                lm_recall: fraction(l, low.len()),
                accuracy: fraction(h + l, margins.len()),
            }
        })
        .collect())
}

/// Accuracy at the smallest threshold whose low-margin recall reaches `recall`.
pub fn accuracy_at_recall(curve: &[SweepPoint], recall: f64) -> Option<f64> {
    curve.iter().find(|p| p.lm_recall >= recall).map(|p| p.accuracy)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

/// Precision-recall curve for "distinguishable" pairs predicted by
/// `distance ≥ threshold`, swept over every distinct distance from the
/// largest down, with trapezoidal area under the curve.
pub fn pr_curve(distances: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if distances.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} distances but {} labels",
            distances.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Data(
            "pairwise evaluation needs both distinguishable and indistinguishable pairs".into(),
        ));
    }
    if let Some(d) = distances.iter().find(|d| !d.is_finite()) {
        return Err(Error::NonFinite(format!("pair distance {d}")));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]));
    let mut points = vec![PrPoint {
        threshold: f64::INFINITY,
        recall: 0.0,
        precision: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = distances[order[i]];
        while i < order.len() && distances[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: t,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * 0.5 * (w[0].precision + w[1].precision))
        .sum();
    Ok(PrCurve { points, auc })
}

/// Ground-truth distance at or above which a pair counts as distinguishable.
pub const DISTINGUISHABLE: f64 = 0.5;

/// PR curve over all pairs of `signals`, labelled by the ground truth.
pub fn pairwise_eval(
    model: &EmbeddingModel,
    samples: &[Sample],
    signals: &[usize],
    gt: &GroundTruthMetric,
    exec: Execution,
) -> Result<PrCurve> {
    let embeddings = embed_signals(model, samples, signals, exec)?;
    let mut distances = Vec::new();
    let mut labels = Vec::new();
    for (a, &i) in signals.iter().enumerate() {
        for &j in &signals[a + 1..] {
            let (ei, ej) = (embeddings[i].as_ref(), embeddings[j].as_ref());
            distances.push(euclidean(ei.expect("embedded"), ej.expect("embedded")));
            labels.push(gt.distance(&samples[i], &samples[j]) >= DISTINGUISHABLE);
        }
    }
    pr_curve(&distances, &labels)
}

/// Class-by-class mean model distance, min-max normalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub classes: Vec<u32>,
    /// Row-major `classes.len()²` entries.
    pub entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.size() + b]
    }
}

/// Mean pairwise distance between the signals of each pair of classes.
/// Classes in `classes` with no signal among `signals` are dropped with a warning.
pub fn similarity_matrix(
    model: &EmbeddingModel,
    samples: &[Sample],
    signals: &[usize],
    classes: &[u32],
    exec: Execution,
) -> Result<SimilarityMatrix> {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in signals {
        members.entry(samples[i].id.class_id).or_default().push(i);
    }
    let mut kept = Vec::new();
    for &c in classes {
        if members.contains_key(&c) {
            kept.push(c);
        } else {
            log::warn!("class {c} has no test signals; omitted from the similarity matrix");
        }
    }
    if kept.is_empty() {
        return Err(Error::Data("no class in the similarity matrix has test signals".into()));
    }
    let used: Vec<usize> = kept.iter().flat_map(|c| members[c].iter().copied()).collect();
    let embeddings = embed_signals(model, samples, &used, exec)?;
    let e = |i: usize| embeddings[i].as_deref().expect("embedded");
    let n = kept.len();
    let mut entries = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let (ma, mb) = (&members[&kept[a]], &members[&kept[b]]);
            let (mut sum, mut count) = (0.0, 0usize);
            for (x, &i) in ma.iter().enumerate() {
                let start = if a == b { x + 1 } else { 0 };
                for &j in &mb[start..] {
                    sum += euclidean(e(i), e(j));
                    count += 1;
                }
            }
            let mean = if count == 0 { 0.0 } else { sum / count as f64 };
            entries[a * n + b] = mean;
            entries[b * n + a] = mean;
        }
    }
    let lo = entries.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = entries.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        for v in &mut entries {
            *v = (*v - lo) / (hi - lo);
        }
    } else {
        entries.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(SimilarityMatrix {
        classes: kept,
        entries,
    })
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman correlation between off-diagonal entries of a similarity matrix
/// and the confusion matrix restricted to the same classes.
pub fn similarity_rank_correlation(sim: &SimilarityMatrix, confusion: &ConfusionMatrix) -> Option<f64> {
    let mut model = Vec::new();
    let mut truth = Vec::new();
    for a in 0..sim.size() {
        for b in a + 1..sim.size() {
            let (ca, cb) = (sim.classes[a] as usize, sim.classes[b] as usize);
            if ca >= confusion.size() || cb >= confusion.size() {
                return None;
            }
            model.push(sim.get(a, b));
            truth.push(confusion.get(ca, cb));
        }
    }
    spearman(&model, &truth)
}

/// Everything measured on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub xi: f64,
    pub tga_total: f64,
    pub tga_hm: f64,
    pub tga_lm: f64,
    pub tga_ordering: f64,
    pub test_hm: usize,
    pub test_lm: usize,
    pub sweep: Vec<SweepPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<PrCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_spearman: Option<f64>,
}

impl EvalReport {
    /// TGA numbers and, when both classes are present, the sweep curve.
    pub fn from_margins(margins: &TripletMargins, xi: f64) -> Result<Self> {
        let t = tga(margins, xi)?;
        let sweep = if margins.high.is_empty() || margins.low.is_empty() {
            Vec::new()
        } else {
            threshold_sweep(margins)?
        };
        Ok(Self {
            xi,
            tga_total: t.total,
            tga_hm: t.high,
            tga_lm: t.low,
            tga_ordering: t.ordering,
            test_hm: margins.high.len(),
            test_lm: margins.low.len(),
            sweep,
            pairwise: None,
            similarity: None,
            similarity_spearman: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn margins(high: &[f64], low: &[f64]) -> TripletMargins {
        TripletMargins {
            high: high.to_vec(),
            low: low.to_vec(),
        }
    }

    #[test]
    fn tga_limits() {
        let m = margins(&[1.0, 2.0], &[0.1, -0.2]);
        assert_eq!(tga(&m, 0.5).unwrap().total, 1.0);
        let above = tga(&m, 10.0).unwrap();
        assert_eq!((above.high, above.low), (0.0, 1.0));
        let zero = tga(&margins(&[1.0, -1.0, 0.0], &[0.0, 0.3]), 0.0).unwrap();
        assert_eq!(zero.low, 0.0);
        assert_eq!(zero.high, 2.0 / 3.0);
        assert_eq!(zero.ordering, 1.0 / 3.0);
        assert!(tga(&margins(&[], &[]), 0.1).is_err());
    }

    #[test]
    fn sweep_endpoints_and_monotone_recall() {
        let m = margins(&[1.0, 0.3, -0.2, 0.8], &[0.05, 0.6, -0.1, 0.2]);
        let curve = threshold_sweep(&m).unwrap();
        let first = curve[0];
        assert_eq!(first.lm_recall, 0.0);
        assert_eq!(first.accuracy, 0.5 * 3.0 / 4.0);
        assert_eq!(curve.last().unwrap().lm_recall, 1.0);
        assert!(curve.windows(2).all(|w| w[0].lm_recall <= w[1].lm_recall));
        for p in &curve {
            let (h, l) = m.counts_at(p.xi);
            assert_eq!(p.accuracy, (h + l) as f64 / 8.0);
        }
        assert_eq!(accuracy_at_recall(&curve, 0.0), Some(first.accuracy));
        let full = curve.iter().find(|p| p.lm_recall == 1.0).unwrap();
        assert_eq!(accuracy_at_recall(&curve, 1.0), Some(full.accuracy));
    }

    #[test]
    fn perfect_ordering_gives_unit_auc() {
        let d = [0.9, 0.8, 0.7, 0.2, 0.1];
        let l = [true, true, true, false, false];
        let pr = pr_curve(&d, &l).unwrap();
        assert_eq!(pr.auc, 1.0);
        assert_eq!(pr.points[0].recall, 0.0);
        assert!(pr_curve(&d, &[true; 5]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
