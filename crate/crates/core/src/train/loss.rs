//! Dual-margin triplet loss and its batched gradient.

use crate::autodiff::{Graph, NodeId, ParamGrads};
use crate::data::{MarginClass, Sample, Triplet};
use crate::error::{Error, Result};
use crate::models::EmbeddingModel;
use crate::par::Execution;
use crate::tensor::Tensor;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

/// Per-triplet loss of a high-margin triplet: `exp(−ρ)`.
pub fn high_margin_loss(rho: f64) -> f64 {
    (-rho).exp()
}

/// Per-triplet loss of a low-margin triplet: `1 − exp(−|ρ|)`.
pub fn low_margin_loss(rho: f64) -> f64 {
    -(-rho.abs()).exp_m1()
}

/// Loss contribution of one triplet given its `ρ`.
pub fn triplet_term(margin: MarginClass, rho: f64) -> f64 {
    match margin {
        MarginClass::High => high_margin_loss(rho),
        MarginClass::Low => low_margin_loss(rho),
    }
}

/// `ρ` from embeddings: `d²(base, far) − d²(base, near)`, or the unsquared
/// difference when `squared` is off.
pub fn rho_from_embeddings(base: &[f64], near: &[f64], far: &[f64], squared: bool) -> f64 {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let (dn, df) = (sq(base, near), sq(base, far));
    if squared {
        df - dn
    } else {
        df.sqrt() - dn.sqrt()
    }
}

/// `ρ` of a triplet of input vectors under `model`.
pub fn rho(model: &EmbeddingModel, base: &[f64], near: &[f64], far: &[f64], squared: bool) -> Result<f64> {
    Ok(rho_from_embeddings(
        &model.embed(base)?,
        &model.embed(near)?,
        &model.embed(far)?,
        squared,
    ))
}

/// Records `ρ` on a graph from three embedding nodes.
pub fn record_rho(g: &mut Graph<'_>, base: NodeId, near: NodeId, far: NodeId, squared: bool) -> Result<NodeId> {
    let to_near = g.sub(base, near)?;
    let to_far = g.sub(base, far)?;
    let (dn, df) = if squared {
        (g.squared_norm(to_near)?, g.squared_norm(to_far)?)
    } else {
        (g.norm(to_near)?, g.norm(to_far)?)
    };
    g.sub(df, dn)
}

/// Records the per-triplet loss term for a `ρ` node.
pub fn record_term(g: &mut Graph<'_>, rho: NodeId, margin: MarginClass) -> Result<NodeId> {
    match margin {
        MarginClass::High => {
            let neg = g.scale(rho, -1.0)?;
            g.exp(neg)
        }
        MarginClass::Low => {
            let a = g.abs(rho)?;
            let neg = g.scale(a, -1.0)?;
            let e = g.exp(neg)?;
            let neg_e = g.scale(e, -1.0)?;
            g.add_scalar(neg_e, 1.0)
        }
    }
}

pub(crate) fn check_triplets(samples: &[Sample], triplets: &[Triplet]) -> Result<()> {
    for (n, t) in triplets.iter().enumerate() {
        if let Some(bad) = [t.base, t.near, t.far].into_iter().find(|&i| i >= samples.len()) {
            return Err(Error::Input(format!(
                "triplet {n} refers to signal {bad}, but only {} signals are loaded",
                samples.len()
            )));
        }
    }
    Ok(())
}

/// Mean loss of `batch` without gradients.
pub fn triplet_loss(
    model: &EmbeddingModel,
    samples: &[Sample],
    batch: &[Triplet],
    squared: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("triplet loss needs a non-empty batch".into()));
    }
    check_triplets(samples, batch)?;
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut total = 0.0;
    for t in batch {
        for i in [t.base, t.near, t.far] {
            if let Entry::Vacant(slot) = cache.entry(i) {
                slot.insert(model.embed(&samples[i].values)?);
            }
        }
        let r = rho_from_embeddings(&cache[&t.base], &cache[&t.near], &cache[&t.far], squared);
        total += triplet_term(t.margin, r);
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss of `batch` and its gradient with respect to the model parameters.
///
/// Each distinct signal is embedded once on its own graph; the loss is built
/// on a separate graph whose leaves are those embeddings, and the embedding
/// gradients are pushed back through each signal graph. Per-signal parameter
/// gradients are summed in ascending signal order, so the result is the same
/// in every execution mode.
pub fn loss_and_gradients(
    model: &EmbeddingModel,
    samples: &[Sample],
    batch: &[Triplet],
    squared: bool,
    exec: Execution,
) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::Usage("triplet loss needs a non-empty batch".into()));
    }
    check_triplets(samples, batch)?;
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    for t in batch {
        for i in [t.base, t.near, t.far] {
            slots.insert(i, 0);
        }
    }
    let signals: Vec<usize> = slots.keys().copied().collect();
    for (slot, i) in signals.iter().enumerate() {
        slots.insert(*i, slot);
    }

    let forward = exec.try_map(&signals, |&i| -> Result<(Graph<'_>, NodeId)> {
        let mut g = Graph::new(model.params());
        let input = g.constant(Tensor::vector(samples[i].values.clone()));
        let out = model.record(&mut g, input)?;
        Ok((g, out))
    })?;

    let mut loss_graph = Graph::default();
    let leaves: Vec<NodeId> = forward
        .iter()
        .map(|(g, out)| loss_graph.leaf(g.value(*out).clone()))
        .collect();
    let mut terms = Vec::with_capacity(batch.len());
    for t in batch {
        let r = record_rho(
            &mut loss_graph,
            leaves[slots[&t.base]],
            leaves[slots[&t.near]],
            leaves[slots[&t.far]],
            squared,
        )?;
        terms.push(record_term(&mut loss_graph, r, t.margin)?);
    }
    let total = loss_graph.sum(&terms)?;
    let loss = loss_graph.scale(total, 1.0 / batch.len() as f64)?;
    let loss_value = loss_graph.value(loss).data()[0];
    let upstream = loss_graph.backward(loss)?;

    let jobs: Vec<(usize, Option<Tensor>)> = leaves
        .iter()
        .enumerate()
        .map(|(slot, &leaf)| (slot, upstream.node(leaf).cloned()))
        .collect();
    let per_signal = exec.try_map(&jobs, |(slot, seed)| -> Result<Option<ParamGrads>> {
        match seed {
            Some(seed) => {
                let (g, out) = &forward[*slot];
                Ok(Some(g.backward_seeded(*out, seed.clone())?.into_params()))
            }
            None => Ok(None),
        }
    })?;
    let mut grads = ParamGrads::zeros_like(model.params());
    for g in per_signal.iter().flatten() {
        grads.merge(g);
    }
    Ok((loss_value, grads))
}
