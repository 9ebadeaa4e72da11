use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Symmetric class-by-class table of discrimination rates in `[0, 1]`.
///
/// Entry `(a, b)` is the fraction of subjects who could tell classes `a` and
/// `b` apart; it serves directly as the ground-truth distance between any
/// signal of class `a` and any signal of class `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl ConfusionMatrix {
    /// Wraps an already normalised, symmetric matrix.
    pub fn new(size: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::Input(format!(
                "confusion matrix of size {size} needs {} entries, got {}",
                size * size,
                entries.len()
            )));
        }
        for a in 0..size {
            for b in 0..size {
                let v = entries[a * size + b];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Input(format!(
                        "confusion entry ({a}, {b}) = {v} outside [0, 1]"
                    )));
                }
                if v != entries[b * size + a] {
                    return Err(Error::Input(format!("confusion matrix not symmetric at ({a}, {b})")));
                }
            }
        }
        Ok(Self { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.size + b]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Symmetrises a raw matrix by averaging `(a, b)` with `(b, a)`, then min-max
/// normalises all entries onto `[0, 1]`.
pub fn normalize_confusion(size: usize, raw: &[f64]) -> Result<ConfusionMatrix> {
    if size == 0 || raw.len() != size * size {
        return Err(Error::Input(format!(
            "raw confusion matrix of size {size} needs {} entries, got {}",
            size * size,
            raw.len()
        )));
    }
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!(
            "non-finite confusion entry at ({}, {})",
            pos / size,
            pos % size
        )));
    }
    let mut sym = vec![0.0; size * size];
    for a in 0..size {
        for b in 0..size {
            sym[a * size + b] = 0.5 * (raw[a * size + b] + raw[b * size + a]);
        }
    }
    let lo = sym.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sym.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::Data(
            "confusion matrix is constant and carries no distance information".into(),
        ));
    }
    let entries = sym.iter().map(|v| (v - lo) / (hi - lo)).collect();
    ConfusionMatrix::new(size, entries)
}
