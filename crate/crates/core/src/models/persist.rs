//! Model files.
//!
//! A model file is a JSON document:
//!
//! ```json
//! {
//!   "format": "percept-model",
//!   "format_version": 1,
//!   "kind": "perceptnet",
//!   "input_dim": 32,
//!   "schedule": { "conv": [...], "pool_window": 2, "embedding_dim": 128 },
//!   "params": [
//!     { "name": "conv0.weight", "shape": [32, 1, 3], "f64le": "<base64>" }
//!   ],
//!   "provenance": { "seed": 7, ... }
//! }
//! ```
//!
//! `f64le` holds the tensor values as consecutive little-endian IEEE-754
//! doubles, base64 encoded, so a round trip is bit-exact.

use super::{EmbeddingModel, LayerSchedule, ModelKind};
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "percept-model";

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    f64le: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    kind: ModelKind,
    input_dim: usize,
    schedule: Option<LayerSchedule>,
    params: Vec<ParamRecord>,
    #[serde(default)]
    provenance: BTreeMap<String, serde_json::Value>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(name: &str, text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("parameter `{name}`: bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "parameter `{name}`: {} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Serialises `model` with optional provenance fields.
pub fn model_to_json(
    model: &EmbeddingModel,
    provenance: &BTreeMap<String, serde_json::Value>,
) -> Result<String> {
    let file = ModelFile {
        format: FORMAT_TAG.into(),
        format_version: FORMAT_VERSION,
        kind: model.kind(),
        input_dim: model.input_dim(),
        schedule: model.schedule().cloned(),
        params: model
            .params()
            .iter()
            .map(|(name, t)| ParamRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                f64le: encode(t.data()),
            })
            .collect(),
        provenance: provenance.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<EmbeddingModel> {
    Ok(model_and_provenance_from_json(text)?.0)
}

/// Parses a model file and returns its provenance fields as well.
pub fn model_and_provenance_from_json(
    text: &str,
) -> Result<(EmbeddingModel, BTreeMap<String, serde_json::Value>)> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("unreadable model file: {e}")))?;
    if file.format != FORMAT_TAG {
        return Err(Error::Format(format!("not a model file (format `{}`)", file.format)));
    }
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model format version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut params = ParamStore::default();
    for rec in file.params {
        let data = decode(&rec.name, &rec.f64le)?;
        let tensor = Tensor::new(rec.shape, data)
            .map_err(|e| Error::Format(format!("parameter `{}`: {e}", rec.name)))?;
        params.push(rec.name, tensor);
    }
    let model = EmbeddingModel::from_parts(file.kind, file.input_dim, file.schedule, params)?;
    Ok((model, file.provenance))
}

/// Writes `model` to `path`, recording `provenance` alongside the parameters.
pub fn save_model(
    model: &EmbeddingModel,
    path: impl AsRef<Path>,
    provenance: &BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    std::fs::write(path, model_to_json(model, provenance)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn load_model_with_provenance(
    path: impl AsRef<Path>,
) -> Result<(EmbeddingModel, BTreeMap<String, serde_json::Value>)> {
    model_and_provenance_from_json(&std::fs::read_to_string(path)?)
}
