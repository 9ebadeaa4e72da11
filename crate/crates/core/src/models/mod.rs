//! Distance models: the convolutional embedding network, a learned linear
//! (Mahalanobis) map, and the fixed Euclidean distance, behind one type.

mod persist;
mod schedule;

pub use persist::{
    load_model, load_model_with_provenance, model_and_provenance_from_json, model_from_json,
    model_to_json, save_model, FORMAT_VERSION,
};
pub use schedule::{ConvLayer, LayerSchedule, SchedulePlan};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Output size of the learned embeddings.
pub const EMBEDDING_DIM: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(rename = "perceptnet", alias = "percept-net")]
    PerceptNet,
    Mahalanobis,
    Euclidean,
}

impl ModelKind {
    pub fn is_learned(self) -> bool {
        self != ModelKind::Euclidean
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::PerceptNet => "perceptnet",
            ModelKind::Mahalanobis => "mahalanobis",
            ModelKind::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perceptnet" | "percept-net" => Ok(ModelKind::PerceptNet),
            "mahalanobis" => Ok(ModelKind::Mahalanobis),
            "euclidean" => Ok(ModelKind::Euclidean),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A distance model mapping input vectors to an embedding space.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    kind: ModelKind,
    input_dim: usize,
    schedule: Option<LayerSchedule>,
    params: ParamStore,
}

/// Kaiming-uniform draw with bound `sqrt(6 / fan_in)`.
fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    uniform(shape, (6.0 / fan_in as f64).sqrt(), rng)
}

/// Linear map `[in, out]` with variance `1 / (in · out)`, so that `‖Wᵀv‖²`
/// starts near the mean square of `v` and early triplet margins are O(1).
fn isometric_uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    uniform(shape, (3.0 / (shape[0] * shape[1]) as f64).sqrt(), rng)
}

fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches count")
}

impl EmbeddingModel {
    /// Fresh model with the default schedule for its kind.
    pub fn init(kind: ModelKind, input_dim: usize, seed: u64) -> Result<Self> {
        match kind {
            ModelKind::PerceptNet => {
                Self::perceptnet(input_dim, LayerSchedule::default().adapted_to(input_dim), seed)
            }
            ModelKind::Mahalanobis => Self::mahalanobis(input_dim, seed),
            ModelKind::Euclidean => Self::euclidean(input_dim),
        }
    }

    pub fn euclidean(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        Ok(Self {
            kind: ModelKind::Euclidean,
            input_dim,
            schedule: None,
            params: ParamStore::default(),
        })
    }

    /// Linear map `W: [input_dim, 128]`, initialised close to an isometry.
    pub fn mahalanobis(input_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        params.push(
            "w",
            isometric_uniform(&[input_dim, EMBEDDING_DIM], &mut rng),
        );
        Ok(Self {
            kind: ModelKind::Mahalanobis,
            input_dim,
            schedule: None,
            params,
        })
    }

    /// Linear map with explicit weights `[input_dim, out_dim]`.
    pub fn mahalanobis_from_weights(weights: Tensor) -> Result<Self> {
        let &[input_dim, out_dim] = weights.shape() else {
            return Err(Error::Config(format!(
                "Mahalanobis weights must be rank 2, got {:?}",
                weights.shape()
            )));
        };
        if input_dim == 0 || out_dim == 0 {
            return Err(Error::Config("Mahalanobis weights have a zero dimension".into()));
        }
        let mut params = ParamStore::default();
        params.push("w", weights);
        Ok(Self {
            kind: ModelKind::Mahalanobis,
            input_dim,
            schedule: None,
            params,
        })
    }

    /// Convolutional network; kernels Kaiming-uniform, conv biases zero, final
    /// map bias-free and initialised close to an isometry.
    pub fn perceptnet(input_dim: usize, schedule: LayerSchedule, seed: u64) -> Result<Self> {
        let plan = schedule.plan(input_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let mut channels = 1;
        for (i, layer) in schedule.conv.iter().enumerate() {
            let shape = [layer.out_channels, channels, layer.kernel];
            params.push(
                format!("conv{i}.weight"),
                kaiming_uniform(&shape, channels * layer.kernel, &mut rng),
            );
            params.push(format!("conv{i}.bias"), Tensor::zeros(&[layer.out_channels]));
            channels = layer.out_channels;
        }
        params.push(
            "fc.weight",
            isometric_uniform(&[plan.flat_dim, schedule.embedding_dim], &mut rng),
        );
        Ok(Self {
            kind: ModelKind::PerceptNet,
            input_dim,
            schedule: Some(schedule),
            params,
        })
    }

    pub(crate) fn from_parts(
        kind: ModelKind,
        input_dim: usize,
        schedule: Option<LayerSchedule>,
        params: ParamStore,
    ) -> Result<Self> {
        let model = Self {
            kind,
            input_dim,
            schedule,
            params,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks that parameter shapes agree with kind, schedule and input size.
    fn validate(&self) -> Result<()> {
        let expected: Vec<Vec<usize>> = match self.kind {
            ModelKind::Euclidean => vec![],
            ModelKind::Mahalanobis => {
                let out = self
                    .params
                    .iter()
                    .next()
                    .map(|(_, t)| t.shape().get(1).copied().unwrap_or(0))
                    .unwrap_or(0);
                vec![vec![self.input_dim, out]]
            }
            ModelKind::PerceptNet => {
                let schedule = self
                    .schedule
                    .as_ref()
                    .ok_or_else(|| Error::Format("network model without a layer schedule".into()))?;
                let plan = schedule.plan(self.input_dim)?;
                let mut shapes = Vec::new();
                let mut channels = 1;
                for layer in &schedule.conv {
                    shapes.push(vec![layer.out_channels, channels, layer.kernel]);
                    shapes.push(vec![layer.out_channels]);
                    channels = layer.out_channels;
                }
                shapes.push(vec![plan.flat_dim, schedule.embedding_dim]);
                shapes
            }
        };
        let actual: Vec<Vec<usize>> = self.params.iter().map(|(_, t)| t.shape().to_vec()).collect();
        if actual != expected {
            return Err(Error::Format(format!(
                "{} model with input_dim {} expects parameter shapes {expected:?}, found {actual:?}",
                self.kind, self.input_dim
            )));
        }
        if expected.last().is_some_and(|s| s.contains(&0)) {
            return Err(Error::Format("parameter with a zero dimension".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn schedule(&self) -> Option<&LayerSchedule> {
        self.schedule.as_ref()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding_dim(&self) -> usize {
        match self.kind {
            ModelKind::Euclidean => self.input_dim,
            ModelKind::Mahalanobis => self.params.get(param_id(&self.params, 0)).shape()[1],
            ModelKind::PerceptNet => self.schedule.as_ref().map_or(EMBEDDING_DIM, |s| s.embedding_dim),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::Config(format!(
                "{} model expects {}-dimensional input, got {len}",
                self.kind, self.input_dim
            )));
        }
        Ok(())
    }

    /// Records the embedding of `input` (a `[input_dim]` node) on a graph
    /// built over this model's parameters.
    pub fn record(&self, g: &mut Graph<'_>, input: NodeId) -> Result<NodeId> {
        self.check_input(g.value(input).len())?;
        match self.kind {
            ModelKind::Euclidean => Ok(input),
            ModelKind::Mahalanobis => {
                let w = g.param(param_id(&self.params, 0))?;
                g.linear(input, w, None)
            }
            ModelKind::PerceptNet => {
                let schedule = self.schedule.as_ref().expect("validated");
                let mut x = g.reshape(input, vec![1, self.input_dim])?;
                for (i, layer) in schedule.conv.iter().enumerate() {
                    let w = g.param(param_id(&self.params, 2 * i))?;
                    let b = g.param(param_id(&self.params, 2 * i + 1))?;
                    x = g.conv1d(x, w, Some(b), layer.geometry())?;
                    x = g.relu(x)?;
                    if layer.pool_after {
                        x = g.maxpool1d(x, schedule.pool_window)?;
                    }
                }
                let flat = g.value(x).len();
                let x = g.reshape(x, vec![flat])?;
                let w = g.param(param_id(&self.params, 2 * schedule.conv.len()))?;
                g.linear(x, w, None)
            }
        }
    }

    /// Embedding of one input vector.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        if self.kind == ModelKind::Euclidean {
            return Ok(x.to_vec());
        }
        let mut g = Graph::new(&self.params);
        let input = g.constant(Tensor::vector(x.to_vec()));
        let out = self.record(&mut g, input)?;
        Ok(g.value(out).data().to_vec())
    }

    /// `‖φ(x) − φ(y)‖`.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(euclidean(&self.embed(x)?, &self.embed(y)?))
    }
}

fn param_id(store: &ParamStore, index: usize) -> ParamId {
    store.ids().nth(index).expect("parameter index within store")
}

/// Euclidean distance between two equal-length vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
