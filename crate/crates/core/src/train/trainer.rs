use super::loss::{check_triplets, loss_and_gradients};
use crate::autodiff::{AdamConfig, AdamState};
use crate::data::{derive_seed, Sample, Triplet};
use crate::error::{Error, Result};
use crate::models::EmbeddingModel;
use crate::par::Execution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Compare squared distances inside the loss (`false` uses plain distances).
    pub squared_margins: bool,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            squared_margins: true,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A trained model and its mean loss per epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub loss_history: Vec<f64>,
}

/// Trains `model` on `triplets` with Adam over shuffled mini-batches.
///
/// Models without parameters are returned unchanged with an empty history.
pub fn train(
    mut model: EmbeddingModel,
    samples: &[Sample],
    triplets: &[Triplet],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_triplets(samples, triplets)?;
    if model.params().is_empty() {
        return Ok(TrainOutcome {
            model,
            loss_history: Vec::new(),
        });
    }
    if triplets.is_empty() {
        return Err(Error::Data("no training triplets".into()));
    }
    let mut adam = AdamState::new(
        model.params(),
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| triplets[i]));
            let (loss, grads) = loss_and_gradients(
                &model,
                samples,
                &batch,
                config.squared_margins,
                config.execution,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss became {loss} at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            adam.step(model.params_mut(), &grads).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} (epoch {}, batch {})", epoch + 1, b + 1))
                }
                other => other,
            })?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / triplets.len() as f64;
        log::debug!("epoch {}/{}: loss {mean:.6}", epoch + 1, config.epochs);
        history.push(mean);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MarginClass, SignalId};
    use crate::models::{LayerSchedule, ModelKind};

    fn toy() -> (Vec<Sample>, Vec<Triplet>) {
        let samples: Vec<Sample> = (0..10)
            .map(|i| {
                let v = (0..8).map(|d| ((i * 3 + d * 5) % 7) as f64 / 3.0 - 1.0).collect();
                Sample::new(SignalId::new(i, 0), v)
            })
            .collect();
        let triplets = (0..20)
            .map(|n| Triplet {
                base: n % 10,
                near: (n + 1) % 10,
                far: (n + 3 + n / 10) % 10,
                margin: if n % 3 == 0 { MarginClass::Low } else { MarginClass::High },
            })
            .filter(|t| t.base != t.far && t.near != t.far)
            .collect();
        (samples, triplets)
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(config(0).validate().is_err());
        let mut c = config(1);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c.batch_size = 1;
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn training_lowers_toy_loss_deterministically() {
        let (samples, triplets) = toy();
        let model = EmbeddingModel::perceptnet(8, LayerSchedule::scaled(4).adapted_to(8), 1).unwrap();
        let a = train(model.clone(), &samples, &triplets, &config(30)).unwrap();
        let b = train(model, &samples, &triplets, &config(30)).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model, b.model);
        assert!(a.loss_history.last() < a.loss_history.first(), "{:?}", a.loss_history);
    }

    #[test]
    fn euclidean_model_is_returned_untrained() {
        let (samples, triplets) = toy();
        let m = EmbeddingModel::init(ModelKind::Euclidean, 8, 0).unwrap();
        let out = train(m.clone(), &samples, &triplets, &config(3)).unwrap();
        assert_eq!(out.model, m);
        assert!(out.loss_history.is_empty());
    }
}
