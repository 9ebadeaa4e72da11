//! Repeated split → train → evaluate runs with ablations.

use super::eval::{pairwise_eval, similarity_matrix, similarity_rank_correlation, EvalReport};
use super::threshold::{estimate_threshold, ThresholdEstimate, TripletMargins};
use super::trainer::{train, TrainConfig};
use crate::data::{
    derive_seed, make_split, sample_triplets, ConfusionMatrix, GroundTruthMetric, Metric, Protocol,
    Sample, Split, SplitSpec, Triplet, TripletCounts, TripletKey,
};
use crate::error::{Error, Result};
use crate::features::FeatureStats;
use crate::models::{EmbeddingModel, LayerSchedule, ModelKind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// Which model to build, with an optional base channel width for PerceptNet
/// (the layer widths become `base, base, 2·base, 2·base, 4·base, 4·base`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, width: None }
    }

    pub fn build(&self, input_dim: usize, seed: u64) -> Result<EmbeddingModel> {
        match (self.kind, self.width) {
            (ModelKind::PerceptNet, Some(base)) => {
                if base == 0 {
                    return Err(Error::Config("PerceptNet width must be positive".into()));
                }
                EmbeddingModel::perceptnet(input_dim, LayerSchedule::scaled(base).adapted_to(input_dim), seed)
            }
            (kind, _) => EmbeddingModel::init(kind, input_dim, seed),
        }
    }
}

/// Training-set ablations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Train on high-margin triplets only, as many as the full training set.
    pub hm_only: bool,
    /// Train on triplets drawn with ξ* = 0, i.e. every triplet ordered.
    pub xi_zero: bool,
    /// Training-set sizes subsampled from the full training set.
    pub size_sweep: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    pub folds: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub train_counts: TripletCounts,
    pub test_counts: TripletCounts,
    pub held_out_per_class: usize,
    pub held_out_class_fraction: f64,
    pub ablation: Ablation,
    /// Add a pairwise precision-recall evaluation over the test signals.
    pub pairwise: bool,
    /// Add a class similarity matrix over the test signals.
    pub similarity: bool,
    /// Z-score inputs with statistics fitted on each fold's training signals.
    pub normalize: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let split = SplitSpec::new(Protocol::HeldOutTriplets, 0);
        Self {
            protocol: split.protocol,
            folds: 5,
            seed: 0,
            model: ModelSpec::new(ModelKind::PerceptNet),
            train: TrainConfig::default(),
            train_counts: split.train,
            test_counts: split.test,
            held_out_per_class: split.held_out_per_class,
            held_out_class_fraction: split.held_out_class_fraction,
            ablation: Ablation::default(),
            pairwise: false,
            similarity: false,
            normalize: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.folds == 0 {
            return Err(Error::Config("at least one fold is required".into()));
        }
        if self.ablation.hm_only && self.ablation.xi_zero {
            return Err(Error::Config(
                "the HM-only and ξ* = 0 ablations are alternatives; pick one".into(),
            ));
        }
        let full = self.train_counts.total();
        if let Some(&s) = self.ablation.size_sweep.iter().find(|&&s| s == 0 || s > full) {
            return Err(Error::Config(format!(
                "training-set size {s} must lie in 1..={full} (the full training set)"
            )));
        }
        Ok(())
    }

    pub fn fold_seed(&self, fold: usize) -> u64 {
        derive_seed(self.seed, 1000 + fold as u64)
    }

    fn split_spec(&self, fold: usize) -> SplitSpec {
        SplitSpec {
            protocol: self.protocol,
            fold_seed: self.fold_seed(fold),
            train: self.train_counts,
            test: self.test_counts,
            held_out_per_class: self.held_out_per_class,
            held_out_class_fraction: self.held_out_class_fraction,
        }
    }
}

/// Signals with their ground truth.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub gt: GroundTruthMetric,
}

impl Dataset {
    pub fn input_dim(&self) -> Result<usize> {
        let dim = self
            .samples
            .first()
            .map(|s| s.values.len())
            .ok_or_else(|| Error::Data("dataset has no signals".into()))?;
        if let Some(s) = self.samples.iter().find(|s| s.values.len() != dim) {
            return Err(Error::Input(format!(
                "signal {} has {} values, expected {dim}",
                s.id,
                s.values.len()
            )));
        }
        Ok(dim)
    }

    fn confusion(&self) -> Option<&ConfusionMatrix> {
        match &self.gt.metric {
            Metric::Confusion { matrix } => Some(matrix),
            _ => None,
        }
    }
}

/// One trained model evaluated on one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub train_size: usize,
    pub threshold: ThresholdEstimate,
    pub loss_history: Vec<f64>,
    pub eval: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub fold_seed: u64,
    pub main: RunReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub size_sweep: Vec<RunReport>,
}

/// A fold's report plus the artefacts needed to write it out.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub report: FoldReport,
    pub model: EmbeddingModel,
    pub split: Split,
    pub train_triplets: Vec<Triplet>,
    pub feature_stats: Option<FeatureStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

fn summarize<'a>(runs: impl Iterator<Item = &'a RunReport>) -> BTreeMap<String, MeanStd> {
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in runs {
        let e = &r.eval;
        for (name, v) in [
            ("tga_total", Some(e.tga_total)),
            ("tga_hm", Some(e.tga_hm)),
            ("tga_lm", Some(e.tga_lm)),
            ("tga_ordering", Some(e.tga_ordering)),
            ("xi", Some(r.threshold.xi)),
            ("auc", e.pairwise.as_ref().map(|p| p.auc)),
            ("similarity_spearman", e.similarity_spearman),
        ] {
            if let Some(v) = v {
                columns.entry(name).or_default().push(v);
            }
        }
    }
    columns
        .into_iter()
        .filter_map(|(k, v)| MeanStd::of(&v).map(|m| (k.to_string(), m)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub size: usize,
    pub summary: BTreeMap<String, MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub folds: Vec<FoldReport>,
    pub summary: BTreeMap<String, MeanStd>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub size_sweep: Vec<SizeRow>,
}

impl ExperimentReport {
    pub fn from_folds(spec: &ExperimentSpec, folds: Vec<FoldReport>) -> Self {
        let summary = summarize(folds.iter().map(|f| &f.main));
        let size_sweep = spec
            .ablation
            .size_sweep
            .iter()
            .enumerate()
            .map(|(i, &size)| SizeRow {
                size,
                summary: summarize(folds.iter().filter_map(|f| f.size_sweep.get(i))),
            })
            .collect();
        Self {
            spec: spec.clone(),
            folds,
            summary,
            size_sweep,
        }
    }
}

/// Training triplets for the requested ablation, drawn from the fold's
/// training signals and kept disjoint from its test triplets.
fn ablation_triplets(
    data: &Dataset,
    spec: &ExperimentSpec,
    split: &Split,
    fold_seed: u64,
) -> Result<Vec<Triplet>> {
    let gt = if spec.ablation.xi_zero {
        data.gt.with_xi(0.0)?
    } else if spec.ablation.hm_only {
        data.gt.clone()
    } else {
        return Ok(split.train.clone());
    };
    let mut exclude: HashSet<TripletKey> = HashSet::new();
    if spec.protocol == Protocol::HeldOutTriplets {
        for t in &split.test {
            let k = t.key();
            exclude.insert(k);
            exclude.insert(TripletKey {
                near: k.far,
                far: k.near,
                ..k
            });
        }
    }
    sample_triplets(
        &data.samples,
        &gt,
        &split.train_signals,
        spec.train_counts.total(),
        0,
        derive_seed(fold_seed, 3),
        &exclude,
    )
    .map_err(|e| Error::Data(format!("ablation training triplets: {e}")))
}

fn train_and_eval(
    data: &Dataset,
    spec: &ExperimentSpec,
    split: &Split,
    triplets: &[Triplet],
    fold_seed: u64,
) -> Result<(RunReport, EmbeddingModel)> {
    let dim = data.input_dim()?;
    let model = spec.model.build(dim, derive_seed(fold_seed, 4))?;
    let config = TrainConfig {
        seed: derive_seed(fold_seed, 5),
        ..spec.train.clone()
    };
    let outcome = train(model, &data.samples, triplets, &config)?;
    let model = outcome.model;
    let exec = config.execution;
    // The threshold always comes from the fold's standard training set, which
    // contains both margin classes even when the model never saw LM triplets.
    let threshold = estimate_threshold(&model, &data.samples, &split.train, exec)?;
    let margins = TripletMargins::from_triplets(&model, &data.samples, &split.test, exec)?;
    let mut eval = EvalReport::from_margins(&margins, threshold.xi)?;
    if spec.pairwise {
        eval.pairwise = Some(pairwise_eval(&model, &data.samples, &split.test_signals, &data.gt, exec)?);
    }
    if spec.similarity {
        let classes: Vec<u32> = split
            .test_signals
            .iter()
            .map(|&i| data.samples[i].id.class_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let sim = similarity_matrix(&model, &data.samples, &split.test_signals, &classes, exec)?;
        eval.similarity_spearman = data.confusion().and_then(|c| similarity_rank_correlation(&sim, c));
        eval.similarity = Some(sim);
    }
    Ok((
        RunReport {
            train_size: triplets.len(),
            threshold,
            loss_history: outcome.loss_history,
            eval,
        },
        model,
    ))
}

/// Runs one fold: split, train (plus any size-sweep retrains), evaluate.
pub fn run_fold(data: &Dataset, spec: &ExperimentSpec, fold: usize) -> Result<FoldOutcome> {
    spec.validate()?;
    let fold_seed = spec.fold_seed(fold);
    let split = make_split(&data.samples, &data.gt, &spec.split_spec(fold))?;
    let normalized;
    let (data, feature_stats) = if spec.normalize {
        let train_values: Vec<Vec<f64>> =
            split.train_signals.iter().map(|&i| data.samples[i].values.clone()).collect();
        let stats = FeatureStats::fit(&train_values)?;
        let samples = data
            .samples
            .iter()
            .map(|s| Ok(Sample::new(s.id, stats.apply(&s.values)?)))
            .collect::<Result<Vec<_>>>()?;
        normalized = Dataset {
            samples,
            gt: data.gt.clone(),
        };
        (&normalized, Some(stats))
    } else {
        (data, None)
    };
    let train_triplets = ablation_triplets(data, spec, &split, fold_seed)?;
    let (main, model) = train_and_eval(data, spec, &split, &train_triplets, fold_seed)?;

    let mut size_sweep = Vec::new();
    if !spec.ablation.size_sweep.is_empty() {
        let mut order: Vec<usize> = (0..train_triplets.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(fold_seed, 6)));
        for &size in &spec.ablation.size_sweep {
            let subset: Vec<Triplet> = order[..size].iter().map(|&i| train_triplets[i]).collect();
            size_sweep.push(train_and_eval(data, spec, &split, &subset, fold_seed)?.0);
        }
    }
    Ok(FoldOutcome {
        report: FoldReport {
            fold,
            fold_seed,
            main,
            size_sweep,
        },
        model,
        split,
        train_triplets,
        feature_stats,
    })
}

/// Runs every fold in order, handing each finished fold to `on_fold` before
/// starting the next, and aggregates mean ± standard deviation.
pub fn run_experiment_with(
    data: &Dataset,
    spec: &ExperimentSpec,
    mut on_fold: impl FnMut(&FoldOutcome) -> Result<()>,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut folds = Vec::with_capacity(spec.folds);
    for fold in 0..spec.folds {
        let outcome = run_fold(data, spec, fold)?;
        log::info!(
            "fold {}/{}: TGA {:.4}",
            fold + 1,
            spec.folds,
            outcome.report.main.eval.tga_total
        );
        on_fold(&outcome)?;
        folds.push(outcome.report);
    }
    Ok(ExperimentReport::from_folds(spec, folds))
}

pub fn run_experiment(data: &Dataset, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_experiment_with(data, spec, |_| Ok(()))
}
