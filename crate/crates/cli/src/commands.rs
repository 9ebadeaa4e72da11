//! Subcommand implementations. Each one resolves its settings (config file,
//! then flags), runs the pipeline and writes artefacts that carry the seed,
//! config hash and tool version.

use crate::config::{config_hash, load_config, provenance, provenance_map, resolve};
use crate::{EvalArgs, ExperimentArgs, FeaturesArgs, SynthArgs, SynthKind, TrainArgs, TripletsArgs};
use anyhow::{anyhow, bail, Context, Result};
use percept_core::data::{
    cayley_klein_gt, compute_xi_star, derive_seed, gen_synthetic_signals, mahalanobis_gt, make_split,
    training_threshold_synthetic, ConfusionMatrix, GroundTruthMetric, Metric, Protocol, Sample, SignalId,
    SplitSpec, Triplet, TripletCounts,
};
use percept_core::features::{extract_dataset, FeatureStats, BAND_COUNT};
use percept_core::io::{
    read_confusion_csv, read_json, read_samples_csv, read_signal_csv, read_triplets_csv, write_json,
    write_samples_csv, write_table_csv, write_triplets_csv, Provenance, SignalManifest,
};
use percept_core::models::{load_model_with_provenance, save_model, ModelKind};
use percept_core::train::{
    estimate_threshold, pairwise_eval, similarity_matrix, similarity_rank_correlation, train, Ablation,
    Dataset, EvalReport, ExperimentReport, ExperimentSpec, FoldOutcome, ModelSpec, PrCurve, SimilarityMatrix,
    SweepPoint, ThresholdEstimate, TrainConfig, TripletMargins,
};
use percept_core::Execution;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

pub struct Global {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

impl Global {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(dir)
    }
}

#[derive(Serialize)]
struct Overlay<'a, F> {
    #[serde(flatten)]
    flags: &'a F,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn settings<F: Serialize, S: serde::de::DeserializeOwned>(global: &Global, flags: &F) -> Result<S> {
    let file = load_config(global.config.as_deref())?;
    resolve(file, &Overlay { flags, seed: global.seed })
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| anyhow!("--{flag} is required"))
}

/// A JSON artefact with its provenance alongside the payload.
#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    provenance: Provenance,
    #[serde(flatten)]
    body: T,
}

fn write_stamped<T: Serialize>(path: &Path, provenance: &Provenance, body: T) -> Result<()> {
    write_json(
        path,
        &Stamped {
            provenance: provenance.clone(),
            body,
        },
    )?;
    Ok(())
}

fn input_dim(samples: &[Sample]) -> Result<usize> {
    let dim = samples.first().map(|s| s.values.len()).ok_or_else(|| anyhow!("no signals in input"))?;
    if let Some(s) = samples.iter().find(|s| s.values.len() != dim) {
        bail!("signal {} has {} values, expected {dim}", s.id, s.values.len());
    }
    Ok(dim)
}

// ---------------------------------------------------------------- features

#[derive(Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FeaturesSettings {
    manifest: Option<PathBuf>,
    sequential: bool,
    seed: u64,
}

pub fn features(global: &Global, args: &FeaturesArgs) -> Result<()> {
    let s: FeaturesSettings = settings(global, args)?;
    let manifest_path = required(&s.manifest, "manifest")?;
    let manifest = SignalManifest::load(manifest_path)?;
    let mut signals = Vec::with_capacity(manifest.signals.len());
    let mut failures = Vec::new();
    for entry in &manifest.signals {
        let path = manifest.resolve(entry);
        match read_signal_csv(&path, SignalId::new(entry.class_id, entry.sample_index), entry.sample_rate) {
            Ok(sig) => signals.push(sig),
            Err(e) => failures.push(format!("  {}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        bail!("{} signal file(s) could not be read:\n{}", failures.len(), failures.join("\n"));
    }
    let prov = provenance(s.seed, &s)?;
    let out = global.out_dir()?.join("features.csv");
    let samples: Vec<Sample> = if signals.is_empty() {
        log::warn!("manifest {} lists no signals", manifest_path.display());
        Vec::new()
    } else {
        extract_dataset(&signals, execution(s.sequential))?
            .into_iter()
            .map(|f| Sample::new(f.id, f.values))
            .collect()
    };
    write_samples_csv(&out, &samples, "f", BAND_COUNT, Some(&prov))?;
    log::info!("wrote {} feature rows to {}", samples.len(), out.display());
    Ok(())
}

// ------------------------------------------------------------------- synth

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthSettings {
    kind: SynthKind,
    n: usize,
    dim: usize,
    seed: u64,
    train_hm: usize,
    train_lm: usize,
    test_hm: usize,
    test_lm: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let c = TripletCounts::default();
        Self {
            kind: SynthKind::Mahalanobis,
            n: 100,
            dim: 8,
            seed: 0,
            train_hm: c.hm,
            train_lm: c.lm,
            test_hm: c.hm,
            test_lm: c.lm,
        }
    }
}

/// Synthetic signals and a random ground-truth metric with its training margin.
fn synthetic_dataset(kind: SynthKind, n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let samples = gen_synthetic_signals(n, dim, derive_seed(seed, 0))?;
    let metric = match kind {
        SynthKind::Mahalanobis => mahalanobis_gt(dim, derive_seed(seed, 1))?,
        SynthKind::CayleyKlein => cayley_klein_gt(dim, derive_seed(seed, 1))?,
    };
    let xi = training_threshold_synthetic(&metric, &samples, derive_seed(seed, 2))?;
    Ok(Dataset {
        samples,
        gt: GroundTruthMetric::new(metric, xi)?,
    })
}

#[derive(Serialize, Deserialize)]
struct MetricFile {
    metric: Metric,
    xi_star: f64,
}

/// Which signals and triplet files make up a split.
#[derive(Serialize, Deserialize)]
struct SplitFile {
    protocol: Protocol,
    seed: u64,
    xi_star: f64,
    train_triplets: String,
    test_triplets: String,
    train_signals: Vec<SignalId>,
    test_signals: Vec<SignalId>,
}

fn write_split(
    dir: &Path,
    prov: &Provenance,
    samples: &[Sample],
    split: &percept_core::data::Split,
    protocol: Protocol,
    seed: u64,
    xi_star: f64,
) -> Result<()> {
    write_triplets_csv(&dir.join("train_triplets.csv"), samples, &split.train, Some(prov))?;
    write_triplets_csv(&dir.join("test_triplets.csv"), samples, &split.test, Some(prov))?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| samples[i].id).collect::<Vec<_>>();
    write_stamped(
        &dir.join("split.json"),
        prov,
        SplitFile {
            protocol,
            seed,
            xi_star,
            train_triplets: "train_triplets.csv".into(),
            test_triplets: "test_triplets.csv".into(),
            train_signals: ids(&split.train_signals),
            test_signals: ids(&split.test_signals),
        },
    )
}

pub fn synth(global: &Global, args: &SynthArgs) -> Result<()> {
    let s: SynthSettings = settings(global, args)?;
    let data = synthetic_dataset(s.kind, s.n, s.dim, s.seed)?;
    let prov = provenance(s.seed, &s)?;
    let dir = global.out_dir()?;
    write_samples_csv(&dir.join("signals.csv"), &data.samples, "x", s.dim, Some(&prov))?;
    write_stamped(
        &dir.join("metric.json"),
        &prov,
        MetricFile {
            metric: data.gt.metric.clone(),
            xi_star: data.gt.xi_star,
        },
    )?;
    let spec = SplitSpec {
        train: TripletCounts::new(s.train_hm, s.train_lm),
        test: TripletCounts::new(s.test_hm, s.test_lm),
        ..SplitSpec::new(Protocol::HeldOutTriplets, derive_seed(s.seed, 3))
    };
    let split = make_split(&data.samples, &data.gt, &spec)?;
    write_split(&dir, &prov, &data.samples, &split, spec.protocol, s.seed, data.gt.xi_star)?;
    log::info!(
        "wrote {} signals, ξ* = {:.6}, {} train / {} test triplets to {}",
        data.samples.len(),
        data.gt.xi_star,
        split.train.len(),
        split.test.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- triplets

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TripletsSettings {
    confusion: Option<PathBuf>,
    features: Option<PathBuf>,
    protocol: Protocol,
    held_out_per_class: usize,
    held_out_class_fraction: f64,
    seed: u64,
    train_hm: usize,
    train_lm: usize,
    test_hm: usize,
    test_lm: usize,
}

impl Default for TripletsSettings {
    fn default() -> Self {
        let split = SplitSpec::new(Protocol::HeldOutTriplets, 0);
        Self {
            confusion: None,
            features: None,
            protocol: split.protocol,
            held_out_per_class: split.held_out_per_class,
            held_out_class_fraction: split.held_out_class_fraction,
            seed: 0,
            train_hm: split.train.hm,
            train_lm: split.train.lm,
            test_hm: split.test.hm,
            test_lm: split.test.lm,
        }
    }
}

/// Features labelled by a confusion matrix, checked for class consistency.
fn perceptual_dataset(features: &Path, confusion: &Path) -> Result<Dataset> {
    let samples = read_samples_csv(features)?;
    let matrix = read_confusion_csv(confusion)?;
    check_classes(&samples, &matrix, features, confusion)?;
    let metric = Metric::Confusion { matrix };
    let xi = compute_xi_star(&metric, &samples)?;
    Ok(Dataset {
        samples,
        gt: GroundTruthMetric::new(metric, xi)?,
    })
}

fn check_classes(samples: &[Sample], matrix: &ConfusionMatrix, features: &Path, confusion: &Path) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.id.class_id as usize >= matrix.size()) {
        bail!(
            "{} has class {} but the confusion matrix {} covers only {} classes",
            features.display(),
            s.id.class_id,
            confusion.display(),
            matrix.size()
        );
    }
    let present: BTreeSet<u32> = samples.iter().map(|s| s.id.class_id).collect();
    if present.len() < matrix.size() {
        log::warn!(
            "{} classes of the confusion matrix have no signals in {}",
            matrix.size() - present.len(),
            features.display()
        );
    }
    Ok(())
}

pub fn triplets(global: &Global, args: &TripletsArgs) -> Result<()> {
    let s: TripletsSettings = settings(global, args)?;
    let data = perceptual_dataset(required(&s.features, "features")?, required(&s.confusion, "confusion")?)?;
    let spec = SplitSpec {
        protocol: s.protocol,
        fold_seed: s.seed,
        train: TripletCounts::new(s.train_hm, s.train_lm),
        test: TripletCounts::new(s.test_hm, s.test_lm),
        held_out_per_class: s.held_out_per_class,
        held_out_class_fraction: s.held_out_class_fraction,
    };
    let split = make_split(&data.samples, &data.gt, &spec)
        .with_context(|| format!("cannot build a {} split", s.protocol))?;
    let prov = provenance(s.seed, &s)?;
    let dir = global.out_dir()?;
    write_split(&dir, &prov, &data.samples, &split, s.protocol, s.seed, data.gt.xi_star)?;
    log::info!(
        "ξ* = {:.6}; {} train / {} test triplets, {} / {} signals",
        data.gt.xi_star,
        split.train.len(),
        split.test.len(),
        split.train_signals.len(),
        split.test_signals.len()
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    features: Option<PathBuf>,
    triplets: Option<PathBuf>,
    normalize: bool,
    model: ModelKind,
    width: Option<usize>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    unsquared: bool,
    sequential: bool,
    seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            features: None,
            triplets: None,
            normalize: false,
            model: ModelKind::PerceptNet,
            width: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            unsquared: false,
            sequential: false,
            seed: 0,
        }
    }
}

fn loss_rows(history: &[f64]) -> impl Iterator<Item = Vec<String>> + '_ {
    history.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), format!("{l:?}")])
}

pub fn train_cmd(global: &Global, args: &TrainArgs) -> Result<()> {
    let s: TrainSettings = settings(global, args)?;
    let mut samples = read_samples_csv(required(&s.features, "features")?)?;
    let triplets = read_triplets_csv(required(&s.triplets, "triplets")?, &samples)?;
    if triplets.is_empty() {
        bail!("no training triplets");
    }
    let dim = input_dim(&samples)?;
    let stats = if s.normalize {
        let used: BTreeSet<usize> = triplets.iter().flat_map(|t| [t.base, t.near, t.far]).collect();
        let values: Vec<Vec<f64>> = used.iter().map(|&i| samples[i].values.clone()).collect();
        let stats = FeatureStats::fit(&values)?;
        for sample in &mut samples {
            sample.values = stats.apply(&sample.values)?;
        }
        Some(stats)
    } else {
        None
    };
    let exec = execution(s.sequential);
    let model = ModelSpec {
        kind: s.model,
        width: s.width,
    }
    .build(dim, derive_seed(s.seed, 4))?;
    let config = TrainConfig {
        epochs: s.epochs,
        batch_size: s.batch_size,
        learning_rate: s.learning_rate,
        seed: derive_seed(s.seed, 5),
        squared_margins: !s.unsquared,
        execution: exec,
    };
    let outcome = train(model, &samples, &triplets, &config).context("training failed")?;
    let threshold = estimate_threshold(&outcome.model, &samples, &triplets, exec)?;

    let prov = provenance(s.seed, &s)?;
    let dir = global.out_dir()?;
    let mut extra = provenance_map(&prov, &s)?;
    extra.insert("threshold".into(), serde_json::to_value(threshold)?);
    if let Some(stats) = &stats {
        extra.insert("feature_stats".into(), serde_json::to_value(stats)?);
    }
    save_model(&outcome.model, dir.join("model.json"), &extra)?;
    write_table_csv(
        &dir.join("loss_history.csv"),
        &["epoch", "loss"],
        loss_rows(&outcome.loss_history),
        Some(&prov),
    )?;
    write_stamped(&dir.join("threshold.json"), &prov, threshold)?;
    log::info!(
        "{} model: ξ = {:.6}, f_H = {:.4}, f_L = {:.4}",
        s.model,
        threshold.xi,
        threshold.f_high,
        threshold.f_low
    );
    Ok(())
}

// -------------------------------------------------------------------- eval

#[derive(Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    model: Option<PathBuf>,
    features: Option<PathBuf>,
    triplets: Option<PathBuf>,
    pairs: bool,
    similarity: bool,
    confusion: Option<PathBuf>,
    metric: Option<PathBuf>,
    split: Option<PathBuf>,
    xi: Option<f64>,
    sequential: bool,
    seed: u64,
}

#[derive(Serialize)]
struct EvalOutput {
    model_kind: ModelKind,
    #[serde(flatten)]
    triplets: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairwise: Option<PrCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity: Option<SimilarityMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity_spearman: Option<f64>,
}

fn stored<T: serde::de::DeserializeOwned>(prov: &BTreeMap<String, Value>, key: &str) -> Result<Option<T>> {
    prov.get(key)
        .map(|v| serde_json::from_value(v.clone()).with_context(|| format!("model file field `{key}`")))
        .transpose()
}

fn resolve_signals(samples: &[Sample], ids: &[SignalId], origin: &Path) -> Result<Vec<usize>> {
    let index: HashMap<SignalId, usize> = samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| anyhow!("{}: signal {id} is not in the feature file", origin.display()))
        })
        .collect()
}

fn sweep_rows(sweep: &[SweepPoint]) -> impl Iterator<Item = Vec<String>> + '_ {
    sweep
        .iter()
        .map(|p| vec![format!("{:?}", p.xi), format!("{:?}", p.lm_recall), format!("{:?}", p.accuracy)])
}

fn pr_rows(pr: &PrCurve) -> impl Iterator<Item = Vec<String>> + '_ {
    pr.points
        .iter()
        .map(|p| vec![format!("{:?}", p.threshold), format!("{:?}", p.recall), format!("{:?}", p.precision)])
}

fn write_similarity(path: &Path, sim: &SimilarityMatrix, prov: &Provenance) -> Result<()> {
    let mut header = vec!["class".to_string()];
    header.extend(sim.classes.iter().map(|c| c.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..sim.size()).map(|a| {
        let mut row = vec![sim.classes[a].to_string()];
        row.extend((0..sim.size()).map(|b| format!("{:?}", sim.get(a, b))));
        row
    });
    write_table_csv(path, &header, rows, Some(prov))?;
    Ok(())
}

/// Writes the per-report curve CSVs into `dir`.
fn write_curves(
    dir: &Path,
    prov: &Provenance,
    sweep: &[SweepPoint],
    pairwise: Option<&PrCurve>,
    similarity: Option<&SimilarityMatrix>,
) -> Result<()> {
    if !sweep.is_empty() {
        write_table_csv(&dir.join("sweep.csv"), &["xi", "lm_recall", "accuracy"], sweep_rows(sweep), Some(prov))?;
    }
    if let Some(pr) = pairwise {
        write_table_csv(&dir.join("pr.csv"), &["threshold", "recall", "precision"], pr_rows(pr), Some(prov))?;
    }
    if let Some(sim) = similarity {
        write_similarity(&dir.join("similarity.csv"), sim, prov)?;
    }
    Ok(())
}

pub fn eval(global: &Global, args: &EvalArgs) -> Result<()> {
    let s: EvalSettings = settings(global, args)?;
    let exec = execution(s.sequential);
    let model_path = required(&s.model, "model")?;
    let (model, stored_prov) = load_model_with_provenance(model_path)
        .with_context(|| format!("cannot load model {}", model_path.display()))?;
    let features_path = required(&s.features, "features")?;
    let mut samples = read_samples_csv(features_path)?;
    let dim = input_dim(&samples)?;
    if dim != model.input_dim() {
        bail!(
            "model {} expects {}-dimensional inputs but {} has {dim} values per signal",
            model_path.display(),
            model.input_dim(),
            features_path.display()
        );
    }
    if let Some(stats) = stored::<FeatureStats>(&stored_prov, "feature_stats")? {
        for sample in &mut samples {
            sample.values = stats.apply(&sample.values)?;
        }
    }
    if s.triplets.is_none() && !s.pairs && !s.similarity {
        bail!("nothing to evaluate: give --triplets, --pairs or --similarity");
    }

    let triplets = match &s.triplets {
        Some(path) => {
            let triplets = read_triplets_csv(path, &samples)?;
            let xi = match s.xi {
                Some(xi) => xi,
                None => stored::<ThresholdEstimate>(&stored_prov, "threshold")?
                    .map(|t| t.xi)
                    .ok_or_else(|| anyhow!("the model file stores no threshold; pass --xi"))?,
            };
            let margins = TripletMargins::from_triplets(&model, &samples, &triplets, exec)?;
            Some(EvalReport::from_margins(&margins, xi)?)
        }
        None => None,
    };

    let signals: Vec<usize> = match &s.split {
        Some(path) => {
            let split: Stamped<SplitFile> = read_json(path)?;
            resolve_signals(&samples, &split.body.test_signals, path)?
        }
        None => (0..samples.len()).collect(),
    };
    let confusion = s.confusion.as_deref().map(read_confusion_csv).transpose()?;
    if let (Some(m), Some(path)) = (&confusion, &s.confusion) {
        check_classes(&samples, m, features_path, path)?;
    }

    let pairwise = if s.pairs {
        let gt = match (&confusion, &s.metric) {
            (Some(matrix), _) => GroundTruthMetric::new(Metric::Confusion { matrix: matrix.clone() }, 0.0)?,
            (None, Some(path)) => {
                let file: Stamped<MetricFile> = read_json(path)?;
                file.body.metric.check_samples(&samples)?;
                GroundTruthMetric::new(file.body.metric, file.body.xi_star)?
            }
            (None, None) => bail!("--pairs needs ground truth: give --confusion or --metric"),
        };
        Some(pairwise_eval(&model, &samples, &signals, &gt, exec)?)
    } else {
        None
    };

    let (similarity, similarity_spearman) = if s.similarity {
        let classes: Vec<u32> = signals
            .iter()
            .map(|&i| samples[i].id.class_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let sim = similarity_matrix(&model, &samples, &signals, &classes, exec)?;
        let rho = confusion.as_ref().and_then(|c| similarity_rank_correlation(&sim, c));
        (Some(sim), rho)
    } else {
        (None, None)
    };

    let prov = provenance(s.seed, &s)?;
    let dir = global.out_dir()?;
    write_curves(
        &dir,
        &prov,
        triplets.as_ref().map(|r| r.sweep.as_slice()).unwrap_or(&[]),
        pairwise.as_ref(),
        similarity.as_ref(),
    )?;
    if let Some(r) = &triplets {
        log::info!("TGA {:.4} (HM {:.4}, LM {:.4})", r.tga_total, r.tga_hm, r.tga_lm);
    }
    if let Some(pr) = &pairwise {
        log::info!("pairwise AUC {:.4}", pr.auc);
    }
    write_stamped(
        &dir.join("report.json"),
        &prov,
        EvalOutput {
            model_kind: model.kind(),
            triplets,
            pairwise,
            similarity,
            similarity_spearman,
        },
    )
}

// -------------------------------------------------------------- experiment

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSettings {
    features: Option<PathBuf>,
    confusion: Option<PathBuf>,
    synthetic: Option<SynthKind>,
    n: usize,
    dim: usize,
    seed: u64,
    folds: usize,
    protocol: Protocol,
    held_out_per_class: usize,
    held_out_class_fraction: f64,
    train_hm: usize,
    train_lm: usize,
    test_hm: usize,
    test_lm: usize,
    hm_only: bool,
    xi_zero: bool,
    size_sweep: Vec<usize>,
    pairwise: bool,
    similarity: bool,
    normalize: Option<bool>,
    model: ModelKind,
    width: Option<usize>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    unsquared: bool,
    sequential: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        let e = ExperimentSpec::default();
        Self {
            features: None,
            confusion: None,
            synthetic: None,
            n: 100,
            dim: 8,
            seed: e.seed,
            folds: e.folds,
            protocol: e.protocol,
            held_out_per_class: e.held_out_per_class,
            held_out_class_fraction: e.held_out_class_fraction,
            train_hm: e.train_counts.hm,
            train_lm: e.train_counts.lm,
            test_hm: e.test_counts.hm,
            test_lm: e.test_counts.lm,
            hm_only: false,
            xi_zero: false,
            size_sweep: Vec::new(),
            pairwise: false,
            similarity: false,
            normalize: None,
            model: e.model.kind,
            width: None,
            epochs: e.train.epochs,
            batch_size: e.train.batch_size,
            learning_rate: e.train.learning_rate,
            unsquared: false,
            sequential: false,
        }
    }
}

impl ExperimentSettings {
    fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            protocol: self.protocol,
            folds: self.folds,
            seed: self.seed,
            model: ModelSpec {
                kind: self.model,
                width: self.width,
            },
            train: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                learning_rate: self.learning_rate,
                seed: 0,
                squared_margins: !self.unsquared,
                execution: execution(self.sequential),
            },
            train_counts: TripletCounts::new(self.train_hm, self.train_lm),
            test_counts: TripletCounts::new(self.test_hm, self.test_lm),
            held_out_per_class: self.held_out_per_class,
            held_out_class_fraction: self.held_out_class_fraction,
            ablation: Ablation {
                hm_only: self.hm_only,
                xi_zero: self.xi_zero,
                size_sweep: self.size_sweep.clone(),
            },
            pairwise: self.pairwise,
            similarity: self.similarity,
            normalize: self.normalize.unwrap_or(self.synthetic.is_none()),
        }
    }

    fn dataset(&self) -> Result<Dataset> {
        match (self.synthetic, &self.features, &self.confusion) {
            (Some(kind), None, None) => synthetic_dataset(kind, self.n, self.dim, self.seed),
            (None, Some(f), Some(c)) => perceptual_dataset(f, c),
            (Some(_), _, _) => bail!("--synthetic cannot be combined with --features/--confusion"),
            _ => bail!("give either --features with --confusion, or --synthetic"),
        }
    }
}

/// A fresh run directory `<out>/<UTC timestamp>-<hash prefix>`.
fn run_dir(base: &Path, hash: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let stem = format!("{stamp}-{}", &hash[..12]);
    let mut dir = base.join(&stem);
    let mut n = 1;
    while dir.exists() {
        dir = base.join(format!("{stem}-{n}"));
        n += 1;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_fold(dir: &Path, prov: &Provenance, settings: &ExperimentSettings, data: &Dataset, f: &FoldOutcome) -> Result<()> {
    let fold_dir = dir.join(format!("fold-{}", f.report.fold));
    std::fs::create_dir_all(&fold_dir)?;
    let mut extra = provenance_map(prov, settings)?;
    extra.insert("fold".into(), Value::from(f.report.fold));
    extra.insert("fold_seed".into(), Value::from(f.report.fold_seed));
    extra.insert("threshold".into(), serde_json::to_value(f.report.main.threshold)?);
    if let Some(stats) = &f.feature_stats {
        extra.insert("feature_stats".into(), serde_json::to_value(stats)?);
    }
    save_model(&f.model, fold_dir.join("model.json"), &extra)?;
    let train: &[Triplet] = &f.train_triplets;
    write_triplets_csv(&fold_dir.join("train_triplets.csv"), &data.samples, train, Some(prov))?;
    write_triplets_csv(&fold_dir.join("test_triplets.csv"), &data.samples, &f.split.test, Some(prov))?;
    write_table_csv(
        &fold_dir.join("loss_history.csv"),
        &["epoch", "loss"],
        loss_rows(&f.report.main.loss_history),
        Some(prov),
    )?;
    let eval = &f.report.main.eval;
    write_curves(&fold_dir, prov, &eval.sweep, eval.pairwise.as_ref(), eval.similarity.as_ref())?;
    write_stamped(&fold_dir.join("report.json"), prov, &f.report)
}

fn summary_rows(summary: &BTreeMap<String, percept_core::train::MeanStd>) -> Vec<Vec<String>> {
    summary
        .iter()
        .map(|(k, m)| vec![k.clone(), format!("{:?}", m.mean), format!("{:?}", m.std), m.n.to_string()])
        .collect()
}

fn write_summary(dir: &Path, prov: &Provenance, report: &ExperimentReport, name: &str) -> Result<()> {
    write_stamped(&dir.join(format!("{name}.json")), prov, report)?;
    write_table_csv(
        &dir.join(format!("{name}.csv")),
        &["metric", "mean", "std", "n"],
        summary_rows(&report.summary),
        Some(prov),
    )?;
    if !report.size_sweep.is_empty() {
        let rows = report.size_sweep.iter().flat_map(|row| {
            summary_rows(&row.summary).into_iter().map(move |mut r| {
                r.insert(0, row.size.to_string());
                r
            })
        });
        write_table_csv(
            &dir.join("size_sweep.csv"),
            &["size", "metric", "mean", "std", "n"],
            rows,
            Some(prov),
        )?;
    }
    Ok(())
}

/// Runs an experiment and returns its run directory.
fn run_experiment_cmd(global: &Global, settings: &ExperimentSettings) -> Result<(PathBuf, ExperimentReport)> {
    let spec = settings.spec();
    spec.validate()?;
    let data = settings.dataset()?;
    let hash = config_hash(settings)?;
    let prov = Provenance::new(settings.seed, hash.clone());
    let dir = run_dir(&global.out_dir()?, &hash)?;
    write_stamped(&dir.join("config.json"), &prov, settings)?;
    log::info!("experiment directory {}", dir.display());
    let mut done = Vec::new();
    let result = percept_core::train::run_experiment_with(&data, &spec, |f| {
        write_fold(&dir, &prov, settings, &data, f).map_err(|e| percept_core::Error::Io(std::io::Error::other(e.to_string())))?;
        done.push(f.report.clone());
        Ok(())
    });
    match result {
        Ok(report) => {
            write_summary(&dir, &prov, &report, "summary")?;
            Ok((dir, report))
        }
        Err(e) => {
            if !done.is_empty() {
                let partial = ExperimentReport::from_folds(&spec, done);
                write_summary(&dir, &prov, &partial, "partial_summary")?;
            }
            Err(anyhow::Error::new(e).context(format!("experiment failed; completed folds kept in {}", dir.display())))
        }
    }
}

pub fn experiment(global: &Global, args: &ExperimentArgs) -> Result<()> {
    let s: ExperimentSettings = settings(global, args)?;
    let (dir, report) = run_experiment_cmd(global, &s)?;
    if let Some(t) = report.summary.get("tga_total") {
        println!("TGA {:.4} ± {:.4} over {} folds ({})", t.mean, t.std, t.n, dir.display());
    }
    Ok(())
}
