//! Dual-margin triplet training, threshold estimation and evaluation.

mod eval;
mod experiment;
mod loss;
mod threshold;
mod trainer;

pub use eval::{
    accuracy_at_recall, pairwise_eval, pr_curve, similarity_matrix, similarity_rank_correlation,
    spearman, threshold_sweep, tga, EvalReport, PrCurve, PrPoint, SimilarityMatrix, SweepPoint,
    Tga, DISTINGUISHABLE,
};
pub use experiment::{
    run_experiment, run_experiment_with, run_fold, Ablation, Dataset, ExperimentReport,
    ExperimentSpec, FoldOutcome, FoldReport, MeanStd, ModelSpec, RunReport, SizeRow,
};
pub use loss::{
    high_margin_loss, loss_and_gradients, low_margin_loss, record_rho, record_term, rho,
    rho_from_embeddings, triplet_loss, triplet_term,
};
pub use threshold::{
    estimate_threshold, estimate_threshold_from_margins, ThresholdEstimate, TripletMargins,
};
pub use trainer::{train, TrainConfig, TrainOutcome};
