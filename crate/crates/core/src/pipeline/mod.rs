//! Per-patient experiments, evaluation, the energy-saving cascade and
//! result files.

mod cascade;
mod dataset;
mod experiment;
mod metrics;
mod results;

pub use cascade::{
    calibrate_cascade, calibrate_from_energies, default_fractions, efficiency_sweep, held_out_npe_energies, run_cascade, CascadeConfig, CascadeOutcome, EfficiencyPoint,
    EfficiencyReport, Route,
};
pub use dataset::{
    beats_matrix, build_training_set, learn_source_transforms, split_train_val, SourceTransforms, StrategyConfig,
    StrategyKind, StrategyState, TargetModel, TrainingSet,
};
pub use experiment::{
    residual_auc, run_corpus, run_patient_experiment, CorpusResult, ExperimentConfig, MethodMetrics, PatientResult,
    PreparedTarget, RunResult, SkippedPatient,
};
pub use metrics::{evaluate, macro_average, Metrics};
pub use results::{emit_results, load_config, metrics_rows, read_metrics_csv, MetricsRow, MACRO_ROW};
