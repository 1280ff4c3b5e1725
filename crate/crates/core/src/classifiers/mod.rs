//! Residual thresholding, the likelihood classifier on NPE energies, the
//! 1-D CNN and their confidence-gated ensemble.

mod cnn;
mod ensemble;
mod mle;
mod threshold;

pub use cnn::{
    cnn_train, cnn_train_from, pair_input, pool_len, CnnModel, CnnOutput, Conv1d, Dense, Gradients, Sample,
    TrainConfig, TrainHistory, INPUT_CHANNELS, KERNEL, POOL,
};
pub use ensemble::{
    confidence_grid, confidence_sweep, ensemble_classify, select_confidence, select_confidence_from, uses_cnn,
    BranchOutputs, EnsembleDecision, EnsembleModel, EnsemblePath, NpeChannel,
};
pub use mle::{
    exponential_density, fit_exponential, fit_gaussian, gaussian_density, prob_classify, ResidualDistributions,
    SIGMA_FLOOR,
};
pub use threshold::{threshold_classify, threshold_grid, ThresholdClassifier};
