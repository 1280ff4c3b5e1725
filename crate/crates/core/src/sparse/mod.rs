//! Sparse coding, dictionary learning and the residual detectors built on
//! a patient's dictionary.

mod annihilator;
mod auc;
mod dictionary;
mod lasso;
mod omp;
mod residual;

pub use annihilator::{annihilator_matrix, build_annihilator, Annihilator};
pub use auc::auc;
pub use dictionary::{learn_dictionary, training_objective, Dictionary, DictionaryConfig, DictionaryFit};
pub use lasso::{admm_lasso, kkt_residual, lasso_objective, LassoBatch, LassoConfig, LassoSolver, SparseCode};
pub use omp::omp;
pub use residual::{
    flops, lae1_flops, lae2_flops, npe_flops, residual_lae, residual_npe, residual_sae, sae_flops, LsOperator,
    ResidualKind, ResidualModel, ResidualReport, DEFAULT_RIDGE, DEFAULT_SPARSITY,
};
