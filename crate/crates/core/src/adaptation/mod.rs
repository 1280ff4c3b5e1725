//! Personalized training-set synthesis: morphology transforms learned
//! against a target dictionary, and the filter-library baseline.

mod abs;
mod mtm;

pub use abs::{
    average_beat_index, average_normal_pair, build_abs_library, conv_same, estimate_abs_filter, estimate_filter,
    prune_filters, synthesize_abnormal, synthesize_pair, synthesize_trio, AbsConfig, AbsFilter, AbsLibrary,
};
pub use mtm::{apply_mtm, learn_mtm, mtm_gradient, mtm_objective, MorphTransform, MtmConfig};
