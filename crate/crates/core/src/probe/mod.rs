//! Domain router, per-domain intent probes and their diagnostics.

mod auc;
mod fit;
mod logistic;
mod model;

pub use auc::auc;
pub use fit::{
    bootstrap_mean_interval, fit_probe, fit_probes, fit_router, fit_standardizer, layer_sweep,
    probe_auc, routing_accuracy, shuffle_control, LayerScore, LayerSweepResult, ShuffleSummary,
    BOOTSTRAP_RESAMPLES,
};
pub use logistic::{
    binary_objective, train_binary, train_binary_matrix, train_softmax, BinaryFit, Features,
    SoftmaxFit, TrainConfig,
};
pub use model::{Probe, Raw, Router, Standardized};
