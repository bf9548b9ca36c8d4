//! Minimal dense feed-forward networks with per-example gradients.
//!
//! Parameters live in one flat vector (see [`LayerShape`] for the layout), so
//! gradients, clipping and optimizer state all operate on plain slices.

mod matrix;
mod network;
mod optim;
mod train;

pub(crate) use matrix::l2_norm;
pub use matrix::Matrix;
pub use network::{
    argmax, softmax, Activation, Batch, DenseLayer, Forward, LayerShape, Network,
    PerExampleGradients, PROB_FLOOR,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use train::{
    evaluate_accuracy, evaluate_batch, fit, EarlyStopping, EpochStats, FitConfig, StopReason,
    TrainReport,
};
pub(crate) use train::{train_loop, StepOutcome};
