//! Central differential privacy: DP-SGD style training and Rényi accounting.

mod accountant;
mod sgd;

pub use accountant::{
    account_training, default_orders, expected_steps, rdp_subsampled_gaussian, PrivacySpent,
    RdpAccountant,
};
pub use sgd::{clip_per_example, dp_fit, dp_step, CdpParams, DpFitReport};
