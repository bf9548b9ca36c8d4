//! Membership-inference attacks: target and shadow training, feature
//! extraction, attack classifiers and scoring.

mod classifier;
mod features;
mod model;
mod pipeline;

pub use classifier::{
    train_membership_classifier, AttackTrainConfig, MembershipClassifier, Standardizer,
};
pub use features::{
    extract_bb_features, extract_wb_features, labeled_features, wb_width, FeatureTrace,
    FeatureView, LabeledFeatures, TracedInput,
};
pub use model::{
    perturb_records, shadow_seed, train_model, train_shadows, LdpMechanism, LdpParams, ModelConfig,
    PrivacyMode, TrainedModel,
};
pub use pipeline::{
    run_bb_attack, run_wb_attack, score_membership, train_bb_attack, train_wb_attack, AttackKind,
    AttackModel, AttackOutcome,
};
