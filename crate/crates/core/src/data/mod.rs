//! Datasets, synthetic generators, CSV persistence and attack splits.

mod dataset;
mod generators;
mod io;
mod splits;

pub use dataset::{batch_digest, Dataset, FeatureKind};
pub use generators::{
    apportion, binary_entropy, cart_class_sizes, entropy_profile, gen_gray_images,
    gen_skewed_purchases, gen_unbalanced_carts, skewed_entropy_gap, skewed_records, CartSpec,
    EntropyGap, EntropyProfile, GraySpec, Pattern, SkewSpec, SkewedRecords, Split,
};
pub use io::{
    load_csv_dataset, load_image_csv, read_image_meta, save_csv_dataset, sidecar_path, ImageMeta,
};
pub use splits::{
    make_splits, partition_attack_data, partition_domains, split_fraction, AttackDataLayout,
    ShadowSplit, SplitOptions,
};
