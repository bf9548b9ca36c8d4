//! Binary membership classifiers over attack features.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::LabeledFeatures;
use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::nn::{fit, EarlyStopping, FitConfig, Network, OptimizerConfig};
use crate::rng::{derive_seed, derived};

const INIT_STREAM: u64 = 40;
const HOLDOUT_STREAM: u64 = 41;
const FIT_STREAM: u64 = 42;

/// Hyperparameters of each attack classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrainConfig {
    pub hidden: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of rows held out to drive early stopping.
    pub holdout: f64,
    pub patience: usize,
}

impl Default for AttackTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            optimizer: OptimizerConfig::adam(1e-3),
            batch_size: 32,
            epochs: 80,
            holdout: 0.2,
            patience: 5,
        }
    }
}

impl AttackTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "attack classifier needs hidden units, batch size and epochs".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::InvalidParameter(format!(
                "holdout fraction must lie in [0, 1), got {}",
                self.holdout
            )));
        }
        self.optimizer.validate()
    }
}

/// Per-column standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &LabeledFeatures) -> Self {
        let n = rows.len().max(1) as f64;
        let w = rows.features.cols();
        let mut mean = vec![0.0; w];
        for r in rows.features.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; w];
        for r in rows.features.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// One binary membership classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MembershipClassifier {
    Trained {
        net: Network,
        standardizer: Standardizer,
    },
    /// Used when no usable training rows exist; always scores 0.5.
    Constant,
}

impl MembershipClassifier {
    /// Probability that `row` belongs to a member.
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            MembershipClassifier::Constant => 0.5,
            MembershipClassifier::Trained { net, standardizer } => {
                net.predict_proba(&standardizer.apply(row))[1]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MembershipClassifier::Constant)
    }
}

/// Row order used before any randomness, so the trained classifier does not
/// depend on how the caller ordered its rows.
fn canonical_order(rows: &LabeledFeatures) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| {
        rows.flags[a].cmp(&rows.flags[b]).then_with(|| {
            let (ra, rb) = (rows.features.row(a), rows.features.row(b));
            ra.iter()
                .zip(rb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

fn to_dataset(rows: &LabeledFeatures, idx: &[usize], std: &Standardizer) -> Result<Dataset> {
    let mut feats = Vec::with_capacity(idx.len() * rows.features.cols());
    for &i in idx {
        feats.extend(std.apply(rows.features.row(i)));
    }
    let labels = idx.iter().map(|&i| usize::from(rows.flags[i])).collect();
    Dataset::new(feats, rows.features.cols(), labels, 2, FeatureKind::Real)
}

/// Trains a classifier separating `flags == true` from `false`. Falls back
/// to [`MembershipClassifier::Constant`] when either side has no rows.
pub fn train_membership_classifier(
    rows: &LabeledFeatures,
    config: &AttackTrainConfig,
    seed: u64,
) -> Result<MembershipClassifier> {
    config.validate()?;
    let members = rows.flags.iter().filter(|&&f| f).count();
    if members == 0 || members == rows.len() || rows.len() < 2 {
        return Ok(MembershipClassifier::Constant);
    }
    let mut order = canonical_order(rows);
    order.shuffle(&mut derived(seed, HOLDOUT_STREAM));
    let n_hold = ((rows.len() as f64) * config.holdout).round() as usize;
    let n_hold = if n_hold >= rows.len() { 0 } else { n_hold };
    let (hold_idx, train_idx) = order.split_at(n_hold);

    let fitted = rows.select(train_idx);
    let standardizer = Standardizer::fit(&fitted);
    let train = to_dataset(rows, train_idx, &standardizer)?;
    // Without a holdout, early stopping watches the training rows.
    let (watch, stopping) = if hold_idx.is_empty() {
        (train.clone(), None)
    } else {
        (
            to_dataset(rows, hold_idx, &standardizer)?,
            Some(EarlyStopping {
                patience: config.patience,
                min_delta: 1e-4,
            }),
        )
    };
    let width = rows.features.cols();
    let mut net = Network::new(&[width, config.hidden, 2], &mut derived(seed, INIT_STREAM))?;
    fit(
        &mut net,
        &train,
        &watch,
        &FitConfig {
            epochs: config.epochs,
            batch_size: config.batch_size,
            optimizer: config.optimizer,
            early_stopping: stopping,
            seed: derive_seed(seed, FIT_STREAM),
        },
    )?;
    Ok(MembershipClassifier::Trained { net, standardizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auc_from_scores;
    use crate::nn::Matrix;
    use rand::Rng;

    fn rows(n: usize, signal: f64, seed: u64) -> LabeledFeatures {
        let mut rng = derived(seed, 0);
        let flags: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let mut data = Vec::new();
        for &f in &flags {
            let shift = if f { signal } else { 0.0 };
            data.push(rng.random::<f64>() + shift);
            data.push(rng.random::<f64>());
        }
        LabeledFeatures {
            record_ids: (0..n).collect(),
            classes: vec![0; n],
            flags,
            features: Matrix::from_vec(n, 2, data).unwrap(),
        }
    }

    fn scores(c: &MembershipClassifier, r: &LabeledFeatures) -> Vec<f64> {
        r.features.iter_rows().map(|x| c.score(x)).collect()
    }

    #[test]
    fn separable_features_reach_auc_one() {
        let r = rows(200, 5.0, 1);
        let c = train_membership_classifier(&r, &AttackTrainConfig::default(), 3).unwrap();
        assert_eq!(auc_from_scores(&scores(&c, &r), &r.flags).unwrap(), 1.0);
    }

    #[test]
    fn shuffled_labels_give_chance_auc() {
        let mut r = rows(2000, 0.0, 2);
        r.flags.shuffle(&mut derived(9, 9));
        let (train, test): (Vec<usize>, Vec<usize>) = (0..1000).zip(1000..2000).unzip();
        let c = train_membership_classifier(&r.select(&train), &AttackTrainConfig::default(), 4)
            .unwrap();
        let held = r.select(&test);
        let a = auc_from_scores(&scores(&c, &held), &held.flags).unwrap();
        assert!((a - 0.5).abs() <= 0.05, "auc {a}");
    }

    #[test]
    fn row_permutation_does_not_change_classifier() {
        let r = rows(120, 0.7, 5);
        let mut perm: Vec<usize> = (0..r.len()).collect();
        perm.shuffle(&mut derived(1, 1));
        let cfg = AttackTrainConfig::default();
        let a = train_membership_classifier(&r, &cfg, 7).unwrap();
        let b = train_membership_classifier(&r.select(&perm), &cfg, 7).unwrap();
        let (sa, sb) = (scores(&a, &r), scores(&b, &r));
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_sided_rows_fall_back_to_constant() {
        let mut r = rows(10, 1.0, 6);
        r.flags = vec![true; 10];
        let c = train_membership_classifier(&r, &AttackTrainConfig::default(), 1).unwrap();
        assert!(c.is_constant());
        assert_eq!(c.score(&[3.0, 4.0]), 0.5);
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let r = LabeledFeatures {
            record_ids: vec![0, 1],
            classes: vec![0, 0],
            flags: vec![true, false],
            features: Matrix::from_vec(2, 2, vec![1.0, 5.0, 3.0, 5.0]).unwrap(),
        };
        let s = Standardizer::fit(&r);
        assert_eq!(s.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
    }
}
