//! Black-box (shadow model) and white-box (known-portion) attack runs.

use serde::{Deserialize, Serialize};

use super::classifier::{train_membership_classifier, AttackTrainConfig, MembershipClassifier};
use super::features::{labeled_features, FeatureTrace, FeatureView, LabeledFeatures};
use crate::data::{split_fraction, AttackDataLayout, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{auc, roc_curve, RocCurve};
use crate::nn::Network;
use crate::rng::derive_seed;

const BB_STREAM: u64 = 50;
const WB_MEMBER_STREAM: u64 = 51;
const WB_NON_MEMBER_STREAM: u64 = 52;
const WB_FIT_STREAM: u64 = 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Bb,
    Wb,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Bb => "bb",
            AttackKind::Wb => "wb",
        }
    }
}

/// Trained attack: one classifier per class (black-box) or a single one
/// (white-box).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub kind: AttackKind,
    pub classifiers: Vec<MembershipClassifier>,
}

impl AttackModel {
    /// Classes whose classifier fell back to the constant score.
    pub fn fallback_classes(&self) -> Vec<usize> {
        match self.kind {
            AttackKind::Wb => Vec::new(),
            AttackKind::Bb => (0..self.classifiers.len())
                .filter(|&c| self.classifiers[c].is_constant())
                .collect(),
        }
    }

    fn classifier_for(&self, class: usize) -> Result<&MembershipClassifier> {
        let k = match self.kind {
            AttackKind::Bb => class,
            AttackKind::Wb => 0,
        };
        self.classifiers
            .get(k)
            .ok_or_else(|| Error::Shape(format!("no attack classifier for class {class}")))
    }
}

/// Fits one classifier per class on shadow-derived rows.
pub fn train_bb_attack(
    rows: &LabeledFeatures,
    classes: usize,
    config: &AttackTrainConfig,
    seed: u64,
) -> Result<AttackModel> {
    let classifiers = (0..classes)
        .map(|c| {
            train_membership_classifier(&rows.of_class(c), config, derive_seed(seed, c as u64))
        })
        .collect::<Result<_>>()?;
    Ok(AttackModel {
        kind: AttackKind::Bb,
        classifiers,
    })
}

pub fn train_wb_attack(
    rows: &LabeledFeatures,
    config: &AttackTrainConfig,
    seed: u64,
) -> Result<AttackModel> {
    Ok(AttackModel {
        kind: AttackKind::Wb,
        classifiers: vec![train_membership_classifier(rows, config, seed)?],
    })
}

/// Membership score of every row. The evaluation set must hold as many
/// members as non-members.
pub fn score_membership(attack: &AttackModel, rows: &LabeledFeatures) -> Result<Vec<f64>> {
    let members = rows.flags.iter().filter(|&&f| f).count();
    if members * 2 != rows.len() {
        return Err(Error::InvalidParameter(format!(
            "evaluation set is unbalanced: {members} members, {} non-members",
            rows.len() - members
        )));
    }
    (0..rows.len())
        .map(|i| {
            Ok(attack
                .classifier_for(rows.classes[i])?
                .score(rows.features.row(i)))
        })
        .collect()
}

/// Scores and summary of one attack against one target.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub model: AttackModel,
    /// Evaluation rows with their ground-truth flags.
    pub eval: LabeledFeatures,
    pub scores: Vec<f64>,
    pub roc: RocCurve,
    pub auc: f64,
}

impl AttackOutcome {
    fn new(model: AttackModel, eval: LabeledFeatures) -> Result<Self> {
        let scores = score_membership(&model, &eval)?;
        let roc = roc_curve(&scores, &eval.flags)?;
        Ok(Self {
            kind: model.kind,
            auc: auc(&roc),
            model,
            eval,
            scores,
            roc,
        })
    }
}

/// Shadow-model attack. Shadow `k` of `shadows` must have been trained on
/// `layout.shadows[k].train`. All feature passes use the raw records in
/// `data`, whatever the models were trained on.
pub fn run_bb_attack(
    data: &Dataset,
    layout: &AttackDataLayout,
    target: &Network,
    shadows: &[Network],
    config: &AttackTrainConfig,
    seed: u64,
    trace: &mut FeatureTrace,
) -> Result<AttackOutcome> {
    if shadows.is_empty() {
        return Err(Error::InvalidParameter(
            "black-box attack needs at least one shadow".into(),
        ));
    }
    if shadows.len() > layout.shadows.len() {
        return Err(Error::InvalidParameter(format!(
            "{} shadow models but only {} shadow splits",
            shadows.len(),
            layout.shadows.len()
        )));
    }
    let parts = shadows
        .iter()
        .zip(&layout.shadows)
        .map(|(net, split)| {
            labeled_features(
                net,
                data,
                &split.train,
                &split.test,
                FeatureView::BlackBox,
                trace,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let train_rows = LabeledFeatures::concat(&parts)?;
    let model = train_bb_attack(
        &train_rows,
        data.num_classes(),
        config,
        derive_seed(seed, BB_STREAM),
    )?;
    let eval = labeled_features(
        target,
        data,
        &layout.target_train,
        &layout.target_test,
        FeatureView::BlackBox,
        trace,
    )?;
    AttackOutcome::new(model, eval)
}

/// White-box attack trained on a known fraction of the target's members and
/// non-members and evaluated on the remaining halves.
pub fn run_wb_attack(
    data: &Dataset,
    layout: &AttackDataLayout,
    target: &Network,
    known_fraction: f64,
    config: &AttackTrainConfig,
    seed: u64,
    trace: &mut FeatureTrace,
) -> Result<AttackOutcome> {
    if !(known_fraction > 0.0 && known_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "known fraction must lie in (0, 1), got {known_fraction}"
        )));
    }
    let (known_in, unknown_in) = split_fraction(
        &layout.target_train,
        known_fraction,
        derive_seed(seed, WB_MEMBER_STREAM),
    );
    let (known_out, unknown_out) = split_fraction(
        &layout.target_test,
        known_fraction,
        derive_seed(seed, WB_NON_MEMBER_STREAM),
    );
    let train_rows = labeled_features(
        target,
        data,
        &known_in,
        &known_out,
        FeatureView::WhiteBox,
        trace,
    )?;
    let model = train_wb_attack(&train_rows, config, derive_seed(seed, WB_FIT_STREAM))?;
    let eval = labeled_features(
        target,
        data,
        &unknown_in,
        &unknown_out,
        FeatureView::WhiteBox,
        trace,
    )?;
    AttackOutcome::new(model, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{
        train_model, train_shadows, LdpMechanism, LdpParams, ModelConfig, PrivacyMode,
    };
    use crate::data::{gen_unbalanced_carts, partition_attack_data, CartSpec, SplitOptions};
    use crate::mechanisms::rr_budget;
    use crate::nn::{Matrix, OptimizerConfig};

    fn carts(records: usize, seed: u64) -> Dataset {
        gen_unbalanced_carts(&CartSpec {
            classes: 4,
            records,
            width: 40,
            gamma: 0.5,
            strength: 0.6,
            seed,
        })
        .unwrap()
    }

    fn overfit_config() -> ModelConfig {
        ModelConfig {
            hidden: vec![64],
            optimizer: OptimizerConfig::adam(0.01),
            batch_size: 16,
            epochs: 40,
            early_stopping: None,
        }
    }

    fn fast_attack() -> AttackTrainConfig {
        AttackTrainConfig {
            epochs: 30,
            ..AttackTrainConfig::default()
        }
    }

    #[test]
    fn constant_and_oracle_attacks() {
        let rows = LabeledFeatures {
            record_ids: vec![0, 1, 2, 3],
            classes: vec![0, 1, 0, 1],
            flags: vec![true, true, false, false],
            features: Matrix::zeros(4, 2),
        };
        let constant = AttackModel {
            kind: AttackKind::Bb,
            classifiers: vec![MembershipClassifier::Constant; 2],
        };
        let s = score_membership(&constant, &rows).unwrap();
        assert_eq!(auc(&roc_curve(&s, &rows.flags).unwrap()), 0.5);
        assert_eq!(constant.fallback_classes(), vec![0, 1]);
        let oracle: Vec<f64> = rows.flags.iter().map(|&f| f64::from(u8::from(f))).collect();
        assert_eq!(auc(&roc_curve(&oracle, &rows.flags).unwrap()), 1.0);
    }

    #[test]
    fn unbalanced_evaluation_rejected() {
        let rows = LabeledFeatures {
            record_ids: vec![0, 1, 2],
            classes: vec![0; 3],
            flags: vec![true, true, false],
            features: Matrix::zeros(3, 1),
        };
        let m = AttackModel {
            kind: AttackKind::Wb,
            classifiers: vec![MembershipClassifier::Constant],
        };
        assert!(matches!(
            score_membership(&m, &rows),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn evaluation_sizes_and_coverage() {
        let data = carts(400, 1);
        let layout = partition_attack_data(&data, &SplitOptions::new(60, 2, 3)).unwrap();
        let cfg = ModelConfig {
            epochs: 3,
            ..overfit_config()
        };
        let target = train_model(
            &data.subset(&layout.target_train).unwrap(),
            &data.subset(&layout.target_test).unwrap(),
            &cfg,
            &PrivacyMode::None,
            1,
        )
        .unwrap();
        let shadows = train_shadows(&data, &layout, &cfg, &PrivacyMode::None, 1, 2).unwrap();
        let nets: Vec<Network> = shadows.into_iter().map(|m| m.net).collect();
        let mut trace = FeatureTrace::default();
        let attack = fast_attack();
        let bb = run_bb_attack(&data, &layout, &target.net, &nets, &attack, 5, &mut trace).unwrap();
        assert_eq!(bb.eval.len(), 120);
        let mut members: Vec<usize> = bb
            .eval
            .record_ids
            .iter()
            .zip(&bb.eval.flags)
            .filter(|p| *p.1)
            .map(|p| *p.0)
            .collect();
        members.sort_unstable();
        let mut expect = layout.target_train.clone();
        expect.sort_unstable();
        assert_eq!(members, expect);
        assert_eq!(bb.model.classifiers.len(), 4);
        assert!(bb.scores.iter().all(|s| (0.0..=1.0).contains(s)));

        let wb = run_wb_attack(&data, &layout, &target.net, 0.5, &attack, 5, &mut trace).unwrap();
        assert_eq!(wb.eval.len(), 60);
        // Known and unknown halves never share a record.
        let known: Vec<usize> = {
            let (a, _) =
                split_fraction(&layout.target_train, 0.5, derive_seed(5, WB_MEMBER_STREAM));
            a
        };
        assert!(wb.eval.record_ids.iter().all(|i| !known.contains(i)));
    }

    #[test]
    fn missing_class_falls_back() {
        let rows = LabeledFeatures {
            record_ids: (0..8).collect(),
            classes: vec![0; 8],
            flags: vec![true, false, true, false, true, false, true, false],
            features: Matrix::from_vec(8, 1, (0..8).map(f64::from).collect()).unwrap(),
        };
        let m = train_bb_attack(&rows, 3, &fast_attack(), 1).unwrap();
        assert_eq!(m.fallback_classes(), vec![1, 2]);
    }

    #[test]
    fn ldp_features_come_from_raw_records() {
        let data = carts(300, 2);
        let layout = partition_attack_data(&data, &SplitOptions::new(50, 1, 4)).unwrap();
        let mode = PrivacyMode::Ldp(LdpParams {
            mechanism: LdpMechanism::Rr,
            epsilon_i: rr_budget(0.9).unwrap(),
        });
        let cfg = ModelConfig {
            epochs: 2,
            ..overfit_config()
        };
        let train = data.subset(&layout.target_train).unwrap();
        let target = train_model(
            &train,
            &data.subset(&layout.target_test).unwrap(),
            &cfg,
            &mode,
            3,
        )
        .unwrap();
        assert_ne!(target.trained_on, train.digest());
        let shadows = train_shadows(&data, &layout, &cfg, &mode, 3, 1).unwrap();
        let shadow_train = data.subset(&layout.shadows[0].train).unwrap();
        assert_ne!(shadows[0].trained_on, shadow_train.digest());

        let mut trace = FeatureTrace::default();
        let nets = vec![shadows[0].net.clone()];
        run_bb_attack(
            &data,
            &layout,
            &target.net,
            &nets,
            &fast_attack(),
            1,
            &mut trace,
        )
        .unwrap();
        let expected: Vec<u64> = [
            &layout.shadows[0].train,
            &layout.shadows[0].test,
            &layout.target_train,
            &layout.target_test,
        ]
        .iter()
        .map(|ids| data.subset(ids).unwrap().digest())
        .collect();
        assert_eq!(trace.digests(), expected);
    }

    #[test]
    fn overfit_target_leaks_membership() {
        let data = carts(1200, 3);
        let layout = partition_attack_data(&data, &SplitOptions::new(150, 3, 6)).unwrap();
        let cfg = overfit_config();
        let target = train_model(
            &data.subset(&layout.target_train).unwrap(),
            &data.subset(&layout.target_test).unwrap(),
            &cfg,
            &PrivacyMode::None,
            9,
        )
        .unwrap();
        let shadows = train_shadows(&data, &layout, &cfg, &PrivacyMode::None, 9, 3).unwrap();
        let nets: Vec<Network> = shadows.into_iter().map(|m| m.net).collect();
        let mut trace = FeatureTrace::default();
        let bb = run_bb_attack(
            &data,
            &layout,
            &target.net,
            &nets,
            &fast_attack(),
            2,
            &mut trace,
        )
        .unwrap();
        assert!(bb.auc > 0.55, "bb auc {}", bb.auc);
        let wb = run_wb_attack(
            &data,
            &layout,
            &target.net,
            0.5,
            &fast_attack(),
            2,
            &mut trace,
        )
        .unwrap();
        assert!(wb.auc > 0.55, "wb auc {}", wb.auc);
    }
}
