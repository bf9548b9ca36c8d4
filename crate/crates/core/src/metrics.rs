//! ROC analysis and the bounded privacy/accuracy trade-off `phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MI AUC of random guessing.
pub const AUC_BASE: f64 = 0.5;

/// Number of points on the shared FPR grid used to average curves.
pub const MEAN_GRID_POINTS: usize = 101;

/// Integer confusion counts behind an empirical ROC curve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RocCounts {
    pub positives: u64,
    pub negatives: u64,
    /// Cumulative false / true positives per threshold, starting at 0.
    pub fp: Vec<u64>,
    pub tp: Vec<u64>,
}

/// ROC curve from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Present for curves built from scores; absent for averaged curves.
    pub counts: Option<RocCounts>,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.fpr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fpr.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fpr.iter().copied().zip(self.tpr.iter().copied())
    }

    /// The diagonal `(0,0)-(1,1)`.
    pub fn diagonal() -> Self {
        Self {
            fpr: vec![0.0, 1.0],
            tpr: vec![0.0, 1.0],
            counts: None,
        }
    }

    /// TPR at `f` by linear interpolation. Where the curve has a vertical
    /// segment at `f` the highest TPR is used.
    pub fn tpr_at(&self, f: f64) -> f64 {
        // Last index with fpr <= f.
        let hi = self.fpr.partition_point(|&x| x <= f);
        if hi == 0 {
            return self.tpr[0];
        }
        let i = hi - 1;
        if self.fpr[i] == f || i + 1 == self.len() {
            return self.tpr[i];
        }
        let (x0, x1) = (self.fpr[i], self.fpr[i + 1]);
        let (y0, y1) = (self.tpr[i], self.tpr[i + 1]);
        y0 + (y1 - y0) * (f - x0) / (x1 - x0)
    }
}

/// Builds the empirical ROC curve of `scores` against membership `flags`
/// (true = member). Records sharing a score cross the threshold together.
pub fn roc_curve(scores: &[f64], flags: &[bool]) -> Result<RocCurve> {
    if scores.len() != flags.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} flags",
            scores.len(),
            flags.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("membership score".into()));
    }
    let positives = flags.iter().filter(|&&f| f).count() as u64;
    let negatives = flags.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidParameter(
            "ROC needs at least one member and one non-member".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut fp, mut tp) = (vec![0u64], vec![0u64]);
    let (mut f, mut t) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if flags[order[i]] {
                t += 1;
            } else {
                f += 1;
            }
            i += 1;
        }
        fp.push(f);
        tp.push(t);
    }
    let fpr = fp.iter().map(|&v| v as f64 / negatives as f64).collect();
    let tpr = tp.iter().map(|&v| v as f64 / positives as f64).collect();
    Ok(RocCurve {
        fpr,
        tpr,
        counts: Some(RocCounts {
            positives,
            negatives,
            fp,
            tp,
        }),
    })
}

/// Area under the curve by the trapezoid rule.
///
/// Curves built by [`roc_curve`] are integrated on their integer counts, so
/// the result is exactly the Mann-Whitney statistic with half credit for
/// ties.
pub fn auc(curve: &RocCurve) -> f64 {
    if let Some(c) = &curve.counts {
        let mut twice_area: u128 = 0;
        for k in 1..c.fp.len() {
            twice_area += u128::from(c.fp[k] - c.fp[k - 1]) * u128::from(c.tp[k] + c.tp[k - 1]);
        }
        return twice_area as f64 / (2.0 * c.positives as f64 * c.negatives as f64);
    }
    let mut area = 0.0;
    for k in 1..curve.len() {
        area += (curve.fpr[k] - curve.fpr[k - 1]) * (curve.tpr[k] + curve.tpr[k - 1]) / 2.0;
    }
    area
}

/// Convenience: AUC straight from scores and flags.
pub fn auc_from_scores(scores: &[f64], flags: &[bool]) -> Result<f64> {
    Ok(auc(&roc_curve(scores, flags)?))
}

/// `MEAN_GRID_POINTS` evenly spaced FPR values over [0, 1].
pub fn default_fpr_grid() -> Vec<f64> {
    let last = (MEAN_GRID_POINTS - 1) as f64;
    (0..MEAN_GRID_POINTS).map(|i| i as f64 / last).collect()
}

/// Averages curves pointwise on `grid` after linear interpolation.
///
/// Each curve starts at TPR 0 when the grid contains FPR 0, so curves that
/// rise vertically at the origin average to a curve that still passes
/// through `(0, 0)`.
pub fn mean_roc(curves: &[RocCurve], grid: &[f64]) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::Empty("ROC curves to average".into()));
    }
    if grid.is_empty() {
        return Err(Error::Empty("FPR grid".into()));
    }
    if grid.iter().any(|f| !(0.0..=1.0).contains(f)) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "FPR grid must be sorted within [0, 1]".into(),
        ));
    }
    let k = curves.len() as f64;
    let mut tpr = vec![0.0; grid.len()];
    for c in curves {
        if c.is_empty() {
            return Err(Error::Empty("ROC curve".into()));
        }
        for (t, &f) in tpr.iter_mut().zip(grid) {
            *t += if f == 0.0 { 0.0 } else { c.tpr_at(f) };
        }
    }
    tpr.iter_mut().for_each(|t| *t /= k);
    Ok(RocCurve {
        fpr: grid.to_vec(),
        tpr,
        counts: None,
    })
}

/// Bounded relative trade-off, or "not applicable" when the unprotected
/// reference shows no privacy gap to close.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Value(f64),
    NotApplicable,
}

impl Phi {
    pub fn value(self) -> Option<f64> {
        match self {
            Phi::Value(v) => Some(v),
            Phi::NotApplicable => None,
        }
    }
}

impl std::fmt::Display for Phi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phi::Value(v) => write!(f, "{v}"),
            Phi::NotApplicable => f.write_str("n/a"),
        }
    }
}

/// `phi = min(2, max(0, dAUC * (ACC_orig - ACC_base)) / max(0, dACC * (AUC_orig - AUC_base)))`
/// with `ACC_base = 1/classes`, `AUC_base = 0.5`, and 2 when the
/// denominator vanishes.
pub fn phi(
    auc_orig: f64,
    auc_eps: f64,
    acc_orig: f64,
    acc_eps: f64,
    classes: usize,
) -> Result<Phi> {
    for (name, v) in [
        ("AUC_orig", auc_orig),
        ("AUC_eps", auc_eps),
        ("ACC_orig", acc_orig),
        ("ACC_eps", acc_eps),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} outside [0, 1]"
            )));
        }
    }
    if classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "phi needs at least 2 classes, got {classes}"
        )));
    }
    let acc_base = 1.0 / classes as f64;
    if auc_orig <= AUC_BASE || acc_orig <= acc_base {
        return Ok(Phi::NotApplicable);
    }
    let num = ((auc_orig - auc_eps) * (acc_orig - acc_base)).max(0.0);
    let den = ((acc_orig - acc_eps) * (auc_orig - AUC_BASE)).max(0.0);
    if den == 0.0 {
        return Ok(Phi::Value(2.0));
    }
    Ok(Phi::Value((num / den).min(2.0)))
}

/// One privacy setting's outcome for one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRecord {
    pub mode: String,
    pub attack: String,
    /// Swept parameter value (`eps_i` or `z`); `None` for the reference.
    pub parameter: Option<f64>,
    /// Composed or accounted budget; infinite without protection.
    pub epsilon: f64,
    pub test_accuracy: f64,
    pub auc: f64,
    pub phi: Phi,
    pub acc_orig: f64,
    pub auc_orig: f64,
    pub acc_base: f64,
    pub auc_base: f64,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}
