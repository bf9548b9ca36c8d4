//! Attack feature extraction.
//!
//! Extractors take a model and records only; membership flags are attached
//! afterwards from split bookkeeping, so they can never leak into features.

use std::path::Path;

use crate::data::{batch_digest, Dataset};
use crate::error::{Error, Result};
use crate::nn::{l2_norm, Matrix, Network};

/// Black-box view: the softmax output for each record.
pub fn extract_bb_features(net: &Network, records: &Dataset) -> Result<Matrix> {
    Ok(net.forward(&records.to_batch())?.softmax)
}

/// Width of a white-box feature row for `classes` outputs.
pub fn wb_width(classes: usize) -> usize {
    3 * classes + 2
}

/// White-box view per record: one-hot label, softmax, cross-entropy loss,
/// L2 norm of the final layer's gradient, and the norm of each of its
/// output rows (weights and bias of that unit).
pub fn extract_wb_features(net: &Network, records: &Dataset) -> Result<Matrix> {
    let batch = records.to_batch();
    let probs = net.forward(&batch)?.softmax;
    let pe = net.per_example_grads(&batch)?;
    let last = net.layer_shapes()[net.num_layers() - 1];
    let k = net.num_classes();
    let mut out = Matrix::zeros(records.len(), wb_width(k));
    for i in 0..records.len() {
        let row = out.row_mut(i);
        row[records.label(i)] = 1.0;
        row[k..2 * k].copy_from_slice(probs.row(i));
        row[2 * k] = pe.losses[i];
        let g = &pe.grads[i];
        let gw = &g[last.weight_range()];
        let gb = &g[last.bias_range()];
        row[2 * k + 1] = l2_norm(&g[last.param_range()]);
        for j in 0..k {
            let w = &gw[j * last.inputs..(j + 1) * last.inputs];
            row[2 * k + 2 + j] = (l2_norm(w).powi(2) + gb[j] * gb[j]).sqrt();
        }
    }
    Ok(out)
}

/// Feature rows joined with their bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    /// Index of each record in the source dataset.
    pub record_ids: Vec<usize>,
    pub classes: Vec<usize>,
    pub flags: Vec<bool>,
    pub features: Matrix,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Concatenates row sets of equal width.
    pub fn concat(parts: &[LabeledFeatures]) -> Result<LabeledFeatures> {
        let width = parts.first().map_or(0, |p| p.features.cols());
        let mut out = LabeledFeatures {
            record_ids: Vec::new(),
            classes: Vec::new(),
            flags: Vec::new(),
            features: Matrix::zeros(0, width),
        };
        let mut data = Vec::new();
        for p in parts {
            if p.features.cols() != width {
                return Err(Error::Shape("feature blocks differ in width".into()));
            }
            out.record_ids.extend(&p.record_ids);
            out.classes.extend(&p.classes);
            out.flags.extend(&p.flags);
            data.extend_from_slice(p.features.as_slice());
        }
        out.features = Matrix::from_vec(out.flags.len(), width, data)?;
        Ok(out)
    }

    /// Rows whose class is `c`.
    pub fn of_class(&self, c: usize) -> LabeledFeatures {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.classes[i] == c).collect();
        self.select(&keep)
    }

    pub fn select(&self, rows: &[usize]) -> LabeledFeatures {
        let mut data = Vec::with_capacity(rows.len() * self.features.cols());
        for &i in rows {
            data.extend_from_slice(self.features.row(i));
        }
        LabeledFeatures {
            record_ids: rows.iter().map(|&i| self.record_ids[i]).collect(),
            classes: rows.iter().map(|&i| self.classes[i]).collect(),
            flags: rows.iter().map(|&i| self.flags[i]).collect(),
            features: Matrix::from_vec(rows.len(), self.features.cols(), data)
                .expect("rows copied at full width"),
        }
    }

    /// CSV dump: `record_id,class,flag,f0,...` with flag `in` / `out`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["record_id".to_string(), "class".into(), "flag".into()];
        header.extend((0..self.features.cols()).map(|j| format!("f{j}")));
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for i in 0..self.len() {
            let mut row = vec![
                self.record_ids[i].to_string(),
                self.classes[i].to_string(),
                if self.flags[i] { "in" } else { "out" }.to_string(),
            ];
            row.extend(self.features.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Which extractor to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureView {
    BlackBox,
    WhiteBox,
}

/// Log of every record set handed to an extractor, for protocol audits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureTrace {
    pub inputs: Vec<TracedInput>,
}

impl FeatureTrace {
    pub fn digests(&self) -> Vec<u64> {
        self.inputs.iter().map(|t| t.digest).collect()
    }
}

/// One record set handed to feature extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracedInput {
    /// Indices into the raw dataset.
    pub record_ids: Vec<usize>,
    /// Digest of the records as they were read.
    pub digest: u64,
}

/// Extracts features for `members` (flag in) followed by `non_members`
/// (flag out), both given as indices into the raw dataset `data`.
pub fn labeled_features(
    net: &Network,
    data: &Dataset,
    members: &[usize],
    non_members: &[usize],
    view: FeatureView,
    trace: &mut FeatureTrace,
) -> Result<LabeledFeatures> {
    let mut parts = Vec::with_capacity(2);
    for (ids, flag) in [(members, true), (non_members, false)] {
        let records = data.subset(ids)?;
        trace.inputs.push(TracedInput {
            record_ids: ids.to_vec(),
            digest: batch_digest(&records.to_batch()),
        });
        let features = match view {
            FeatureView::BlackBox => extract_bb_features(net, &records)?,
            FeatureView::WhiteBox => extract_wb_features(net, &records)?,
        };
        parts.push(LabeledFeatures {
            record_ids: ids.to_vec(),
            classes: records.labels().to_vec(),
            flags: vec![flag; ids.len()],
            features,
        });
    }
    LabeledFeatures::concat(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureKind;
    use crate::rng::seeded;

    fn toy() -> (Network, Dataset) {
        let net = Network::new(&[3, 5, 4], &mut seeded(1)).unwrap();
        let data = Dataset::new(
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            3,
            vec![0, 3, 2, 1],
            4,
            FeatureKind::Binary,
        )
        .unwrap();
        (net, data)
    }

    #[test]
    fn bb_rows_are_probability_vectors() {
        let (net, data) = toy();
        let f = extract_bb_features(&net, &data).unwrap();
        assert_eq!(f.cols(), 4);
        for r in f.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wb_rows_match_network_quantities() {
        let (net, data) = toy();
        let f = extract_wb_features(&net, &data).unwrap();
        assert_eq!(f.cols(), wb_width(4));
        let pe = net.per_example_grads(&data.to_batch()).unwrap();
        let last = net.layer_shapes()[1];
        for i in 0..data.len() {
            let r = f.row(i);
            assert_eq!(r[data.label(i)], 1.0);
            assert_eq!(r[..4].iter().sum::<f64>(), 1.0);
            assert_eq!(r[8], pe.losses[i]);
            // Row norms partition the final-layer gradient.
            let total: f64 = r[10..14].iter().map(|v| v * v).sum();
            let direct: f64 = pe.grads[i][last.param_range()].iter().map(|v| v * v).sum();
            assert!((total - direct).abs() < 1e-12);
            assert!((r[9] - direct.sqrt()).abs() < 1e-12);
            assert!(r.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn well_fit_record_has_small_loss_and_gradient() {
        // Output bias strongly favours class 0.
        let sizes = [2, 2];
        let mut params = vec![0.0; 6];
        params[4] = 30.0;
        let net = Network::from_params(&sizes, params).unwrap();
        let data = Dataset::new(vec![1.0, 0.0], 2, vec![0], 2, FeatureKind::Real).unwrap();
        let f = extract_wb_features(&net, &data).unwrap();
        assert!(f.row(0)[4] < 1e-12 && f.row(0)[5] < 1e-12);
    }

    #[test]
    fn flags_follow_bookkeeping_and_dump_has_header() {
        let (net, data) = toy();
        let mut trace = FeatureTrace::default();
        let rows = labeled_features(
            &net,
            &data,
            &[2, 0],
            &[1, 3],
            FeatureView::BlackBox,
            &mut trace,
        )
        .unwrap();
        assert_eq!(rows.flags, vec![true, true, false, false]);
        assert_eq!(rows.record_ids, vec![2, 0, 1, 3]);
        assert_eq!(rows.classes, vec![2, 0, 3, 1]);
        assert_eq!(trace.inputs.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        rows.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("record_id,class,flag,f0,f1,f2,f3"));
        assert!(lines.next().unwrap().starts_with("2,2,in,"));
        assert_eq!(text.lines().count(), 5);
    }
}
