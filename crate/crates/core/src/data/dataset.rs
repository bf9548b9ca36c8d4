use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Every feature is 0 or 1.
    Binary,
    Real,
    /// Square grayscale images, flattened row-major, values in [0, 255].
    Image {
        side: usize,
    },
}

/// Labeled records with a uniform feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    width: usize,
    labels: Vec<usize>,
    num_classes: usize,
    kind: FeatureKind,
    /// Original label for each dense class index.
    label_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        width: usize,
        labels: Vec<usize>,
        num_classes: usize,
        kind: FeatureKind,
    ) -> Result<Self> {
        let names = (0..num_classes).map(|c| c.to_string()).collect();
        Self::with_label_names(features, width, labels, kind, names)
    }

    pub fn with_label_names(
        features: Vec<f64>,
        width: usize,
        labels: Vec<usize>,
        kind: FeatureKind,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let num_classes = label_names.len();
        if num_classes == 0 {
            return Err(Error::InvalidParameter(
                "a dataset needs at least one class".into(),
            ));
        }
        if features.len() != width * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} records of width {width}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        match kind {
            FeatureKind::Binary => {
                if let Some(pos) = features.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "record {} feature {} is {}, expected 0 or 1",
                        pos / width.max(1),
                        pos % width.max(1),
                        features[pos]
                    )));
                }
            }
            FeatureKind::Image { side } => {
                if side * side != width {
                    return Err(Error::Shape(format!(
                        "image side {side} does not match feature width {width}"
                    )));
                }
                if let Some(&v) = features.iter().find(|&&v| !(0.0..=255.0).contains(&v)) {
                    return Err(Error::InvalidParameter(format!(
                        "pixel value {v} outside [0, 255]"
                    )));
                }
            }
            FeatureKind::Real => {
                if features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("dataset feature".into()));
                }
            }
        }
        Ok(Self {
            features,
            width,
            labels,
            num_classes,
            kind,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn record(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Records at `indices`, in that order. Class count and label names are
    /// kept even if some classes are absent from the subset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidParameter(format!(
                    "record index {i} out of range for {} records",
                    self.len()
                )));
            }
            features.extend_from_slice(self.record(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            features,
            width: self.width,
            labels,
            num_classes: self.num_classes,
            kind: self.kind,
            label_names: self.label_names.clone(),
        })
    }

    /// Same labels, replaced feature values (e.g. after local perturbation).
    pub fn with_features(&self, features: Vec<f64>) -> Result<Dataset> {
        Dataset::with_label_names(
            features,
            self.width,
            self.labels.clone(),
            self.kind,
            self.label_names.clone(),
        )
    }

    pub fn to_batch(&self) -> Batch {
        Batch {
            inputs: Matrix::from_vec(self.len(), self.width, self.features.clone())
                .expect("dataset invariant: features fill len x width"),
            labels: self.labels.clone(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut data = Vec::with_capacity(indices.len() * self.width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.record(i));
            labels.push(self.labels[i]);
        }
        Batch {
            inputs: Matrix::from_vec(indices.len(), self.width, data)
                .expect("rows were copied at full width"),
            labels,
        }
    }

    /// Order-sensitive fingerprint of features and labels.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.width.hash(&mut h);
        for v in &self.features {
            v.to_bits().hash(&mut h);
        }
        self.labels.hash(&mut h);
        h.finish()
    }
}

/// Order-sensitive fingerprint of a batch's inputs and labels; matches
/// [`Dataset::digest`] for `dataset.to_batch()`.
pub fn batch_digest(batch: &Batch) -> u64 {
    let mut h = DefaultHasher::new();
    batch.inputs.cols().hash(&mut h);
    for v in batch.inputs.as_slice() {
        v.to_bits().hash(&mut h);
    }
    batch.labels.hash(&mut h);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_values() {
        let err = Dataset::new(vec![0.0, 2.0], 2, vec![0], 2, FeatureKind::Binary).unwrap_err();
        assert!(err.to_string().contains("feature 1"));
    }

    #[test]
    fn subset_and_digest() {
        let ds = Dataset::new(
            vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            2,
            vec![0, 1, 1],
            2,
            FeatureKind::Binary,
        )
        .unwrap();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.record(0), &[0.0, 0.0]);
        assert_eq!(sub.labels(), &[1, 0]);
        assert_eq!(sub.digest(), batch_digest(&sub.to_batch()));
        assert_ne!(sub.digest(), ds.digest());
        assert_eq!(ds.class_counts(), vec![1, 2]);
        assert!(ds.subset(&[3]).is_err());
    }
}
