//! Experiment configuration (one JSON file per experiment).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackKind, AttackTrainConfig, LdpParams, ModelConfig, PrivacyMode};
use crate::data::{
    gen_gray_images, gen_skewed_purchases, gen_unbalanced_carts, load_csv_dataset, load_image_csv,
    CartSpec, Dataset, FeatureKind, GraySpec, SkewSpec,
};
use crate::dp::CdpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvKind {
    Binary,
    Real,
    /// Side length and class order come from the `<name>.json` sidecar.
    Image,
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Train and test domains generated separately; target train comes from
    /// the first, target test from the second.
    Skewed(SkewSpec),
    Carts(CartSpec),
    Gray(GraySpec),
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        kind: CsvKind,
    },
}

/// A dataset ready for splitting.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub name: String,
    pub data: Dataset,
    /// Lengths of the train and test domains for two-domain datasets.
    pub domains: Option<(usize, usize)>,
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Skewed(_) => "skewed".into(),
            DatasetSpec::Carts(_) => "carts".into(),
            DatasetSpec::Gray(_) => "gray".into(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn load(&self) -> Result<LoadedData> {
        let (data, domains) = match self {
            DatasetSpec::Skewed(spec) => {
                let (train, test) = gen_skewed_purchases(spec)?;
                let domains = (train.len(), test.len());
                let mut features = train.features().to_vec();
                features.extend_from_slice(test.features());
                let mut labels = train.labels().to_vec();
                labels.extend_from_slice(test.labels());
                let data = Dataset::with_label_names(
                    features,
                    train.width(),
                    labels,
                    train.kind(),
                    train.label_names().to_vec(),
                )?;
                (data, Some(domains))
            }
            DatasetSpec::Carts(spec) => (gen_unbalanced_carts(spec)?, None),
            DatasetSpec::Gray(spec) => (gen_gray_images(spec)?, None),
            DatasetSpec::Csv {
                path,
                label_column,
                kind,
            } => {
                let data = match kind {
                    CsvKind::Binary => load_csv_dataset(path, label_column, FeatureKind::Binary)?,
                    CsvKind::Real => load_csv_dataset(path, label_column, FeatureKind::Real)?,
                    CsvKind::Image => load_image_csv(path, label_column)?,
                };
                (data, None)
            }
        };
        Ok(LoadedData {
            name: self.name(),
            data,
            domains,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackSelection {
    Bb,
    Wb,
    #[default]
    Both,
}

impl AttackSelection {
    pub fn kinds(self) -> Vec<AttackKind> {
        match self {
            AttackSelection::Bb => vec![AttackKind::Bb],
            AttackSelection::Wb => vec![AttackKind::Wb],
            AttackSelection::Both => vec![AttackKind::Bb, AttackKind::Wb],
        }
    }
}

/// Grid over exactly one privacy parameter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub epsilon_i: Option<Vec<f64>>,
    #[serde(default)]
    pub z: Option<Vec<f64>>,
}

fn default_shadows() -> usize {
    10
}
fn default_known_fraction() -> f64 {
    0.5
}
fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Key under which rows are stored in `results.csv`.
    pub id: String,
    pub dataset: DatasetSpec,
    /// Records in each of target train and target test.
    pub target_size: usize,
    /// Records in each shadow train / test set; defaults to `target_size`.
    #[serde(default)]
    pub shadow_size: Option<usize>,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_privacy")]
    pub privacy: PrivacyMode,
    #[serde(default)]
    pub attacks: AttackSelection,
    #[serde(default = "default_shadows")]
    pub shadows: usize,
    #[serde(default = "default_known_fraction")]
    pub wb_known_fraction: f64,
    #[serde(default)]
    pub attack_model: AttackTrainConfig,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Write attack evaluation features per repeat.
    #[serde(default)]
    pub dump_features: bool,
}

fn default_privacy() -> PrivacyMode {
    PrivacyMode::None
}

/// One privacy setting to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mode: PrivacyMode,
    /// Swept value (`epsilon_i` or `z`); `None` for the reference.
    pub parameter: Option<f64>,
}

impl ExperimentConfig {
    /// Reads a config and resolves a relative CSV path against the config's
    /// directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if let DatasetSpec::Csv { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return bad(format!(
                "experiment id `{}` must be non-empty and use only [A-Za-z0-9._-]",
                self.id
            ));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.target_size == 0 {
            return bad("target_size must be positive".into());
        }
        if self.model.epochs == 0 || self.model.batch_size == 0 {
            return bad("model epochs and batch_size must be positive".into());
        }
        self.model.optimizer.validate()?;
        self.attack_model.validate()?;
        if self.attacks != AttackSelection::Wb && self.shadows == 0 {
            return bad("black-box attack needs at least one shadow model".into());
        }
        if !(self.wb_known_fraction > 0.0 && self.wb_known_fraction < 1.0) {
            return bad(format!(
                "wb_known_fraction must lie in (0, 1), got {}",
                self.wb_known_fraction
            ));
        }
        match &self.dataset {
            DatasetSpec::Skewed(s) => s.validate()?,
            DatasetSpec::Carts(s) => s.validate()?,
            DatasetSpec::Gray(_) => {}
            DatasetSpec::Csv { path, .. } => {
                if !path.is_file() {
                    return bad(format!("dataset file {} does not exist", path.display()));
                }
            }
        }
        for p in self.grid()? {
            p.mode.validate()?;
        }
        Ok(())
    }

    /// The reference run followed by every privacy setting to evaluate.
    /// Without a sweep the configured mode is the single grid point.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let mut points = vec![GridPoint {
            mode: PrivacyMode::None,
            parameter: None,
        }];
        let sweep = match &self.sweep {
            None => {
                match self.privacy {
                    PrivacyMode::None => {}
                    mode => points.push(GridPoint {
                        mode,
                        parameter: mode_parameter(&mode),
                    }),
                }
                return Ok(points);
            }
            Some(s) => s,
        };
        match (&sweep.epsilon_i, &sweep.z) {
            (Some(_), Some(_)) => Err(Error::Config(
                "sweep over both epsilon_i and z; choose one".into(),
            )),
            (None, None) => Err(Error::Config("sweep has no grid".into())),
            (Some(values), None) => {
                let PrivacyMode::Ldp(base) = self.privacy else {
                    return Err(Error::Config(
                        "an epsilon_i sweep needs an ldp privacy template".into(),
                    ));
                };
                nonempty(values)?;
                points.extend(values.iter().map(|&e| GridPoint {
                    mode: PrivacyMode::Ldp(LdpParams {
                        epsilon_i: e,
                        ..base
                    }),
                    parameter: Some(e),
                }));
                Ok(points)
            }
            (None, Some(values)) => {
                let PrivacyMode::Cdp(base) = self.privacy else {
                    return Err(Error::Config(
                        "a z sweep needs a cdp privacy template".into(),
                    ));
                };
                nonempty(values)?;
                points.extend(values.iter().map(|&z| GridPoint {
                    mode: PrivacyMode::Cdp(CdpParams {
                        noise_multiplier: z,
                        ..base
                    }),
                    parameter: Some(z),
                }));
                Ok(points)
            }
        }
    }
}

fn nonempty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        Err(Error::Config("sweep grid is empty".into()))
    } else {
        Ok(())
    }
}

fn mode_parameter(mode: &PrivacyMode) -> Option<f64> {
    match mode {
        PrivacyMode::None => None,
        PrivacyMode::Ldp(p) => Some(p.epsilon_i),
        PrivacyMode::Cdp(c) => Some(c.noise_multiplier),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "id": "t1",
        "dataset": {"generator": "carts", "classes": 3, "records": 90, "width": 12},
        "target_size": 20,
        "privacy": {"mode": "ldp", "mechanism": "rr", "epsilon_i": 1.0},
        "sweep": {"epsilon_i": [0.5, 2.0]}
    }"#;

    #[test]
    fn defaults_and_grid() {
        let cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.repeats, 5);
        assert_eq!(cfg.shadows, 10);
        assert_eq!(cfg.attacks, AttackSelection::Both);
        assert_eq!(cfg.wb_known_fraction, 0.5);
        cfg.validate().unwrap();
        let g = cfg.grid().unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].mode, PrivacyMode::None);
        assert_eq!(g[2].parameter, Some(2.0));
    }

    #[test]
    fn rejects_bad_sweeps() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.sweep = Some(SweepSpec {
            epsilon_i: Some(vec![1.0]),
            z: Some(vec![2.0]),
        });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.sweep = Some(SweepSpec {
            epsilon_i: None,
            z: Some(vec![2.0]),
        });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.sweep = None;
        cfg.repeats = 0;
        assert!(cfg.validate().unwrap_err().is_validation());
    }

    #[test]
    fn rejects_unknown_fields_and_missing_files() {
        let text = MINIMAL.replace("\"target_size\"", "\"target_sise\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.dataset = DatasetSpec::Csv {
            path: "/nonexistent/data.csv".into(),
            label_column: "label".into(),
            kind: CsvKind::Binary,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn skewed_dataset_keeps_domains() {
        let spec = DatasetSpec::Skewed(SkewSpec {
            width: 20,
            ..SkewSpec::new(2, 30, 1)
        });
        let loaded = spec.load().unwrap();
        assert_eq!(loaded.domains, Some((30, 30)));
        assert_eq!(loaded.data.len(), 60);
        assert_eq!(loaded.name, "skewed");
    }
}
