//! CSV persistence: header `label,f0,f1,...`, one record per row. Image
//! datasets carry a sidecar JSON (`<name>.json`) with `side` and `classes`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub side: usize,
    pub classes: Vec<String>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_csv_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.width()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let mut row = Vec::with_capacity(data.width() + 1);
    for i in 0..data.len() {
        row.clear();
        row.push(data.label_names()[data.label(i)].clone());
        // `{}` on f64 prints the shortest string that parses back exactly.
        row.extend(data.record(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    if let FeatureKind::Image { side } = data.kind() {
        let meta = ImageMeta {
            side,
            classes: data.label_names().to_vec(),
        };
        let side_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&side_path, e))?;
        std::fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))?;
    }
    Ok(())
}

pub fn read_image_meta(csv_path: &Path) -> Result<ImageMeta> {
    let p = sidecar_path(csv_path);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&p, e))
}

/// Orders label strings numerically when all parse as numbers, otherwise
/// lexicographically.
fn sort_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = labels.into_iter().collect();
    let numeric: Option<Vec<f64>> = v.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(v).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        v = paired.into_iter().map(|(_, s)| s).collect();
    }
    v
}

/// Loads a dataset from CSV. Labels are re-indexed densely in sorted order
/// (the original strings are kept as label names). For images, class names
/// listed in the sidecar fix the index order.
///
/// Row numbers in errors count the header as row 1.
pub fn load_csv_dataset(path: &Path, label_column: &str, kind: FeatureKind) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: format!("no label column `{label_column}` in header"),
        })?;
    let names: Vec<&str> = headers.iter().collect();
    let width = headers.len() - 1;

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("{} fields, header has {}", rec.len(), headers.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(cell.trim().to_string());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("column `{}`: `{cell}` is not a number", names[j]),
            })?;
            let bad = match kind {
                FeatureKind::Binary => (v != 0.0 && v != 1.0).then_some("expected 0 or 1"),
                FeatureKind::Image { .. } => {
                    (!(0.0..=255.0).contains(&v)).then_some("pixel outside [0, 255]")
                }
                FeatureKind::Real => (!v.is_finite()).then_some("not finite"),
            };
            if let Some(why) = bad {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("column `{}`: `{cell}` {why}", names[j]),
                });
            }
            features.push(v);
        }
    }

    let label_names = match kind {
        FeatureKind::Image { .. } if sidecar_path(path).exists() => read_image_meta(path)?.classes,
        _ => sort_labels(raw_labels.iter().cloned().collect()),
    };
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            label_names
                .iter()
                .position(|n| n == l)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: k + 2,
                    message: format!("label `{l}` not among the declared classes"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    if label_names.is_empty() {
        return Err(Error::Empty(format!("{}: no records", path.display())));
    }
    Dataset::with_label_names(features, width, labels, kind, label_names)
}

/// Loads an image CSV whose side length comes from the sidecar.
pub fn load_image_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let meta = read_image_meta(path)?;
    load_csv_dataset(path, label_column, FeatureKind::Image { side: meta.side })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn dense_reindex() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "label,f0\n5,1\n9,0\n5,1\n");
        let ds = load_csv_dataset(&p, "label", FeatureKind::Binary).unwrap();
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.label_names(), &["5".to_string(), "9".to_string()]);
        // Numeric order, not string order.
        let p = write(dir.path(), "b.csv", "label,f0\n10,1\n9,0\n");
        let ds = load_csv_dataset(&p, "label", FeatureKind::Binary).unwrap();
        assert_eq!(ds.label_names(), &["9".to_string(), "10".to_string()]);
    }

    #[test]
    fn errors_name_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "label,f0,f1\n0,1,0\n1,0,2\n");
        let err = load_csv_dataset(&p, "label", FeatureKind::Binary).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("f1"), "{msg}");

        let p = write(dir.path(), "b.csv", "label,f0\n0,1\n1\n");
        assert!(load_csv_dataset(&p, "label", FeatureKind::Real)
            .unwrap_err()
            .to_string()
            .contains("row 3"));
        let p = write(dir.path(), "c.csv", "label,f0\n0,x\n");
        assert!(matches!(
            load_csv_dataset(&p, "label", FeatureKind::Real),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(matches!(
            load_csv_dataset(&p, "class", FeatureKind::Real),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn label_column_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "f0,y,f1\n0.5,b,1.5\n2.5,a,3.5\n");
        let ds = load_csv_dataset(&p, "y", FeatureKind::Real).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.record(0), &[0.5, 1.5]);
    }

    #[test]
    fn image_round_trip_uses_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::with_label_names(
            vec![0.0, 255.0, 12.5, 3.0, 1.0, 2.0, 3.0, 4.0],
            4,
            vec![1, 0],
            FeatureKind::Image { side: 2 },
            vec!["zeta".into(), "alpha".into()],
        )
        .unwrap();
        let p = dir.path().join("img.csv");
        save_csv_dataset(&ds, &p).unwrap();
        assert_eq!(read_image_meta(&p).unwrap().side, 2);
        assert_eq!(load_image_csv(&p, "label").unwrap(), ds);
    }
}
