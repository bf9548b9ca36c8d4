//! Result tables on disk and their text summary.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{mean, sample_std, RocCurve, TradeoffRecord};

pub const RESULTS_FILE: &str = "results.csv";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";

pub const RESULT_COLUMNS: [&str; 17] = [
    "experiment_id",
    "dataset",
    "classes",
    "mode",
    "epsilon_i",
    "epsilon",
    "z",
    "clip_norm",
    "repeat",
    "seed",
    "train_accuracy",
    "test_accuracy",
    "attack",
    "auc",
    "phi",
    "status",
    "wall_seconds",
];

/// One (configuration, repeat, attack) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub dataset: String,
    pub classes: usize,
    pub mode: String,
    pub epsilon_i: Option<f64>,
    /// Composed (LDP) or accounted (CDP) budget; infinite without protection.
    pub epsilon: Option<f64>,
    pub z: Option<f64>,
    pub clip_norm: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub attack: String,
    pub auc: Option<f64>,
    pub phi: Option<f64>,
    /// `ok`, or `error: <message>` when the repeat failed.
    pub status: String,
    pub wall_seconds: f64,
}

/// `{}` prints the shortest decimal that parses back to the same value.
pub fn fmt_num(v: Option<f64>) -> String {
    match v {
        None => "n/a".into(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => x.to_string(),
    }
}

pub fn parse_num(s: &str) -> std::result::Result<Option<f64>, String> {
    match s.trim() {
        "n/a" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        "-inf" => Ok(Some(f64::NEG_INFINITY)),
        t => t
            .parse()
            .map(Some)
            .map_err(|_| format!("`{t}` is not a number")),
    }
}

fn mode_rank(mode: &str) -> u8 {
    match mode {
        "none" => 0,
        "ldp" => 1,
        "cdp" => 2,
        _ => 3,
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

impl ResultRow {
    /// Declared sort order of `results.csv`.
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.experiment_id
            .cmp(&other.experiment_id)
            .then(mode_rank(&self.mode).cmp(&mode_rank(&other.mode)))
            .then(cmp_opt(self.epsilon_i, other.epsilon_i))
            .then(cmp_opt(self.z, other.z))
            .then(self.repeat.cmp(&other.repeat))
            .then(self.attack.cmp(&other.attack))
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn to_record(&self) -> Vec<String> {
        vec![
            self.experiment_id.clone(),
            self.dataset.clone(),
            self.classes.to_string(),
            self.mode.clone(),
            fmt_num(self.epsilon_i),
            fmt_num(self.epsilon),
            fmt_num(self.z),
            fmt_num(self.clip_norm),
            self.repeat.to_string(),
            self.seed.to_string(),
            fmt_num(self.train_accuracy),
            fmt_num(self.test_accuracy),
            self.attack.clone(),
            fmt_num(self.auc),
            fmt_num(self.phi),
            self.status.clone(),
            format!("{:.3}", self.wall_seconds),
        ]
    }

    fn from_record(rec: &csv::StringRecord, path: &Path, row: usize) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        if rec.len() != RESULT_COLUMNS.len() {
            return Err(err(format!(
                "{} fields, expected {}",
                rec.len(),
                RESULT_COLUMNS.len()
            )));
        }
        let num =
            |i: usize| parse_num(&rec[i]).map_err(|m| err(format!("{}: {m}", RESULT_COLUMNS[i])));
        let int = |i: usize| {
            rec[i].trim().parse::<u64>().map_err(|_| {
                err(format!(
                    "{}: `{}` is not an integer",
                    RESULT_COLUMNS[i], &rec[i]
                ))
            })
        };
        Ok(Self {
            experiment_id: rec[0].to_string(),
            dataset: rec[1].to_string(),
            classes: int(2)? as usize,
            mode: rec[3].to_string(),
            epsilon_i: num(4)?,
            epsilon: num(5)?,
            z: num(6)?,
            clip_norm: num(7)?,
            repeat: int(8)? as usize,
            seed: int(9)?,
            train_accuracy: num(10)?,
            test_accuracy: num(11)?,
            attack: rec[12].to_string(),
            auc: num(13)?,
            phi: num(14)?,
            status: rec[15].to_string(),
            wall_seconds: num(16)?.unwrap_or(0.0),
        })
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().ne(RESULT_COLUMNS.iter().copied()) {
        let missing: Vec<&str> = RESULT_COLUMNS
            .iter()
            .copied()
            .filter(|c| !headers.iter().any(|h| h == *c))
            .collect();
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: if missing.is_empty() {
                "unexpected header".into()
            } else {
                format!("missing columns: {}", missing.join(", "))
            },
        });
    }
    r.records()
        .enumerate()
        .map(|(k, rec)| {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            ResultRow::from_record(&rec, path, k + 2)
        })
        .collect()
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| Error::csv(&tmp, e))?;
        w.write_record(header).map_err(|e| Error::csv(&tmp, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| Error::csv(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Stores `rows` (all of experiment `id`) in `dir/results.csv`, keeping
/// rows of other experiments. An id already present is refused unless
/// `force`, in which case its old rows are replaced.
pub fn write_results(dir: &Path, id: &str, rows: &[ResultRow], force: bool) -> Result<()> {
    let path = dir.join(RESULTS_FILE);
    let mut all = if path.exists() {
        read_results(&path)?
    } else {
        Vec::new()
    };
    if all.iter().any(|r| r.experiment_id == id) {
        if !force {
            return Err(Error::DuplicateExperiment(id.to_string()));
        }
        all.retain(|r| r.experiment_id != id);
    }
    all.extend(rows.iter().cloned());
    all.sort_by(|a, b| a.cmp_key(b));
    write_rows(&path, &RESULT_COLUMNS, all.iter().map(ResultRow::to_record))
}

/// True when `dir/results.csv` already holds rows of experiment `id`.
pub fn has_experiment(dir: &Path, id: &str) -> Result<bool> {
    let path = dir.join(RESULTS_FILE);
    if !path.exists() {
        return Ok(false);
    }
    Ok(read_results(&path)?.iter().any(|r| r.experiment_id == id))
}

const TRADEOFF_COLUMNS: [&str; 12] = [
    "experiment_id",
    "mode",
    "attack",
    "parameter",
    "epsilon",
    "test_accuracy",
    "auc",
    "phi",
    "acc_orig",
    "auc_orig",
    "acc_base",
    "auc_base",
];

/// Replaces experiment `id`'s rows in `dir/tradeoff.csv`.
pub fn write_tradeoffs(dir: &Path, id: &str, records: &[TradeoffRecord]) -> Result<()> {
    let path = dir.join(TRADEOFF_FILE);
    let mut kept: Vec<Vec<String>> = Vec::new();
    if path.exists() {
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::csv(&path, e))?;
            if &rec[0] != id {
                kept.push(rec.iter().map(str::to_string).collect());
            }
        }
    }
    kept.extend(records.iter().map(|t| {
        vec![
            id.to_string(),
            t.mode.clone(),
            t.attack.clone(),
            fmt_num(t.parameter),
            fmt_num(Some(t.epsilon)),
            fmt_num(Some(t.test_accuracy)),
            fmt_num(Some(t.auc)),
            t.phi.to_string(),
            fmt_num(Some(t.acc_orig)),
            fmt_num(Some(t.auc_orig)),
            fmt_num(Some(t.acc_base)),
            fmt_num(Some(t.auc_base)),
        ]
    }));
    write_rows(&path, &TRADEOFF_COLUMNS, kept.into_iter())
}

/// ROC file: per-repeat curves resampled on `grid`, then their mean, as
/// `curve,fpr,tpr` rows where `curve` is the repeat index or `mean`.
pub fn write_roc_file(
    path: &Path,
    curves: &[(usize, RocCurve)],
    mean_curve: &RocCurve,
) -> Result<()> {
    let mut rows = Vec::new();
    for (repeat, c) in curves {
        rows.extend(
            c.points()
                .map(|(f, t)| vec![repeat.to_string(), f.to_string(), t.to_string()]),
        );
    }
    rows.extend(
        mean_curve
            .points()
            .map(|(f, t)| vec!["mean".to_string(), f.to_string(), t.to_string()]),
    );
    write_rows(path, &["curve", "fpr", "tpr"], rows.into_iter())
}

/// File-name label for a budget: `inf`, or the value with at most four
/// decimals.
pub fn epsilon_label(eps: f64) -> String {
    if eps.is_infinite() {
        return "inf".into();
    }
    let s = format!("{eps:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

type GroupKey = (String, String, Option<u64>, Option<u64>, String);

fn stat(values: &[f64]) -> String {
    match (mean(values), sample_std(values)) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        _ => "n/a".into(),
    }
}

/// Mean ± sample standard deviation per configuration and attack.
/// Experiments whose unprotected reference AUC does not exceed 0.5 are
/// flagged as ineffective attacks.
pub fn report_summary(dir: &Path) -> Result<String> {
    let path = dir.join(RESULTS_FILE);
    if dir.is_dir() && !path.exists() {
        return Ok("no data\n".into());
    }
    let mut rows = read_results(&path)?;
    rows.retain(ResultRow::is_ok);
    if rows.is_empty() {
        return Ok("no data\n".into());
    }
    rows.sort_by(|a, b| a.cmp_key(b));
    let mut groups: Vec<(GroupKey, Vec<&ResultRow>)> = Vec::new();
    for r in &rows {
        let key = (
            r.experiment_id.clone(),
            r.mode.clone(),
            r.epsilon_i.map(f64::to_bits),
            r.z.map(f64::to_bits),
            r.attack.clone(),
        );
        // Repeats sort ahead of attacks, so a group's rows are not adjacent.
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut reference_auc: BTreeMap<(String, String), f64> = BTreeMap::new();
    for ((id, mode, _, _, attack), members) in &groups {
        if mode == "none" {
            let aucs: Vec<f64> = members.iter().filter_map(|r| r.auc).collect();
            if let Some(m) = mean(&aucs) {
                reference_auc.insert((id.clone(), attack.clone()), m);
            }
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "values are mean ± stddev over repeats");
    let _ = writeln!(
        out,
        "{:<16} {:<5} {:>9} {:>6} {:<4} {:>3} {:>10} {:>17} {:>17} {:>17} {:>17}  note",
        "experiment",
        "mode",
        "eps_i",
        "z",
        "atk",
        "n",
        "epsilon",
        "train_acc",
        "test_acc",
        "auc",
        "phi"
    );
    for ((id, mode, _, _, attack), members) in &groups {
        let pick = |f: fn(&ResultRow) -> Option<f64>| -> Vec<f64> {
            members.iter().filter_map(|r| f(r)).collect()
        };
        let first = members[0];
        let eps = pick(|r| r.epsilon);
        let note = match reference_auc.get(&(id.clone(), attack.clone())) {
            Some(&a) if a <= 0.5 => "attack ineffective",
            _ => "",
        };
        let _ = writeln!(
            out,
            "{:<16} {:<5} {:>9} {:>6} {:<4} {:>3} {:>10} {:>17} {:>17} {:>17} {:>17}  {}",
            id,
            mode,
            fmt_num(first.epsilon_i),
            fmt_num(first.z),
            attack,
            members.len(),
            mean(&eps).map_or("n/a".into(), fmt_short),
            stat(&pick(|r| r.train_accuracy)),
            stat(&pick(|r| r.test_accuracy)),
            stat(&pick(|r| r.auc)),
            stat(&pick(|r| r.phi)),
            note,
        );
    }
    Ok(out)
}

fn fmt_short(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.3}")
    }
}
