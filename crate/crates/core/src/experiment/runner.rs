//! Jobs, sweeps and persistence.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::attacks::{
    run_bb_attack, run_wb_attack, train_model, train_shadows, AttackKind, AttackOutcome,
    FeatureTrace, LdpMechanism, PrivacyMode, TracedInput,
};
use crate::data::{
    partition_attack_data, partition_domains, AttackDataLayout, Dataset, FeatureKind, SplitOptions,
};
use crate::error::{Error, Result};
use crate::metrics::{
    default_fpr_grid, mean, mean_roc, phi, Phi, RocCurve, TradeoffRecord, AUC_BASE,
};
use crate::nn::{evaluate_accuracy, Network};
use crate::parallel::par_map;
use crate::rng::derive_seed;

use super::config::{ExperimentConfig, GridPoint, LoadedData};
use super::results::{
    epsilon_label, has_experiment, write_results, write_roc_file, write_tradeoffs, ResultRow,
};

const TARGET_STREAM: u64 = 60;
const SHADOW_STREAM: u64 = 61;
const ATTACK_STREAM: u64 = 62;

/// Digests recorded while a job runs, for auditing the mode rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobTrace {
    /// Digest of the raw target training records.
    pub raw_target_train: u64,
    /// Digest of what the target's optimizer consumed.
    pub target_trained_on: u64,
    /// Every record set passed to feature extraction.
    pub feature_inputs: Vec<TracedInput>,
}

/// Outcome of one grid point and repeat.
#[derive(Debug, Clone)]
pub struct JobOutput {
    pub repeat: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub attacks: Vec<AttackOutcome>,
    pub trace: JobTrace,
    pub wall_seconds: f64,
}

impl JobOutput {
    pub fn attack(&self, kind: AttackKind) -> Option<&AttackOutcome> {
        self.attacks.iter().find(|a| a.kind == kind)
    }
}

/// Seed of repeat `r`.
pub fn repeat_seed(config: &ExperimentConfig, repeat: usize) -> u64 {
    config.seed.wrapping_add(repeat as u64)
}

/// Splits used by every grid point of repeat `repeat`.
pub fn repeat_layout(
    config: &ExperimentConfig,
    loaded: &LoadedData,
    repeat: usize,
) -> Result<AttackDataLayout> {
    let needs_shadows = config.attacks.kinds().contains(&AttackKind::Bb);
    let opts = SplitOptions {
        n: config.target_size,
        shadows: if needs_shadows { config.shadows } else { 0 },
        shadow_size: config.shadow_size,
        stratified: config.stratified,
        seed: repeat_seed(config, repeat),
    };
    match loaded.domains {
        Some((a, b)) => partition_domains(a, b, &opts),
        None => partition_attack_data(&loaded.data, &opts),
    }
}

/// Trains the target (and shadows when the black-box attack is selected)
/// under `mode`, then runs the selected attacks on raw records.
pub fn run_job(
    config: &ExperimentConfig,
    data: &Dataset,
    layout: &AttackDataLayout,
    mode: &PrivacyMode,
    repeat: usize,
    shadow_jobs: usize,
) -> Result<JobOutput> {
    let start = Instant::now();
    let seed = repeat_seed(config, repeat);
    let train = data.subset(&layout.target_train)?;
    let test = data.subset(&layout.target_test)?;
    let target = train_model(
        &train,
        &test,
        &config.model,
        mode,
        derive_seed(seed, TARGET_STREAM),
    )?;
    let raw = train.digest();
    if !matches!(mode, PrivacyMode::Ldp(_)) && target.trained_on != raw {
        return Err(Error::InvalidParameter(format!(
            "{} mode must train on unmodified records",
            mode.name()
        )));
    }

    let mut features = FeatureTrace::default();
    let mut attacks = Vec::new();
    for kind in config.attacks.kinds() {
        let attack_seed = derive_seed(seed, ATTACK_STREAM + kind as u64);
        let outcome = match kind {
            AttackKind::Bb => {
                let shadows = train_shadows(
                    data,
                    layout,
                    &config.model,
                    mode,
                    derive_seed(seed, SHADOW_STREAM),
                    shadow_jobs,
                )?;
                let nets: Vec<Network> = shadows.into_iter().map(|m| m.net).collect();
                run_bb_attack(
                    data,
                    layout,
                    &target.net,
                    &nets,
                    &config.attack_model,
                    attack_seed,
                    &mut features,
                )?
            }
            AttackKind::Wb => run_wb_attack(
                data,
                layout,
                &target.net,
                config.wb_known_fraction,
                &config.attack_model,
                attack_seed,
                &mut features,
            )?,
        };
        attacks.push(outcome);
    }

    Ok(JobOutput {
        repeat,
        seed,
        epsilon: target.epsilon,
        train_accuracy: evaluate_accuracy(&target.net, &train)?,
        test_accuracy: evaluate_accuracy(&target.net, &test)?,
        attacks,
        trace: JobTrace {
            raw_target_train: raw,
            target_trained_on: target.trained_on,
            feature_inputs: features.inputs,
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every job of one grid point.
#[derive(Debug, Clone)]
pub struct PointOutput {
    pub point: GridPoint,
    /// One entry per repeat; `Err` holds the failure message.
    pub jobs: Vec<std::result::Result<JobOutput, String>>,
}

impl PointOutput {
    fn ok_jobs(&self) -> impl Iterator<Item = &JobOutput> {
        self.jobs.iter().filter_map(|j| j.as_ref().ok())
    }

    pub fn mean_test_accuracy(&self) -> Option<f64> {
        mean(&self.ok_jobs().map(|j| j.test_accuracy).collect::<Vec<_>>())
    }

    pub fn mean_auc(&self, kind: AttackKind) -> Option<f64> {
        mean(
            &self
                .ok_jobs()
                .filter_map(|j| j.attack(kind).map(|a| a.auc))
                .collect::<Vec<_>>(),
        )
    }

    pub fn mean_epsilon(&self) -> Option<f64> {
        mean(&self.ok_jobs().map(|j| j.epsilon).collect::<Vec<_>>())
    }

    /// Name fragment of this point's ROC files.
    pub fn label(&self) -> String {
        match (self.mean_epsilon(), self.point.parameter) {
            (Some(e), _) => epsilon_label(e),
            (None, Some(p)) => format!("p{}", epsilon_label(p)),
            (None, None) => "inf".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub dataset: String,
    pub classes: usize,
    pub layouts: Vec<AttackDataLayout>,
    /// The reference point comes first.
    pub points: Vec<PointOutput>,
    pub rows: Vec<ResultRow>,
    pub tradeoffs: Vec<TradeoffRecord>,
}

fn check_mode_fits_data(mode: &PrivacyMode, data: &Dataset) -> Result<()> {
    if let PrivacyMode::Ldp(p) = mode {
        match (p.mechanism, data.kind()) {
            (LdpMechanism::Rr, FeatureKind::Binary) => {}
            (LdpMechanism::Rr, _) => {
                return Err(Error::Config(
                    "randomized response needs a binary dataset".into(),
                ))
            }
            (LdpMechanism::Pixelation { .. }, FeatureKind::Image { .. }) => {}
            (LdpMechanism::Pixelation { .. }, _) => {
                return Err(Error::Config("pixelation needs an image dataset".into()))
            }
        }
    }
    Ok(())
}

/// Runs the reference and every grid point for all repeats. Results do not
/// depend on `jobs`.
pub fn sweep(config: &ExperimentConfig, jobs: usize) -> Result<SweepOutput> {
    config.validate()?;
    let grid = config.grid()?;
    let loaded = config.dataset.load()?;
    for p in &grid {
        check_mode_fits_data(&p.mode, &loaded.data)?;
    }
    let layouts = (0..config.repeats)
        .map(|r| repeat_layout(config, &loaded, r))
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..config.repeats).map(move |r| (p, r)))
        .collect();
    let inner = (jobs.max(1) / tasks.len().max(1)).max(1);
    let results = par_map(&tasks, jobs, |_, &(p, r)| {
        Ok(
            run_job(config, &loaded.data, &layouts[r], &grid[p].mode, r, inner)
                .map_err(|e| e.to_string()),
        )
    })?;

    let mut points: Vec<PointOutput> = grid
        .iter()
        .map(|&point| PointOutput {
            point,
            jobs: Vec::with_capacity(config.repeats),
        })
        .collect();
    for (&(p, _), res) in tasks.iter().zip(results) {
        points[p].jobs.push(res);
    }

    let classes = loaded.data.num_classes();
    let kinds = config.attacks.kinds();
    let reference = &points[0];
    let mut tradeoffs = Vec::new();
    let mut phis = vec![Vec::new(); points.len()];
    for (i, pt) in points.iter().enumerate() {
        for &kind in &kinds {
            let value = if i == 0 {
                Phi::NotApplicable
            } else {
                match (
                    reference.mean_auc(kind),
                    pt.mean_auc(kind),
                    reference.mean_test_accuracy(),
                    pt.mean_test_accuracy(),
                ) {
                    (Some(ao), Some(ae), Some(co), Some(ce)) => phi(ao, ae, co, ce, classes)?,
                    _ => Phi::NotApplicable,
                }
            };
            phis[i].push(value);
            if let (Some(eps), Some(acc), Some(auc), Some(co), Some(ao)) = (
                pt.mean_epsilon(),
                pt.mean_test_accuracy(),
                pt.mean_auc(kind),
                reference.mean_test_accuracy(),
                reference.mean_auc(kind),
            ) {
                tradeoffs.push(TradeoffRecord {
                    mode: pt.point.mode.name().into(),
                    attack: kind.name().into(),
                    parameter: pt.point.parameter,
                    epsilon: eps,
                    test_accuracy: acc,
                    auc,
                    phi: value,
                    acc_orig: co,
                    auc_orig: ao,
                    acc_base: 1.0 / classes as f64,
                    auc_base: AUC_BASE,
                });
            }
        }
    }

    let mut rows = Vec::new();
    for (i, pt) in points.iter().enumerate() {
        let (epsilon_i, z, clip) = match pt.point.mode {
            PrivacyMode::None => (None, None, None),
            PrivacyMode::Ldp(p) => (Some(p.epsilon_i), None, None),
            PrivacyMode::Cdp(c) => (None, Some(c.noise_multiplier), c.clip_norm),
        };
        for (r, job) in pt.jobs.iter().enumerate() {
            for (k, &kind) in kinds.iter().enumerate() {
                let mut row = ResultRow {
                    experiment_id: config.id.clone(),
                    dataset: loaded.name.clone(),
                    classes,
                    mode: pt.point.mode.name().into(),
                    epsilon_i,
                    epsilon: None,
                    z,
                    clip_norm: clip,
                    repeat: r,
                    seed: repeat_seed(config, r),
                    train_accuracy: None,
                    test_accuracy: None,
                    attack: kind.name().into(),
                    auc: None,
                    phi: phis[i][k].value(),
                    status: "ok".into(),
                    wall_seconds: 0.0,
                };
                match job {
                    Ok(j) => {
                        row.epsilon = Some(j.epsilon);
                        row.train_accuracy = Some(j.train_accuracy);
                        row.test_accuracy = Some(j.test_accuracy);
                        row.auc = j.attack(kind).map(|a| a.auc);
                        row.wall_seconds = j.wall_seconds;
                    }
                    Err(msg) => row.status = format!("error: {msg}"),
                }
                rows.push(row);
            }
        }
    }
    rows.sort_by(|a, b| a.cmp_key(b));

    Ok(SweepOutput {
        dataset: loaded.name,
        classes,
        layouts,
        points,
        rows,
        tradeoffs,
    })
}

/// Writes results, trade-offs, ROC curves, splits, the config snapshot
/// and (if requested) feature dumps into `dir`. Returns the files written.
pub fn persist(
    config: &ExperimentConfig,
    out: &SweepOutput,
    dir: &Path,
    force: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !force && has_experiment(dir, &config.id)? {
        return Err(Error::DuplicateExperiment(config.id.clone()));
    }
    let mut written = Vec::new();
    let grid = default_fpr_grid();
    for pt in &out.points {
        let label = pt.label();
        for kind in config.attacks.kinds() {
            let curves: Vec<(usize, RocCurve)> = pt
                .jobs
                .iter()
                .enumerate()
                .filter_map(|(r, j)| {
                    let a = j.as_ref().ok()?.attack(kind)?;
                    Some((r, a.roc.clone()))
                })
                .collect();
            if curves.is_empty() {
                continue;
            }
            let resampled = curves
                .iter()
                .map(|(r, c)| Ok((*r, mean_roc(std::slice::from_ref(c), &grid)?)))
                .collect::<Result<Vec<_>>>()?;
            let raw: Vec<RocCurve> = curves.into_iter().map(|(_, c)| c).collect();
            let avg = mean_roc(&raw, &grid)?;
            let path = dir.join(format!("roc_{}_{label}.csv", kind.name()));
            write_roc_file(&path, &resampled, &avg)?;
            written.push(path);

            if config.dump_features {
                for j in pt.jobs.iter().flatten() {
                    if let Some(a) = j.attack(kind) {
                        let path = dir.join(format!(
                            "features_{}_{label}_r{}.csv",
                            kind.name(),
                            j.repeat
                        ));
                        a.eval.write_csv(&path)?;
                        written.push(path);
                    }
                }
            }
        }
    }
    for (r, layout) in out.layouts.iter().enumerate() {
        let path = dir.join(format!("splits_r{r}.json"));
        layout.save(&path)?;
        written.push(path);
    }
    let cfg_path = dir.join("config.json");
    let text = serde_json::to_string_pretty(config).map_err(|e| Error::json(&cfg_path, e))?;
    std::fs::write(&cfg_path, text + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    written.push(cfg_path);

    write_tradeoffs(dir, &config.id, &out.tradeoffs)?;
    written.push(dir.join(super::results::TRADEOFF_FILE));
    write_results(dir, &config.id, &out.rows, force)?;
    written.push(dir.join(super::results::RESULTS_FILE));
    Ok(written)
}
