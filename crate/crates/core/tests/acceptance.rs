//! End-to-end acceptance checks, run without the libtest harness so the
//! report is always printed. Each check prints one PASS/FAIL line with its
//! measured values; the process exits non-zero if any check fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use rand::Rng;

use dpmi::attacks::{AttackKind, LdpMechanism, LdpParams, PrivacyMode};
use dpmi::data::{skewed_entropy_gap, CartSpec, Dataset, FeatureKind, SkewSpec};
use dpmi::dp::{account_training, default_orders, dp_fit, CdpParams};
use dpmi::experiment::{repeat_layout, run_job, sweep, DatasetSpec, ExperimentConfig, SweepSpec};
use dpmi::mechanisms::{compose_local_budget, ldp_perturb_dataset, rr_budget, rr_retention};
use dpmi::metrics::{auc_from_scores, phi, Phi};
use dpmi::nn::{fit, Batch, FitConfig, Matrix, Network, OptimizerConfig};
use dpmi::rng::seeded;

type Check = std::result::Result<String, String>;
type Named = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn rr_anchor() -> Check {
    let b = rr_budget(0.5).map_err(|e| e.to_string())?;
    let lo = rr_retention(0.1).map_err(|e| e.to_string())?;
    let hi = rr_retention(3.0).map_err(|e| e.to_string())?;
    let ok =
        (b - 3f64.ln()).abs() <= 1e-12 && (lo - 0.050).abs() <= 1e-3 && (hi - 0.905).abs() <= 1e-3;
    ensure(
        ok,
        format!("budget(0.5)={b:.15} retention(0.1)={lo:.4} retention(3)={hi:.4}"),
    )
}

fn local_composition() -> Check {
    let low = compose_local_budget(&[0.1; 600]).map_err(|e| e.to_string())?;
    let high = compose_local_budget(&[3.0; 600]).map_err(|e| e.to_string())?;
    ensure(
        low == 60.0 && high == 1800.0,
        format!("600 x 0.1 = {low}, 600 x 3 = {high}"),
    )
}

fn accountant_anchor() -> Check {
    let q = 128.0 / 8000.0;
    let eps = |z: f64| {
        account_training(q, z, 12_500, 1.0 / 8000.0, &default_orders())
            .map(|s| s.epsilon)
            .map_err(|e| e.to_string())
    };
    let anchor = eps(0.5)?;
    let series = [0.5, 2.0, 4.0, 6.0, 16.0]
        .iter()
        .map(|&z| eps(z))
        .collect::<Result<Vec<_>, _>>()?;
    let decreasing = series.windows(2).all(|w| w[1] < w[0]);
    let within = (anchor - 88.1).abs() <= 0.30 * 88.1;
    ensure(
        within && decreasing,
        format!("eps(z=0.5)={anchor:.2} (88.1 +/- 30%), series {series:.3?}"),
    )
}

fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut feats = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let shift = if y == 1 { 1.0 } else { -1.0 };
        for _ in 0..3 {
            feats.push(shift + rng.random_range(-1.5..1.5));
        }
        labels.push(y);
    }
    Dataset::new(feats, 3, labels, 2, FeatureKind::Real).unwrap()
}

fn mechanism_off() -> Check {
    let data = blobs(96, 3);
    let init = Network::new(&[3, 8, 2], &mut seeded(4)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for optimizer in [OptimizerConfig::sgd(0.1), OptimizerConfig::adam(0.01)] {
        let cfg = FitConfig {
            epochs: 20,
            batch_size: 16,
            optimizer,
            early_stopping: None,
            seed: 5,
        };
        let mut plain = init.clone();
        fit(&mut plain, &data, &data, &cfg).map_err(|e| e.to_string())?;
        let mut private = init.clone();
        dp_fit(&mut private, &data, &data, &CdpParams::disabled(), &cfg)
            .map_err(|e| e.to_string())?;
        for (a, b) in plain.params().iter().zip(private.params()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(
        worst <= 1e-6,
        format!("max weight difference {worst:.3e} (tol 1e-6)"),
    )
}

fn random_sizes<R: Rng>(rng: &mut R) -> Vec<usize> {
    loop {
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..rng.random_range(0..=2) {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(2..=4));
        let params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params <= 100 {
            return sizes;
        }
    }
}

fn gradient_check() -> Check {
    let mut rng = seeded(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sizes = random_sizes(&mut rng);
        // Random biases keep pre-activations off the ReLU kink, where the
        // derivative is undefined and finite differences disagree.
        let count = Network::zeros(&sizes)
            .map_err(|e| e.to_string())?
            .num_params();
        let params = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
        let net = Network::from_params(&sizes, params).map_err(|e| e.to_string())?;
        let rows = 4;
        let inputs: Vec<f64> = (0..rows * sizes[0])
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let classes = *sizes.last().unwrap();
        let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        let batch = Batch::new(Matrix::from_vec(rows, sizes[0], inputs).unwrap(), labels).unwrap();
        let (_, analytic) = net.batch_gradient(&batch).map_err(|e| e.to_string())?;
        let loss_at = |p: Vec<f64>| -> f64 {
            let n = Network::from_params(&sizes, p).unwrap();
            let l = n.losses(&batch).unwrap();
            l.iter().sum::<f64>() / l.len() as f64
        };
        let h = 1e-6;
        let mut diff = 0.0;
        let mut scale = 0.0;
        for (k, a) in analytic.iter().enumerate() {
            let mut up = net.params().to_vec();
            up[k] += h;
            let mut down = net.params().to_vec();
            down[k] -= h;
            let numeric = (loss_at(up) - loss_at(down)) / (2.0 * h);
            diff += (a - numeric) * (a - numeric);
            scale += a * a;
        }
        let rel = diff.sqrt() / scale.sqrt().max(1e-8);
        worst = worst.max(rel);
    }
    ensure(
        worst <= 1e-3,
        format!("worst relative error {worst:.3e} over 100 nets (tol 1e-3)"),
    )
}

fn mann_whitney(scores: &[f64], flags: &[bool]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &fi) in flags.iter().enumerate() {
        if fi {
            p += 1;
        } else {
            n += 1;
        }
        if !fi {
            continue;
        }
        for (j, &fj) in flags.iter().enumerate() {
            if fj {
                continue;
            }
            twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2.0 * p as f64 * n as f64)
}

fn auc_oracle() -> Check {
    let mut rng = seeded(13);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = rng.random_range(2..=50);
        let mut flags: Vec<bool> = (0..len).map(|_| rng.random_bool(0.5)).collect();
        flags[0] = true;
        flags[1] = false;
        let levels = rng.random_range(1..=10);
        let scores: Vec<f64> = (0..len)
            .map(|_| rng.random_range(0..levels) as f64 / 7.0)
            .collect();
        let trapezoid = auc_from_scores(&scores, &flags).map_err(|e| e.to_string())?;
        if trapezoid != mann_whitney(&scores, &flags) {
            mismatches += 1;
        }
    }
    ensure(
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 instances"),
    )
}

fn phi_contract() -> Check {
    let v = |a, b, c, d| phi(a, b, c, d, 10).map_err(|e| e.to_string());
    let mut rng = seeded(17);
    let mut out_of_range = 0;
    for _ in 0..10_000 {
        let args: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        if let Phi::Value(x) = v(args[0], args[1], args[2], args[3])? {
            if !(0.0..=2.0).contains(&x) {
                out_of_range += 1;
            }
        }
    }
    let capped =
        v(0.7, 0.6, 0.8, 0.85)? == Phi::Value(2.0) && v(0.7, 0.6, 0.8, 0.8)? == Phi::Value(2.0);
    let collapse = v(0.7, 0.5, 0.8, 0.1)?.value();
    let mid = v(0.6, 0.55, 0.9, 0.5)?.value();
    let close = |x: Option<f64>, want: f64| x.is_some_and(|x| (x - want).abs() <= 1e-12);
    let ok = out_of_range == 0 && capped && close(collapse, 1.0) && close(mid, 1.0);
    ensure(
        ok,
        format!(
            "range violations {out_of_range}, zero-denominator cap {capped}, collapse {collapse:?}, mid {mid:?}"
        ),
    )
}

fn binary_entropy(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

fn entropy_gap() -> Check {
    let spec = SkewSpec::new(10, 100_000, 21);
    let skewed = skewed_entropy_gap(&spec)
        .map_err(|e| e.to_string())?
        .noise_bits();
    let flat = SkewSpec {
        p_noise_test: spec.p_noise_train,
        ..spec
    };
    let none = skewed_entropy_gap(&flat)
        .map_err(|e| e.to_string())?
        .noise_bits();
    let expected = binary_entropy(0.5) - binary_entropy(0.2);
    let ok = (skewed - 0.278).abs() <= 0.02 && none.abs() <= 0.01;
    ensure(
        ok,
        format!(
            "gap {skewed:.4} (analytic {expected:.4}, want 0.278 +/- 0.02), without skew {none:.4}"
        ),
    )
}

fn carts_config() -> ExperimentConfig {
    let text = r#"{
        "id": "attack-signal",
        "dataset": {"generator": "carts", "classes": 10, "records": 3000, "width": 100,
                    "gamma": 1.0, "strength": 0.3, "seed": 7},
        "target_size": 500,
        "model": {"hidden": [128], "optimizer": {"kind": "adam", "learning_rate": 0.001},
                  "batch_size": 32, "epochs": 100},
        "privacy": {"mode": "ldp", "mechanism": "rr", "epsilon_i": 0.1},
        "shadows": 2,
        "repeats": 5,
        "seed": 1
    }"#;
    serde_json::from_str(text).expect("valid config")
}

fn attack_signal() -> Check {
    let mut cfg = carts_config();
    cfg.sweep = Some(SweepSpec {
        epsilon_i: Some(vec![0.1]),
        z: None,
    });
    let out = sweep(&cfg, threads()).map_err(|e| e.to_string())?;
    let reference = &out.points[0];
    let ldp = &out.points[1];
    let mean =
        |p: &dpmi::experiment::PointOutput, k| p.mean_auc(k).ok_or("missing AUC".to_string());
    let (bb, wb) = (
        mean(reference, AttackKind::Bb)?,
        mean(reference, AttackKind::Wb)?,
    );
    let (ldp_bb, ldp_wb) = (mean(ldp, AttackKind::Bb)?, mean(ldp, AttackKind::Wb)?);

    let loaded = cfg.dataset.load().map_err(|e| e.to_string())?;
    let cdp = PrivacyMode::Cdp(CdpParams::new(16.0, 1.0));
    let (mut cdp_bb, mut cdp_wb) = (Vec::new(), Vec::new());
    for (repeat, layout) in out.layouts.iter().enumerate() {
        let job = run_job(&cfg, &loaded.data, layout, &cdp, repeat, threads())
            .map_err(|e| e.to_string())?;
        cdp_bb.push(job.attack(AttackKind::Bb).unwrap().auc);
        cdp_wb.push(job.attack(AttackKind::Wb).unwrap().auc);
    }
    let cdp_bb = cdp_bb.iter().sum::<f64>() / cdp_bb.len() as f64;
    let cdp_wb = cdp_wb.iter().sum::<f64>() / cdp_wb.len() as f64;

    let near_half = |a: f64| (a - 0.5).abs() <= 0.05;
    let ok = bb >= 0.55
        && wb >= bb - 0.02
        && near_half(ldp_bb)
        && near_half(ldp_wb)
        && near_half(cdp_bb)
        && near_half(cdp_wb);
    ensure(
        ok,
        format!(
            "reference bb={bb:.4} wb={wb:.4}; ldp eps_i=0.1 bb={ldp_bb:.4} wb={ldp_wb:.4}; \
             cdp z=16 bb={cdp_bb:.4} wb={cdp_wb:.4}"
        ),
    )
}

fn ldp_features_use_raw_records() -> Check {
    let mut cfg = carts_config();
    cfg.dataset = DatasetSpec::Carts(CartSpec {
        classes: 4,
        records: 800,
        width: 40,
        gamma: 0.5,
        strength: 0.5,
        seed: 3,
    });
    cfg.target_size = 100;
    cfg.model.epochs = 5;
    cfg.attack_model.epochs = 5;
    cfg.repeats = 1;
    let eps_i = rr_budget(0.9).map_err(|e| e.to_string())?;
    let mode = PrivacyMode::Ldp(LdpParams {
        mechanism: LdpMechanism::Rr,
        epsilon_i: eps_i,
    });
    let loaded = cfg.dataset.load().map_err(|e| e.to_string())?;
    let data = &loaded.data;
    let layout = repeat_layout(&cfg, &loaded, 0).map_err(|e| e.to_string())?;
    let job = run_job(&cfg, data, &layout, &mode, 0, 1).map_err(|e| e.to_string())?;
    let trace = &job.trace;

    let perturbed_target = trace.target_trained_on != trace.raw_target_train;
    let mut allowed: BTreeSet<usize> = layout
        .target_train
        .iter()
        .chain(&layout.target_test)
        .copied()
        .collect();
    for s in &layout.shadows {
        allowed.extend(s.train.iter().chain(&s.test));
    }
    let mut raw_matches = 0;
    let mut perturbed_matches = 0;
    for (k, input) in trace.feature_inputs.iter().enumerate() {
        let raw = data.subset(&input.record_ids).map_err(|e| e.to_string())?;
        if input.digest == raw.digest() && input.record_ids.iter().all(|i| allowed.contains(i)) {
            raw_matches += 1;
        }
        let (noisy, _) = ldp_perturb_dataset(&raw, 0.9, &mut seeded(1000 + k as u64))
            .map_err(|e| e.to_string())?;
        if input.digest == noisy.digest() {
            perturbed_matches += 1;
        }
    }
    let expected = 2 * (layout.shadows.len() + 1) + 4;
    let n = trace.feature_inputs.len();
    ensure(
        perturbed_target && n == expected && raw_matches == n && perturbed_matches == 0,
        format!(
            "rho=0.9: target trained on perturbed data {perturbed_target}; {raw_matches}/{n} feature inputs \
             are raw records (expected {expected} sets), {perturbed_matches} match a perturbed copy"
        ),
    )
}

fn strip_wall_clock(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "wall_seconds").unwrap();
    std::iter::once(header.join(","))
        .chain(lines.map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(col);
            cells.join(",")
        }))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sweep.json");
    let text = r#"{
        "id": "determinism",
        "dataset": {"generator": "carts", "classes": 5, "records": 1500, "width": 60,
                    "gamma": 1.0, "strength": 0.4, "seed": 9},
        "target_size": 200,
        "model": {"hidden": [32], "optimizer": {"kind": "adam", "learning_rate": 0.002},
                  "batch_size": 32, "epochs": 15},
        "privacy": {"mode": "cdp", "noise_multiplier": 1.0, "clip_norm": 1.0},
        "shadows": 2,
        "repeats": 3,
        "seed": 4,
        "sweep": {"z": [0.5, 4.0]}
    }"#;
    std::fs::write(&config, text).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_dpmi"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--jobs", jobs])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        files.push(strip_wall_clock(&out.join("results.csv")));
    }
    let rows = files[0].lines().count().saturating_sub(1);
    ensure(
        files[0] == files[1] && rows > 0,
        format!(
            "{rows} rows, identical across --jobs 1 and --jobs 4: {}",
            files[0] == files[1]
        ),
    )
}

fn main() -> std::process::ExitCode {
    let checks: [Named; 11] = [
        ("randomized response budget", rr_anchor),
        ("local budget composition", local_composition),
        ("accountant anchor", accountant_anchor),
        ("mechanism-off equivalence", mechanism_off),
        ("gradient correctness", gradient_check),
        ("AUC equals Mann-Whitney", auc_oracle),
        ("phi contract", phi_contract),
        ("skewed entropy gap", entropy_gap),
        ("end-to-end attack signal", attack_signal),
        (
            "LDP attack features from raw records",
            ldp_features_use_raw_records,
        ),
        ("sweep determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = std::time::Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match &result {
            Ok(d) => println!("[{:>2}] PASS {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                println!("[{:>2}] FAIL {name}: {d} ({secs:.1}s)", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed checks: {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
