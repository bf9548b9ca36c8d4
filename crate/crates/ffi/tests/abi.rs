use std::ffi::{CStr, CString};
use std::ptr;

use dpmi_ffi::*;

fn last_error() -> String {
    let p = dpmi_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions() {
    let mut eps = 0.0;
    assert_eq!(unsafe { dpmi_rr_budget(0.5, &mut eps) }, DPMI_OK);
    assert!((eps - 3f64.ln()).abs() < 1e-12);
    let mut rho = 0.0;
    assert_eq!(unsafe { dpmi_rr_retention(eps, &mut rho) }, DPMI_OK);
    assert!((rho - 0.5).abs() < 1e-12);
    let budgets = [0.1; 600];
    let mut total = 0.0;
    assert_eq!(
        unsafe { dpmi_compose_local_budget(budgets.as_ptr(), budgets.len(), &mut total) },
        DPMI_OK
    );
    assert_eq!(total, 60.0);

    let scores = [0.9, 0.4, 0.6, 0.3];
    let flags = [1u8, 1, 0, 0];
    let mut auc = 0.0;
    assert_eq!(
        unsafe { dpmi_auc(scores.as_ptr(), flags.as_ptr(), 4, &mut auc) },
        DPMI_OK
    );
    assert_eq!(auc, 0.75);

    let (mut v, mut ok) = (0.0, -1);
    assert_eq!(
        unsafe { dpmi_phi(0.6, 0.55, 0.9, 0.5, 10, &mut v, &mut ok) },
        DPMI_OK
    );
    assert_eq!(ok, 1);
    assert!((v - 1.0).abs() < 1e-12);
    assert_eq!(
        unsafe { dpmi_phi(0.5, 0.5, 0.9, 0.5, 10, &mut v, &mut ok) },
        DPMI_OK
    );
    assert_eq!(ok, 0);
}

#[test]
fn error_codes_and_messages() {
    let mut eps = 0.0;
    assert_eq!(unsafe { dpmi_rr_budget(1.5, &mut eps) }, DPMI_ERR_INVALID);
    assert!(last_error().contains("invalid parameter"));
    assert_eq!(
        unsafe { dpmi_rr_budget(0.5, ptr::null_mut()) },
        DPMI_ERR_NULL
    );
    assert!(last_error().contains("epsilon"));
    let mut auc = 0.0;
    let one = [1.0];
    let flag = [1u8];
    assert_eq!(
        unsafe { dpmi_auc(one.as_ptr(), flag.as_ptr(), 1, &mut auc) },
        DPMI_ERR_INVALID
    );
}

#[test]
fn accountant_handle() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { dpmi_accountant_new(128.0 / 8000.0, 0.5, &mut h) },
        DPMI_OK
    );
    assert_eq!(unsafe { dpmi_accountant_record_steps(h, 12_500) }, DPMI_OK);
    let (mut eps, mut order) = (0.0, 0.0);
    assert_eq!(
        unsafe { dpmi_accountant_epsilon(h, 1.0 / 8000.0, &mut eps, &mut order) },
        DPMI_OK
    );
    assert!((eps - 88.1).abs() < 0.3 * 88.1, "{eps}");
    assert!(order > 1.0);
    unsafe { dpmi_accountant_free(h) };
    unsafe { dpmi_accountant_free(ptr::null_mut()) };
    let mut bad = ptr::null_mut();
    assert_eq!(
        unsafe { dpmi_accountant_new(2.0, 1.0, &mut bad) },
        DPMI_ERR_INVALID
    );
    assert!(bad.is_null());
}

#[test]
fn dataset_handle_round_trip() {
    let spec = CString::new(r#"{"generator":"carts","classes":3,"records":50,"width":8,"seed":1}"#)
        .unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { dpmi_dataset_generate(spec.as_ptr(), &mut h) },
        DPMI_OK
    );
    let (mut n, mut w, mut c) = (0, 0, 0);
    assert_eq!(
        unsafe { dpmi_dataset_shape(h, &mut n, &mut w, &mut c) },
        DPMI_OK
    );
    assert_eq!((n, w, c), (50, 8, 3));
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dpmi_dataset_save_csv(h, path.as_ptr()) }, DPMI_OK);
    let label = CString::new("label").unwrap();
    let mut h2 = ptr::null_mut();
    assert_eq!(
        unsafe { dpmi_dataset_load_binary_csv(path.as_ptr(), label.as_ptr(), &mut h2) },
        DPMI_OK
    );
    let (mut n2, mut w2, mut c2) = (0, 0, 0);
    unsafe { dpmi_dataset_shape(h2, &mut n2, &mut w2, &mut c2) };
    assert_eq!((n2, w2, c2), (50, 8, 3));
    unsafe {
        dpmi_dataset_free(h);
        dpmi_dataset_free(h2);
    }
    let missing = CString::new("/nonexistent/x.csv").unwrap();
    let mut h3 = ptr::null_mut();
    assert_eq!(
        unsafe { dpmi_dataset_load_binary_csv(missing.as_ptr(), label.as_ptr(), &mut h3) },
        DPMI_ERR_IO
    );
    let bad = CString::new("{").unwrap();
    assert_eq!(
        unsafe { dpmi_dataset_generate(bad.as_ptr(), &mut h3) },
        DPMI_ERR_INVALID
    );
}

#[test]
fn experiment_handle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
          "id": "ffi",
          "dataset": {"generator": "carts", "classes": 3, "records": 200, "width": 16, "seed": 3},
          "target_size": 40,
          "model": {"hidden": [16], "optimizer": {"kind": "adam", "learning_rate": 0.01},
                    "batch_size": 16, "epochs": 3},
          "attack_model": {"hidden": 8, "optimizer": {"kind": "adam", "learning_rate": 0.001},
                           "batch_size": 16, "epochs": 3, "holdout": 0.2, "patience": 2},
          "attacks": "wb",
          "shadows": 0,
          "repeats": 1
        }"#,
    )
    .unwrap();
    let path = CString::new(cfg.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { dpmi_experiment_load(path.as_ptr(), &mut h) },
        DPMI_OK
    );
    let mut rows = 0;
    assert_eq!(
        unsafe { dpmi_experiment_row_count(h, &mut rows) },
        DPMI_ERR_INVALID
    );
    assert_eq!(unsafe { dpmi_experiment_run(h, 1) }, DPMI_OK);
    assert_eq!(unsafe { dpmi_experiment_row_count(h, &mut rows) }, DPMI_OK);
    assert_eq!(rows, 1);
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { dpmi_experiment_persist(h, out.as_ptr(), 0) },
        DPMI_OK
    );
    assert_eq!(
        unsafe { dpmi_experiment_persist(h, out.as_ptr(), 0) },
        DPMI_ERR_INVALID
    );
    assert!(last_error().contains("already present"));
    assert_eq!(
        unsafe { dpmi_experiment_persist(h, out.as_ptr(), 1) },
        DPMI_OK
    );
    assert!(dir.path().join("out/results.csv").exists());
    unsafe { dpmi_experiment_free(h) };
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/dpmi.h");
    let src = include_str!("../src/lib.rs");
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(header.contains("typedef struct DpmiExperiment DpmiExperiment;"));
}
