//! C ABI over the `dpmi` crate.
//!
//! Every function returns a status code (`DPMI_OK` on success) and writes
//! results through out-pointers. Objects cross the boundary as opaque
//! handles created by `*_new`/`*_load` functions and released with the
//! matching `*_free`. After a failure, `dpmi_last_error` returns a message
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dpmi::data::{load_csv_dataset, save_csv_dataset, Dataset, FeatureKind};
use dpmi::dp::{default_orders, RdpAccountant};
use dpmi::experiment::{persist, sweep, DatasetSpec, ExperimentConfig, SweepOutput};
use dpmi::mechanisms::{compose_local_budget, rr_budget, rr_retention};
use dpmi::metrics::{auc_from_scores, phi, Phi};
use dpmi::Error;

pub const DPMI_OK: i32 = 0;
pub const DPMI_ERR_NULL: i32 = 1;
pub const DPMI_ERR_INVALID: i32 = 2;
pub const DPMI_ERR_RUNTIME: i32 = 3;
pub const DPMI_ERR_IO: i32 = 4;
pub const DPMI_ERR_UTF8: i32 = 5;
pub const DPMI_ERR_PANIC: i32 = 6;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Csv { .. } => DPMI_ERR_IO,
            e if e.is_validation() => DPMI_ERR_INVALID,
            _ => DPMI_ERR_RUNTIME,
        };
        Failure(code, e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DPMI_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            DPMI_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DPMI_ERR_NULL, format!("{what} is null"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> std::result::Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string(p: *const c_char, what: &str) -> std::result::Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Failure(DPMI_ERR_UTF8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(
    p: *const T,
    len: usize,
    what: &str,
) -> std::result::Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the calling thread's last failure, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dpmi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Randomized-response budget for retention probability `rho`.
///
/// # Safety
/// `epsilon` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn dpmi_rr_budget(rho: f64, epsilon: *mut f64) -> i32 {
    guard(|| {
        *out(epsilon, "epsilon")? = rr_budget(rho)?;
        Ok(())
    })
}

/// Retention probability for a per-bit budget.
///
/// # Safety
/// `rho` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn dpmi_rr_retention(epsilon: f64, rho: *mut f64) -> i32 {
    guard(|| {
        *out(rho, "rho")? = rr_retention(epsilon)?;
        Ok(())
    })
}

/// Sum of `len` per-feature budgets.
///
/// # Safety
/// `budgets` must point to `len` readable values; `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_compose_local_budget(
    budgets: *const f64,
    len: usize,
    total: *mut f64,
) -> i32 {
    guard(|| {
        let b = slice(budgets, len, "budgets")?;
        *out(total, "total")? = compose_local_budget(b)?;
        Ok(())
    })
}

/// Mann-Whitney AUC of `scores` against membership `flags` (non-zero =
/// member).
///
/// # Safety
/// `scores` and `flags` must point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn dpmi_auc(
    scores: *const f64,
    flags: *const u8,
    len: usize,
    auc: *mut f64,
) -> i32 {
    guard(|| {
        let s = slice(scores, len, "scores")?;
        let f: Vec<bool> = slice(flags, len, "flags")?
            .iter()
            .map(|&v| v != 0)
            .collect();
        *out(auc, "auc")? = auc_from_scores(s, &f)?;
        Ok(())
    })
}

/// Bounded trade-off. `applicable` receives 0 when the reference shows no
/// privacy gap, in which case `value` is left untouched.
///
/// # Safety
/// `value` and `applicable` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_phi(
    auc_orig: f64,
    auc_eps: f64,
    acc_orig: f64,
    acc_eps: f64,
    classes: usize,
    value: *mut f64,
    applicable: *mut i32,
) -> i32 {
    guard(|| {
        let flag = out(applicable, "applicable")?;
        let v = out(value, "value")?;
        match phi(auc_orig, auc_eps, acc_orig, acc_eps, classes)? {
            Phi::Value(x) => {
                *v = x;
                *flag = 1;
            }
            Phi::NotApplicable => *flag = 0,
        }
        Ok(())
    })
}

/// Opaque RDP accountant.
pub struct DpmiAccountant(RdpAccountant);

/// Accountant for sampling ratio `q` and noise multiplier `z` over the
/// default order grid.
///
/// # Safety
/// `handle` must be writable; release the result with
/// `dpmi_accountant_free`.
#[no_mangle]
pub unsafe extern "C" fn dpmi_accountant_new(
    q: f64,
    z: f64,
    handle: *mut *mut DpmiAccountant,
) -> i32 {
    guard(|| {
        let h = out(handle, "handle")?;
        let acc = RdpAccountant::new(q, z, default_orders())?;
        *h = Box::into_raw(Box::new(DpmiAccountant(acc)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from `dpmi_accountant_new`.
#[no_mangle]
pub unsafe extern "C" fn dpmi_accountant_record_steps(
    handle: *mut DpmiAccountant,
    steps: u64,
) -> i32 {
    guard(|| {
        out(handle, "handle")?.0.record_steps(steps);
        Ok(())
    })
}

/// Smallest epsilon over the order grid at `delta`, and its order.
///
/// # Safety
/// `handle` must come from `dpmi_accountant_new`; `epsilon` and `order`
/// must be writable (`order` may be null).
#[no_mangle]
pub unsafe extern "C" fn dpmi_accountant_epsilon(
    handle: *const DpmiAccountant,
    delta: f64,
    epsilon: *mut f64,
    order: *mut f64,
) -> i32 {
    guard(|| {
        let acc = handle.as_ref().ok_or_else(|| null("handle"))?;
        let spent = acc.0.spent(delta)?;
        *out(epsilon, "epsilon")? = spent.epsilon;
        if let Some(o) = order.as_mut() {
            *o = spent.order;
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `dpmi_accountant_new`, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpmi_accountant_free(handle: *mut DpmiAccountant) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Opaque dataset.
pub struct DpmiDataset(Dataset);

/// Generates a dataset from a generator spec given as JSON text.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_dataset_generate(
    spec_json: *const c_char,
    handle: *mut *mut DpmiDataset,
) -> i32 {
    guard(|| {
        let h = out(handle, "handle")?;
        let text = string(spec_json, "spec_json")?;
        let spec: DatasetSpec = serde_json::from_str(&text)
            .map_err(|e| Failure(DPMI_ERR_INVALID, format!("dataset spec: {e}")))?;
        let data = spec.load()?.data;
        *h = Box::into_raw(Box::new(DpmiDataset(data)));
        Ok(())
    })
}

/// Loads a binary-feature CSV dataset.
///
/// # Safety
/// `path` and `label_column` must be NUL-terminated strings; `handle` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_dataset_load_binary_csv(
    path: *const c_char,
    label_column: *const c_char,
    handle: *mut *mut DpmiDataset,
) -> i32 {
    guard(|| {
        let h = out(handle, "handle")?;
        let p = PathBuf::from(string(path, "path")?);
        let col = string(label_column, "label_column")?;
        let data = load_csv_dataset(&p, &col, FeatureKind::Binary)?;
        *h = Box::into_raw(Box::new(DpmiDataset(data)));
        Ok(())
    })
}

/// Record count, feature width and class count.
///
/// # Safety
/// `handle` must come from a dataset constructor; out-pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_dataset_shape(
    handle: *const DpmiDataset,
    records: *mut usize,
    width: *mut usize,
    classes: *mut usize,
) -> i32 {
    guard(|| {
        let d = &handle.as_ref().ok_or_else(|| null("handle"))?.0;
        *out(records, "records")? = d.len();
        *out(width, "width")? = d.width();
        *out(classes, "classes")? = d.num_classes();
        Ok(())
    })
}

/// # Safety
/// `handle` must come from a dataset constructor; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dpmi_dataset_save_csv(
    handle: *const DpmiDataset,
    path: *const c_char,
) -> i32 {
    guard(|| {
        let d = &handle.as_ref().ok_or_else(|| null("handle"))?.0;
        save_csv_dataset(d, &PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from a dataset constructor, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpmi_dataset_free(handle: *mut DpmiDataset) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Opaque experiment: a validated config and, once run, its results.
pub struct DpmiExperiment {
    config: ExperimentConfig,
    output: Option<SweepOutput>,
}

/// Loads and validates an experiment config file.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `handle` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_experiment_load(
    config_path: *const c_char,
    handle: *mut *mut DpmiExperiment,
) -> i32 {
    guard(|| {
        let h = out(handle, "handle")?;
        let config =
            ExperimentConfig::from_path(&PathBuf::from(string(config_path, "config_path")?))?;
        config.validate()?;
        *h = Box::into_raw(Box::new(DpmiExperiment {
            config,
            output: None,
        }));
        Ok(())
    })
}

/// Runs the reference and every grid point on up to `jobs` threads.
///
/// # Safety
/// `handle` must come from `dpmi_experiment_load`.
#[no_mangle]
pub unsafe extern "C" fn dpmi_experiment_run(handle: *mut DpmiExperiment, jobs: usize) -> i32 {
    guard(|| {
        let e = out(handle, "handle")?;
        e.output = Some(sweep(&e.config, jobs)?);
        Ok(())
    })
}

/// Number of result rows produced by the last run.
///
/// # Safety
/// `handle` must come from `dpmi_experiment_load`; `rows` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpmi_experiment_row_count(
    handle: *const DpmiExperiment,
    rows: *mut usize,
) -> i32 {
    guard(|| {
        let e = handle.as_ref().ok_or_else(|| null("handle"))?;
        let o = e
            .output
            .as_ref()
            .ok_or_else(|| Failure(DPMI_ERR_INVALID, "experiment has not been run".into()))?;
        *out(rows, "rows")? = o.rows.len();
        Ok(())
    })
}

/// Writes result files into `dir`. A non-zero `force` replaces rows of the
/// same experiment id.
///
/// # Safety
/// `handle` must come from `dpmi_experiment_load`; `dir` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dpmi_experiment_persist(
    handle: *const DpmiExperiment,
    dir: *const c_char,
    force: i32,
) -> i32 {
    guard(|| {
        let e = handle.as_ref().ok_or_else(|| null("handle"))?;
        let o = e
            .output
            .as_ref()
            .ok_or_else(|| Failure(DPMI_ERR_INVALID, "experiment has not been run".into()))?;
        persist(
            &e.config,
            o,
            &PathBuf::from(string(dir, "dir")?),
            force != 0,
        )?;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `dpmi_experiment_load`, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpmi_experiment_free(handle: *mut DpmiExperiment) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
