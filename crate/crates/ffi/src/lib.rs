//! C ABI over the `dgcm` test pipeline.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`DgcmStatus`]; on failure the message is
//! available from [`dgcm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dgcm::cli::bh_adjust;
use dgcm::engine::{
    run_dgcm, run_independence, LagWindowConfig, Norm, RegressionConfig, StatisticFamily, StatisticKind,
    TestConfig,
};
use dgcm::modelsel::CvConfig;
use dgcm::sieve::SieveConfig;
use dgcm::ts::{CondPair, HypothesisKind, HypothesisSpec, Role, TimeSeriesPanel, Tuple};
use dgcm::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgcmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgcmRole {
    X = 0,
    Y = 1,
    Z = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgcmFamily {
    MaxPartialSum = 0,
    FullSum = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgcmNorm {
    L2 = 0,
    Max = 1,
}

/// Opaque panel of X, Y and Z series.
pub struct DgcmPanel(TimeSeriesPanel);

/// Opaque hypothesis under construction.
pub struct DgcmHypothesis {
    conditional: bool,
    tuples: Vec<Tuple>,
    conditioning: Vec<CondPair>,
}

/// Test settings. `window == 0` selects the lag window automatically;
/// `time_basis == 0` selects the basis counts by cross-validation.
/// Role and family fields hold the integer values of the enums above.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DgcmTestConfig {
    pub alpha: f64,
    pub sims: usize,
    pub seed: u64,
    pub family: u32,
    pub norm: u32,
    pub window: usize,
    pub delta: usize,
    pub time_basis: usize,
    pub cov_basis: usize,
    pub gamma: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DgcmReport {
    pub statistic: f64,
    pub quantile: f64,
    pub p_value: f64,
    pub reject: bool,
    pub window: usize,
    pub window_times: usize,
    pub dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DgcmStatus, message: impl Into<String>) -> DgcmStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> DgcmStatus {
    let status = match e.class() {
        ErrorClass::Usage => DgcmStatus::InvalidArgument,
        ErrorClass::Data => DgcmStatus::DataError,
        ErrorClass::Numerical => DgcmStatus::NumericalError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> DgcmStatus) -> DgcmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DgcmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Message of the last failure on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dgcm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dgcm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dgcm_panel_new(n: usize, out: *mut *mut DgcmPanel) -> DgcmStatus {
    guard(|| {
        if out.is_null() {
            return fail(DgcmStatus::NullPointer, "out is null");
        }
        match TimeSeriesPanel::new(n) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(DgcmPanel(p)));
                DgcmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Appends one series of `len` values for `role` (see [`DgcmRole`]).
///
/// # Safety
/// `panel` must come from [`dgcm_panel_new`]; `label` must be a
/// NUL-terminated string or NULL; `values` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dgcm_panel_add_series(
    panel: *mut DgcmPanel,
    role: u32,
    label: *const c_char,
    values: *const f64,
    len: usize,
) -> DgcmStatus {
    guard(|| {
        if panel.is_null() || values.is_null() {
            return fail(DgcmStatus::NullPointer, "panel or values is null");
        }
        let role = match role {
            0 => Role::X,
            1 => Role::Y,
            2 => Role::Z,
            r => return fail(DgcmStatus::InvalidArgument, format!("unknown role {r}")),
        };
        let label = if label.is_null() {
            String::new()
        } else {
            match CStr::from_ptr(label).to_str() {
                Ok(s) => s.to_string(),
                Err(_) => return fail(DgcmStatus::InvalidArgument, "label is not UTF-8"),
            }
        };
        let values = std::slice::from_raw_parts(values, len).to_vec();
        match (*panel).0.push(role, label, values) {
            Ok(()) => DgcmStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `panel` must come from [`dgcm_panel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dgcm_panel_free(panel: *mut DgcmPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Starts a hypothesis; with `conditional` false the conditioning set
/// must stay empty.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dgcm_hypothesis_new(conditional: bool, out: *mut *mut DgcmHypothesis) -> DgcmStatus {
    guard(|| {
        if out.is_null() {
            return fail(DgcmStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(DgcmHypothesis {
            conditional,
            tuples: Vec::new(),
            conditioning: Vec::new(),
        }));
        DgcmStatus::Ok
    })
}

/// Adds the pair `X[x_dim](t + x_offset)`, `Y[y_dim](t + y_offset)`.
///
/// # Safety
/// `hypothesis` must come from [`dgcm_hypothesis_new`].
#[no_mangle]
pub unsafe extern "C" fn dgcm_hypothesis_add_tuple(
    hypothesis: *mut DgcmHypothesis,
    x_dim: usize,
    y_dim: usize,
    x_offset: i64,
    y_offset: i64,
) -> DgcmStatus {
    guard(|| {
        if hypothesis.is_null() {
            return fail(DgcmStatus::NullPointer, "hypothesis is null");
        }
        (*hypothesis).tuples.push(Tuple::new(x_dim, y_dim, x_offset, y_offset));
        DgcmStatus::Ok
    })
}

/// Conditions on `Z[dim](t + offset)`.
///
/// # Safety
/// `hypothesis` must come from [`dgcm_hypothesis_new`].
#[no_mangle]
pub unsafe extern "C" fn dgcm_hypothesis_add_conditioning(
    hypothesis: *mut DgcmHypothesis,
    dim: usize,
    offset: i64,
) -> DgcmStatus {
    guard(|| {
        if hypothesis.is_null() {
            return fail(DgcmStatus::NullPointer, "hypothesis is null");
        }
        (*hypothesis).conditioning.push(CondPair::new(dim, offset));
        DgcmStatus::Ok
    })
}

/// # Safety
/// `hypothesis` must come from [`dgcm_hypothesis_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dgcm_hypothesis_free(hypothesis: *mut DgcmHypothesis) {
    if !hypothesis.is_null() {
        drop(Box::from_raw(hypothesis));
    }
}

#[no_mangle]
pub extern "C" fn dgcm_test_config_default() -> DgcmTestConfig {
    let test = TestConfig::default();
    let cv = CvConfig::default();
    DgcmTestConfig {
        alpha: test.alpha,
        sims: test.sims,
        seed: test.seed,
        family: DgcmFamily::MaxPartialSum as u32,
        norm: DgcmNorm::L2 as u32,
        window: 0,
        delta: dgcm::covest::DEFAULT_DELTA,
        time_basis: 0,
        cov_basis: 0,
        gamma: cv.gamma,
    }
}

fn settings(c: &DgcmTestConfig) -> Result<(RegressionConfig, LagWindowConfig, TestConfig), String> {
    let family = match c.family {
        0 => StatisticFamily::MaxPartialSum,
        1 => StatisticFamily::FullSum,
        f => return Err(format!("unknown statistic family {f}")),
    };
    let norm = match c.norm {
        0 => Norm::L2,
        1 => Norm::Max,
        v => return Err(format!("unknown norm {v}")),
    };
    let regression = if c.time_basis == 0 {
        RegressionConfig::cross_validated(CvConfig {
            gamma: c.gamma,
            ..CvConfig::default()
        })
    } else {
        RegressionConfig::fixed(SieveConfig::new(c.time_basis, c.cov_basis.max(1)))
    };
    let lag = if c.window == 0 {
        LagWindowConfig::Auto {
            candidates: None,
            delta: c.delta,
        }
    } else {
        LagWindowConfig::Fixed(c.window)
    };
    let test = TestConfig {
        alpha: c.alpha,
        sims: c.sims,
        seed: c.seed,
        statistic: StatisticKind::new(family, norm),
    };
    Ok((regression, lag, test))
}

/// Runs the conditional or unconditional test, as set when the
/// hypothesis was created, and writes the outcome to `out`.
///
/// # Safety
/// All pointers must be valid; `config` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn dgcm_run(
    panel: *const DgcmPanel,
    hypothesis: *const DgcmHypothesis,
    config: *const DgcmTestConfig,
    out: *mut DgcmReport,
) -> DgcmStatus {
    guard(|| {
        if panel.is_null() || hypothesis.is_null() || out.is_null() {
            return fail(DgcmStatus::NullPointer, "panel, hypothesis or out is null");
        }
        let config = if config.is_null() {
            dgcm_test_config_default()
        } else {
            *config
        };
        let (regression, lag, test) = match settings(&config) {
            Ok(s) => s,
            Err(m) => return fail(DgcmStatus::InvalidArgument, m),
        };
        let h = &*hypothesis;
        let kind = if h.conditional {
            HypothesisKind::Conditional
        } else {
            HypothesisKind::Unconditional
        };
        let spec = match HypothesisSpec::new(kind, h.tuples.clone(), h.conditioning.clone()) {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        let panel = &(*panel).0;
        let result = if h.conditional {
            run_dgcm(panel, &spec, &regression, &lag, &test)
        } else {
            run_independence(panel, &spec, &regression, &lag, &test)
        };
        match result {
            Ok(r) => {
                *out = DgcmReport {
                    statistic: r.statistic,
                    quantile: r.quantile,
                    p_value: r.p_value,
                    reject: r.reject,
                    window: r.diagnostics.window,
                    window_times: r.diagnostics.window_times,
                    dim: r.diagnostics.dim,
                };
                DgcmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Benjamini-Hochberg adjustment of `len` p-values into `out`.
///
/// # Safety
/// `pvalues` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dgcm_bh_adjust(pvalues: *const f64, len: usize, out: *mut f64) -> DgcmStatus {
    guard(|| {
        if len > 0 && (pvalues.is_null() || out.is_null()) {
            return fail(DgcmStatus::NullPointer, "pvalues or out is null");
        }
        if len == 0 {
            return DgcmStatus::Ok;
        }
        let p = std::slice::from_raw_parts(pvalues, len);
        match bh_adjust(p) {
            Ok(adj) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(&adj);
                DgcmStatus::Ok
            }
            Err(e) => fail(DgcmStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_is_set() {
        let status = unsafe { dgcm_panel_new(0, ptr::null_mut()) };
        assert_eq!(status, DgcmStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(dgcm_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("null"));
    }

    #[test]
    fn guard_catches_panics() {
        assert_eq!(guard(|| panic!("boom")), DgcmStatus::Panic);
        let msg = unsafe { CStr::from_ptr(dgcm_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
    }

    #[test]
    fn settings_reject_unknown_enums() {
        let mut c = dgcm_test_config_default();
        c.norm = 7;
        assert!(settings(&c).is_err());
    }
}
