//! C ABI for the level engine.
//!
//! Every function returns a [`CfdrStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free` function. On failure, [`cfdr_last_error`] describes the most
//! recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::sync::Arc;

use conflictfdr::conflict::{BatchLayout, ConflictTopology, LagSequence};
use conflictfdr::engine::{Algorithm, Engine, EngineParams};
use conflictfdr::gamma::{make_gamma, GammaKind, DEFAULT_HORIZON};
use conflictfdr::types::DecisionSchedule;
use conflictfdr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Sequencing = 3,
    OutOfRange = 4,
    PValueRange = 5,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfdrAlgorithm {
    LordPp = 0,
    Lond = 1,
    SaffronConstLambda = 2,
    AlphaInvesting = 3,
    ReshapedLond = 4,
    AlphaSpending = 5,
    Uncorrected = 6,
    NaiveCompletedOnly = 7,
    LordDiscounted = 8,
}

impl From<CfdrAlgorithm> for Algorithm {
    fn from(a: CfdrAlgorithm) -> Self {
        match a {
            CfdrAlgorithm::LordPp => Algorithm::LordPlusPlus,
            CfdrAlgorithm::Lond => Algorithm::Lond,
            CfdrAlgorithm::SaffronConstLambda => Algorithm::SaffronConstLambda,
            CfdrAlgorithm::AlphaInvesting => Algorithm::AlphaInvesting,
            CfdrAlgorithm::ReshapedLond => Algorithm::ReshapedLond,
            CfdrAlgorithm::AlphaSpending => Algorithm::AlphaSpending,
            CfdrAlgorithm::Uncorrected => Algorithm::Uncorrected,
            CfdrAlgorithm::NaiveCompletedOnly => Algorithm::NaiveCompletedOnly,
            CfdrAlgorithm::LordDiscounted => Algorithm::LordDiscounted,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfdrGammaKind {
    LogDecay = 0,
    PowerDecay = 1,
}

/// Opaque conflict topology.
pub struct CfdrTopology(Arc<ConflictTopology>);

/// Opaque engine.
pub struct CfdrEngine(Engine);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(err: Error) -> CfdrStatus {
    let status = match &err {
        Error::Sequencing(_) => CfdrStatus::Sequencing,
        Error::OutOfRange { .. } => CfdrStatus::OutOfRange,
        Error::PValueRange(_) => CfdrStatus::PValueRange,
        Error::Parameter(_) | Error::Gamma(_) | Error::Topology(_) => CfdrStatus::InvalidArgument,
        _ => CfdrStatus::Internal,
    };
    set_error(err.to_string());
    status
}

fn null_pointer() -> CfdrStatus {
    set_error("null pointer argument".into());
    CfdrStatus::NullPointer
}

/// Runs `f`, turning panics into [`CfdrStatus::Internal`].
fn guard(f: impl FnOnce() -> CfdrStatus) -> CfdrStatus {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic".into());
        CfdrStatus::Internal
    })
}

unsafe fn slice<'a, T>(data: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn emit_topology(
    topo: conflictfdr::Result<ConflictTopology>,
    out: *mut *mut CfdrTopology,
) -> CfdrStatus {
    match topo {
        Ok(t) => {
            *out = Box::into_raw(Box::new(CfdrTopology(Arc::new(t))));
            CfdrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cfdr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Synchronous topology with no conflicts and no length limit.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfdr_topology_none(out: *mut *mut CfdrTopology) -> CfdrStatus {
    guard(|| {
        if out.is_null() {
            return null_pointer();
        }
        emit_topology(Ok(ConflictTopology::none()), out)
    })
}

/// Asynchronous topology from decision indices `E_1..E_len` (1-based);
/// `0` marks a test that never finishes.
///
/// # Safety
/// `finish_times` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_topology_async(
    finish_times: *const u64,
    len: usize,
    out: *mut *mut CfdrTopology,
) -> CfdrStatus {
    guard(|| {
        let Some(times) = slice(finish_times, len) else {
            return null_pointer();
        };
        if out.is_null() {
            return null_pointer();
        }
        let times = times.iter().map(|&e| (e != 0).then_some(e as usize)).collect();
        emit_topology(DecisionSchedule::new(times).map(ConflictTopology::asynchronous), out)
    })
}

/// Lagged topology from lags `L_1..L_len`.
///
/// # Safety
/// `lags` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_topology_lagged(
    lags: *const u64,
    len: usize,
    out: *mut *mut CfdrTopology,
) -> CfdrStatus {
    guard(|| {
        let Some(lags) = slice(lags, len) else {
            return null_pointer();
        };
        if out.is_null() {
            return null_pointer();
        }
        let lags = lags.iter().map(|&l| l as usize).collect();
        emit_topology(LagSequence::new(lags).map(ConflictTopology::lagged), out)
    })
}

/// Mini-batch topology from consecutive batch sizes.
///
/// # Safety
/// `sizes` must point to `n_batches` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_topology_minibatch(
    sizes: *const u64,
    n_batches: usize,
    out: *mut *mut CfdrTopology,
) -> CfdrStatus {
    guard(|| {
        let Some(sizes) = slice(sizes, n_batches) else {
            return null_pointer();
        };
        if out.is_null() {
            return null_pointer();
        }
        let sizes = sizes.iter().map(|&n| n as usize).collect();
        emit_topology(BatchLayout::new(sizes).map(ConflictTopology::minibatch), out)
    })
}

/// # Safety
/// `topology` must come from a `cfdr_topology_*` constructor and not be
/// freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cfdr_topology_free(topology: *mut CfdrTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

/// Create an engine. `horizon = 0` selects the default γ horizon. The
/// engine keeps its own reference to the topology.
///
/// # Safety
/// `topology` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_new(
    algorithm: CfdrAlgorithm,
    alpha: f64,
    w0: f64,
    lambda: f64,
    gamma_kind: CfdrGammaKind,
    gamma_exponent: f64,
    horizon: u64,
    topology: *const CfdrTopology,
    out: *mut *mut CfdrEngine,
) -> CfdrStatus {
    guard(|| {
        if topology.is_null() || out.is_null() {
            return null_pointer();
        }
        let kind = match gamma_kind {
            CfdrGammaKind::LogDecay => GammaKind::LogDecay,
            CfdrGammaKind::PowerDecay => GammaKind::PowerDecay {
                exponent: gamma_exponent,
            },
        };
        let horizon = if horizon == 0 {
            DEFAULT_HORIZON
        } else {
            horizon as usize
        };
        let gamma = match make_gamma(kind, horizon) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        let params = EngineParams::new(algorithm.into(), alpha)
            .with_w0(w0)
            .with_lambda(lambda);
        match Engine::new(params, gamma, (*topology).0.clone()) {
            Ok(e) => {
                *out = Box::into_raw(Box::new(CfdrEngine(e)));
                CfdrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `engine` must come from [`cfdr_engine_new`] and not be freed twice.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_free(engine: *mut CfdrEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Start the next test and return its level. `lambda_out` may be null; it
/// receives the candidacy threshold, or a negative value if there is none.
///
/// # Safety
/// `engine` and `level_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_start_test(
    engine: *mut CfdrEngine,
    level_out: *mut f64,
    lambda_out: *mut f64,
) -> CfdrStatus {
    guard(|| {
        if engine.is_null() || level_out.is_null() {
            return null_pointer();
        }
        match (*engine).0.start_test() {
            Ok(a) => {
                *level_out = a.level;
                if !lambda_out.is_null() {
                    *lambda_out = a.lambda.unwrap_or(-1.0);
                }
                CfdrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Report the p-value of test `index` (1-based).
///
/// # Safety
/// `engine` must be valid; `rejected_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_observe_outcome(
    engine: *mut CfdrEngine,
    index: u64,
    p_value: f64,
    rejected_out: *mut bool,
) -> CfdrStatus {
    guard(|| {
        if engine.is_null() {
            return null_pointer();
        }
        match (*engine).0.observe_outcome(index as usize, p_value) {
            Ok(o) => {
                if !rejected_out.is_null() {
                    *rejected_out = o.rejected;
                }
                CfdrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// No further tests will start; outstanding outcomes may still be reported.
///
/// # Safety
/// `engine` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_close(engine: *mut CfdrEngine) -> CfdrStatus {
    guard(|| {
        if engine.is_null() {
            return null_pointer();
        }
        match (*engine).0.close() {
            Ok(()) => CfdrStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// The algorithm's current FDP estimate.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_fdp_hat(engine: *const CfdrEngine, out: *mut f64) -> CfdrStatus {
    guard(|| {
        if engine.is_null() || out.is_null() {
            return null_pointer();
        }
        *out = (*engine).0.fdp_hat();
        CfdrStatus::Ok
    })
}

/// Rejections that have left every conflict set.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_nonconflicting_rejections(
    engine: *const CfdrEngine,
    out: *mut u64,
) -> CfdrStatus {
    guard(|| {
        if engine.is_null() || out.is_null() {
            return null_pointer();
        }
        *out = (*engine).0.nonconflicting_rejections() as u64;
        CfdrStatus::Ok
    })
}

/// Index of the most recently started test (0 before the first start).
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cfdr_engine_current_index(
    engine: *const CfdrEngine,
    out: *mut u64,
) -> CfdrStatus {
    guard(|| {
        if engine.is_null() || out.is_null() {
            return null_pointer();
        }
        *out = (*engine).0.t() as u64;
        CfdrStatus::Ok
    })
}
