//! C ABI over the negative binomial record-linkage model.
//!
//! Models are opaque `NbmModel` handles owned by the caller and released with
//! `nbm_model_free`. Every fallible call returns an `NbmStatus`; on failure a
//! description is available from `nbm_last_error_message` on the same thread.
//! Strings returned by the library are freed with `nbm_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nbmatch::features::ComparisonVector;
use nbmatch::nb_model::{load_model, negbin_logpmf, save_model};
use nbmatch::{edit_distance, Error, GammaParams, Label, NbModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    MalformedModel = 4,
    FormatVersion = 5,
    InvariantViolation = 6,
    Unscorable = 7,
    InvalidArgument = 8,
    NoThreshold = 9,
    Panic = 98,
    Other = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbmDecision {
    Unset = -1,
    NonMatch = 0,
    Match = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbmScore {
    pub log_score: f64,
    pub features_used: u32,
    pub decision: NbmDecision,
}

/// Opaque model handle.
pub struct NbmModel {
    inner: NbModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: NbmStatus, msg: impl Into<String>) -> NbmStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> NbmStatus {
    match err {
        Error::Io { .. } | Error::Csv { .. } => NbmStatus::Io,
        Error::MalformedModel(_) => NbmStatus::MalformedModel,
        Error::FormatVersion { .. } => NbmStatus::FormatVersion,
        Error::InvariantViolation(_) => NbmStatus::InvariantViolation,
        Error::Unscorable { .. } => NbmStatus::Unscorable,
        Error::Domain(_) | Error::Config(_) | Error::Precondition(_) => NbmStatus::InvalidArgument,
        _ => NbmStatus::Other,
    }
}

fn from_error(err: Error) -> NbmStatus {
    let status = status_of(&err);
    fail(status, err.to_string())
}

/// Runs `f`, turning a panic into `NbmStatus::Panic`.
fn guard(f: impl FnOnce() -> NbmStatus) -> NbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(NbmStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, NbmStatus> {
    if p.is_null() {
        return Err(fail(NbmStatus::NullArgument, format!("`{name}` is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NbmStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn model_arg<'a>(model: *const NbmModel) -> Result<&'a NbModel, NbmStatus> {
    model
        .as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| fail(NbmStatus::NullArgument, "`model` is NULL"))
}

unsafe fn counts_arg(model: &NbModel, counts: *const u32, present: *const u8, n: usize) -> Result<ComparisonVector, NbmStatus> {
    if n != model.num_features() {
        return Err(fail(
            NbmStatus::InvalidArgument,
            format!("model has {} features, got {n}", model.num_features()),
        ));
    }
    if n > 0 && (counts.is_null() || present.is_null()) {
        return Err(fail(NbmStatus::NullArgument, "`counts` or `present` is NULL"));
    }
    let counts = (0..n)
        .map(|i| (*present.add(i) != 0).then(|| *counts.add(i)))
        .collect();
    Ok(ComparisonVector { counts })
}

fn write_score(model: &NbModel, cv: &ComparisonVector, out: *mut NbmScore) -> NbmStatus {
    let Some(r) = model.score_vector(cv) else {
        return fail(NbmStatus::Unscorable, "no feature is present on both sides");
    };
    let decision = match r.decision {
        Some(Label::Match) => NbmDecision::Match,
        Some(_) => NbmDecision::NonMatch,
        None => NbmDecision::Unset,
    };
    // SAFETY: caller checked `out` is non-null.
    unsafe {
        *out = NbmScore {
            log_score: r.log_score,
            features_used: r.features_used as u32,
            decision,
        };
    }
    NbmStatus::Ok
}

fn into_handle(model: NbModel, out: *mut *mut NbmModel) -> NbmStatus {
    // SAFETY: caller checked `out` is non-null.
    unsafe { *out = Box::into_raw(Box::new(NbmModel { inner: model })) };
    NbmStatus::Ok
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nbm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nbm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_load(path: *const c_char, out: *mut *mut NbmModel) -> NbmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NbmStatus::NullArgument, "`out` is NULL");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_model(path) {
            Ok(m) => into_handle(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Parses a model from the text of a model file.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_from_toml(text: *const c_char, out: *mut *mut NbmModel) -> NbmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NbmStatus::NullArgument, "`out` is NULL");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match NbModel::from_toml_str(text) {
            Ok(m) => into_handle(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Serializes a model. The returned string is freed with `nbm_string_free`.
/// Returns NULL on failure.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_to_toml(model: *const NbmModel) -> *mut c_char {
    let Ok(m) = model_arg(model) else {
        return ptr::null_mut();
    };
    CString::new(m.to_toml_string()).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_save(model: *const NbmModel, path: *const c_char) -> NbmStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match save_model(m, path) {
            Ok(()) => NbmStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_free(model: *mut NbmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_num_features(model: *const NbmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_features())
}

/// Model version, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_version(model: *const NbmModel) -> u64 {
    model.as_ref().map_or(0, |m| m.inner.version)
}

/// # Safety
/// `model` must be a live handle; `alpha` and `beta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_feature_params(
    model: *const NbmModel,
    index: usize,
    alpha: *mut f64,
    beta: *mut f64,
) -> NbmStatus {
    let m = match model_arg(model) {
        Ok(m) => m,
        Err(s) => return s,
    };
    if alpha.is_null() || beta.is_null() {
        return fail(NbmStatus::NullArgument, "`alpha` or `beta` is NULL");
    }
    let Some(p) = m.params.get(index) else {
        return fail(
            NbmStatus::InvalidArgument,
            format!("feature index {index} out of range"),
        );
    };
    *alpha = p.alpha;
    *beta = p.beta;
    NbmStatus::Ok
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_threshold(model: *const NbmModel, out: *mut f64) -> NbmStatus {
    let m = match model_arg(model) {
        Ok(m) => m,
        Err(s) => return s,
    };
    if out.is_null() {
        return fail(NbmStatus::NullArgument, "`out` is NULL");
    }
    match m.threshold {
        Some(t) => {
            *out = t;
            NbmStatus::Ok
        }
        None => fail(NbmStatus::NoThreshold, "model has no threshold"),
    }
}

/// Scores precomputed edit-distance counts. `present[i] == 0` marks feature
/// `i` as missing; `n` must equal the model's feature count.
///
/// # Safety
/// `counts` and `present` must point to `n` readable elements; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_score_counts(
    model: *const NbmModel,
    counts: *const u32,
    present: *const u8,
    n: usize,
    out: *mut NbmScore,
) -> NbmStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(NbmStatus::NullArgument, "`out` is NULL");
        }
        match counts_arg(m, counts, present, n) {
            Ok(cv) => write_score(m, &cv, out),
            Err(s) => s,
        }
    })
}

/// Scores two records given as field arrays in schema order. A NULL entry
/// marks a missing value. The model's normalization is applied first.
///
/// # Safety
/// `fields_a` and `fields_b` must each point to `n` entries that are NULL or
/// NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_score_strings(
    model: *const NbmModel,
    fields_a: *const *const c_char,
    fields_b: *const *const c_char,
    n: usize,
    out: *mut NbmScore,
) -> NbmStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() || (n > 0 && (fields_a.is_null() || fields_b.is_null())) {
            return fail(NbmStatus::NullArgument, "`fields_a`, `fields_b` or `out` is NULL");
        }
        if n != m.num_features() {
            return fail(
                NbmStatus::InvalidArgument,
                format!("model has {} features, got {n}", m.num_features()),
            );
        }
        let norm = m.schema.normalize;
        let field = |p: *const c_char| -> Result<Option<String>, NbmStatus> {
            if p.is_null() {
                return Ok(None);
            }
            let v = norm.apply(str_arg(p, "field")?);
            Ok((!v.is_empty()).then_some(v))
        };
        let mut counts = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = match (field(*fields_a.add(i)), field(*fields_b.add(i))) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(s), _) | (_, Err(s)) => return s,
            };
            counts.push(match (a, b) {
                (Some(a), Some(b)) => Some(edit_distance(&a, &b)),
                _ => None,
            });
        }
        write_score(m, &ComparisonVector { counts }, out)
    })
}

/// Absorbs one confirmed match given as counts and returns a new handle in
/// `out`. The input handle is not modified.
///
/// # Safety
/// As for `nbm_model_score_counts`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_model_update_counts(
    model: *const NbmModel,
    counts: *const u32,
    present: *const u8,
    n: usize,
    out: *mut *mut NbmModel,
) -> NbmStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(NbmStatus::NullArgument, "`out` is NULL");
        }
        let cv = match counts_arg(m, counts, present, n) {
            Ok(cv) => cv,
            Err(s) => return s,
        };
        if cv.num_present() == 0 {
            return fail(NbmStatus::Unscorable, "no feature is present on both sides");
        }
        let mut next = m.clone();
        for (c, p) in cv.counts.iter().zip(next.params.iter_mut()) {
            if let Some(x) = c {
                *p = p.absorb(u64::from(*x));
            }
        }
        next.version = m.version + 1;
        into_handle(next, out)
    })
}

/// # Safety
/// `s` and `t` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_edit_distance(s: *const c_char, t: *const c_char, out: *mut u32) -> NbmStatus {
    if out.is_null() {
        return fail(NbmStatus::NullArgument, "`out` is NULL");
    }
    let (s, t) = match (str_arg(s, "s"), str_arg(t, "t")) {
        (Ok(s), Ok(t)) => (s, t),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    *out = edit_distance(s, t);
    NbmStatus::Ok
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbm_negbin_logpmf(x: u64, alpha: f64, beta: f64, out: *mut f64) -> NbmStatus {
    if out.is_null() {
        return fail(NbmStatus::NullArgument, "`out` is NULL");
    }
    match GammaParams::new(alpha, beta) {
        Ok(p) => {
            *out = negbin_logpmf(x, &p);
            NbmStatus::Ok
        }
        Err(e) => fail(NbmStatus::InvalidArgument, e.to_string()),
    }
}
