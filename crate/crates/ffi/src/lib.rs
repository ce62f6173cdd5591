//! C ABI over the obfuscation protocols and the profile estimator.
//!
//! Conventions:
//! - Every fallible call returns [`MpkitStatus`]; 0 is success. On failure a
//!   thread-local message is recorded; read it with [`mpkit_last_error`].
//! - Handles (`MpkitModel`, `MpkitSession`) are opaque. Create them with the
//!   matching constructor, release them with the matching `_free`; a handle
//!   must not be used after being freed or from concurrent writers.
//! - Output arrays are caller-allocated; `len` parameters are capacities in
//!   elements, never bytes.
//! - Labels cross the boundary as `int32_t` +1 / -1.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use mpkit::dataset::Label;
use mpkit::error::Error;
use mpkit::factorization::{AnalystModel, ExtendedItemProfile};
use mpkit::protocol::{
    accumulate_session, estimate_profile, estimate_session, mp_disclose, mp_obfuscate,
    mpss_disclose, mpss_obfuscate, round_ratings, theoretical_l2_loss, ObfuscatedFeedback,
    UserSession,
};
use mpkit::seed;

/// Call outcome. Zero means success; every other value names a failure class
/// and leaves a detail message readable through `mpkit_last_error`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpkitStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was outside its documented domain.
    InvalidArgument = 3,
    /// Structurally invalid data (bad JSON, unknown item id, ...).
    InvalidData = 4,
    /// A normal matrix that must be inverted is singular.
    SingularSystem = 5,
    /// An output buffer is too small for the result.
    BufferTooSmall = 6,
    /// Unexpected internal failure.
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    // Interior NULs cannot appear in our own messages, but cheap insurance
    // beats a poisoned error channel.
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn fail(err: Error) -> MpkitStatus {
    let status = match &err {
        Error::InvalidArgument(_) => MpkitStatus::InvalidArgument,
        Error::InvalidData(_) | Error::Parse { .. } | Error::Json(_) => MpkitStatus::InvalidData,
        Error::SingularSystem(_) => MpkitStatus::SingularSystem,
        _ => MpkitStatus::Internal,
    };
    set_error(&err.to_string());
    status
}

fn fail_null(what: &str) -> MpkitStatus {
    set_error(&format!("{what} must not be null"));
    MpkitStatus::NullPointer
}

/// Catches panics so they surface as `Internal` instead of crossing the ABI.
fn guard<F: FnOnce() -> MpkitStatus>(f: F) -> MpkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MpkitStatus::Internal
        }
    }
}

/// `slice::from_raw_parts` that tolerates `len == 0` with a null pointer.
unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(ptr, len))
    }
}

fn label_arg(label: i32) -> Result<Label, Error> {
    match label {
        1 => Ok(Label::Plus),
        -1 => Ok(Label::Minus),
        other => Err(Error::InvalidArgument(format!("label {other} must be +1 or -1"))),
    }
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mpkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread, or an empty string if
/// nothing failed yet. The pointer stays valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn mpkit_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque handle to a trained analyst model.
pub struct MpkitModel {
    model: AnalystModel,
}

impl MpkitModel {
    fn profiles_for(&self, items: &[u64]) -> Result<Vec<ExtendedItemProfile>, Error> {
        self.model.profiles(items)
    }
}

/// Parses a model from its JSON form (as written by `mpkit train`).
///
/// On success `*out` owns the handle; release it with `mpkit_model_free`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpkit_model_from_json(
    json: *const c_char,
    out: *mut *mut MpkitModel,
) -> MpkitStatus {
    guard(|| {
        if out.is_null() {
            return fail_null("out");
        }
        if json.is_null() {
            return fail_null("json");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(text) => text,
            Err(e) => {
                set_error(&format!("model JSON is not UTF-8: {e}"));
                return MpkitStatus::InvalidUtf8;
            }
        };
        match AnalystModel::from_json(text) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(MpkitModel { model }));
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from `mpkit_model_from_json`, freed only once.
#[no_mangle]
pub unsafe extern "C" fn mpkit_model_free(model: *mut MpkitModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Latent dimension of the model; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpkit_model_dim(model: *const MpkitModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).model.d
    }
}

/// Number of catalog items; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpkit_model_len(model: *const MpkitModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).model.items.len()
    }
}

/// Reads catalog entry `index`: item id, bias, and the latent vector.
///
/// `latent_out` must hold `mpkit_model_dim` doubles. Any output pointer may
/// be null to skip that field.
///
/// # Safety
/// `model` must be a live handle; non-null output pointers must be valid,
/// with `latent_out` sized to the model dimension.
#[no_mangle]
pub unsafe extern "C" fn mpkit_model_item(
    model: *const MpkitModel,
    index: usize,
    id_out: *mut u64,
    bias_out: *mut f64,
    latent_out: *mut f64,
) -> MpkitStatus {
    guard(|| {
        if model.is_null() {
            return fail_null("model");
        }
        let model = &(*model).model;
        let Some(item) = model.items.get(index) else {
            set_error(&format!("index {index} out of range for {} items", model.items.len()));
            return MpkitStatus::InvalidArgument;
        };
        if !id_out.is_null() {
            *id_out = item.id;
        }
        if !bias_out.is_null() {
            *bias_out = item.bias;
        }
        if !latent_out.is_null() {
            slice::from_raw_parts_mut(latent_out, item.latent.len())
                .copy_from_slice(&item.latent);
        }
        MpkitStatus::Ok
    })
}

/// Midpoint obfuscation: `values_out[j] = ratings[j] - label * bias(items[j])`.
///
/// Every item is revealed, so `values_out` must hold `len` doubles. Unknown
/// item ids fail with `InvalidData`.
///
/// # Safety
/// `model` must be a live handle; `items` and `ratings` must hold `len`
/// elements; `values_out` must have capacity `len`.
#[no_mangle]
pub unsafe extern "C" fn mpkit_mp_obfuscate(
    model: *const MpkitModel,
    label: i32,
    items: *const u64,
    ratings: *const f64,
    len: usize,
    values_out: *mut f64,
) -> MpkitStatus {
    guard(|| {
        if model.is_null() {
            return fail_null("model");
        }
        let (Some(items), Some(ratings)) = (slice_arg(items, len), slice_arg(ratings, len))
        else {
            return fail_null("items/ratings");
        };
        if values_out.is_null() && len > 0 {
            return fail_null("values_out");
        }
        let result = (|| {
            let label = label_arg(label)?;
            let profiles = (*model).profiles_for(items)?;
            let disclosure = mp_disclose(&profiles)?;
            mp_obfuscate(ratings, label, &disclosure)
        })();
        match result {
            Ok(feedback) => {
                slice::from_raw_parts_mut(values_out, len).copy_from_slice(&feedback.values);
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Sub-sampled midpoint obfuscation.
///
/// Draws the keep/drop coins from a deterministic stream seeded by
/// `rng_seed`, then midpoint-shifts the kept ratings. The revealed subset
/// lands in `items_out`/`values_out` (capacity `len` suffices: the output
/// never exceeds the input) and its length in `*n_out`.
///
/// # Safety
/// `model` must be a live handle; `items` and `ratings` must hold `len`
/// elements; `items_out` and `values_out` must have capacity `len`; `n_out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpkit_mpss_obfuscate(
    model: *const MpkitModel,
    label: i32,
    items: *const u64,
    ratings: *const f64,
    len: usize,
    rng_seed: u64,
    items_out: *mut u64,
    values_out: *mut f64,
    n_out: *mut usize,
) -> MpkitStatus {
    guard(|| {
        if model.is_null() {
            return fail_null("model");
        }
        let (Some(items), Some(ratings)) = (slice_arg(items, len), slice_arg(ratings, len))
        else {
            return fail_null("items/ratings");
        };
        if n_out.is_null() {
            return fail_null("n_out");
        }
        if (items_out.is_null() || values_out.is_null()) && len > 0 {
            return fail_null("items_out/values_out");
        }
        let result = (|| {
            let label = label_arg(label)?;
            let handle = &*model;
            let profiles = handle.profiles_for(items)?;
            let probs: Vec<(f64, f64)> = items
                .iter()
                .map(|&id| {
                    // profiles_for already rejected unknown ids.
                    let item = handle.model.item(id).expect("id resolved above");
                    (item.p_plus, item.p_minus)
                })
                .collect();
            let disclosure = mpss_disclose(&profiles, &probs)?;
            let s0: Vec<(u64, f64)> =
                items.iter().copied().zip(ratings.iter().copied()).collect();
            let mut rng = seed::rng(rng_seed, &[seed::stream::AGENT]);
            mpss_obfuscate(&s0, label, &disclosure, &mut rng)
        })();
        match result {
            Ok(feedback) => {
                let n = feedback.len();
                slice::from_raw_parts_mut(items_out, n).copy_from_slice(&feedback.revealed);
                slice::from_raw_parts_mut(values_out, n).copy_from_slice(&feedback.values);
                *n_out = n;
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Least-squares profile estimate from revealed (item, value) pairs.
///
/// Solves against the model's catalog with ridge stabilizer `ridge`;
/// `x_hat_out` must hold `x_hat_len >= mpkit_model_dim` doubles. The
/// expected squared error at noise scale `sigma` lands in `*loss_out` when
/// non-null.
///
/// # Safety
/// `model` must be a live handle; `items` and `values` must hold `len`
/// elements; `x_hat_out` must have capacity `x_hat_len`.
#[no_mangle]
pub unsafe extern "C" fn mpkit_estimate_profile(
    model: *const MpkitModel,
    items: *const u64,
    values: *const f64,
    len: usize,
    ridge: f64,
    sigma: f64,
    x_hat_out: *mut f64,
    x_hat_len: usize,
    loss_out: *mut f64,
) -> MpkitStatus {
    guard(|| {
        if model.is_null() {
            return fail_null("model");
        }
        let (Some(items), Some(values)) = (slice_arg(items, len), slice_arg(values, len))
        else {
            return fail_null("items/values");
        };
        if x_hat_out.is_null() {
            return fail_null("x_hat_out");
        }
        let handle = &*model;
        if x_hat_len < handle.model.d {
            set_error(&format!(
                "x_hat buffer holds {x_hat_len} values, the model dimension is {}",
                handle.model.d
            ));
            return MpkitStatus::BufferTooSmall;
        }
        let result = (|| {
            let catalog: Vec<ExtendedItemProfile> =
                handle.model.items.iter().map(|item| item.profile()).collect();
            let feedback = ObfuscatedFeedback::new(items.to_vec(), values.to_vec())?;
            estimate_profile(&catalog, &feedback, ridge, sigma)
        })();
        match result {
            Ok(estimate) => {
                slice::from_raw_parts_mut(x_hat_out, estimate.x_hat.len())
                    .copy_from_slice(&estimate.x_hat);
                if !loss_out.is_null() {
                    *loss_out = estimate.expected_loss;
                }
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Expected squared estimation error of soliciting exactly `items`, at noise
/// scale `sigma`: `sigma^2 * tr[(sum v v^T)^-1]`.
///
/// # Safety
/// `model` must be a live handle; `items` must hold `len` elements;
/// `loss_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpkit_theoretical_l2_loss(
    model: *const MpkitModel,
    items: *const u64,
    len: usize,
    sigma: f64,
    loss_out: *mut f64,
) -> MpkitStatus {
    guard(|| {
        if model.is_null() {
            return fail_null("model");
        }
        let Some(items) = slice_arg(items, len) else {
            return fail_null("items");
        };
        if loss_out.is_null() {
            return fail_null("loss_out");
        }
        let result = (*model)
            .profiles_for(items)
            .and_then(|profiles| theoretical_l2_loss(&profiles, sigma));
        match result {
            Ok(loss) => {
                *loss_out = loss;
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Expectation-preserving stochastic rounding of `values` onto the integer
/// scale `[lo, hi]`, deterministic in `rng_seed`.
///
/// # Safety
/// `values` must hold `len` elements; `out` must have capacity `len`.
#[no_mangle]
pub unsafe extern "C" fn mpkit_round_ratings(
    values: *const f64,
    len: usize,
    lo: i64,
    hi: i64,
    rng_seed: u64,
    out: *mut i64,
) -> MpkitStatus {
    guard(|| {
        let Some(values) = slice_arg(values, len) else {
            return fail_null("values");
        };
        if out.is_null() && len > 0 {
            return fail_null("out");
        }
        let mut rng = seed::rng(rng_seed, &[seed::stream::ROUND]);
        match round_ratings(values, lo, hi, &mut rng) {
            Ok(rounded) => {
                slice::from_raw_parts_mut(out, len).copy_from_slice(&rounded);
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Opaque multi-round user session.
///
/// Holds the private label on the user's side of the boundary; the type has
/// no serialized form, so the label cannot leak through this API.
pub struct MpkitSession {
    session: UserSession,
}

/// Creates a session for a user with the given private label (+1 or -1).
///
/// Release with `mpkit_session_free`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpkit_session_new(
    label: i32,
    out: *mut *mut MpkitSession,
) -> MpkitStatus {
    guard(|| {
        if out.is_null() {
            return fail_null("out");
        }
        match label_arg(label) {
            Ok(label) => {
                *out = Box::into_raw(Box::new(MpkitSession { session: UserSession::new(label) }));
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a session handle. Null is a no-op.
///
/// # Safety
/// `session` must be a handle from `mpkit_session_new`, freed only once.
#[no_mangle]
pub unsafe extern "C" fn mpkit_session_free(session: *mut MpkitSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Total feedback points accumulated so far; 0 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpkit_session_n_points(session: *const MpkitSession) -> usize {
    if session.is_null() {
        0
    } else {
        (*session).session.n_points()
    }
}

/// Midpoint-obfuscates one round of ratings and accumulates the feedback.
///
/// The round solicits `items` from the model's catalog; on failure the
/// session is left unchanged.
///
/// # Safety
/// `session` must be a live handle with exclusive access; `model` must be a
/// live handle; `items` and `ratings` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn mpkit_session_add_round(
    session: *mut MpkitSession,
    model: *const MpkitModel,
    items: *const u64,
    ratings: *const f64,
    len: usize,
) -> MpkitStatus {
    guard(|| {
        if session.is_null() {
            return fail_null("session");
        }
        if model.is_null() {
            return fail_null("model");
        }
        let (Some(items), Some(ratings)) = (slice_arg(items, len), slice_arg(ratings, len))
        else {
            return fail_null("items/ratings");
        };
        let handle = &mut *session;
        let result = (|| {
            let profiles = (*model).profiles_for(items)?;
            let disclosure = mp_disclose(&profiles)?;
            let feedback = mp_obfuscate(ratings, handle.session.label(), &disclosure)?;
            accumulate_session(handle.session.clone(), &profiles, feedback)
        })();
        match result {
            Ok(updated) => {
                handle.session = updated;
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Least-squares estimate over every accumulated round.
///
/// `x_hat_out` must hold `x_hat_len` doubles, at least the model dimension
/// used by the rounds. The estimate's length lands in `*n_out` when
/// non-null; the expected loss in `*loss_out` when non-null.
///
/// # Safety
/// `session` must be a live handle; `x_hat_out` must have capacity
/// `x_hat_len`; non-null output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpkit_session_estimate(
    session: *const MpkitSession,
    ridge: f64,
    sigma: f64,
    x_hat_out: *mut f64,
    x_hat_len: usize,
    loss_out: *mut f64,
    n_out: *mut usize,
) -> MpkitStatus {
    guard(|| {
        if session.is_null() {
            return fail_null("session");
        }
        if x_hat_out.is_null() {
            return fail_null("x_hat_out");
        }
        match estimate_session(&(*session).session, ridge, sigma) {
            Ok(estimate) => {
                if estimate.x_hat.len() > x_hat_len {
                    set_error(&format!(
                        "x_hat buffer holds {x_hat_len} values, the estimate has {}",
                        estimate.x_hat.len()
                    ));
                    return MpkitStatus::BufferTooSmall;
                }
                slice::from_raw_parts_mut(x_hat_out, estimate.x_hat.len())
                    .copy_from_slice(&estimate.x_hat);
                if !loss_out.is_null() {
                    *loss_out = estimate.expected_loss;
                }
                if !n_out.is_null() {
                    *n_out = estimate.x_hat.len();
                }
                MpkitStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
