//! C ABI over the shockstab core.
//!
//! Objects are opaque handles created by `*_new`/`*_solve`/`*_run` functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`ShockstabStatus`]; the message of the last failure on the calling
//! thread is available from [`shockstab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use shockstab::evolve::{asymptotic_location, evolve_nonlinear, track_phase, EvolveControls, InitialData, ShockTrack, TrackOptions};
use shockstab::lemma_verify::{identity_sweep, LemmaId};
use shockstab::model::{registry, FluxModel, ModelSpec};
use shockstab::profile::{predicted_tail_rate, solve_profile, Profile, ProfileOptions};
use shockstab::spectral::{check_condition_d, linearized_coefficients, SpectralOptions};
use shockstab::templates::{template_sum, ExcitedKernel, TemplateParams};
use shockstab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShockstabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    WrongKind = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque conservation-law model.
pub struct ShockstabModel {
    inner: FluxModel,
}

/// Opaque viscous shock profile bound to the model it was solved for.
pub struct ShockstabProfile {
    model: FluxModel,
    inner: Profile,
}

/// Opaque tracked shock location history.
pub struct ShockstabTrack {
    inner: ShockTrack,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ShockstabStatus {
    match e {
        Error::Config(_) | Error::Serde(_) => ShockstabStatus::Config,
        Error::DomainError(_) => ShockstabStatus::InvalidArgument,
        Error::WrongKind(_) => ShockstabStatus::WrongKind,
        Error::Io(_) => ShockstabStatus::Io,
        _ => ShockstabStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), ShockstabFailure>>(f: F) -> ShockstabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ShockstabStatus::Ok,
        Ok(Err(ShockstabFailure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ShockstabStatus::Panic
        }
    }
}

struct ShockstabFailure(ShockstabStatus, String);

impl From<Error> for ShockstabFailure {
    fn from(e: Error) -> Self {
        ShockstabFailure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> ShockstabFailure {
    ShockstabFailure(ShockstabStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> ShockstabFailure {
    ShockstabFailure(ShockstabStatus::InvalidArgument, msg.into())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, ShockstabFailure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], ShockstabFailure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(invalid(format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn shockstab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn shockstab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Looks up a built-in model (`burgers`, `burgers2x2`, `coupled_quadratic`, `slemrod_reduced`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shockstab_model_from_registry(name: *const c_char, out: *mut *mut ShockstabModel) -> ShockstabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = read_str(name, "name")?;
        let inner = registry(name)?;
        *out = Box::into_raw(Box::new(ShockstabModel { inner }));
        Ok(())
    })
}

/// Builds a polynomial model from its JSON description
/// (`name`, `u_minus`, `u_plus`, `flux`, `viscosity`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shockstab_model_from_json(json: *const c_char, out: *mut *mut ShockstabModel) -> ShockstabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| ShockstabFailure(ShockstabStatus::Config, e.to_string()))?;
        let inner = spec.build()?;
        *out = Box::into_raw(Box::new(ShockstabModel { inner }));
        Ok(())
    })
}

/// System size `n`, or 0 for a null handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shockstab_model_dim(model: *const ShockstabModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shockstab_model_free(model: *mut ShockstabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves the traveling-wave profile with default options.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shockstab_profile_solve(model: *const ShockstabModel, out: *mut *mut ShockstabProfile) -> ShockstabStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = solve_profile(&m.inner, &ProfileOptions::default())?;
        *out = Box::into_raw(Box::new(ShockstabProfile { model: m.inner.clone(), inner }));
        Ok(())
    })
}

/// Family dimension `ell`, or 0 for a null handle.
///
/// # Safety
/// `profile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shockstab_profile_ell(profile: *const ShockstabProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.ell)
}

/// Fitted tail decay rate, or NaN for a null handle.
///
/// # Safety
/// `profile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shockstab_profile_eta(profile: *const ShockstabProfile) -> f64 {
    profile.as_ref().map_or(f64::NAN, |p| p.inner.eta)
}

/// Residual of the profile equation, or NaN for a null handle.
///
/// # Safety
/// `profile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shockstab_profile_residual(profile: *const ShockstabProfile) -> f64 {
    profile.as_ref().map_or(f64::NAN, |p| p.inner.residual)
}

/// Writes `u(x)` (n values) into `out`.
///
/// # Safety
/// `profile` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn shockstab_profile_eval(
    profile: *const ShockstabProfile,
    x: f64,
    out: *mut f64,
    len: usize,
) -> ShockstabStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        if !x.is_finite() {
            return Err(invalid("x must be finite"));
        }
        let u = p.inner.eval(x);
        out_slice(out, len, u.len(), "out")?.copy_from_slice(u.as_slice());
        Ok(())
    })
}

/// # Safety
/// `profile` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shockstab_profile_free(profile: *mut ShockstabProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Evans-function winding test of condition (D) with default contours.
///
/// # Safety
/// `profile` must be a live handle; `pass` and `origin_winding` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn shockstab_condition_d(
    profile: *const ShockstabProfile,
    pass: *mut bool,
    origin_winding: *mut i64,
) -> ShockstabStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        if pass.is_null() || origin_winding.is_null() {
            return Err(null("output"));
        }
        let sys = linearized_coefficients(&p.model, &p.inner)?;
        let rec = check_condition_d(&sys, p.inner.ell, &SpectralOptions::default())?;
        *pass = rec.pass;
        *origin_winding = rec.origin_multiplicity;
        Ok(())
    })
}

/// Asymptotic shock location for initial mass `mass[0..n]`; writes `ell` values.
///
/// # Safety
/// `mass` must hold `n` doubles and `out` `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn shockstab_asymptotic_location(
    profile: *const ShockstabProfile,
    mass: *const f64,
    n: usize,
    out: *mut f64,
    len: usize,
) -> ShockstabStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        if mass.is_null() {
            return Err(null("mass"));
        }
        let m = std::slice::from_raw_parts(mass, n);
        let loc = asymptotic_location(&p.model, &p.inner, m)?;
        out_slice(out, len, loc.delta_infinity.len(), "out")?.copy_from_slice(&loc.delta_infinity);
        Ok(())
    })
}

/// `theta + psi1 + psi2` at `(x, t)` with the model's default template constants.
///
/// # Safety
/// `profile` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shockstab_template_sum(
    profile: *const ShockstabProfile,
    x: f64,
    t: f64,
    out: *mut f64,
) -> ShockstabStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(t >= 0.0 && x.is_finite()) {
            return Err(invalid("need finite x and t >= 0"));
        }
        let params = TemplateParams::from_model(&p.model, p.inner.ell, predicted_tail_rate(&p.model)?)?;
        *out = template_sum(x, t, &params);
        Ok(())
    })
}

/// Largest relative residual of `draws` random evaluations of the identity
/// `interaction1` or `interaction2`.
///
/// # Safety
/// `lemma` must be a NUL-terminated string and `residual` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shockstab_identity_residual(
    lemma: *const c_char,
    draws: usize,
    seed: u64,
    residual: *mut f64,
) -> ShockstabStatus {
    guard(|| {
        let name = read_str(lemma, "lemma")?;
        if residual.is_null() {
            return Err(null("residual"));
        }
        let id: LemmaId = name.parse().map_err(|e: Error| invalid(e.to_string()))?;
        if !matches!(id, LemmaId::Interaction1 | LemmaId::Interaction2) {
            return Err(invalid(format!("{name} is not an algebraic identity")));
        }
        *residual = identity_sweep(id, draws.max(1), seed)?.max_relative_residual;
        Ok(())
    })
}

/// Evolves `ubar + e0 (1+|x|)^{-3/2}` to `t_final` and tracks the shift
/// (one-parameter families only).
///
/// # Safety
/// `profile` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shockstab_track_run(
    profile: *const ShockstabProfile,
    e0: f64,
    t_final: f64,
    out: *mut *mut ShockstabTrack,
) -> ShockstabStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let u0 = InitialData::Algebraic { e0, direction: None };
        let field = evolve_nonlinear(&p.model, &p.inner, &u0, t_final, &EvolveControls::default())?;
        let params = TemplateParams::from_model(&p.model, p.inner.ell, predicted_tail_rate(&p.model)?)?;
        let kernel = ExcitedKernel::new(params)?;
        let inner = track_phase(&field, &kernel, &p.model, &p.inner, &TrackOptions::default())?;
        *out = Box::into_raw(Box::new(ShockstabTrack { inner }));
        Ok(())
    })
}

/// Number of stored times, or 0 for a null handle.
///
/// # Safety
/// `track` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shockstab_track_len(track: *const ShockstabTrack) -> usize {
    track.as_ref().map_or(0, |t| t.inner.times.len())
}

/// Copies the times and shifts (first family coordinate) into caller buffers.
///
/// # Safety
/// `times` and `delta` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn shockstab_track_history(
    track: *const ShockstabTrack,
    times: *mut f64,
    delta: *mut f64,
    len: usize,
) -> ShockstabStatus {
    guard(|| {
        let t = track.as_ref().ok_or_else(|| null("track"))?;
        let k = t.inner.times.len();
        out_slice(times, len, k, "times")?.copy_from_slice(&t.inner.times);
        let d = out_slice(delta, len, k, "delta")?;
        for (o, v) in d.iter_mut().zip(&t.inner.delta) {
            *o = v[0];
        }
        Ok(())
    })
}

/// Mass-predicted asymptotic shift, or NaN for a null handle.
///
/// # Safety
/// `track` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shockstab_track_delta_infinity(track: *const ShockstabTrack) -> f64 {
    track.as_ref().map_or(f64::NAN, |t| t.inner.delta_infinity[0])
}

/// # Safety
/// `track` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shockstab_track_free(track: *mut ShockstabTrack) {
    if !track.is_null() {
        drop(Box::from_raw(track));
    }
}
