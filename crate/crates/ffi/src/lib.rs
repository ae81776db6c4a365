//! C ABI over the `opcap` library.
//!
//! Models are opaque handles built component by component. Every fallible
//! function returns an [`OpcapStatus`] and writes results through out
//! pointers; on failure a description is available from
//! [`opcap_last_error_message`] on the same thread. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use opcap::distributions::SeverityDistribution;
use opcap::lda::{Component, CompoundPoissonModel, SlaVariant};
use opcap::rng::RngStream;
use opcap::sma::{self, LcThresholds};
use opcap::studies::{implied_bi, VarMethod};
use opcap::OpcapError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpcapStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    NumericFailure = 3,
    Panic = 4,
}

/// Single-loss approximation flavour.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpcapSlaVariant {
    LognormalClosedForm = 0,
    Opcar = 1,
    Corrected = 2,
}

fn sla_variant(code: i32) -> Result<SlaVariant, Failure> {
    match code {
        c if c == OpcapSlaVariant::LognormalClosedForm as i32 => Ok(SlaVariant::LognormalClosedForm),
        c if c == OpcapSlaVariant::Opcar as i32 => Ok(SlaVariant::Opcar),
        c if c == OpcapSlaVariant::Corrected as i32 => Ok(SlaVariant::Corrected),
        other => Err(Failure(OpcapStatus::InvalidArgument, format!("unknown SLA variant {other}"))),
    }
}

/// Opaque compound Poisson model.
pub struct OpcapModel {
    components: Vec<Component>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(OpcapStatus, String);

impl From<OpcapError> for Failure {
    fn from(e: OpcapError) -> Self {
        let status = match e {
            OpcapError::InvalidParameter(_) | OpcapError::Domain(_) | OpcapError::InfiniteMean(_) => {
                OpcapStatus::InvalidArgument
            }
            _ => OpcapStatus::NumericFailure,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OpcapStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OpcapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OpcapStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OpcapStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const OpcapModel) -> Result<&'a OpcapModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn model_mut<'a>(m: *mut OpcapModel) -> Result<&'a mut OpcapModel, Failure> {
    m.as_mut().ok_or_else(|| null("model"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

impl OpcapModel {
    fn build(&self) -> Result<CompoundPoissonModel, Failure> {
        Ok(CompoundPoissonModel::new(self.components.clone())?)
    }

    fn add(&mut self, rate: f64, severity: opcap::Result<SeverityDistribution>) -> Result<(), Failure> {
        let severity = severity?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Failure(OpcapStatus::InvalidArgument, format!("rate must be positive, got {rate}")));
        }
        self.components.push(Component { rate, severity });
        Ok(())
    }
}

/// Creates an empty model; free it with [`opcap_model_free`].
#[no_mangle]
pub extern "C" fn opcap_model_new() -> *mut OpcapModel {
    Box::into_raw(Box::new(OpcapModel { components: Vec::new() }))
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`opcap_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_free(model: *mut OpcapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of components in the model (0 for null).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_len(model: *const OpcapModel) -> usize {
    model.as_ref().map_or(0, |m| m.components.len())
}

/// Adds a Poisson(`rate`)–Lognormal(`mu`, `sigma`) component.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_add_lognormal(model: *mut OpcapModel, rate: f64, mu: f64, sigma: f64) -> OpcapStatus {
    guard(|| model_mut(model)?.add(rate, SeverityDistribution::lognormal(mu, sigma)))
}

/// Adds a Poisson–Gamma(`shape`, `scale`) component.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_add_gamma(model: *mut OpcapModel, rate: f64, shape: f64, scale: f64) -> OpcapStatus {
    guard(|| model_mut(model)?.add(rate, SeverityDistribution::gamma(shape, scale)))
}

/// Adds a Poisson–Pareto(`shape`, `scale`) component.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_add_pareto(model: *mut OpcapModel, rate: f64, shape: f64, scale: f64) -> OpcapStatus {
    guard(|| model_mut(model)?.add(rate, SeverityDistribution::pareto(shape, scale)))
}

/// Adds a Poisson–LogLogistic(`shape`, `scale`) component.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_add_loglogistic(
    model: *mut OpcapModel,
    rate: f64,
    shape: f64,
    scale: f64,
) -> OpcapStatus {
    guard(|| model_mut(model)?.add(rate, SeverityDistribution::log_logistic(shape, scale)))
}

/// Adds a Poisson–LogGamma(`shape`, `log_rate`) component.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_add_loggamma(
    model: *mut OpcapModel,
    rate: f64,
    shape: f64,
    log_rate: f64,
) -> OpcapStatus {
    guard(|| model_mut(model)?.add(rate, SeverityDistribution::log_gamma(shape, log_rate)))
}

/// Multiplies every severity by `factor` (e.g. 1e-6 for Euro to Euro million).
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_rescale(model: *mut OpcapModel, factor: f64) -> OpcapStatus {
    guard(|| {
        let m = model_mut(model)?;
        let scaled = m
            .components
            .iter()
            .map(|c| Ok(Component { rate: c.rate, severity: c.severity.rescaled(factor)? }))
            .collect::<opcap::Result<Vec<_>>>()?;
        m.components = scaled;
        Ok(())
    })
}

/// Expected annual loss.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_annual_loss_mean(model: *const OpcapModel, out: *mut f64) -> OpcapStatus {
    guard(|| write(out, model_ref(model)?.build()?.annual_loss_mean()?))
}

/// Long-term loss component with thresholds `low` and `high`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_long_term_lc(
    model: *const OpcapModel,
    low: f64,
    high: f64,
    out: *mut f64,
) -> OpcapStatus {
    guard(|| write(out, model_ref(model)?.build()?.long_term_lc(LcThresholds { low, high })?))
}

/// Single-loss approximation of the `alpha` VaR; `variant` is an
/// `OpcapSlaVariant` value.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_sla_var(
    model: *const OpcapModel,
    alpha: f64,
    variant: i32,
    out: *mut f64,
) -> OpcapStatus {
    guard(|| write(out, model_ref(model)?.build()?.sla_var(alpha, sla_variant(variant)?)?))
}

/// Monte Carlo `alpha` VaR over `years` simulated years; deterministic in
/// `seed`.
///
/// # Safety
/// `model` must be a live handle; `out_var` and `out_standard_error` writable.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_mc_var(
    model: *const OpcapModel,
    alpha: f64,
    years: u64,
    seed: u64,
    out_var: *mut f64,
    out_standard_error: *mut f64,
) -> OpcapStatus {
    guard(|| {
        if out_var.is_null() || out_standard_error.is_null() {
            return Err(null("output pointer"));
        }
        let years = usize::try_from(years).map_err(|_| Failure(OpcapStatus::InvalidArgument, "years too large".into()))?;
        let mc = model_ref(model)?.build()?.mc_var(alpha, years, &RngStream::new(seed))?;
        *out_var = mc.var;
        *out_standard_error = mc.standard_error;
        Ok(())
    })
}

/// BI at which long-term SMA capital equals the corrected-SLA VaR. The model
/// must be in Euro million.
///
/// # Safety
/// `model` must be a live handle and `out_bi` writable.
#[no_mangle]
pub unsafe extern "C" fn opcap_model_implied_bi(model: *const OpcapModel, alpha: f64, out_bi: *mut f64) -> OpcapStatus {
    guard(|| {
        let m = model_ref(model)?.build()?;
        write(out_bi, implied_bi(&m, alpha, VarMethod::Sla, LcThresholds::default())?.bi)
    })
}

/// SMA bucket (1–5) of a business indicator.
#[no_mangle]
pub extern "C" fn opcap_bucket(bi: f64) -> u8 {
    sma::bucket(bi)
}

/// Business indicator component.
#[no_mangle]
pub extern "C" fn opcap_bic(bi: f64) -> f64 {
    sma::bic(bi)
}

/// SMA capital for a business indicator and loss component (Euro million).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opcap_sma_capital(bi: f64, lc: f64, out: *mut f64) -> OpcapStatus {
    guard(|| write(out, sma::SmaInput::new(bi, lc)?.capital()))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn opcap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
