//! C interface. Objects cross the boundary as opaque handles created by the
//! `*_new` functions and released by the matching `*_free`. Every fallible call
//! returns a [`WsStatus`]; the message for the most recent failure on the
//! calling thread is available from [`ws_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use wickspace::classify::{self, ClassifyError};
use wickspace::fields::{self, FieldError, FieldModel};
use wickspace::indicator::LogIndicator;
use wickspace::series::{self, CoefficientFamily, SeriesSum};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsStatus {
    Ok = 0,
    NullPointer = 1,
    Parse = 2,
    Domain = 3,
    Divergent = 4,
    BufferTooSmall = 5,
    Accuracy = 6,
    Refused = 7,
    Panic = 8,
}

/// Free-field model (massive or two-dimensional massless).
pub struct WsModel(FieldModel);

/// Wick series coefficients d_k.
pub struct WsCoefficients(CoefficientFamily);

/// Log-indicator function ln b(s).
pub struct WsIndicator(LogIndicator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(WsStatus, String);

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        let code = match e {
            FieldError::Accuracy { .. } => WsStatus::Accuracy,
            FieldError::Model(_) => WsStatus::Parse,
            FieldError::Domain(_) => WsStatus::Domain,
        };
        Failure(code, e.to_string())
    }
}

impl From<ClassifyError> for Failure {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Field(f) => f.into(),
            ClassifyError::Parse(_) => Failure(WsStatus::Parse, e.to_string()),
            ClassifyError::Domain(_) => Failure(WsStatus::Domain, e.to_string()),
            _ => Failure(WsStatus::Refused, e.to_string()),
        }
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> WsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => WsStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            WsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(WsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_key<'a>(key: *const c_char) -> Result<&'a str, Failure> {
    if key.is_null() {
        return Err(null("key"));
    }
    CStr::from_ptr(key).to_str().map_err(|_| Failure(WsStatus::Parse, "key is not UTF-8".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Failure> {
    h.as_ref().ok_or_else(|| null(what))
}

/// Copies `text` plus a terminating NUL into `buf`; `needed` receives the
/// required size (including the NUL) either way.
unsafe fn write_text(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let size = text.len() + 1;
    if !needed.is_null() {
        needed.write(size);
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < size {
        return Err(Failure(WsStatus::BufferTooSmall, format!("buffer holds {len} bytes, need {size}")));
    }
    std::ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last failure on this thread; empty if none. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses "massive:m=<v>,dim=<n>,eps=<v>" or "massless2d:kappa=<v>".
///
/// # Safety
/// `key` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ws_model_new(key: *const c_char, out: *mut *mut WsModel) -> WsStatus {
    guard(|| {
        let model = FieldModel::parse_key(read_key(key)?)?;
        write_out(out, Box::into_raw(Box::new(WsModel(model))))
    })
}

/// # Safety
/// `model` must come from [`ws_model_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ws_model_free(model: *mut WsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Spacetime dimension of the model.
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ws_model_dim(model: *const WsModel, out: *mut usize) -> WsStatus {
    guard(|| write_out(out, handle(model, "model")?.0.dim()))
}

/// Two-point function w(z) at z = re + i·im (both of length `dim`), Im z in the
/// backward cone.
///
/// # Safety
/// `re` and `im` must point to `dim` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ws_eval_w(
    model: *const WsModel,
    re: *const f64,
    im: *const f64,
    dim: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> WsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        if re.is_null() || im.is_null() {
            return Err(null("coordinates"));
        }
        let re = std::slice::from_raw_parts(re, dim);
        let im = std::slice::from_raw_parts(im, dim);
        let z: Vec<Complex64> = re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let w = fields::eval_w(&model.0, &z)?;
        write_out(out_re, w.re)?;
        write_out(out_im, w.im)
    })
}

/// Parses "factpow:<ρ>", "normexp:<g>" or "table:<path>".
///
/// # Safety
/// `key` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ws_coefficients_new(key: *const c_char, out: *mut *mut WsCoefficients) -> WsStatus {
    guard(|| {
        let d = CoefficientFamily::parse_key(read_key(key)?).map_err(|e| Failure(WsStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(WsCoefficients(d))))
    })
}

/// Builds coefficients from `n` values d_0..d_{n−1}; d_0 must be 1 and the rest
/// nonnegative.
///
/// # Safety
/// `values` must point to `n` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn ws_coefficients_from_values(
    values: *const f64,
    n: usize,
    out: *mut *mut WsCoefficients,
) -> WsStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, n);
        let d = CoefficientFamily::from_values(v).map_err(|e| Failure(WsStatus::Domain, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(WsCoefficients(d))))
    })
}

/// # Safety
/// `coeffs` must come from a `ws_coefficients_*` constructor. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ws_coefficients_free(coeffs: *mut WsCoefficients) {
    if !coeffs.is_null() {
        drop(Box::from_raw(coeffs));
    }
}

/// ln d_k; −∞ where d_k = 0.
///
/// # Safety
/// `coeffs` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ws_coefficients_log_d(coeffs: *const WsCoefficients, k: u64, out: *mut f64) -> WsStatus {
    guard(|| write_out(out, handle(coeffs, "coefficients")?.0.log_d(k)))
}

/// ln Σ_k L^k k! d_{2k} w^k with `log_w` = ln w.
///
/// # Safety
/// `coeffs` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ws_majorant_series(
    coeffs: *const WsCoefficients,
    l: f64,
    log_w: f64,
    out: *mut f64,
) -> WsStatus {
    guard(|| {
        let d = handle(coeffs, "coefficients")?;
        if !(l > 0.0) {
            return Err(Failure(WsStatus::Domain, format!("L = {l} must be positive")));
        }
        match series::sum_majorant_series(l, &d.0, log_w, 1e-14) {
            SeriesSum::Finite { log_sum, .. } => write_out(out, log_sum),
            SeriesSum::Divergent { .. } => Err(Failure(WsStatus::Divergent, "majorant series diverges".into())),
        }
    })
}

/// ln Σ_{0 ≤ k < s} k! d_{2k} (s/k)^{k(dim−2)}.
///
/// # Safety
/// `coeffs` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ws_truncated_series(coeffs: *const WsCoefficients, s: f64, dim: u32, out: *mut f64) -> WsStatus {
    guard(|| {
        let d = handle(coeffs, "coefficients")?;
        if dim <= 2 || !s.is_finite() {
            return Err(Failure(WsStatus::Domain, "need dim > 2 and finite s".into()));
        }
        write_out(out, series::truncated_series(s, &d.0, dim))
    })
}

/// ln inf_t e^{st} e^{−k m′ t} t^{−k(dim−2)} in closed form; −∞ when k·m′ ≥ s.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ws_single_term_infimum(s: f64, k: u64, dim: u32, m_prime: f64, out: *mut f64) -> WsStatus {
    guard(|| {
        if dim <= 2 || k == 0 || !(s > 0.0) || !(m_prime >= 0.0) {
            return Err(Failure(WsStatus::Domain, "need dim > 2, k ≥ 1, s > 0, m′ ≥ 0".into()));
        }
        write_out(out, series::single_term_inf_closed_form(s, k, dim, m_prime))
    })
}

/// Parses an indicator key such as "poly:3", "exp", "gevrey:0.5", "logpow:2".
///
/// # Safety
/// `key` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ws_indicator_new(key: *const c_char, out: *mut *mut WsIndicator) -> WsStatus {
    guard(|| {
        let ind = LogIndicator::parse_key(read_key(key)?).map_err(|e| Failure(WsStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(WsIndicator(ind))))
    })
}

/// # Safety
/// `ind` must come from [`ws_indicator_new`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ws_indicator_free(ind: *mut WsIndicator) {
    if !ind.is_null() {
        drop(Box::from_raw(ind));
    }
}

/// ln b(s).
///
/// # Safety
/// `ind` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ws_indicator_log_value(ind: *const WsIndicator, s: f64, out: *mut f64) -> WsStatus {
    guard(|| {
        let v = handle(ind, "indicator")?.0.log_value(s).map_err(|e| Failure(WsStatus::Domain, e.to_string()))?;
        write_out(out, v)
    })
}

/// Space descriptor for d_k = (k!)^{−1/ρ} on the two-dimensional massless field,
/// from the closed-form table.
///
/// # Safety
/// `buf` must hold `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn ws_massless_space(rho: f64, buf: *mut c_char, len: usize, needed: *mut usize) -> WsStatus {
    guard(|| {
        let space = classify::massless_space_table(rho)?;
        write_text(&space.to_string(), buf, len, needed)
    })
}

/// Classifies `coeffs` on `model` and writes the space descriptor.
/// `WS_STATUS_REFUSED` means a precondition failed or no catalogue space passed.
///
/// # Safety
/// Handles must be live; `buf` must hold `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn ws_classify(
    model: *const WsModel,
    coeffs: *const WsCoefficients,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> WsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let d = handle(coeffs, "coefficients")?;
        let c = classify::classify(&model.0, &d.0)?;
        write_text(&c.space.to_string(), buf, len, needed)
    })
}
