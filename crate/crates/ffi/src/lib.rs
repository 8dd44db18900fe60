//! C ABI for the pundit equation-discovery library.
//!
//! Opaque handles, status codes, and a thread-local last-error message.
//! Strings returned through out-parameters are owned by the library and
//! must be released with [`pundit_string_free`]; models with
//! [`pundit_model_free`]. The header is generated into
//! `include/pundit.h` by the build script.

use libc::c_char;
use pundit::complex::{clamp_nonzero, ComplexScalar, DEFAULT_CLAMP_EPS};
use pundit::discovery::{discover_terms, render_equations, MergeConfig};
use pundit::network::{deserialize_model, serialize_model, ModelMeta, ProductUnitModel};
use pundit::signal::{lag_schedule, EmbeddingConfig};
use std::cell::RefCell;
use std::ffi::{CStr, CString};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PunditStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ShapeError = 4,
    NumericError = 5,
}

/// Opaque model handle.
pub struct PunditModel {
    model: ProductUnitModel,
    meta: ModelMeta,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pundit_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}

/// Message describing the most recent error on this thread. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pundit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse a model from its JSON document.
///
/// # Safety
/// `json` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pundit_model_from_json(
    json: *const c_char,
    out: *mut *mut PunditModel,
) -> PunditStatus {
    if json.is_null() || out.is_null() {
        set_error("null argument");
        return PunditStatus::NullArgument;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(e) => {
            set_error(&format!("invalid utf-8: {e}"));
            return PunditStatus::InvalidUtf8;
        }
    };
    match deserialize_model(text) {
        Ok((model, meta)) => {
            *out = Box::into_raw(Box::new(PunditModel { model, meta }));
            PunditStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            match e {
                pundit::network::NetworkError::Parse(_) => PunditStatus::ParseError,
                _ => PunditStatus::ShapeError,
            }
        }
    }
}

/// Serialize a model to its JSON document (round-trips bit for bit).
///
/// # Safety
/// `model` must be a live handle from this library and `out` a valid
/// pointer. Free the returned string with [`pundit_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pundit_model_to_json(
    model: *const PunditModel,
    out: *mut *mut c_char,
) -> PunditStatus {
    if model.is_null() || out.is_null() {
        set_error("null argument");
        return PunditStatus::NullArgument;
    }
    let handle = &*model;
    let text = serialize_model(&handle.model, &handle.meta);
    match CString::new(text) {
        Ok(s) => {
            *out = s.into_raw();
            PunditStatus::Ok
        }
        Err(_) => {
            set_error("serialized document contained an interior nul");
            PunditStatus::NumericError
        }
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn pundit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Release a model handle.
///
/// # Safety
/// `model` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn pundit_model_free(model: *mut PunditModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Model dimensions of a live handle.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pundit_model_dims(
    model: *const PunditModel,
    n_inputs: *mut usize,
    n_units: *mut usize,
    n_outputs: *mut usize,
) -> PunditStatus {
    if model.is_null() || n_inputs.is_null() || n_units.is_null() || n_outputs.is_null() {
        set_error("null argument");
        return PunditStatus::NullArgument;
    }
    let handle = &*model;
    *n_inputs = handle.model.n_inputs();
    *n_units = handle.model.n_units();
    *n_outputs = handle.model.n_outputs();
    PunditStatus::Ok
}

/// Evaluate the model at one input point. Inputs are clamped away from
/// zero before the forward pass; `in_re`/`in_im` must hold `n_in` values
/// and `out_re`/`out_im` receive `n_out` values.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pundit_model_eval(
    model: *const PunditModel,
    in_re: *const f64,
    in_im: *const f64,
    n_in: usize,
    out_re: *mut f64,
    out_im: *mut f64,
    n_out: usize,
) -> PunditStatus {
    if model.is_null() || in_re.is_null() || in_im.is_null() || out_re.is_null() || out_im.is_null()
    {
        set_error("null argument");
        return PunditStatus::NullArgument;
    }
    let handle = &*model;
    if n_in != handle.model.n_inputs() || n_out != handle.model.n_outputs() {
        set_error(&format!(
            "dimension mismatch: got {}x{}, model is {}x{}",
            n_in,
            n_out,
            handle.model.n_inputs(),
            handle.model.n_outputs()
        ));
        return PunditStatus::ShapeError;
    }
    let re = std::slice::from_raw_parts(in_re, n_in);
    let im = std::slice::from_raw_parts(in_im, n_in);
    let x: Vec<ComplexScalar> = re
        .iter()
        .zip(im)
        .map(|(&a, &b)| clamp_nonzero(ComplexScalar::new(a, b), DEFAULT_CLAMP_EPS))
        .collect();
    match handle.model.forward(&x) {
        Ok(y) => {
            let out_re = std::slice::from_raw_parts_mut(out_re, n_out);
            let out_im = std::slice::from_raw_parts_mut(out_im, n_out);
            for (i, z) in y.iter().enumerate() {
                out_re[i] = z.re;
                out_im[i] = z.im;
            }
            PunditStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            PunditStatus::NumericError
        }
    }
}

/// Render the model's equations as text (terms merged and pruned with the
/// default thresholds, rounded to `decimals` places). Three-input models
/// use the variable names x, y, z; others use x1..xn.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer. Free the
/// returned string with [`pundit_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pundit_model_render(
    model: *const PunditModel,
    decimals: u32,
    out: *mut *mut c_char,
) -> PunditStatus {
    if model.is_null() || out.is_null() {
        set_error("null argument");
        return PunditStatus::NullArgument;
    }
    let handle = &*model;
    let config = MergeConfig {
        rounding_decimals: decimals,
        ..MergeConfig::default()
    };
    let terms = discover_terms(&handle.model, &config);
    let names: Vec<String> = if handle.model.n_inputs() == 3 {
        vec!["x".into(), "y".into(), "z".into()]
    } else {
        (1..=handle.model.n_inputs())
            .map(|i| format!("x{i}"))
            .collect()
    };
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let text = render_equations(&terms, &name_refs, decimals);
    match CString::new(text) {
        Ok(s) => {
            *out = s.into_raw();
            PunditStatus::Ok
        }
        Err(_) => {
            set_error("rendered text contained an interior nul");
            PunditStatus::NumericError
        }
    }
}

/// Fill `out` with the time-delay lag schedule for `n_lags` lags.
///
/// # Safety
/// `out` must point to at least `n_lags` writable usize slots.
#[no_mangle]
pub unsafe extern "C" fn pundit_lag_schedule(
    n_lags: usize,
    lag_base: f64,
    out: *mut usize,
) -> PunditStatus {
    if out.is_null() {
        set_error("null argument");
        return PunditStatus::NullArgument;
    }
    if n_lags == 0 || lag_base <= 0.0 {
        set_error("n_lags must be >= 1 and lag_base positive");
        return PunditStatus::ShapeError;
    }
    let lags = lag_schedule(&EmbeddingConfig { n_lags, lag_base });
    let out = std::slice::from_raw_parts_mut(out, n_lags);
    out.copy_from_slice(&lags);
    PunditStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use pundit::dynamics::System;

    fn truth_handle() -> *mut PunditModel {
        let model = System::Lorenz63.truth_model();
        let meta = ModelMeta {
            system: Some("lorenz63".into()),
            seed: Some(0),
            epochs: None,
        };
        let json = CString::new(serialize_model(&model, &meta)).unwrap();
        let mut out: *mut PunditModel = std::ptr::null_mut();
        let status = unsafe { pundit_model_from_json(json.as_ptr(), &mut out) };
        assert_eq!(status, PunditStatus::Ok);
        out
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(pundit_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn json_round_trip_through_ffi() {
        let handle = truth_handle();
        let mut dims = (0usize, 0usize, 0usize);
        let status = unsafe { pundit_model_dims(handle, &mut dims.0, &mut dims.1, &mut dims.2) };
        assert_eq!(status, PunditStatus::Ok);
        assert_eq!(dims, (3, 5, 3));

        let mut text: *mut c_char = std::ptr::null_mut();
        let status = unsafe { pundit_model_to_json(handle, &mut text) };
        assert_eq!(status, PunditStatus::Ok);
        let json = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
        unsafe { pundit_string_free(text) };
        let (back, meta) = deserialize_model(&json).unwrap();
        assert_eq!(back, System::Lorenz63.truth_model());
        assert_eq!(meta.system.as_deref(), Some("lorenz63"));
        unsafe { pundit_model_free(handle) };
    }

    #[test]
    fn eval_matches_rhs() {
        let handle = truth_handle();
        let in_re = [1.0, 1.0, 1.0];
        let in_im = [0.0, 0.0, 0.0];
        let mut out_re = [0.0; 3];
        let mut out_im = [0.0; 3];
        let status = unsafe {
            pundit_model_eval(
                handle,
                in_re.as_ptr(),
                in_im.as_ptr(),
                3,
                out_re.as_mut_ptr(),
                out_im.as_mut_ptr(),
                3,
            )
        };
        assert_eq!(status, PunditStatus::Ok);
        let expect = System::Lorenz63.rhs([1.0, 1.0, 1.0]);
        for (got, want) in out_re.iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        unsafe { pundit_model_free(handle) };
    }

    #[test]
    fn wrong_dims_reports_shape_error() {
        let handle = truth_handle();
        let in_re = [1.0, 1.0];
        let in_im = [0.0, 0.0];
        let mut out_re = [0.0; 3];
        let mut out_im = [0.0; 3];
        let status = unsafe {
            pundit_model_eval(
                handle,
                in_re.as_ptr(),
                in_im.as_ptr(),
                2,
                out_re.as_mut_ptr(),
                out_im.as_mut_ptr(),
                3,
            )
        };
        assert_eq!(status, PunditStatus::ShapeError);
        unsafe { pundit_model_free(handle) };
    }

    #[test]
    fn bad_json_reports_parse_error() {
        let json = CString::new("{not json").unwrap();
        let mut out: *mut PunditModel = std::ptr::null_mut();
        let status = unsafe { pundit_model_from_json(json.as_ptr(), &mut out) };
        assert_eq!(status, PunditStatus::ParseError);
        let msg = unsafe { CStr::from_ptr(pundit_last_error_message()) };
        assert!(!msg.to_str().unwrap().is_empty());
    }

    #[test]
    fn render_through_ffi() {
        let handle = truth_handle();
        let mut text: *mut c_char = std::ptr::null_mut();
        let status = unsafe { pundit_model_render(handle, 3, &mut text) };
        assert_eq!(status, PunditStatus::Ok);
        let rendered = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
        unsafe { pundit_string_free(text) };
        assert!(rendered.contains("dx/dt = -10.000*x + 10.000*y"));
        unsafe { pundit_model_free(handle) };
    }

    #[test]
    fn lag_schedule_through_ffi() {
        let mut lags = [0usize; 50];
        let status = unsafe { pundit_lag_schedule(50, 500.0, lags.as_mut_ptr()) };
        assert_eq!(status, PunditStatus::Ok);
        assert_eq!(lags[0], 1);
        assert_eq!(lags[49], 549);
    }
}
