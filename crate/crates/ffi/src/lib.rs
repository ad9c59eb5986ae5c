//! C ABI for loading trained models and scoring sentences.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free` function. Every fallible function returns a [`SwmnnStatus`];
//! on failure [`swmnn_last_error_message`] describes the error for the
//! calling thread. Sentences are UTF-8, whitespace-separated tokens.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use swmnn::ngram::NGramModel;
use swmnn::pipeline::Bundle;
use swmnn::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwmnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    BadModel = 5,
    Numeric = 6,
    Panic = 7,
}

/// A trained model directory loaded into memory.
pub struct SwmnnModel {
    bundle: Bundle,
}

/// A Kneser-Ney language model.
pub struct SwmnnNgram {
    model: NGramModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SwmnnStatus {
    match err {
        Error::Io { .. } => SwmnnStatus::Io,
        Error::Checkpoint(_) | Error::ParamShape { .. } | Error::Json(_) => SwmnnStatus::BadModel,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => SwmnnStatus::Numeric,
        _ => SwmnnStatus::InvalidInput,
    }
}

struct Failure(SwmnnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any error or panic and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwmnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SwmnnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SwmnnStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SwmnnStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SwmnnStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn null(what: &str) -> Failure {
    Failure(SwmnnStatus::NullPointer, format!("{what} is null"))
}

fn tokens(sentence: &str) -> Result<Vec<&str>, Failure> {
    let t: Vec<&str> = sentence.split_whitespace().collect();
    if t.is_empty() {
        return Err(Failure(SwmnnStatus::InvalidInput, "sentence has no tokens".to_string()));
    }
    Ok(t)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn swmnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn swmnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model directory written by `swmnn train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` receives a handle to release with [`swmnn_model_free`].
#[no_mangle]
pub unsafe extern "C" fn swmnn_model_load(dir: *const c_char, out: *mut *mut SwmnnModel) -> SwmnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let dir = str_arg(dir, "dir")?;
        let bundle = Bundle::load(Path::new(dir))?;
        *out = Box::into_raw(Box::new(SwmnnModel { bundle }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`swmnn_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn swmnn_model_free(model: *mut SwmnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Probability that `sentence` is semantically rational.
///
/// # Safety
/// `model` must be a live handle, `sentence` a NUL-terminated string and
/// `p_rational` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swmnn_model_score(
    model: *const SwmnnModel,
    sentence: *const c_char,
    p_rational: *mut f64,
) -> SwmnnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if p_rational.is_null() {
            return Err(null("p_rational"));
        }
        let s = str_arg(sentence, "sentence")?;
        let p = model.bundle.probabilities(&tokens(s)?)?;
        *p_rational = p[1];
        Ok(())
    })
}

/// Predicted label: 1 for rational, 0 for irrational.
///
/// # Safety
/// As for [`swmnn_model_score`], with `label` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swmnn_model_classify(
    model: *const SwmnnModel,
    sentence: *const c_char,
    label: *mut i32,
) -> SwmnnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if label.is_null() {
            return Err(null("label"));
        }
        let s = str_arg(sentence, "sentence")?;
        let p = model.bundle.probabilities(&tokens(s)?)?;
        *label = swmnn::model::argmax(&p) as i32;
        Ok(())
    })
}

/// Loads a language model saved as JSON (for example `kn.json` from
/// `swmnn baseline-kn`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` receives a handle to release with [`swmnn_ngram_free`].
#[no_mangle]
pub unsafe extern "C" fn swmnn_ngram_load(path: *const c_char, out: *mut *mut SwmnnNgram) -> SwmnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let model = NGramModel::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(SwmnnNgram { model }));
        Ok(())
    })
}

/// Releases a language model handle. Null is ignored.
///
/// # Safety
/// `ngram` must be null or a handle from [`swmnn_ngram_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn swmnn_ngram_free(ngram: *mut SwmnnNgram) {
    if !ngram.is_null() {
        drop(Box::from_raw(ngram));
    }
}

/// Average natural-log probability per prediction, end of sentence included.
///
/// # Safety
/// `ngram` must be a live handle, `sentence` a NUL-terminated string and
/// `logprob` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swmnn_ngram_logprob(
    ngram: *const SwmnnNgram,
    sentence: *const c_char,
    logprob: *mut f64,
) -> SwmnnStatus {
    guard(|| {
        let ngram = ngram.as_ref().ok_or_else(|| null("ngram"))?;
        if logprob.is_null() {
            return Err(null("logprob"));
        }
        let s = str_arg(sentence, "sentence")?;
        *logprob = ngram.model.logprob(&tokens(s)?)?;
        Ok(())
    })
}
