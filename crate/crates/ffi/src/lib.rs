//! C ABI over the flowlens library.
//!
//! Objects are opaque handles created by `fl_*_new`/`fl_*_load` style calls
//! and released with the matching `fl_*_free`. Every fallible call returns an
//! [`FlStatus`]; on failure [`fl_last_error`] describes what went wrong on the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use flowlens::dfa::{self, compile, parse_profile, DfaTable};
use flowlens::forest::{load_model, ForestModel};
use flowlens::hist::{self, Backend, LaneVector};
use flowlens::pipelines::{bundled_model, Detector, Profiles, Verdict};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed model, table or profile.
    Format = 4,
    /// A model does not fit the features it is given.
    Schema = 5,
    /// The output buffer is too small; the required size was written.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlProfile {
    Sqli = 0,
    Xss = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlVerdict {
    Benign = 0,
    Sqli = 1,
    Xss = 2,
}

/// Token `id` spanning bytes `start..end` of the input.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlToken {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlDetection {
    pub verdict: FlVerdict,
    pub confidence: f64,
    pub tokens: usize,
    pub latency_us: f64,
}

/// Compiled token table.
pub struct FlDfa(DfaTable);

/// Random-forest model.
pub struct FlModel(ForestModel);

/// SQLi/XSS detector owning its tables and model.
pub struct FlDetector {
    profiles: Profiles,
    model: ForestModel,
    threshold: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(FlStatus, String);

impl Fail {
    fn null(what: &str) -> Fail {
        Fail(FlStatus::NullPointer, format!("{what} is null"))
    }

    fn arg(msg: impl Into<String>) -> Fail {
        Fail(FlStatus::InvalidArgument, msg.into())
    }
}

impl From<flowlens::forest::ForestError> for Fail {
    fn from(e: flowlens::forest::ForestError) -> Fail {
        use flowlens::forest::ForestError as E;
        let code = match &e {
            E::Io(_) => FlStatus::Io,
            E::SchemaMismatch { .. } | E::VersionMismatch { .. } | E::UnknownClass(_) => FlStatus::Schema,
            E::BadMagic | E::CorruptTree(_) => FlStatus::Format,
            _ => FlStatus::InvalidArgument,
        };
        Fail(code, e.to_string())
    }
}

impl From<flowlens::pipelines::PipelineError> for Fail {
    fn from(e: flowlens::pipelines::PipelineError) -> Fail {
        use flowlens::pipelines::PipelineError as E;
        match e {
            E::Model(m) => m.into(),
            E::Io(_) => Fail(FlStatus::Io, e.to_string()),
            _ => Fail::arg(e.to_string()),
        }
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FlStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            FlStatus::Panic
        }
    }
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(Fail::null(what))
    } else {
        Ok(slice::from_raw_parts(p, len))
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::arg(format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or null after a
/// successful one. Valid until the next fallible call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Adds the 16-bin histogram of `values` into `out`, with
/// `bin(x) = min(x / bin_width, 15)`.
///
/// # Safety
/// `values` must point to `n` readable values and `out` to 16 writable counters.
#[no_mangle]
pub unsafe extern "C" fn fl_hist16(values: *const u32, n: usize, bin_width: u32, out: *mut u64) -> FlStatus {
    guard(|| {
        if bin_width == 0 {
            return Err(Fail::arg("bin width must be positive"));
        }
        let values: &[u32] = if n == 0 {
            &[]
        } else if values.is_null() {
            return Err(Fail::null("values"));
        } else {
            slice::from_raw_parts(values, n)
        };
        let out = out.cast::<[u64; hist::NBINS]>().as_mut().ok_or_else(|| Fail::null("out"))?;
        let h = hist::hist_avc_with(values, bin_width, Backend::best());
        for (o, b) in out.iter_mut().zip(h.bins) {
            *o += b;
        }
        Ok(())
    })
}

/// Category (1 to 4) of sixteen bin indices.
///
/// # Safety
/// `bins` must point to 16 readable values and `category` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_hist_category(bins: *const u32, category: *mut u8) -> FlStatus {
    guard(|| {
        let bins = *bins.cast::<[u32; hist::LANES]>().as_ref().ok_or_else(|| Fail::null("bins"))?;
        *out(category, "category")? = hist::classify_category(LaneVector(bins)).number();
        Ok(())
    })
}

/// Compiles profile source text into a token table.
///
/// # Safety
/// `text` must be a NUL-terminated string and `dfa` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_compile(text: *const c_char, dfa: *mut *mut FlDfa) -> FlStatus {
    guard(|| {
        let dfa = out(dfa, "dfa")?;
        let profile = parse_profile(str_arg(text, "text")?).map_err(|e| Fail(FlStatus::Format, e.to_string()))?;
        let table = compile(&profile).map_err(|e| Fail(FlStatus::Format, e.to_string()))?;
        *dfa = boxed(FlDfa(table));
        Ok(())
    })
}

/// Loads a table from its binary dump.
///
/// # Safety
/// `data` must point to `len` readable bytes and `dfa` be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_load(data: *const u8, len: usize, dfa: *mut *mut FlDfa) -> FlStatus {
    guard(|| {
        let dfa = out(dfa, "dfa")?;
        let table = DfaTable::from_bytes(bytes(data, len, "data")?).map_err(|e| Fail(FlStatus::Format, e.to_string()))?;
        *dfa = boxed(FlDfa(table));
        Ok(())
    })
}

/// One of the built-in tables.
///
/// # Safety
/// `dfa` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_bundled(which: FlProfile, dfa: *mut *mut FlDfa) -> FlStatus {
    guard(|| {
        let dfa = out(dfa, "dfa")?;
        let p = Profiles::bundled();
        *dfa = boxed(FlDfa(match which {
            FlProfile::Sqli => p.sqli.clone(),
            FlProfile::Xss => p.xss.clone(),
        }));
        Ok(())
    })
}

/// Writes the binary dump into `buf`. `len` receives the dump size; if it
/// exceeds `cap` nothing is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_dump(dfa: *const FlDfa, buf: *mut u8, cap: usize, len: *mut usize) -> FlStatus {
    guard(|| {
        let d = handle(dfa, "dfa")?.0.to_bytes();
        copy_out(&d, buf, cap, out(len, "len")?)
    })
}

/// Number of token ids in the table.
///
/// # Safety
/// `dfa` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_token_count(dfa: *const FlDfa) -> usize {
    dfa.as_ref().map_or(0, |d| d.0.n_tokens())
}

/// Copies the NUL-terminated name of token `id` into `buf`. `len` receives
/// the size including the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_token_name(
    dfa: *const FlDfa,
    id: u32,
    buf: *mut c_char,
    cap: usize,
    len: *mut usize,
) -> FlStatus {
    guard(|| {
        let t = &handle(dfa, "dfa")?.0;
        if id as usize >= t.n_tokens() {
            return Err(Fail::arg(format!("token id {id} out of range")));
        }
        let mut name = t.token_name(id).as_bytes().to_vec();
        name.push(0);
        copy_out(&name, buf.cast(), cap, out(len, "len")?)
    })
}

/// Tokenizes `input` into `tokens`. `n` receives the token count; if it
/// exceeds `cap` no tokens are written and `BufferTooSmall` is returned.
///
/// # Safety
/// `input` must point to `len` readable bytes and `tokens` to `cap` writable
/// entries (or be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_tokenize(
    dfa: *const FlDfa,
    input: *const u8,
    len: usize,
    tokens: *mut FlToken,
    cap: usize,
    n: *mut usize,
) -> FlStatus {
    guard(|| {
        let t = &handle(dfa, "dfa")?.0;
        let n = out(n, "n")?;
        let got = t.tokenize(bytes(input, len, "input")?);
        *n = got.tokens.len();
        if *n > cap {
            return Err(Fail(FlStatus::BufferTooSmall, format!("{} tokens, room for {cap}", *n)));
        }
        if *n > 0 {
            if tokens.is_null() {
                return Err(Fail::null("tokens"));
            }
            let dst = slice::from_raw_parts_mut(tokens, *n);
            for (d, s) in dst.iter_mut().zip(&got.tokens) {
                *d = FlToken {
                    id: s.id,
                    start: s.start,
                    end: s.end,
                };
            }
        }
        Ok(())
    })
}

/// Releases a table. Null is ignored.
///
/// # Safety
/// `dfa` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_dfa_free(dfa: *mut FlDfa) {
    if !dfa.is_null() {
        drop(Box::from_raw(dfa));
    }
}

/// Loads a model from its serialized bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes and `model` be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_load(data: *const u8, len: usize, model: *mut *mut FlModel) -> FlStatus {
    guard(|| {
        let model = out(model, "model")?;
        *model = boxed(FlModel(ForestModel::from_bytes(bytes(data, len, "data")?)?));
        Ok(())
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `model` be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_load_file(path: *const c_char, model: *mut *mut FlModel) -> FlStatus {
    guard(|| {
        let model = out(model, "model")?;
        *model = boxed(FlModel(load_model(Path::new(str_arg(path, "path")?))?));
        Ok(())
    })
}

/// Number of input features, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_model_n_features(model: *const FlModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_features)
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_model_n_classes(model: *const FlModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_classes())
}

/// Copies the NUL-terminated name of class `id` into `buf`. `len` receives
/// the size including the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn fl_model_class_name(
    model: *const FlModel,
    id: usize,
    buf: *mut c_char,
    cap: usize,
    len: *mut usize,
) -> FlStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let name = m
            .classes
            .get(id)
            .ok_or_else(|| Fail::arg(format!("class id {id} out of range")))?;
        let mut name = name.as_bytes().to_vec();
        name.push(0);
        copy_out(&name, buf.cast(), cap, out(len, "len")?)
    })
}

/// Predicts one row. `probs` receives one probability per class and
/// `class` the most probable class id (lowest id on ties).
///
/// # Safety
/// `x` must point to `n` readable values, `probs` to `n_probs` writable
/// values, and `class` be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_predict(
    model: *const FlModel,
    x: *const f64,
    n: usize,
    probs: *mut f64,
    n_probs: usize,
    class: *mut usize,
) -> FlStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let class = out(class, "class")?;
        if n != m.n_features {
            return Err(Fail(
                FlStatus::Schema,
                format!("model takes {} features, got {n}", m.n_features),
            ));
        }
        if n_probs != m.n_classes() {
            return Err(Fail::arg(format!("model has {} classes, got room for {n_probs}", m.n_classes())));
        }
        if x.is_null() && n > 0 {
            return Err(Fail::null("x"));
        }
        if probs.is_null() {
            return Err(Fail::null("probs"));
        }
        let x: &[f64] = if n == 0 { &[] } else { slice::from_raw_parts(x, n) };
        let probs = slice::from_raw_parts_mut(probs, n_probs);
        m.predict_proba_into(x, probs)?;
        *class = flowlens::forest::argmax(probs);
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_model_free(model: *mut FlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Detector with the built-in tables and the model trained on the built-in
/// corpus. The first call trains that model, which takes a fraction of a
/// second.
///
/// # Safety
/// `detector` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_detector_bundled(threshold: f64, detector: *mut *mut FlDetector) -> FlStatus {
    guard(|| {
        let detector = out(detector, "detector")?;
        let p = Profiles::bundled();
        let d = FlDetector {
            profiles: Profiles {
                sqli: p.sqli.clone(),
                xss: p.xss.clone(),
            },
            model: bundled_model().clone(),
            threshold,
        };
        d.detector()?;
        *detector = boxed(d);
        Ok(())
    })
}

/// Detector from custom tables and a model trained on their features. The
/// handles are copied and may be freed afterwards.
///
/// # Safety
/// All handles must be live and `detector` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_detector_new(
    sqli: *const FlDfa,
    xss: *const FlDfa,
    model: *const FlModel,
    threshold: f64,
    detector: *mut *mut FlDetector,
) -> FlStatus {
    guard(|| {
        let detector = out(detector, "detector")?;
        let d = FlDetector {
            profiles: Profiles {
                sqli: handle(sqli, "sqli")?.0.clone(),
                xss: handle(xss, "xss")?.0.clone(),
            },
            model: handle(model, "model")?.0.clone(),
            threshold,
        };
        d.detector()?;
        *detector = boxed(d);
        Ok(())
    })
}

impl FlDetector {
    fn detector(&self) -> Result<Detector<'_>, Fail> {
        Ok(Detector::new(&self.profiles, &self.model, self.threshold)?)
    }
}

/// Classifies one payload. Set `url_decode` to decode `%XX` escapes first.
///
/// # Safety
/// `payload` must point to `len` readable bytes and `result` be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_detector_detect(
    detector: *const FlDetector,
    payload: *const u8,
    len: usize,
    url_decode: bool,
    result: *mut FlDetection,
) -> FlStatus {
    guard(|| {
        let d = handle(detector, "detector")?.detector()?;
        let result = out(result, "result")?;
        let raw = bytes(payload, len, "payload")?;
        let decoded;
        let payload = if url_decode {
            decoded = dfa::url_decode(raw);
            &decoded[..]
        } else {
            raw
        };
        let r = d.detect(0, payload);
        *result = FlDetection {
            verdict: match r.verdict {
                Verdict::Benign => FlVerdict::Benign,
                Verdict::Sqli => FlVerdict::Sqli,
                Verdict::Xss => FlVerdict::Xss,
            },
            confidence: r.confidence,
            tokens: r.tokens,
            latency_us: r.latency_us,
        };
        Ok(())
    })
}

/// Releases a detector. Null is ignored.
///
/// # Safety
/// `detector` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_detector_free(detector: *mut FlDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

unsafe fn copy_out(src: &[u8], buf: *mut u8, cap: usize, len: &mut usize) -> Result<(), Fail> {
    *len = src.len();
    if src.len() > cap {
        return Err(Fail(
            FlStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(Fail::null("buf"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}
