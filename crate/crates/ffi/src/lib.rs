//! C ABI over the `geomix` models.
//!
//! Every fallible call returns a [`GeomixStatus`]; on failure the message is
//! available from [`geomix_last_error`] on the same thread. Handles are
//! opaque and must be released with [`geomix_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use geomix::cli::{load_pair, ModelFiles};
use geomix::data::SavedModel;
use geomix::dialect::WordDistribution;
use geomix::features::Vocabulary;
use geomix::geo::{haversine_km, GeoPoint};
use geomix::geoloc::GeoModelKind;
use geomix::math::{log_pdf, GaussianParams};
use geomix::mdn::SelectionRule;
use geomix::pipeline::geo_features;
use geomix::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Load = 4,
    Domain = 5,
    WrongModel = 6,
    NoFeatures = 7,
    BufferTooSmall = 8,
    UnknownWord = 9,
    Internal = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomixModelKind {
    Regression = 0,
    Mdn = 1,
    MdnShared = 2,
    Dialect = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomixRule {
    StrongestPi = 0,
    MaxMixtureProb = 1,
}

/// One mixture component, in degrees.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeomixComponent {
    pub weight: f64,
    pub mu_lat: f64,
    pub mu_lon: f64,
    pub sigma_lat: f64,
    pub sigma_lon: f64,
    pub rho: f64,
}

/// A loaded checkpoint plus its vocabulary.
pub struct GeomixModel {
    model: SavedModel,
    vocab: Vocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(GeomixStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) | Error::Corpus { .. } => GeomixStatus::Io,
            Error::Load(_) | Error::Json(_) => GeomixStatus::Load,
            Error::Domain(_) => GeomixStatus::Domain,
            Error::Config(_) | Error::Contract(_) => GeomixStatus::InvalidArgument,
            _ => GeomixStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GeomixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GeomixStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GeomixStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(GeomixStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(GeomixStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn model<'a>(m: *const GeomixModel) -> Result<&'a GeomixModel, Fail> {
    m.as_ref().ok_or_else(|| Fail(GeomixStatus::NullPointer, "model handle is null".into()))
}

fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or_else(|| Fail(GeomixStatus::NullPointer, format!("{what} is null")))
}

fn point(lat: f64, lon: f64) -> Result<GeoPoint, Fail> {
    GeoPoint::new(lat, lon).map_err(|e| Fail(GeomixStatus::InvalidArgument, e.to_string()))
}

fn wrong_model(msg: &str) -> Fail {
    Fail(GeomixStatus::WrongModel, msg.into())
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn geomix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, nul-terminated version string.
#[no_mangle]
pub extern "C" fn geomix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. `vocab_path` may be null, in which case the
/// vocabulary is read from `<checkpoint>.vocab.tsv`.
///
/// # Safety
/// Strings must be nul-terminated; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_model_load(
    checkpoint_path: *const c_char,
    vocab_path: *const c_char,
    out_model: *mut *mut GeomixModel,
) -> GeomixStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let files = ModelFiles {
            checkpoint: PathBuf::from(cstr(checkpoint_path, "checkpoint_path")?),
            vocab: if vocab_path.is_null() { None } else { Some(PathBuf::from(cstr(vocab_path, "vocab_path")?)) },
        };
        let (loaded, vocab) = load_pair(&files)?;
        *slot = Box::into_raw(Box::new(GeomixModel { model: loaded.model, vocab }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`geomix_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn geomix_model_free(model: *mut GeomixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out_kind` must be writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_model_kind(model: *const GeomixModel, out_kind: *mut GeomixModelKind) -> GeomixStatus {
    guard(|| {
        let m = self::model(model)?;
        *out(out_kind, "out_kind")? = match &m.model {
            SavedModel::Dialect(_) => GeomixModelKind::Dialect,
            SavedModel::Geo(g) => match g.kind {
                GeoModelKind::Regression => GeomixModelKind::Regression,
                GeoModelKind::Mdn => GeomixModelKind::Mdn,
                GeoModelKind::MdnShared => GeomixModelKind::MdnShared,
            },
        };
        Ok(())
    })
}

/// Number of mixture components (0 for regression).
///
/// # Safety
/// `model` must be a live handle; `out_k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_model_k(model: *const GeomixModel, out_k: *mut usize) -> GeomixStatus {
    guard(|| {
        let m = self::model(model)?;
        *out(out_k, "out_k")? = match &m.model {
            SavedModel::Geo(g) if g.kind == GeoModelKind::Regression => 0,
            other => other.k(),
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out_size` must be writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_model_vocab_size(model: *const GeomixModel, out_size: *mut usize) -> GeomixStatus {
    guard(|| {
        *out(out_size, "out_size")? = self::model(model)?.vocab.len();
        Ok(())
    })
}

/// Point prediction for one text. Returns `NoFeatures` when no token is in
/// the vocabulary.
///
/// # Safety
/// `model` must be a live handle, `text` nul-terminated, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_predict(
    model: *const GeomixModel,
    text: *const c_char,
    rule: GeomixRule,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> GeomixStatus {
    guard(|| {
        let m = self::model(model)?;
        let text = cstr(text, "text")?;
        let (lat, lon) = (out(out_lat, "out_lat")?, out(out_lon, "out_lon")?);
        let SavedModel::Geo(g) = &m.model else { return Err(wrong_model("prediction needs a geolocation checkpoint")) };
        let feats = geo_features(&[text], &m.vocab);
        if feats[0].is_empty() {
            return Err(Fail(GeomixStatus::NoFeatures, "no token of the text is in the vocabulary".into()));
        }
        let rule = match rule {
            GeomixRule::StrongestPi => SelectionRule::StrongestPi,
            GeomixRule::MaxMixtureProb => SelectionRule::MaxMixtureProb,
        };
        let p = g.predict_points(&[&feats[0]], rule)?[0];
        (*lat, *lon) = (p.lat, p.lon);
        Ok(())
    })
}

/// Writes the K components of the predictive mixture in model order. If
/// `capacity` is below K nothing is written, `*out_len` is set to K and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `buf` must hold `capacity` elements (may be null when `capacity` is 0).
#[no_mangle]
pub unsafe extern "C" fn geomix_mixture(
    model: *const GeomixModel,
    text: *const c_char,
    buf: *mut GeomixComponent,
    capacity: usize,
    out_len: *mut usize,
) -> GeomixStatus {
    guard(|| {
        let m = self::model(model)?;
        let text = cstr(text, "text")?;
        let len = out(out_len, "out_len")?;
        let SavedModel::Geo(g) = &m.model else { return Err(wrong_model("mixtures need a geolocation checkpoint")) };
        if g.kind == GeoModelKind::Regression {
            return Err(wrong_model("a regression checkpoint has no mixture"));
        }
        *len = g.head.k;
        if capacity < g.head.k {
            return Err(Fail(GeomixStatus::BufferTooSmall, format!("need room for {} components", g.head.k)));
        }
        if buf.is_null() {
            return Err(Fail(GeomixStatus::NullPointer, "buf is null".into()));
        }
        let feats = geo_features(&[text], &m.vocab);
        if feats[0].is_empty() {
            return Err(Fail(GeomixStatus::NoFeatures, "no token of the text is in the vocabulary".into()));
        }
        let mix = g.mixtures(&[&feats[0]])?.remove(0);
        let dst = std::slice::from_raw_parts_mut(buf, g.head.k);
        for (d, (c, w)) in dst.iter_mut().zip(mix.components.iter().zip(&mix.weights)) {
            *d = GeomixComponent {
                weight: *w,
                mu_lat: c.mu1,
                mu_lon: c.mu2,
                sigma_lat: c.sigma1,
                sigma_lon: c.sigma2,
                rho: c.rho,
            };
        }
        Ok(())
    })
}

/// log P(word | location) from a dialect checkpoint. Words are lowercased.
///
/// # Safety
/// `model` must be a live handle, `word` nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_word_log_prob(
    model: *const GeomixModel,
    word: *const c_char,
    lat: f64,
    lon: f64,
    out_log_prob: *mut f64,
) -> GeomixStatus {
    guard(|| {
        let m = self::model(model)?;
        let word = cstr(word, "word")?.to_lowercase();
        let dst = out(out_log_prob, "out_log_prob")?;
        let SavedModel::Dialect(d) = &m.model else { return Err(wrong_model("word probabilities need a dialect checkpoint")) };
        let idx = m
            .vocab
            .index_of(&word)
            .ok_or_else(|| Fail(GeomixStatus::UnknownWord, format!("'{word}' is not in the vocabulary")))?;
        let lp = d.log_probs(&[point(lat, lon)?])?;
        *dst = lp.get(0, idx);
        Ok(())
    })
}

/// Great-circle distance in km. NaN if any input is NaN.
#[no_mangle]
pub extern "C" fn geomix_haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine_km(GeoPoint { lat: lat1, lon: lon1 }, GeoPoint { lat: lat2, lon: lon2 })
}

/// Log density of a bivariate Gaussian at (x_lat, x_lon).
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn geomix_log_pdf(
    mu_lat: f64,
    mu_lon: f64,
    sigma_lat: f64,
    sigma_lon: f64,
    rho: f64,
    x_lat: f64,
    x_lon: f64,
    out_value: *mut f64,
) -> GeomixStatus {
    guard(|| {
        let dst = out(out_value, "out_value")?;
        let g = GaussianParams::new(mu_lat, mu_lon, sigma_lat, sigma_lon, rho)?;
        *dst = log_pdf(&g, GeoPoint { lat: x_lat, lon: x_lon })?;
        Ok(())
    })
}
