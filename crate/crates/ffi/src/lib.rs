//! C ABI over the homosmooth core.
//!
//! Every function returns an [`HsStatus`]. On failure a message is stored
//! per thread and can be read with [`hs_last_error_message`]. Objects are
//! opaque handles created by the `hs_prior_*` constructors and `hs_index_load` and released
//! with the matching `hs_*_free`. Indices and sizes are `size_t`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;


use homosmooth::lexicon::{parse_lexicon, parse_syllable, ToneMode, Vocabulary};
use homosmooth::prior::{fuzzy_homophone_prior, homophone_prior, uniform_prior, SmoothingDistribution};
use homosmooth::{Error, HomophoneIndex};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    IndexOutOfRange = 4,
    DimensionMismatch = 5,
    NoHomophones = 6,
    DegenerateVocabulary = 7,
    Parse = 8,
    Io = 9,
    NonFinite = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Edit operations between a reference and a hypothesis.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HsEditStats {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

/// Opaque smoothing distribution.
pub struct HsPrior(SmoothingDistribution);

/// Opaque homophone index together with its vocabulary.
pub struct HsHomophoneIndex {
    vocabulary: Vocabulary,
    index: HomophoneIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(HsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidSyllable(_) | Error::InvalidArgument(_) | Error::Config(_) | Error::EmptyCorpus => {
                HsStatus::InvalidArgument
            }
            Error::Parse { .. } => HsStatus::Parse,
            Error::Io { .. } => HsStatus::Io,
            Error::NoHomophones => HsStatus::NoHomophones,
            Error::DegenerateVocabulary { .. } => HsStatus::DegenerateVocabulary,
            Error::IndexOutOfRange { .. } => HsStatus::IndexOutOfRange,
            Error::DimensionMismatch { .. } => HsStatus::DimensionMismatch,
            Error::NonFinite(_) | Error::Diverged { .. } => HsStatus::NonFinite,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn call(f: impl FnOnce() -> Result<(), Failure>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn prior<'a>(p: *const HsPrior) -> Result<&'a SmoothingDistribution, Failure> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("prior"))
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn give(out: &mut *mut HsPrior, d: SmoothingDistribution) {
    *out = Box::into_raw(Box::new(HsPrior(d)));
}

/// Uniform prior over `size` classes.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_uniform(size: usize, out: *mut *mut HsPrior) -> HsStatus {
    call(|| {
        let out = out_ref(out, "out")?;
        give(out, uniform_prior(size)?);
        Ok(())
    })
}

/// Homophone prior: 0.6 on `k0`, 0.3 spread over the `n` homophones, 0.1
/// over the rest.
///
/// # Safety
/// `homophones` must point to `n` readable indices and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_homophone(
    k0: usize,
    homophones: *const usize,
    n: usize,
    size: usize,
    out: *mut *mut HsPrior,
) -> HsStatus {
    call(|| {
        let out = out_ref(out, "out")?;
        let homo: BTreeSet<usize> = slice(homophones, n, "homophones")?.iter().copied().collect();
        give(out, homophone_prior(k0, &homo, size)?);
        Ok(())
    })
}

/// Fuzzy homophone prior over `n` homophones and `m` similar-sounding characters.
///
/// # Safety
/// `homophones` and `similar` must point to `n` and `m` readable indices;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_fuzzy(
    k0: usize,
    homophones: *const usize,
    n: usize,
    similar: *const usize,
    m: usize,
    size: usize,
    out: *mut *mut HsPrior,
) -> HsStatus {
    call(|| {
        let out = out_ref(out, "out")?;
        let homo: BTreeSet<usize> = slice(homophones, n, "homophones")?.iter().copied().collect();
        let simi: BTreeSet<usize> = slice(similar, m, "similar")?.iter().copied().collect();
        give(out, fuzzy_homophone_prior(k0, &homo, &simi, size)?);
        Ok(())
    })
}

/// Number of classes of a prior, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_size(p: *const HsPrior) -> usize {
    p.as_ref().map_or(0, |h| h.0.size())
}

/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_prob(p: *const HsPrior, k: usize, out: *mut f64) -> HsStatus {
    call(|| {
        let d = prior(p)?;
        let out = out_ref(out, "out")?;
        if k >= d.size() {
            return Err(Error::IndexOutOfRange { index: k, size: d.size() }.into());
        }
        *out = d.prob(k);
        Ok(())
    })
}

/// Writes all `size` probabilities into `buf`.
///
/// # Safety
/// `p` must be a live handle and `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_to_dense(p: *const HsPrior, buf: *mut f64, len: usize) -> HsStatus {
    call(|| {
        let d = prior(p)?;
        if len < d.size() {
            return Err(Failure(HsStatus::BufferTooSmall, format!("need {} doubles, got {len}", d.size())));
        }
        slice_mut(buf, len, "buf")?[..d.size()].copy_from_slice(&d.to_dense());
        Ok(())
    })
}

/// Releases a prior. Null is ignored.
///
/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_prior_free(p: *mut HsPrior) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `-(1 - beta) log p[k0] + beta KL(prior || p)` with `p = softmax(logits)`.
///
/// # Safety
/// `logits` must point to `len` doubles, `p` must be a live handle and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_ls_loss(
    logits: *const f64,
    len: usize,
    k0: usize,
    p: *const HsPrior,
    beta: f64,
    out: *mut f64,
) -> HsStatus {
    call(|| {
        let z = slice(logits, len, "logits")?;
        let out = out_ref(out, "out")?;
        *out = homosmooth::ls_loss(z, k0, prior(p)?, beta)?;
        Ok(())
    })
}

/// Gradient of [`hs_ls_loss`] with respect to the logits, written to `grad`.
///
/// # Safety
/// `logits` and `grad` must each point to `len` doubles; `p` must be live.
#[no_mangle]
pub unsafe extern "C" fn hs_ls_loss_grad(
    logits: *const f64,
    len: usize,
    k0: usize,
    p: *const HsPrior,
    beta: f64,
    grad: *mut f64,
) -> HsStatus {
    call(|| {
        let z = slice(logits, len, "logits")?;
        let g = homosmooth::ls_loss_grad(z, k0, prior(p)?, beta)?;
        slice_mut(grad, len, "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Builds a homophone index from a vocabulary file (one symbol per line)
/// and a lexicon TSV.
///
/// # Safety
/// The paths must be NUL-terminated UTF-8 strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_index_load(
    vocab_path: *const c_char,
    lexicon_path: *const c_char,
    tone_insensitive: bool,
    out: *mut *mut HsHomophoneIndex,
) -> HsStatus {
    call(|| {
        let vocab_path = text(vocab_path, "vocab_path")?;
        let lexicon_path = text(lexicon_path, "lexicon_path")?;
        let out = out_ref(out, "out")?;
        let vocabulary = Vocabulary::read(Path::new(vocab_path))?;
        let lexicon = parse_lexicon(Path::new(lexicon_path), &vocabulary)?;
        let mode = if tone_insensitive { ToneMode::Insensitive } else { ToneMode::Sensitive };
        let index = HomophoneIndex::build(&lexicon, &vocabulary, mode);
        *out = Box::into_raw(Box::new(HsHomophoneIndex { vocabulary, index }));
        Ok(())
    })
}

/// Vocabulary size of an index, or 0 for a null handle.
///
/// # Safety
/// `idx` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_index_vocab_size(idx: *const HsHomophoneIndex) -> usize {
    idx.as_ref().map_or(0, |h| h.vocabulary.len())
}

/// Vocabulary index of a UTF-8 character (`<unk>` when absent).
///
/// # Safety
/// `idx` must be live, `ch` a NUL-terminated string holding one character,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_index_encode_char(idx: *const HsHomophoneIndex, ch: *const c_char, out: *mut usize) -> HsStatus {
    call(|| {
        let h = idx.as_ref().ok_or_else(|| null("index"))?;
        let s = text(ch, "ch")?;
        let out = out_ref(out, "out")?;
        let mut it = s.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => {
                *out = h.vocabulary.encode_char(c);
                Ok(())
            }
            _ => Err(Failure(HsStatus::InvalidArgument, format!("{s:?} is not a single character"))),
        }
    })
}

/// Homophones of `k0` read as `syllable` (e.g. `"zhong1"`), ascending.
/// `*count` receives the number found; `buf` must hold at least that many
/// entries or the call fails with `BufferTooSmall` (and `*count` still set).
///
/// # Safety
/// `idx` must be live, `syllable` NUL-terminated, `buf` room for `cap`
/// entries and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_index_homophones(
    idx: *const HsHomophoneIndex,
    k0: usize,
    syllable: *const c_char,
    buf: *mut usize,
    cap: usize,
    count: *mut usize,
) -> HsStatus {
    call(|| {
        let h = idx.as_ref().ok_or_else(|| null("index"))?;
        let syl = parse_syllable(text(syllable, "syllable")?)?;
        let count = out_ref(count, "count")?;
        let homo: Vec<usize> = h.index.homophones(k0, &syl).into_iter().collect();
        *count = homo.len();
        if cap < homo.len() {
            return Err(Failure(HsStatus::BufferTooSmall, format!("need {} entries, got {cap}", homo.len())));
        }
        slice_mut(buf, cap, "buf")?[..homo.len()].copy_from_slice(&homo);
        Ok(())
    })
}

/// Releases an index. Null is ignored.
///
/// # Safety
/// `idx` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_index_free(idx: *mut HsHomophoneIndex) {
    if !idx.is_null() {
        drop(Box::from_raw(idx));
    }
}

/// Character-level Levenshtein statistics of two UTF-8 strings.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_edit_distance(reference: *const c_char, hypothesis: *const c_char, out: *mut HsEditStats) -> HsStatus {
    call(|| {
        let r = text(reference, "reference")?;
        let h = text(hypothesis, "hypothesis")?;
        let out = out_ref(out, "out")?;
        let s = homosmooth::metrics::char_edit_distance(r, h);
        *out = HsEditStats {
            substitutions: s.substitutions,
            deletions: s.deletions,
            insertions: s.insertions,
            ref_len: s.ref_len,
        };
        Ok(())
    })
}

/// Pooled CER in percent over `n` aligned reference/hypothesis strings.
///
/// # Safety
/// `refs` and `hyps` must each point to `n` NUL-terminated strings and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_corpus_cer(refs: *const *const c_char, hyps: *const *const c_char, n: usize, out: *mut f64) -> HsStatus {
    call(|| {
        let r: Vec<&str> = slice(refs, n, "refs")?
            .iter()
            .map(|&p| text(p, "reference"))
            .collect::<Result<_, _>>()?;
        let h: Vec<&str> = slice(hyps, n, "hyps")?
            .iter()
            .map(|&p| text(p, "hypothesis"))
            .collect::<Result<_, _>>()?;
        let out = out_ref(out, "out")?;
        *out = homosmooth::corpus_cer(&r, &h)?;
        Ok(())
    })
}

