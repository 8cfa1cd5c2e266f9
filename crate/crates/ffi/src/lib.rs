//! C interface: opaque vocabulary and encoder handles, embedding, the
//! geometry metrics over caller-owned buffers, and NLI preparation.
//!
//! Every fallible function returns a [`CsStatus`]. On failure the message is
//! kept per thread and can be read with [`cs_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use contrasent::analysis::{self, RetrievalCase};
use contrasent::checkpoint::Checkpoint;
use contrasent::encoder::{EncoderWeights, PoolingStrategy};
use contrasent::jsonl;
use contrasent::pretrain::contrastive_loss;
use contrasent::tape::Tape;
use contrasent::tensor::{cosine_similarity, Tensor};
use contrasent::text::{self, encode_single, Vocabulary};
use contrasent::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Dimension = 6,
    Degenerate = 7,
    Input = 8,
    UndefinedMetric = 9,
    BufferTooSmall = 10,
    VocabularyMismatch = 11,
    Panic = 12,
    Other = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsPooling {
    Cls = 0,
    Mean = 1,
    FirstLast = 2,
    Top2 = 3,
}

fn pooling_from(code: i32) -> Result<PoolingStrategy, Failure> {
    Ok(match code {
        c if c == CsPooling::Cls as i32 => PoolingStrategy::Cls,
        c if c == CsPooling::Mean as i32 => PoolingStrategy::Mean,
        c if c == CsPooling::FirstLast as i32 => PoolingStrategy::FirstLast,
        c if c == CsPooling::Top2 as i32 => PoolingStrategy::Top2,
        other => return fail(CsStatus::Config, format!("unknown pooling code {other}")),
    })
}

/// Token vocabulary.
pub struct CsVocab {
    inner: Vocabulary,
}

/// Encoder weights together with the vocabulary they were trained with.
pub struct CsEncoder {
    weights: EncoderWeights,
    vocab: Vocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension { .. } => CsStatus::Dimension,
            Error::Degenerate(_) => CsStatus::Degenerate,
            Error::Config(_) => CsStatus::Config,
            Error::Input(_) | Error::Contract(_) | Error::Vocabulary { .. } => CsStatus::Input,
            Error::UndefinedMetric(_) => CsStatus::UndefinedMetric,
            Error::Format(_) | Error::Json(_) | Error::Data { .. } => CsStatus::Format,
            Error::Io(_) => CsStatus::Io,
            _ => CsStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: CsStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(CsStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(CsStatus::NullPointer, format!("{what} is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(CsStatus::NullPointer, format!("{what} is NULL"));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return fail(CsStatus::NullPointer, format!("{what} is NULL"));
    }
    out.write(value);
    Ok(())
}

fn rows(data: &[f64], n: usize, d: usize) -> Vec<&[f64]> {
    (0..n).map(|i| &data[i * d..(i + 1) * d]).collect()
}

fn matrix_len(n: usize, d: usize) -> Result<usize, Failure> {
    n.checked_mul(d)
        .ok_or_else(|| Failure(CsStatus::Dimension, "matrix size overflows".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bytes needed for the last error message including its NUL, or 0 when the
/// last call on this thread succeeded.
#[no_mangle]
pub extern "C" fn cs_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn cs_last_error_message(buf: *mut c_char, len: usize) -> CsStatus {
    if buf.is_null() {
        return CsStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&b"\0"[..], |c| c.as_bytes_with_nul());
        if bytes.len() > len {
            return CsStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        CsStatus::Ok
    })
}

/// Loads a one-token-per-line vocabulary. Release with [`cs_vocab_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_vocab_load(path: *const c_char, out: *mut *mut CsVocab) -> CsStatus {
    guard(|| {
        let path = PathBuf::from(as_str(path, "path")?);
        let inner = Vocabulary::load(&path)?;
        write(out, Box::into_raw(Box::new(CsVocab { inner })), "out")
    })
}

/// # Safety
/// `vocab` must be NULL or a handle from [`cs_vocab_load`].
#[no_mangle]
pub unsafe extern "C" fn cs_vocab_len(vocab: *const CsVocab) -> usize {
    vocab.as_ref().map_or(0, |v| v.inner.len())
}

/// # Safety
/// `vocab` must be NULL or a handle from [`cs_vocab_load`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn cs_vocab_free(vocab: *mut CsVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Loads the encoder of a pretraining or fine-tuning checkpoint. The
/// checkpoint must have been trained with `vocab`, which is copied into the
/// handle. Release with [`cs_encoder_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string, `vocab` a live vocabulary handle
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_encoder_load(
    path: *const c_char,
    vocab: *const CsVocab,
    out: *mut *mut CsEncoder,
) -> CsStatus {
    guard(|| {
        let path = PathBuf::from(as_str(path, "path")?);
        let vocab = &as_ref(vocab, "vocab")?.inner;
        let ck = Checkpoint::load(&path)?;
        if ck.vocab_hash != vocab.hash() {
            return fail(
                CsStatus::VocabularyMismatch,
                format!("{} was trained with a different vocabulary", path.display()),
            );
        }
        let handle = CsEncoder {
            weights: ck.encoder,
            vocab: vocab.clone(),
        };
        write(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// Embedding width, or 0 for NULL.
///
/// # Safety
/// `encoder` must be NULL or a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn cs_encoder_dim(encoder: *const CsEncoder) -> usize {
    encoder.as_ref().map_or(0, |e| e.weights.config.hidden)
}

/// # Safety
/// `encoder` must be NULL or a handle from [`cs_encoder_load`] not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn cs_encoder_free(encoder: *mut CsEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Writes the pooled embedding of `text` into `out`, which holds `capacity`
/// floats. `pooling` is a [`CsPooling`] value. `written` receives the
/// embedding width, also when `capacity` is too small.
///
/// # Safety
/// `encoder` must be a live handle, `text` NUL-terminated, `out` valid for
/// `capacity` writes and `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_embed(
    encoder: *const CsEncoder,
    text: *const c_char,
    pooling: i32,
    out: *mut f32,
    capacity: usize,
    written: *mut usize,
) -> CsStatus {
    guard(|| {
        let enc = as_ref(encoder, "encoder")?;
        let text = as_str(text, "text")?;
        let pooling = pooling_from(pooling)?;
        let d = enc.weights.config.hidden;
        write(written, d, "written")?;
        if capacity < d {
            return fail(
                CsStatus::BufferTooSmall,
                format!("embedding has {d} values but the buffer holds {capacity}"),
            );
        }
        if out.is_null() {
            return fail(CsStatus::NullPointer, "out is NULL");
        }
        let seq = encode_single(text, &enc.vocab, enc.weights.config.max_len)?.unpadded();
        let v = enc.weights.embed(&seq, pooling)?;
        ptr::copy_nonoverlapping(v.as_ptr(), out, d);
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must be valid for `len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_cosine(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let a = as_slice(a, len, "a")?;
        let b = as_slice(b, len, "b")?;
        write(out, cosine_similarity(a, b)?, "out")
    })
}

/// Mean squared distance between unit-normalised rows `x[i]` and `y[i]`;
/// both are row-major `n × d`.
///
/// # Safety
/// `x` and `y` must be valid for `n·d` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_alignment(
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let len = matrix_len(n, d)?;
        let x = as_slice(x, len, "x")?;
        let y = as_slice(y, len, "y")?;
        let pairs: Vec<(&[f64], &[f64])> = rows(x, n, d).into_iter().zip(rows(y, n, d)).collect();
        write(out, analysis::alignment(&pairs)?, "out")
    })
}

/// Uniformity of the unit-normalised rows of row-major `n × d` `x`.
///
/// # Safety
/// `x` must be valid for `n·d` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_uniformity(
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let x = as_slice(x, matrix_len(n, d)?, "x")?;
        write(out, analysis::uniformity(&rows(x, n, d))?, "out")
    })
}

/// Accuracy@K for `n` claims (`n × d`) that each rank their own `m`
/// candidates (`n × m × d`) by cosine similarity; `gold[i] < m`.
///
/// # Safety
/// Buffers must be valid for the stated sizes and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_accuracy_at_topk(
    claims: *const f64,
    candidates: *const f64,
    gold: *const usize,
    n: usize,
    m: usize,
    d: usize,
    k: usize,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let claims = as_slice(claims, matrix_len(n, d)?, "claims")?;
        let cands = as_slice(candidates, matrix_len(matrix_len(n, m)?, d)?, "candidates")?;
        let gold = as_slice(gold, n, "gold")?;
        let cases: Vec<RetrievalCase> = (0..n)
            .map(|i| RetrievalCase {
                claim: claims[i * d..(i + 1) * d].to_vec(),
                candidates: (0..m)
                    .map(|j| cands[(i * m + j) * d..(i * m + j + 1) * d].to_vec())
                    .collect(),
                gold: gold[i],
            })
            .collect();
        write(out, analysis::accuracy_at_topk(&cases, k)?, "out")
    })
}

/// Contrastive loss of row-major `n × d` anchors, positives and hard
/// negatives at temperature `tau`.
///
/// # Safety
/// The three inputs must be valid for `n·d` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_contrastive_loss(
    anchors: *const f64,
    positives: *const f64,
    negatives: *const f64,
    n: usize,
    d: usize,
    tau: f64,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let len = matrix_len(n, d)?;
        let mut tape = Tape::<f64>::new();
        let mut input = |p: *const f64, what: &str| -> Result<_, Failure> {
            let t = Tensor::new(vec![n, d], as_slice(p, len, what)?.to_vec())?;
            Ok(tape.constant(t))
        };
        let a = input(anchors, "anchors")?;
        let p = input(positives, "positives")?;
        let q = input(negatives, "negatives")?;
        let loss = contrastive_loss(&mut tape, a, p, q, tau)?;
        write(out, tape.value(loss).data()[0], "out")
    })
}

/// Builds contrastive triples from an NLI JSON-lines file, writing them to
/// `triples_path` and the per-source counts to `stats_path`. `count`, when
/// not NULL, receives the number of triples.
///
/// # Safety
/// Paths must be NUL-terminated strings; `count` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_prepare(
    nli_path: *const c_char,
    triples_path: *const c_char,
    stats_path: *const c_char,
    count: *mut usize,
) -> CsStatus {
    guard(|| {
        let nli = PathBuf::from(as_str(nli_path, "nli_path")?);
        let triples_out = PathBuf::from(as_str(triples_path, "triples_path")?);
        let stats_out = PathBuf::from(as_str(stats_path, "stats_path")?);
        let examples = text::read_nli(&nli)?;
        let (triples, stats) = text::prepare_contrastive(&examples);
        jsonl::write(&triples_out, &triples)?;
        jsonl::write_json(&stats_out, &stats)?;
        if !count.is_null() {
            count.write(triples.len());
        }
        Ok(())
    })
}
