//! C ABI over `beatsynth`.
//!
//! Every function returns a `BsStatus` code; `BS_OK` is zero and the
//! failure codes match the command-line exit codes. After a failure,
//! `bs_last_error` describes it for the calling thread. Objects are opaque
//! handles created by `*_load`/`*_new` functions and released with the
//! matching `*_free`. Output buffers are caller-allocated: functions take a
//! capacity and report the length they need, failing with
//! `BS_ERR_BUFFER` when it is too small.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use beatsynth::config::RunConfig;
use beatsynth::diffusion::DdpmModel;
use beatsynth::imaging::{deembed_channel, embed_samples, MtfConfig, CHANNELS};
use beatsynth::ingest::decode_format212;
use beatsynth::metrics::{dtw, frechet_discrete, mmd_linear};
use beatsynth::signal::BeatSeries;
use beatsynth::wgan::WganModel;
use beatsynth::{jsonio, pipeline, Error};

/// Result code of every call.
pub type BsStatus = i32;

pub const BS_OK: BsStatus = 0;
/// A required pointer was null or a string was not UTF-8.
pub const BS_ERR_ARGUMENT: BsStatus = 1;
/// Invalid configuration or argument value.
pub const BS_ERR_CONFIG: BsStatus = 2;
/// Unreadable or malformed input data.
pub const BS_ERR_DATA: BsStatus = 3;
/// Numeric failure: shape mismatch, divergence or undefined metric.
pub const BS_ERR_NUMERIC: BsStatus = 4;
/// The output buffer is smaller than the reported required length.
pub const BS_ERR_BUFFER: BsStatus = 5;
/// A panic was caught at the boundary.
pub const BS_ERR_INTERNAL: BsStatus = 6;

/// Run configuration.
pub struct BsConfig(RunConfig);

/// A list of beats read from NDJSON.
pub struct BsBeats(Vec<BeatSeries>);

/// Trained WGAN-GP generator and critic.
pub struct BsWgan(WganModel);

/// Trained diffusion denoiser.
pub struct BsDdpm(DdpmModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(BsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(e.exit_code(), e.to_string())
    }
}

fn arg(msg: &str) -> Fail {
    Fail(BS_ERR_ARGUMENT, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BS_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            BS_ERR_INTERNAL
        }
    }
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    Ok(PathBuf::from(string(p, what)?))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(arg(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| arg(&format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(arg(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| arg(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(arg(&format!("{what} is null")));
    }
    out.write(v);
    Ok(())
}

/// Copies `src` to `dst` when it fits and always reports `src.len()` in
/// `needed` (if non-null).
unsafe fn fill<T: Copy>(src: &[T], dst: *mut T, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    if !needed.is_null() {
        needed.write(src.len());
    }
    if src.len() > cap {
        return Err(Fail(BS_ERR_BUFFER, format!("buffer holds {cap} values, {} needed", src.len())));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(arg("output buffer is null"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
#[no_mangle]
pub unsafe extern "C" fn bs_config_new(out: *mut *mut BsConfig) -> BsStatus {
    guard(|| put(out, Box::into_raw(Box::new(BsConfig(RunConfig::default()))), "out"))
}

/// Reads and validates a JSON config. Relative record paths resolve against
/// the file's directory.
#[no_mangle]
pub unsafe extern "C" fn bs_config_load(file: *const c_char, out: *mut *mut BsConfig) -> BsStatus {
    guard(|| {
        let cfg = RunConfig::load(&path(file, "file")?)?;
        put(out, Box::into_raw(Box::new(BsConfig(cfg))), "out")
    })
}

/// Overrides the seed.
#[no_mangle]
pub unsafe extern "C" fn bs_config_set_seed(cfg: *mut BsConfig, seed: u64) -> BsStatus {
    guard(|| {
        cfg.as_mut().ok_or_else(|| arg("cfg is null"))?.0.seed = seed;
        Ok(())
    })
}

/// Writes the 64-character hex config hash plus a NUL into `buf`
/// (capacity `cap` bytes).
#[no_mangle]
pub unsafe extern "C" fn bs_config_hash(cfg: *const BsConfig, buf: *mut c_char, cap: usize, needed: *mut usize) -> BsStatus {
    guard(|| {
        let hash = handle(cfg, "cfg")?.0.hash()?;
        let bytes = CString::new(hash).expect("hex has no NUL");
        fill(bytes.as_bytes_with_nul(), buf.cast(), cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_config_free(cfg: *mut BsConfig) {
    free(cfg)
}

/// Runs the cached pipeline into `out_dir`; reports how many stages ran and
/// how many were reused.
#[no_mangle]
pub unsafe extern "C" fn bs_run_pipeline(cfg: *const BsConfig, out_dir: *const c_char, executed: *mut usize, skipped: *mut usize) -> BsStatus {
    guard(|| {
        let summary = pipeline::run_pipeline(&handle(cfg, "cfg")?.0, &path(out_dir, "out_dir")?)?;
        if !executed.is_null() {
            executed.write(summary.executed.len());
        }
        if !skipped.is_null() {
            skipped.write(summary.skipped.len());
        }
        Ok(())
    })
}

/// Reads beats from an NDJSON file.
#[no_mangle]
pub unsafe extern "C" fn bs_beats_load(file: *const c_char, out: *mut *mut BsBeats) -> BsStatus {
    guard(|| {
        let beats = jsonio::read_ndjson(&path(file, "file")?)?;
        put(out, Box::into_raw(Box::new(BsBeats(beats))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_beats_count(beats: *const BsBeats, out: *mut usize) -> BsStatus {
    guard(|| put(out, handle(beats, "beats")?.0.len(), "out"))
}

/// Copies the samples of beat `index`.
#[no_mangle]
pub unsafe extern "C" fn bs_beats_samples(beats: *const BsBeats, index: usize, buf: *mut f64, cap: usize, needed: *mut usize) -> BsStatus {
    guard(|| {
        let b = handle(beats, "beats")?.0.get(index).ok_or_else(|| Fail(BS_ERR_CONFIG, format!("beat index {index} out of range")))?;
        fill(&b.samples, buf, cap, needed)
    })
}

/// Label of beat `index` as an ASCII byte (non-ASCII labels map to `?`).
#[no_mangle]
pub unsafe extern "C" fn bs_beats_label(beats: *const BsBeats, index: usize, out: *mut c_char) -> BsStatus {
    guard(|| {
        let b = handle(beats, "beats")?.0.get(index).ok_or_else(|| Fail(BS_ERR_CONFIG, format!("beat index {index} out of range")))?;
        let c = if b.label.is_ascii() { b.label as u8 } else { b'?' };
        put(out, c as c_char, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_beats_free(beats: *mut BsBeats) {
    free(beats)
}

/// Encodes one normalized beat of length `n` as a `3 × n × n` stack
/// (GASF, GADF, MTF), row-major.
#[no_mangle]
pub unsafe extern "C" fn bs_embed(samples: *const f64, n: usize, bins: usize, buf: *mut f64, cap: usize, needed: *mut usize) -> BsStatus {
    guard(|| {
        let x = slice(samples, n, "samples")?;
        fill(&embed_samples(x, MtfConfig { bins })?, buf, cap, needed)
    })
}

/// Recovers a beat of length `n` from an `n × n` GASF channel; `violation`
/// receives how far the diagonal strayed outside `[-1, 1]`.
#[no_mangle]
pub unsafe extern "C" fn bs_deembed(gasf: *const f64, n: usize, out: *mut f64, violation: *mut f64) -> BsStatus {
    guard(|| {
        let g = slice(gasf, n * n, "gasf")?;
        let (x, v) = deembed_channel(g, n)?;
        fill(&x, out, n, ptr::null_mut())?;
        if !violation.is_null() {
            violation.write(v);
        }
        Ok(())
    })
}

/// Decodes format-212 bytes into two channels of `bytes_len / 3` samples
/// each; `needed` receives the per-channel length.
#[no_mangle]
pub unsafe extern "C" fn bs_decode_format212(bytes: *const u8, bytes_len: usize, a: *mut i32, b: *mut i32, cap: usize, needed: *mut usize) -> BsStatus {
    guard(|| {
        let data = slice(bytes, bytes_len, "bytes")?;
        let (ca, cb) = decode_format212(data, data.len() / 3 * 2)?;
        fill(&ca, a, cap, needed)?;
        fill(&cb, b, cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_dtw(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut f64) -> BsStatus {
    guard(|| put(out, dtw(slice(a, na, "a")?, slice(b, nb, "b")?)?, "out"))
}

#[no_mangle]
pub unsafe extern "C" fn bs_frechet(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut f64) -> BsStatus {
    guard(|| put(out, frechet_discrete(slice(a, na, "a")?, slice(b, nb, "b")?)?, "out"))
}

/// Squared linear-kernel MMD between `nx` and `ny` row-major vectors of
/// dimension `dim`.
#[no_mangle]
pub unsafe extern "C" fn bs_mmd_linear(x: *const f64, nx: usize, y: *const f64, ny: usize, dim: usize, out: *mut f64) -> BsStatus {
    guard(|| {
        if dim == 0 {
            return Err(Fail(BS_ERR_CONFIG, "dim must be positive".into()));
        }
        let rows = |p, n, what| -> Result<Vec<Vec<f64>>, Fail> { Ok(slice(p, n * dim, what)?.chunks(dim).map(<[f64]>::to_vec).collect()) };
        put(out, mmd_linear(&rows(x, nx, "x")?, &rows(y, ny, "y")?)?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_wgan_load(file: *const c_char, out: *mut *mut BsWgan) -> BsStatus {
    guard(|| {
        let m = WganModel::load(&path(file, "file")?)?;
        put(out, Box::into_raw(Box::new(BsWgan(m))), "out")
    })
}

/// Beat length the generator emits.
#[no_mangle]
pub unsafe extern "C" fn bs_wgan_beat_len(model: *const BsWgan, out: *mut usize) -> BsStatus {
    guard(|| put(out, handle(model, "model")?.0.generator.config.output_len, "out"))
}

/// Draws `n` beats into `buf` as `n × beat_len` values.
#[no_mangle]
pub unsafe extern "C" fn bs_wgan_sample(model: *const BsWgan, n: usize, seed: u64, buf: *mut f64, cap: usize, needed: *mut usize) -> BsStatus {
    guard(|| {
        let beats = handle(model, "model")?.0.sample(n, seed)?;
        fill(&beats.concat(), buf, cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_wgan_free(model: *mut BsWgan) {
    free(model)
}

#[no_mangle]
pub unsafe extern "C" fn bs_ddpm_load(file: *const c_char, out: *mut *mut BsDdpm) -> BsStatus {
    guard(|| {
        let m = DdpmModel::load(&path(file, "file")?)?;
        put(out, Box::into_raw(Box::new(BsDdpm(m))), "out")
    })
}

/// Side length of the square images the model produces (the beat length).
#[no_mangle]
pub unsafe extern "C" fn bs_ddpm_image_size(model: *const BsDdpm, out: *mut usize) -> BsStatus {
    guard(|| put(out, handle(model, "model")?.0.width, "out"))
}

/// Draws `n` images into `buf` as `n × 3 × size × size` values.
#[no_mangle]
pub unsafe extern "C" fn bs_ddpm_sample(model: *const BsDdpm, n: usize, seed: u64, clip_denoised: bool, buf: *mut f64, cap: usize, needed: *mut usize) -> BsStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        if m.denoiser.config.channels != CHANNELS {
            return Err(Fail(BS_ERR_DATA, format!("model has {} channels", m.denoiser.config.channels)));
        }
        let batch = pipeline::sample_ddpm(m, n, seed, clip_denoised)?;
        fill(&batch.data, buf, cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_ddpm_free(model: *mut BsDdpm) {
    free(model)
}
