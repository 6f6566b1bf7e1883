//! C ABI for `qcascade`.
//!
//! Cascades live behind the opaque [`QcCascade`] handle. Every fallible call
//! returns a [`QcStatus`]; the message of the most recent failure on the calling
//! thread is available from [`qc_last_error_message`]. Matrices cross the
//! boundary as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use qcascade::balancing::balance_cascade;
use qcascade::cascade::{CascadeModel, OscillatorParams};
use qcascade::matcore::{AntisymmetricMatrix, SymmetricMatrix};
use qcascade::sensitivity::purity_gradients;
use qcascade::spec_file::parse_spec;
use qcascade::steadystate::steady_state;
use qcascade::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum QcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Schema = 4,
    DimensionMismatch = 5,
    SingularTheta = 6,
    NotHurwitz = 7,
    NotSymplectic = 8,
    NotOneMode = 9,
    NumericalFailure = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Opaque cascade handle.
pub struct QcCascade {
    model: CascadeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QcStatus {
    match e {
        Error::Parse(_) => QcStatus::Parse,
        Error::Schema { .. } => QcStatus::Schema,
        Error::DimensionMismatch { .. } => QcStatus::DimensionMismatch,
        Error::SingularTheta { .. } => QcStatus::SingularTheta,
        Error::NotHurwitz { .. } => QcStatus::NotHurwitz,
        Error::NotSymplectic { .. } => QcStatus::NotSymplectic,
        Error::NotOneMode(_) => QcStatus::NotOneMode,
        Error::InvalidArgument(_) | Error::Io(_) => QcStatus::InvalidArgument,
        _ => QcStatus::NumericalFailure,
    }
}

fn fail(status: QcStatus, msg: impl Into<String>) -> QcStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), QcStatus>) -> QcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(QcStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> QcStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn handle<'a>(h: *const QcCascade) -> Result<&'a QcCascade, QcStatus> {
    h.as_ref().ok_or_else(|| fail(QcStatus::NullPointer, "null cascade handle"))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], QcStatus> {
    if p.is_null() {
        return Err(fail(QcStatus::NullPointer, format!("null {what} buffer")));
    }
    if len < need {
        return Err(fail(QcStatus::BufferTooSmall, format!("{what} buffer holds {len}, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], QcStatus> {
    if p.is_null() {
        return Err(fail(QcStatus::NullPointer, format!("null {what} array")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn write_row_major(dst: &mut [f64], m: &DMatrix<f64>) -> usize {
    let mut i = 0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            dst[i] = m[(r, c)];
            i += 1;
        }
    }
    i
}

fn boxed(model: CascadeModel, out: *mut *mut QcCascade) -> Result<(), QcStatus> {
    unsafe { *out = Box::into_raw(Box::new(QcCascade { model })) };
    Ok(())
}

/// Builds a cascade of `count` oscillators with state dimensions `dims` and
/// `channels` field channels.
///
/// `r` holds the `dims[k]×dims[k]` energy matrices back to back, `m` the
/// `channels×dims[k]` coupling matrices, `theta` the commutation matrices or NULL
/// for the canonical `½J`.
///
/// # Safety
/// `dims` must point to `count` values; `r`, `m` and a non-null `theta` must
/// point to the number of doubles implied by `dims` and `channels`; `out` must be
/// writable. Release the handle with [`qc_cascade_free`].
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_new(
    count: usize,
    dims: *const usize,
    channels: usize,
    r: *const f64,
    m: *const f64,
    theta: *const f64,
    out: *mut *mut QcCascade,
) -> QcStatus {
    guard(|| {
        if out.is_null() || dims.is_null() {
            return Err(fail(QcStatus::NullPointer, "null dims or output pointer"));
        }
        if count == 0 {
            return Err(fail(QcStatus::InvalidArgument, "cascade needs at least one oscillator"));
        }
        let dims = std::slice::from_raw_parts(dims, count);
        let sq: usize = dims.iter().map(|n| n * n).sum();
        let rect: usize = dims.iter().map(|n| channels * n).sum();
        let r = in_slice(r, sq, "energy")?;
        let m = in_slice(m, rect, "coupling")?;
        let th = if theta.is_null() { None } else { Some(in_slice(theta, sq, "commutation")?) };
        let (mut ro, mut mo) = (0, 0);
        let mut osc = Vec::with_capacity(count);
        for (k, &n) in dims.iter().enumerate() {
            let rk = DMatrix::from_row_slice(n, n, &r[ro..ro + n * n]);
            let mk = DMatrix::from_row_slice(channels, n, &m[mo..mo + channels * n]);
            let rs = SymmetricMatrix::try_new(rk, 1e-9).map_err(lib)?;
            let p = match th {
                None => OscillatorParams::with_canonical_theta(rs, mk),
                Some(t) => {
                    let tk = AntisymmetricMatrix::try_new(DMatrix::from_row_slice(n, n, &t[ro..ro + n * n]), 1e-9).map_err(lib)?;
                    OscillatorParams::new(tk, rs, mk)
                }
            };
            let p = p.map_err(|e| match e {
                Error::SingularTheta { .. } => lib(Error::SingularTheta { index: k + 1 }),
                e => lib(e),
            })?;
            osc.push(p);
            ro += n * n;
            mo += channels * n;
        }
        boxed(CascadeModel::assemble(osc).map_err(lib)?, out)
    })
}

/// Builds a cascade from a JSON description in the command-line input format.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_from_json(json: *const c_char, out: *mut *mut QcCascade) -> QcStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(fail(QcStatus::NullPointer, "null json or output pointer"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| fail(QcStatus::Parse, "input is not UTF-8"))?;
        let spec = parse_spec(text).map_err(lib)?;
        boxed(spec.cascade().map_err(lib)?, out)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `h` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_free(h: *mut QcCascade) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of oscillators, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_len(h: *const QcCascade) -> usize {
    h.as_ref().map_or(0, |c| c.model.len())
}

/// Total state dimension, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_state_dim(h: *const QcCascade) -> usize {
    h.as_ref().map_or(0, |c| c.model.state_dim())
}

/// Writes the invariant covariance (`state_dim²` doubles, row-major).
///
/// # Safety
/// `h` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_covariance(h: *const QcCascade, out: *mut f64, len: usize) -> QcStatus {
    guard(|| {
        let c = handle(h)?;
        let n = c.model.state_dim();
        let dst = out_slice(out, len, n * n, "covariance")?;
        let st = steady_state(&c.model).map_err(lib)?;
        write_row_major(dst, st.p.as_matrix());
        Ok(())
    })
}

/// Purity `sqrt(det Θ / det 𝒫)` and `ln det 𝒫`. Either output may be NULL.
///
/// # Safety
/// `h` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_purity(h: *const QcCascade, purity: *mut f64, logdet: *mut f64) -> QcStatus {
    guard(|| {
        let c = handle(h)?;
        let st = steady_state(&c.model).map_err(lib)?;
        if !purity.is_null() {
            *purity = st.purity.purity;
        }
        if !logdet.is_null() {
            *logdet = st.purity.logdet;
        }
        Ok(())
    })
}

/// Gradients of `ln det 𝒫`: `rho` receives the `n_k×n_k` blocks back to back,
/// `mu` the `channels×n_k` blocks, both row-major.
///
/// # Safety
/// `h` must be a live handle; `rho` and `mu` must point to `rho_len` and
/// `mu_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_gradients(h: *const QcCascade, rho: *mut f64, rho_len: usize, mu: *mut f64, mu_len: usize) -> QcStatus {
    guard(|| {
        let c = handle(h)?;
        let dims = c.model.dims();
        let need_r: usize = dims.iter().map(|n| n * n).sum();
        let need_m: usize = dims.iter().map(|n| c.model.channels() * n).sum();
        let rd = out_slice(rho, rho_len, need_r, "rho")?;
        let md = out_slice(mu, mu_len, need_m, "mu")?;
        let g = purity_gradients(&c.model).map_err(lib)?;
        let (mut ro, mut mo) = (0, 0);
        for k in 0..g.len() {
            ro += write_row_major(&mut rd[ro..], g.rho[k].as_matrix());
            mo += write_row_major(&mut md[mo..], &g.mu[k]);
        }
        Ok(())
    })
}

/// Balances every one-mode oscillator under bounds `(a_k, b_k)` given as
/// `bounds[2k], bounds[2k+1]`. Writes the 2×2 transforms to `s` (4 per
/// oscillator, row-major) and Ψ before and after to `psi_before`, `psi_after`.
///
/// # Safety
/// `h` must be a live handle; `bounds` must hold `2·len` doubles, `s` `4·len`,
/// `psi_before` and `psi_after` `len` each.
#[no_mangle]
pub unsafe extern "C" fn qc_cascade_balance(h: *const QcCascade, bounds: *const f64, s: *mut f64, psi_before: *mut f64, psi_after: *mut f64) -> QcStatus {
    guard(|| {
        let c = handle(h)?;
        let n = c.model.len();
        let b = in_slice(bounds, 2 * n, "bounds")?;
        let sd = out_slice(s, 4 * n, 4 * n, "transform")?;
        let pb = out_slice(psi_before, n, n, "psi_before")?;
        let pa = out_slice(psi_after, n, n, "psi_after")?;
        let pairs: Vec<(f64, f64)> = b.chunks(2).map(|x| (x[0], x[1])).collect();
        let g = purity_gradients(&c.model).map_err(lib)?;
        let bal = balance_cascade(&c.model, &g, &pairs).map_err(lib)?;
        for (k, r) in bal.results.iter().enumerate() {
            write_row_major(&mut sd[4 * k..], &r.s);
            pb[k] = r.psi_before;
            pa[k] = r.psi_after;
        }
        Ok(())
    })
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL, or 0
/// when there is none.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qc_status_string(s: QcStatus) -> *const c_char {
    let t: &'static CStr = match s {
        QcStatus::Ok => c"ok",
        QcStatus::NullPointer => c"null pointer",
        QcStatus::InvalidArgument => c"invalid argument",
        QcStatus::Parse => c"parse error",
        QcStatus::Schema => c"schema error",
        QcStatus::DimensionMismatch => c"dimension mismatch",
        QcStatus::SingularTheta => c"singular commutation matrix",
        QcStatus::NotHurwitz => c"not Hurwitz",
        QcStatus::NotSymplectic => c"not symplectic",
        QcStatus::NotOneMode => c"not a one-mode oscillator",
        QcStatus::NumericalFailure => c"numerical failure",
        QcStatus::BufferTooSmall => c"buffer too small",
        QcStatus::Panic => c"internal panic",
    };
    t.as_ptr()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qc_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    V.as_ptr()
}
