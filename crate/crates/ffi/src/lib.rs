//! C ABI over `timesym`.
//!
//! Every call returns a [`TsStatus`]. On failure the message is available
//! from [`ts_last_error`] until the next failing call on the same thread.
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use timesym::dsl::{self, CircuitFile};
use timesym::engine::{self, Direction, JointTable};
use timesym::physicality;
use timesym::{cli, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    Parse = 1,
    NotPhysical = 2,
    DirectionMismatch = 3,
    Numeric = 4,
    InvalidArgument = 5,
    NotFound = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsDirection {
    Forward = 0,
    Backward = 1,
    /// Both foliations; fails with `DirectionMismatch` if they disagree.
    Both = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TsCheckReport {
    pub t_positive: bool,
    pub min_eig: f64,
    pub fwd_residual: f64,
    pub bwd_residual: f64,
    pub physical: bool,
}

/// A parsed circuit file.
pub struct TsFile {
    inner: CircuitFile,
}

/// Joint distribution of a circuit, outcomes on rows and incomes on columns.
pub struct TsJoint {
    inner: JointTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

struct Fail(TsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Unknown(_) => TsStatus::NotFound,
            _ => match cli::exit_code(&e) {
                cli::EXIT_PHYSICALITY => TsStatus::NotPhysical,
                cli::EXIT_DIRECTION => TsStatus::DirectionMismatch,
                cli::EXIT_NUMERIC => TsStatus::Numeric,
                _ => TsStatus::Parse,
            },
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(TsStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn file_arg<'a>(f: *const TsFile) -> Result<&'a CircuitFile, Fail> {
    f.as_ref().map(|f| &f.inner).ok_or_else(|| invalid("file handle is null"))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses circuit-file text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_file_parse(text: *const c_char, out: *mut *mut TsFile) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let inner = dsl::parse(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(TsFile { inner }));
        Ok(())
    })
}

/// # Safety
/// `f` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ts_file_free(f: *mut TsFile) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Time-reversed copy of every tensor and circuit in `f`.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_file_reverse(f: *const TsFile, out: *mut *mut TsFile) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let inner = file_arg(f)?.time_reversed();
        *out = Box::into_raw(Box::new(TsFile { inner }));
        Ok(())
    })
}

/// Serializes `f` back to circuit-file text. Release with [`ts_string_free`].
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_file_serialize(f: *const TsFile, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let text = dsl::serialize(file_arg(f)?);
        *out = CString::new(text).map_err(|_| invalid("serialized text holds NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability of the closed circuit `name`.
///
/// # Safety
/// `f` must be a live handle, `name` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_probability(
    f: *const TsFile,
    name: *const c_char,
    direction: TsDirection,
    tol: f64,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let file = file_arg(f)?;
        let name = str_arg(name, "name")?;
        let c = file.circuit(name).ok_or_else(|| Fail(TsStatus::NotFound, format!("no circuit `{name}`")))?;
        let p = match direction {
            TsDirection::Forward => engine::probability_foliated(&c.graph, Direction::Forward)?,
            TsDirection::Backward => engine::probability_foliated(&c.graph, Direction::Backward)?,
            TsDirection::Both => {
                let a = engine::probability_foliated(&c.graph, Direction::Forward)?;
                let b = engine::probability_foliated(&c.graph, Direction::Backward)?;
                if !((a - b).abs() <= tol) {
                    return Err(Fail(
                        TsStatus::DirectionMismatch,
                        format!("forward {a} and backward {b} differ by more than {tol}"),
                    ));
                }
                a
            }
        };
        *out = p;
        Ok(())
    })
}

/// Physicality report for tensor `name`. Returns `Ok` whether or not the
/// tensor is physical; read `physical` in the report.
///
/// # Safety
/// `f` must be a live handle, `name` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_check_tensor(
    f: *const TsFile,
    name: *const c_char,
    tol: f64,
    out: *mut TsCheckReport,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let file = file_arg(f)?;
        let name = str_arg(name, "name")?;
        let def = file.tensor(name).ok_or_else(|| Fail(TsStatus::NotFound, format!("no tensor `{name}`")))?;
        let t = def
            .content
            .tensor()
            .ok_or_else(|| invalid(&format!("`{name}` is a placeholder, not a tensor")))?;
        let r = physicality::is_physical(t, tol)?;
        *out = TsCheckReport {
            t_positive: r.t_positive,
            min_eig: r.min_eig,
            fwd_residual: r.fwd_residual,
            bwd_residual: r.bwd_residual,
            physical: r.physical,
        };
        Ok(())
    })
}

/// Joint distribution of circuit `name` over its placeholders.
///
/// # Safety
/// `f` must be a live handle, `name` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_joint(f: *const TsFile, name: *const c_char, out: *mut *mut TsJoint) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let file = file_arg(f)?;
        let name = str_arg(name, "name")?;
        let c = file.circuit(name).ok_or_else(|| Fail(TsStatus::NotFound, format!("no circuit `{name}`")))?;
        let inner = engine::joint_distribution(&c.graph)?;
        *out = Box::into_raw(Box::new(TsJoint { inner }));
        Ok(())
    })
}

/// Row (outcome combination) and column (income combination) counts.
///
/// # Safety
/// `j` must be a live handle; `rows` and `cols` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_joint_shape(j: *const TsJoint, rows: *mut usize, cols: *mut usize) -> TsStatus {
    guard(|| {
        let j = j.as_ref().ok_or_else(|| invalid("joint handle is null"))?;
        if rows.is_null() || cols.is_null() {
            return Err(invalid("out is null"));
        }
        *rows = j.inner.n_rows();
        *cols = j.inner.n_cols();
        Ok(())
    })
}

/// Copies the table row-major into `buf`, which holds `len` doubles.
///
/// # Safety
/// `j` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ts_joint_copy(j: *const TsJoint, buf: *mut f64, len: usize) -> TsStatus {
    guard(|| {
        let j = j.as_ref().ok_or_else(|| invalid("joint handle is null"))?;
        let (r, c) = (j.inner.n_rows(), j.inner.n_cols());
        if buf.is_null() || len < r * c {
            return Err(invalid(&format!("buffer needs {} doubles", r * c)));
        }
        let dst = std::slice::from_raw_parts_mut(buf, r * c);
        for row in 0..r {
            for col in 0..c {
                dst[row * c + col] = j.inner.get(row, col);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `j` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ts_joint_free(j: *mut TsJoint) {
    if !j.is_null() {
        drop(Box::from_raw(j));
    }
}
