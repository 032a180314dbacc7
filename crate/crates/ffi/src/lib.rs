//! C interface to `tubelab`.
//!
//! Every entry point returns a [`TubelabStatus`]; on failure the message is
//! kept per thread and can be read with [`tubelab_last_error`]. Meshes and
//! run configurations are opaque handles owned by the caller and released
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tubelab::channel_mode::{fit_channel_mode, ScaledAmplitude};
use tubelab::cross_section::{disk_ground_mode, upsilon};
use tubelab::mesh::{build_dumbbell_mesh, MeridianMesh};
use tubelab::pipeline::{run_profiles, RunConfig};
use tubelab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubelabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TubelabStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Json(_) | Error::OutsideMesh { .. } | Error::OutsideTube { .. } => {
            TubelabStatus::InvalidArgument
        }
        Error::Io { .. } => TubelabStatus::Io,
        Error::Stage { source, .. } => status_of(source),
        _ => TubelabStatus::Numerical,
    }
}

fn message(e: &Error) -> String {
    let mut s = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(c) = src {
        s.push_str(": ");
        s.push_str(&c.to_string());
        src = c.source();
    }
    s
}

/// Runs `f`, turning errors and panics into a status plus the thread's message.
fn guard(f: impl FnOnce() -> Result<(), TubelabStatusError>) -> TubelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TubelabStatus::Ok
        }
        Ok(Err(TubelabStatusError(status, msg))) => {
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
            TubelabStatus::Panic
        }
    }
}

struct TubelabStatusError(TubelabStatus, String);

impl From<Error> for TubelabStatusError {
    fn from(e: Error) -> Self {
        TubelabStatusError(status_of(&e), message(&e))
    }
}

fn null(what: &str) -> TubelabStatusError {
    TubelabStatusError(TubelabStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> TubelabStatusError {
    TubelabStatusError(TubelabStatus::InvalidArgument, msg.into())
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, TubelabStatusError> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], TubelabStatusError> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length without
/// the terminator, so a call with `len = 0` sizes the buffer.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tubelab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Ground mode of the unit (N−1)-ball and the half-sphere constant.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TubelabCrossSection {
    pub sqrt_lambda1: f64,
    pub lambda1: f64,
    pub norm_constant: f64,
    pub upsilon: f64,
}

/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tubelab_cross_section(n: usize, out_: *mut TubelabCrossSection) -> TubelabStatus {
    guard(|| {
        let o = out(out_, "out")?;
        if n < 2 {
            return Err(invalid(format!("dimension must be at least 2, got {n}")));
        }
        let m = disk_ground_mode(n, 1e-14)?;
        *o = TubelabCrossSection {
            sqrt_lambda1: m.sqrt_lambda1,
            lambda1: m.lambda1,
            norm_constant: m.norm_constant,
            upsilon: upsilon(n),
        };
        Ok(())
    })
}

/// sign · mantissa · e^{exponent}; sign is −1, 0 or 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TubelabAmplitude {
    pub sign: i8,
    pub exponent: f64,
    pub mantissa: f64,
}

impl From<ScaledAmplitude> for TubelabAmplitude {
    fn from(a: ScaledAmplitude) -> Self {
        TubelabAmplitude { sign: a.sign, exponent: a.exponent, mantissa: a.mantissa }
    }
}

impl From<TubelabAmplitude> for ScaledAmplitude {
    fn from(a: TubelabAmplitude) -> Self {
        // renormalize whatever the caller handed in
        ScaledAmplitude::from_f64(a.sign.signum() as f64 * a.mantissa).mul(&ScaledAmplitude::exp(a.exponent))
    }
}

#[no_mangle]
pub extern "C" fn tubelab_amplitude_from_double(x: f64) -> TubelabAmplitude {
    ScaledAmplitude::from_f64(x).into()
}

/// e^x without overflow.
#[no_mangle]
pub extern "C" fn tubelab_amplitude_exp(x: f64) -> TubelabAmplitude {
    ScaledAmplitude::exp(x).into()
}

#[no_mangle]
pub extern "C" fn tubelab_amplitude_mul(a: TubelabAmplitude, b: TubelabAmplitude) -> TubelabAmplitude {
    ScaledAmplitude::from(a).mul(&b.into()).into()
}

#[no_mangle]
pub extern "C" fn tubelab_amplitude_div(a: TubelabAmplitude, b: TubelabAmplitude) -> TubelabAmplitude {
    ScaledAmplitude::from(a).div(&b.into()).into()
}

#[no_mangle]
pub extern "C" fn tubelab_amplitude_add(a: TubelabAmplitude, b: TubelabAmplitude) -> TubelabAmplitude {
    ScaledAmplitude::from(a).add(&b.into()).into()
}

/// ln|a|; −∞ for zero.
#[no_mangle]
pub extern "C" fn tubelab_amplitude_ln_abs(a: TubelabAmplitude) -> f64 {
    ScaledAmplitude::from(a).ln_abs()
}

/// Converts to a double, failing with `NUMERICAL` when out of range.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tubelab_amplitude_to_double(a: TubelabAmplitude, out_: *mut f64) -> TubelabStatus {
    guard(|| {
        let o = out(out_, "out")?;
        *o = ScaledAmplitude::from(a).try_to_f64()?;
        Ok(())
    })
}

/// Two-exponential tube fit A e^{κ(t−1)/ε} + B e^{−κ(t−1)/ε}.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TubelabModeFit {
    pub a: TubelabAmplitude,
    pub b: TubelabAmplitude,
    pub c: TubelabAmplitude,
    pub window_lo: f64,
    pub window_hi: f64,
    pub residual: f64,
    pub b_resolved: bool,
}

/// Fits the tube samples (t[i], phi[i]), i < n.
///
/// # Safety
/// `t` and `phi` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn tubelab_fit_channel_mode(
    t: *const f64,
    phi: *const f64,
    n: usize,
    eps: f64,
    kappa: f64,
    out_: *mut TubelabModeFit,
) -> TubelabStatus {
    guard(|| {
        let o = out(out_, "out")?;
        let t = slice(t, n, "t")?;
        let phi = slice(phi, n, "phi")?;
        if !(eps > 0.0 && kappa > 0.0) {
            return Err(invalid("eps and kappa must be positive"));
        }
        let samples: Vec<(f64, f64)> = t.iter().copied().zip(phi.iter().copied()).collect();
        let f = fit_channel_mode(&samples, eps, kappa)?;
        *o = TubelabModeFit {
            a: f.a.into(),
            b: f.b.into(),
            c: f.c.into(),
            window_lo: f.window[0],
            window_hi: f.window[1],
            residual: f.residual,
            b_resolved: f.b_resolved,
        };
        Ok(())
    })
}

/// Run configuration handle.
pub struct TubelabConfig(RunConfig);

/// Default configuration; never null.
#[no_mangle]
pub extern "C" fn tubelab_config_default() -> *mut TubelabConfig {
    Box::into_raw(Box::new(TubelabConfig(RunConfig::default())))
}

/// Parses a JSON configuration (missing fields take defaults) and validates it.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tubelab_config_from_json(json: *const c_char, out_: *mut *mut TubelabConfig) -> TubelabStatus {
    guard(|| {
        let o = out(out_, "out")?;
        *o = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| invalid(format!("json is not UTF-8: {e}")))?;
        let cfg: RunConfig = serde_json::from_str(text).map_err(Error::from)?;
        cfg.validate()?;
        *o = Box::into_raw(Box::new(TubelabConfig(cfg)));
        Ok(())
    })
}

/// Sets the mesh and profile element order (1 or 2).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tubelab_config_set_order(cfg: *mut TubelabConfig, order: usize) -> TubelabStatus {
    guard(|| {
        let c = out(cfg, "cfg")?;
        if order != 1 && order != 2 {
            return Err(invalid(format!("element order must be 1 or 2, got {order}")));
        }
        c.0.mesh.order = order;
        c.0.profile.mesh.order = order;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubelab_config_free(cfg: *mut TubelabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Meridian mesh handle.
pub struct TubelabMesh(MeridianMesh);

/// Builds the dumbbell meridian mesh of the configuration for tube radius `eps`.
///
/// # Safety
/// `cfg` must be a live handle, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tubelab_mesh_dumbbell(
    cfg: *const TubelabConfig,
    eps: f64,
    out_: *mut *mut TubelabMesh,
) -> TubelabStatus {
    guard(|| {
        let o = out(out_, "out")?;
        *o = ptr::null_mut();
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("tube radius must lie in (0, 1), got {eps}")));
        }
        let mcfg = tubelab::mesh::MeshConfig { eps, ..c.0.mesh };
        mcfg.validate()?;
        *o = Box::into_raw(Box::new(TubelabMesh(build_dumbbell_mesh(&mcfg)?)));
        Ok(())
    })
}

/// Vertex and triangle counts.
///
/// # Safety
/// `mesh` must be a live handle; the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn tubelab_mesh_counts(
    mesh: *const TubelabMesh,
    vertices: *mut usize,
    triangles: *mut usize,
) -> TubelabStatus {
    guard(|| {
        let m = &mesh.as_ref().ok_or_else(|| null("mesh"))?.0;
        if let Some(v) = vertices.as_mut() {
            *v = m.vertices.len();
        }
        if let Some(t) = triangles.as_mut() {
            *t = m.triangles.len();
        }
        Ok(())
    })
}

/// Copies vertex coordinates as (x₁, ρ) pairs into `xy`, which holds `cap`
/// doubles and must fit 2 · vertex count.
///
/// # Safety
/// `mesh` must be a live handle, `xy` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn tubelab_mesh_vertices(mesh: *const TubelabMesh, xy: *mut f64, cap: usize) -> TubelabStatus {
    guard(|| {
        let m = &mesh.as_ref().ok_or_else(|| null("mesh"))?.0;
        let need = 2 * m.vertices.len();
        if xy.is_null() {
            return Err(null("xy"));
        }
        if cap < need {
            return Err(invalid(format!("buffer holds {cap} doubles, {need} needed")));
        }
        let dst = std::slice::from_raw_parts_mut(xy, need);
        for (d, v) in dst.chunks_exact_mut(2).zip(&m.vertices) {
            d.copy_from_slice(v);
        }
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubelab_mesh_free(mesh: *mut TubelabMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Profile constants of the configuration (k̃-dependent norms are omitted).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TubelabProfileConstants {
    pub lambda_k0: f64,
    pub d0: f64,
    pub c_phi: f64,
    pub c_phihat: f64,
    pub m_phihat: f64,
    pub kappa_h: f64,
}

/// Computes (or reads from the configuration's cache) the profile constants.
///
/// # Safety
/// `cfg` must be a live handle, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tubelab_profile_constants(
    cfg: *const TubelabConfig,
    out_: *mut TubelabProfileConstants,
) -> TubelabStatus {
    guard(|| {
        let o = out(out_, "out")?;
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let k = run_profiles(&c.0)?.constants;
        *o = TubelabProfileConstants {
            lambda_k0: k.lambda_k0,
            d0: k.d0,
            c_phi: k.c_phi,
            c_phihat: k.c_phihat,
            m_phihat: k.m_phihat,
            kappa_h: k.kappa_h,
        };
        Ok(())
    })
}
