//! C ABI over the helmfno library.
//!
//! Every fallible call returns an [`HfStatus`]; on failure the message is
//! available from [`hf_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use helmfno::fdtd::{AbsorbingBoundary, SourceSpec, TimeGrid};
use helmfno::freq::label_fields;
use helmfno::helmholtz::{assemble, ricker_amplitude, Factorization, HelmholtzBoundary, Stencil};
use helmfno::io::load_checkpoint;
use helmfno::nn::input::push_normalized;
use helmfno::nn::ModelHandle;
use helmfno::velocity::{synthesize, FamilyKind, FamilySpec, Grid, VelocityModel};
use helmfno::Error;

const PEAK_FREQ: f64 = 15.0;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Numerical = 6,
    Panic = 7,
}

/// Velocity model on a regular grid.
pub struct HfVelocity(VelocityModel);

/// Trained surrogate loaded from a checkpoint.
pub struct HfModel(ModelHandle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HfStatus {
    match e {
        Error::Shape(_) => HfStatus::Shape,
        Error::Io(_) => HfStatus::Io,
        Error::Format { .. } | Error::Json(_) | Error::MissingParameter(_) => HfStatus::Format,
        Error::Unstable { .. } | Error::CflViolation { .. } | Error::Factorization(_) | Error::Diverged { .. } => HfStatus::Numerical,
        _ => HfStatus::InvalidArgument,
    }
}

struct Fail(HfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HfStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HfStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HfStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(HfStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(HfStatus::Shape, format!("`{what}` holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn velocity<'a>(h: *const HfVelocity) -> Result<&'a VelocityModel, Fail> {
    h.as_ref().map(|v| &v.0).ok_or_else(|| null("velocity"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Synthesizes one model of the named family on the 70 x 70 grid.
///
/// # Safety
/// `family` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_velocity_synthesize(family: *const c_char, seed: u64, out: *mut *mut HfVelocity) -> HfStatus {
    guard(|| {
        let kind: FamilyKind = cstr(family, "family")?.parse()?;
        let v = synthesize(&FamilySpec::new(kind), &Grid::openfwi(), seed)?;
        store(out, HfVelocity(v))
    })
}

/// Wraps caller-supplied velocities (m/s, row-major `nz x nx`).
///
/// # Safety
/// `values` must point to `nz * nx` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hf_velocity_from_values(nz: usize, nx: usize, dz: f64, dx: f64, values: *const f64, out: *mut *mut HfVelocity) -> HfStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let grid = Grid::new(nz, nx, dz, dx)?;
        let vals = std::slice::from_raw_parts(values, grid.len()).to_vec();
        store(out, HfVelocity(VelocityModel::new(grid, vals, "user", 0)?))
    })
}

/// # Safety
/// `h` must be NULL or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_velocity_free(h: *mut HfVelocity) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `nz` and `nx` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hf_velocity_dims(h: *const HfVelocity, nz: *mut usize, nx: *mut usize) -> HfStatus {
    guard(|| {
        let v = velocity(h)?;
        if nz.is_null() || nx.is_null() {
            return Err(null("dims"));
        }
        *nz = v.grid.nz;
        *nx = v.grid.nx;
        Ok(())
    })
}

/// Copies the velocities (row-major) into `out`.
///
/// # Safety
/// `h` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_velocity_values(h: *const HfVelocity, out: *mut f64, len: usize) -> HfStatus {
    guard(|| {
        let v = velocity(h)?;
        out_slice(out, len, v.values.len(), "out")?.copy_from_slice(&v.values);
        Ok(())
    })
}

/// Time-domain simulation followed by the discrete transform at `freqs`.
/// Writes `nfreq` planes of `nz * nx` values to `re` and `im`.
///
/// # Safety
/// `freqs` must hold `nfreq` doubles; `re` and `im` must hold `len` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hf_simulate_freq(
    h: *const HfVelocity,
    source_x: f64,
    source_z: f64,
    freqs: *const f64,
    nfreq: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> HfStatus {
    guard(|| {
        let v = velocity(h)?;
        if freqs.is_null() {
            return Err(null("freqs"));
        }
        let freqs = std::slice::from_raw_parts(freqs, nfreq);
        let m = v.grid.len();
        let re = out_slice(re, len, m * nfreq, "re")?;
        let im = out_slice(im, len, m * nfreq, "im")?;
        let (iz, ix) = v.grid.snap(source_x, source_z)?;
        let src = SourceSpec::ricker(v.grid.x_of(ix), v.grid.z_of(iz), PEAK_FREQ);
        let fields = label_fields(v, &src, freqs, &TimeGrid::standard(), &AbsorbingBoundary::standard())?;
        for (k, f) in fields.iter().enumerate() {
            for (i, u) in f.u.iter().enumerate() {
                re[k * m + i] = u.re;
                im[k * m + i] = u.im;
            }
        }
        Ok(())
    })
}

/// Direct frequency-domain solve for a Ricker point source.
/// `nine_point` selects the 9-point stencil over the 5-point one.
///
/// # Safety
/// `re` and `im` must hold `len` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hf_helmholtz_solve(
    h: *const HfVelocity,
    freq: f64,
    source_x: f64,
    source_z: f64,
    nine_point: bool,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> HfStatus {
    guard(|| {
        let v = velocity(h)?;
        let m = v.grid.len();
        let re = out_slice(re, len, m, "re")?;
        let im = out_slice(im, len, m, "im")?;
        let node = v.grid.snap(source_x, source_z)?;
        let src = SourceSpec::ricker(v.grid.x_of(node.1), v.grid.z_of(node.0), PEAK_FREQ);
        let stencil = if nine_point { Stencil::NinePoint } else { Stencil::FivePoint };
        let fac = Factorization::new(assemble(v, freq, &HelmholtzBoundary::standard(), stencil)?)?;
        let (u, _) = fac.solve_point(node, ricker_amplitude(&src, &TimeGrid::standard(), freq))?;
        for (i, c) in u.u.iter().enumerate() {
            re[i] = c.re;
            im[i] = c.im;
        }
        Ok(())
    })
}

/// Loads a checkpoint written by `helmfno train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_model_load(path: *const c_char, out: *mut *mut HfModel) -> HfStatus {
    guard(|| {
        let m = load_checkpoint(Path::new(cstr(path, "path")?))?;
        store(out, HfModel(m))
    })
}

/// # Safety
/// `h` must be NULL or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_model_free(h: *mut HfModel) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of input channels the model expects (3, 4 or 5).
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_model_in_channels(h: *const HfModel, out: *mut usize) -> HfStatus {
    guard(|| {
        let m = h.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.0.config.in_channels();
        Ok(())
    })
}

/// Predicts the wavefield at `freq` for a source at (`source_x`, `source_z`)
/// in physical units. Inputs are thread-safe: one model may serve many threads.
///
/// # Safety
/// Both handles must be live; `re` and `im` must hold `len` floats each.
#[no_mangle]
pub unsafe extern "C" fn hf_model_predict(
    h: *const HfModel,
    vel: *const HfVelocity,
    source_x: f64,
    source_z: f64,
    freq: f64,
    re: *mut f32,
    im: *mut f32,
    len: usize,
) -> HfStatus {
    guard(|| {
        let m = &h.as_ref().ok_or_else(|| null("model"))?.0;
        let v = velocity(vel)?;
        let g = v.grid;
        let n = g.len();
        let re = out_slice(re, len, n, "re")?;
        let im = out_slice(im, len, n, "im")?;
        let layout = m.layout()?;
        let node = g.snap(source_x, source_z)?;
        let vals: Vec<f32> = v.values.iter().map(|&x| x as f32).collect();
        let mut x = Vec::with_capacity(layout.channels() * n);
        push_normalized(&mut x, &g, &vals, layout, Some(node), freq, &m.norm)?;
        let y = m.predict(&x, [1, layout.channels(), g.nz, g.nx], &[freq])?;
        re.copy_from_slice(&y[..n]);
        im.copy_from_slice(&y[n..2 * n]);
        Ok(())
    })
}
