//! C ABI for `sdemath`.
//!
//! Objects are opaque handles created by `sde_*_new` style functions and
//! released by the matching `sde_*_free`. Every fallible function returns an
//! [`SdeStatus`]; on failure a message is kept per thread and can be copied
//! out with [`sde_last_error`]. Matrices are passed row-major. Orders are
//! given as twice the strong order (`1` for 0.5 up to `6` for 3.0).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use sdemath::coeffs::{CoeffError, CoeffStore};
use sdemath::linear::{self, LinearConfig, LinearError, LinearModel};
use sdemath::operators::SdeModel;
use sdemath::schemes::{Calculus, Order, SchemeConfig, SchemeError, Simulator};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numeric = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdeCalculus {
    Ito = 0,
    Stratonovich = 1,
}

/// Nonlinear model `dx = a(x,t)dt + B(x,t)dw`.
pub struct SdeModelHandle {
    inner: SdeModel,
}

/// Cache of exact coefficients, optionally backed by a file.
pub struct SdeStoreHandle {
    inner: CoeffStore,
}

/// A compiled scheme with its truncation numbers, ready to run paths.
pub struct SdeSimulatorHandle {
    inner: Simulator,
}

/// Linear model `dx = (Ax + Bu)dt + F dw`, `y = Hx`.
pub struct SdeLinearHandle {
    inner: LinearModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(SdeStatus, String);

type Outcome = Result<(), Failure>;

fn fail(status: SdeStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        let status = match e {
            SchemeError::Config(_) => SdeStatus::InvalidArgument,
            SchemeError::Model(_) => SdeStatus::Parse,
            _ => SdeStatus::Numeric,
        };
        fail(status, e.to_string())
    }
}

impl From<CoeffError> for Failure {
    fn from(e: CoeffError) -> Self {
        let status = match e {
            CoeffError::Io { .. } | CoeffError::Format { .. } => SdeStatus::Io,
            _ => SdeStatus::InvalidArgument,
        };
        fail(status, e.to_string())
    }
}

impl From<LinearError> for Failure {
    fn from(e: LinearError) -> Self {
        let status = match e {
            LinearError::Dimension(_) | LinearError::Config(_) => SdeStatus::InvalidArgument,
            LinearError::Input(_) => SdeStatus::Parse,
            _ => SdeStatus::Numeric,
        };
        fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Outcome) -> SdeStatus {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".to_string());
        Err(fail(SdeStatus::Panic, msg))
    });
    match result {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            SdeStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SdeStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(SdeStatus::NullPointer, "null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SdeStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SdeStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn strings<'a>(p: *const *const c_char, len: usize) -> Result<Vec<&'a str>, Failure> {
    slice(p, len)?.iter().map(|&s| string(s)).collect()
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(SdeStatus::NullPointer, "null handle"))
}

fn out_handle<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(fail(SdeStatus::NullPointer, "null output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn order(r: u32) -> Result<Order, Failure> {
    Order::from_r(r).ok_or_else(|| fail(SdeStatus::InvalidArgument, format!("unsupported order code {r}")))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, Failure> {
    Ok(DMatrix::from_row_slice(rows, cols, slice(p, rows * cols)?))
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn sde_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a model. `drift` holds `n` formulas, `diffusion` holds `n*m`
/// formulas row-major, `x0` holds `n` values.
#[no_mangle]
pub unsafe extern "C" fn sde_model_new(
    n: usize,
    m: usize,
    drift: *const *const c_char,
    diffusion: *const *const c_char,
    x0: *const f64,
    out: *mut *mut SdeModelHandle,
) -> SdeStatus {
    guard(|| {
        let drift = strings(drift, n)?;
        let flat = strings(diffusion, n * m)?;
        let rows: Vec<Vec<&str>> = flat.chunks(m.max(1)).map(<[&str]>::to_vec).collect();
        let model = SdeModel::parse(&drift, &rows, slice(x0, n)?.to_vec())
            .map_err(|e| fail(SdeStatus::Parse, e.to_string()))?;
        out_handle(out, SdeModelHandle { inner: model })
    })
}

#[no_mangle]
pub unsafe extern "C" fn sde_model_free(model: *mut SdeModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Opens a coefficient cache file, or an in-memory cache when `path` is null.
#[no_mangle]
pub unsafe extern "C" fn sde_store_open(
    path: *const c_char,
    out: *mut *mut SdeStoreHandle,
) -> SdeStatus {
    guard(|| {
        let store = if path.is_null() {
            CoeffStore::in_memory()
        } else {
            CoeffStore::open(string(path)?)?
        };
        out_handle(out, SdeStoreHandle { inner: store })
    })
}

/// Writes pending coefficients of a file-backed cache.
#[no_mangle]
pub unsafe extern "C" fn sde_store_flush(store: *const SdeStoreHandle) -> SdeStatus {
    guard(|| Ok(handle(store)?.inner.flush()?))
}

#[no_mangle]
pub unsafe extern "C" fn sde_store_free(store: *mut SdeStoreHandle) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Exact normalized Fourier–Legendre coefficient as a double.
#[no_mangle]
pub unsafe extern "C" fn sde_coefficient(
    store: *const SdeStoreHandle,
    weights: *const u8,
    indices: *const u16,
    k: usize,
    out: *mut f64,
) -> SdeStatus {
    guard(|| {
        use num_traits::ToPrimitive;
        let store = handle(store)?;
        let key = sdemath::coeffs::CoeffKey::new(slice(weights, k)?, slice(indices, k)?)?;
        let value = store.inner.get(&key)?;
        *slice_mut(out, 1)?.first_mut().expect("one slot") = value.to_f64().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Selects truncation numbers and compiles the scheme.
#[no_mangle]
pub unsafe extern "C" fn sde_simulator_new(
    model: *const SdeModelHandle,
    store: *const SdeStoreHandle,
    order_code: u32,
    calculus: SdeCalculus,
    dt: f64,
    horizon: f64,
    c: f64,
    seed: u64,
    out: *mut *mut SdeSimulatorHandle,
) -> SdeStatus {
    guard(|| {
        let model = handle(model)?;
        let store = handle(store)?;
        let calculus = match calculus {
            SdeCalculus::Ito => Calculus::Ito,
            SdeCalculus::Stratonovich => Calculus::Stratonovich,
        };
        let config = SchemeConfig {
            c,
            seed,
            ..SchemeConfig::new(order(order_code)?, calculus, dt, horizon)
        };
        let sim = Simulator::new(&model.inner, config, &store.inner)?;
        out_handle(out, SdeSimulatorHandle { inner: sim })
    })
}

/// Number of steps `T/Δ`.
#[no_mangle]
pub unsafe extern "C" fn sde_simulator_steps(sim: *const SdeSimulatorHandle) -> usize {
    sim.as_ref().map_or(0, |s| s.inner.steps())
}

/// Runs one path into `states`, `(steps + 1) * n` values laid out by time.
#[no_mangle]
pub unsafe extern "C" fn sde_simulator_path(
    sim: *const SdeSimulatorHandle,
    path: u64,
    states: *mut f64,
    len: usize,
) -> SdeStatus {
    guard(|| {
        let sim = &handle(sim)?.inner;
        let n = sim.stepper().fields().n;
        let need = (sim.steps() + 1) * n;
        if len < need {
            return Err(fail(SdeStatus::BufferTooSmall, format!("need {need} values")));
        }
        let out = slice_mut(states, need)?;
        sim.run(path as usize, |p, y| out[p * n..(p + 1) * n].copy_from_slice(y))?;
        Ok(())
    })
}

/// Runs `paths` paths and writes per-time mean and unbiased variance, each
/// `(steps + 1) * n` values. Diverged paths are excluded and counted.
#[no_mangle]
pub unsafe extern "C" fn sde_simulator_ensemble(
    sim: *mut SdeSimulatorHandle,
    paths: usize,
    mean: *mut f64,
    var: *mut f64,
    len: usize,
    diverged: *mut usize,
) -> SdeStatus {
    guard(|| {
        let sim = &mut sim
            .as_mut()
            .ok_or_else(|| fail(SdeStatus::NullPointer, "null handle"))?
            .inner;
        let n = sim.stepper().fields().n;
        let need = (sim.steps() + 1) * n;
        if len < need {
            return Err(fail(SdeStatus::BufferTooSmall, format!("need {need} values")));
        }
        sim.config.paths = paths;
        let ens = sim.ensemble(false)?;
        let (mean, var) = (slice_mut(mean, need)?, slice_mut(var, need)?);
        for (p, (m, v)) in ens.moments.mean.iter().zip(&ens.moments.var).enumerate() {
            mean[p * n..(p + 1) * n].copy_from_slice(m);
            var[p * n..(p + 1) * n].copy_from_slice(v);
        }
        if !diverged.is_null() {
            *diverged = ens.diverged.len();
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sde_simulator_free(sim: *mut SdeSimulatorHandle) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Builds a linear model. `a` is `n*n`, `b` is `n*k`, `f` is `n*m`, `h` is
/// `r*n` (null when `r == 0`), `u` holds `k` formulas in `t`.
#[no_mangle]
pub unsafe extern "C" fn sde_linear_new(
    n: usize,
    m: usize,
    k: usize,
    r: usize,
    a: *const f64,
    b: *const f64,
    f: *const f64,
    h: *const f64,
    u: *const *const c_char,
    x0: *const f64,
    out: *mut *mut SdeLinearHandle,
) -> SdeStatus {
    guard(|| {
        let h = if r == 0 { None } else { Some(matrix(h, r, n)?) };
        let model = LinearModel::new(
            matrix(a, n, n)?,
            matrix(b, n, k)?,
            matrix(f, n, m)?,
            h,
            &strings(u, k)?,
            slice(x0, n)?.to_vec(),
        )?;
        out_handle(out, SdeLinearHandle { inner: model })
    })
}

/// Simulates `paths` paths and writes state mean and variance,
/// `(steps + 1) * n` values each.
#[no_mangle]
pub unsafe extern "C" fn sde_linear_simulate(
    model: *const SdeLinearHandle,
    dt: f64,
    horizon: f64,
    paths: usize,
    seed: u64,
    mean: *mut f64,
    var: *mut f64,
    len: usize,
) -> SdeStatus {
    guard(|| {
        let model = &handle(model)?.inner;
        let config = LinearConfig {
            delta: dt,
            horizon,
            paths,
            seed,
        };
        let run = linear::simulate_linear(model, &config, false)?;
        let n = model.n();
        let need = run.state.times.len() * n;
        if len < need {
            return Err(fail(SdeStatus::BufferTooSmall, format!("need {need} values")));
        }
        let (mean, var) = (slice_mut(mean, need)?, slice_mut(var, need)?);
        for (p, (m, v)) in run.state.mean.iter().zip(&run.state.var).enumerate() {
            mean[p * n..(p + 1) * n].copy_from_slice(m);
            var[p * n..(p + 1) * n].copy_from_slice(v);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sde_linear_free(model: *mut SdeLinearHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `out = e^{AΔ}` for an `n×n` row-major `a`.
#[no_mangle]
pub unsafe extern "C" fn sde_mat_exp(n: usize, a: *const f64, dt: f64, out: *mut f64) -> SdeStatus {
    guard(|| {
        let e = linear::mat_exp(&matrix(a, n, n)?, dt)?;
        let out = slice_mut(out, n * n)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = e[(i, j)];
            }
        }
        Ok(())
    })
}

/// One-step noise covariance `D(Δ)` of `dx = Ax dt + F dw`, row-major `n×n`.
#[no_mangle]
pub unsafe extern "C" fn sde_step_covariance(
    n: usize,
    m: usize,
    a: *const f64,
    f: *const f64,
    dt: f64,
    out: *mut f64,
) -> SdeStatus {
    guard(|| {
        let d = linear::covariance_df(&matrix(a, n, n)?, &matrix(f, n, m)?, dt)?;
        let out = slice_mut(out, n * n)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = d[(i, j)];
            }
        }
        Ok(())
    })
}
