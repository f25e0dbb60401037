//! C ABI over the `rome` toolkit.
//!
//! Every object crosses the boundary as an opaque pointer that the caller
//! releases with the matching `*_free`. Every fallible call returns a
//! [`RomeStatus`]; on failure the message is kept per thread and can be read
//! with [`rome_last_error_message`]. Panics are caught and reported as
//! [`RomeStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rome::graph::encode;
use rome::instances::{generate, read_instance, write_instance, Family, FamilyParams, GeneratorConfig};
use rome::search::{predict_and_search, SearchFractions};
use rome::solver::{branch_and_bound, collect_pool, BnbResult, BnbStatus, Fixings, Limits, SolutionPool};
use rome::Error;

/// Opaque MILP instance.
pub struct RomeInstance(rome::instances::MilpInstance);

/// Opaque weighted solution pool.
pub struct RomePool(SolutionPool);

/// Opaque trained model.
pub struct RomeModel(rome::model::RomeModel);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Io = 5,
    Infeasible = 6,
    Checkpoint = 7,
    Numeric = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Other = 11,
}

/// Outcome of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomeSolveStatus {
    Optimal = 0,
    Feasible = 1,
    Infeasible = 2,
    LimitReached = 3,
}

/// Summary of a solve. `objective` is in the instance's own sense and is
/// NaN when `has_solution` is 0.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RomeSolveResult {
    pub status: RomeSolveStatus,
    pub has_solution: u8,
    pub objective: f64,
    pub nodes: usize,
    pub fallbacks: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(RomeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Argument(_) | Error::Config(_) | Error::Shape { .. } | Error::TooLarge { .. } => {
                RomeStatus::InvalidArgument
            }
            Error::Parse { .. } | Error::InvalidInstance(_) | Error::Json(_) => RomeStatus::Parse,
            Error::Io { .. } => RomeStatus::Io,
            Error::Infeasible(_) | Error::EmptyPool(_) => RomeStatus::Infeasible,
            Error::Checkpoint(_) => RomeStatus::Checkpoint,
            Error::Numeric(_) | Error::IterationLimit(_) => RomeStatus::Numeric,
            _ => RomeStatus::Other,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: RomeStatus, msg: impl Into<String>) -> Failure {
    Failure(code, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RomeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RomeStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            RomeStatus::Panic
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(RomeStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(RomeStatus::NullPointer, format!("{name} is null")))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(RomeStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RomeStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn buffer<'a>(p: *mut f64, len: usize, need: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(RomeStatus::NullPointer, format!("{name} is null")));
    }
    if len < need {
        return Err(fail(RomeStatus::BufferTooSmall, format!("{name} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn limits(node_cap: usize) -> Limits {
    if node_cap == 0 {
        Limits::default()
    } else {
        Limits::nodes(node_cap)
    }
}

fn summarize(
    inst: &rome::instances::MilpInstance,
    res: &BnbResult,
    fallbacks: usize,
    x: *mut f64,
    x_len: usize,
) -> Result<RomeSolveResult, Failure> {
    let status = match res.status {
        BnbStatus::Optimal => RomeSolveStatus::Optimal,
        BnbStatus::Feasible => RomeSolveStatus::Feasible,
        BnbStatus::Infeasible => RomeSolveStatus::Infeasible,
        BnbStatus::LimitReached => RomeSolveStatus::LimitReached,
    };
    if let Some(sol) = &res.incumbent {
        if !x.is_null() {
            let buf = unsafe { buffer(x, x_len, sol.len(), "x")? };
            buf[..sol.len()].copy_from_slice(sol);
        }
    }
    let objective = if res.has_solution() { inst.reported_objective(res.objective) } else { f64::NAN };
    Ok(RomeSolveResult { status, has_solution: u8::from(res.has_solution()), objective, nodes: res.nodes_explored, fallbacks })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length without the NUL.
/// Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rome_last_error_message(buf: *mut c_char, len: usize) -> usize {
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

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rome_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a seeded instance. `family` accepts full or short names
/// (`independent_set` or `is`); `vars` of 0 selects the family defaults.
///
/// # Safety
/// `family` must be a NUL-terminated string and `out_instance` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rome_instance_generate(
    family: *const c_char,
    vars: usize,
    seed: u64,
    out_instance: *mut *mut RomeInstance,
) -> RomeStatus {
    guard(|| {
        let out_instance = out(out_instance, "out_instance")?;
        let family: Family = string(family, "family")?.parse()?;
        let params = if vars == 0 { FamilyParams::default_for(family) } else { FamilyParams::with_vars(family, vars) };
        let inst = generate(&GeneratorConfig { params, seed })?;
        *out_instance = boxed(RomeInstance(inst));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out_instance` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rome_instance_read(path: *const c_char, out_instance: *mut *mut RomeInstance) -> RomeStatus {
    guard(|| {
        let out_instance = out(out_instance, "out_instance")?;
        let inst = read_instance(string(path, "path")?)?;
        *out_instance = boxed(RomeInstance(inst));
        Ok(())
    })
}

/// # Safety
/// `instance` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rome_instance_write(instance: *const RomeInstance, path: *const c_char) -> RomeStatus {
    guard(|| {
        let inst = arg(instance, "instance")?;
        write_instance(&inst.0, string(path, "path")?)?;
        Ok(())
    })
}

/// Total variable count `n` and binary count `p` (binaries occupy `0..p`).
///
/// # Safety
/// `instance` must come from this library; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rome_instance_dims(
    instance: *const RomeInstance,
    out_n: *mut usize,
    out_p: *mut usize,
) -> RomeStatus {
    guard(|| {
        let inst = arg(instance, "instance")?;
        *out(out_n, "out_n")? = inst.0.n;
        *out(out_p, "out_p")? = inst.0.p;
        Ok(())
    })
}

/// # Safety
/// `instance` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rome_instance_free(instance: *mut RomeInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Plain branch-and-bound. `node_cap` of 0 means no cap. When `x` is not
/// null and a solution exists, it receives the `n` variable values.
///
/// # Safety
/// `instance` must come from this library; `x` must be null or hold `x_len`
/// doubles; `out_result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rome_solve(
    instance: *const RomeInstance,
    node_cap: usize,
    x: *mut f64,
    x_len: usize,
    out_result: *mut RomeSolveResult,
) -> RomeStatus {
    guard(|| {
        let inst = &arg(instance, "instance")?.0;
        let out_result = out(out_result, "out_result")?;
        let res = branch_and_bound(inst, &Fixings::none(inst.p), None, &limits(node_cap))?;
        *out_result = summarize(inst, &res, 0, x, x_len)?;
        Ok(())
    })
}

/// Collects up to `size` best distinct solutions with objective-based weights.
///
/// # Safety
/// `instance` must come from this library; `out_pool` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rome_pool_collect(
    instance: *const RomeInstance,
    size: usize,
    node_cap: usize,
    out_pool: *mut *mut RomePool,
) -> RomeStatus {
    guard(|| {
        let inst = &arg(instance, "instance")?.0;
        let out_pool = out(out_pool, "out_pool")?;
        *out_pool = boxed(RomePool(collect_pool(inst, size, &limits(node_cap))?));
        Ok(())
    })
}

/// Number of solutions in the pool.
///
/// # Safety
/// `pool` must come from this library; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rome_pool_len(pool: *const RomePool, out_len: *mut usize) -> RomeStatus {
    guard(|| {
        *out(out_len, "out_len")? = arg(pool, "pool")?.0.len();
        Ok(())
    })
}

/// Copies the pool weights (summing to 1) into `weights`.
///
/// # Safety
/// `pool` must come from this library; `weights` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rome_pool_weights(pool: *const RomePool, weights: *mut f64, len: usize) -> RomeStatus {
    guard(|| {
        let pool = &arg(pool, "pool")?.0;
        buffer(weights, len, pool.len(), "weights")?[..pool.len()].copy_from_slice(&pool.weights);
        Ok(())
    })
}

/// Copies the binary part of solution `index` (as 0.0/1.0) into `x`.
///
/// # Safety
/// `pool` must come from this library; `x` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rome_pool_solution(
    pool: *const RomePool,
    index: usize,
    x: *mut f64,
    len: usize,
) -> RomeStatus {
    guard(|| {
        let pool = &arg(pool, "pool")?.0;
        let sol = pool.solutions.get(index).ok_or_else(|| {
            fail(RomeStatus::InvalidArgument, format!("solution index {index} out of range for pool of {}", pool.len()))
        })?;
        let buf = buffer(x, len, sol.len(), "x")?;
        for (dst, &bit) in buf.iter_mut().zip(sol) {
            *dst = f64::from(bit);
        }
        Ok(())
    })
}

/// # Safety
/// `pool` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rome_pool_free(pool: *mut RomePool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}

/// Loads a checkpoint written by `rome train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out_model` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rome_model_load(path: *const c_char, out_model: *mut *mut RomeModel) -> RomeStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let model = rome::model::RomeModel::load(string(path, "path")?)?;
        *out_model = boxed(RomeModel(model));
        Ok(())
    })
}

/// Writes the `p` predicted marginals of `instance` into `marginals`.
///
/// # Safety
/// Handles must come from this library; `marginals` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rome_model_predict(
    model: *const RomeModel,
    instance: *const RomeInstance,
    marginals: *mut f64,
    len: usize,
) -> RomeStatus {
    guard(|| {
        let model = &arg(model, "model")?.0;
        let inst = &arg(instance, "instance")?.0;
        let buf = buffer(marginals, len, inst.p, "marginals")?;
        let pred = model.predict(&encode(inst))?;
        buf[..pred.len()].copy_from_slice(&pred);
        Ok(())
    })
}

/// Predict-and-search with `(k0, k1, delta)` given as fractions of `p`.
///
/// # Safety
/// Handles must come from this library; `x` must be null or hold `x_len`
/// doubles; `out_result` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rome_predict_and_search(
    model: *const RomeModel,
    instance: *const RomeInstance,
    k0: f64,
    k1: f64,
    delta: f64,
    node_cap: usize,
    x: *mut f64,
    x_len: usize,
    out_result: *mut RomeSolveResult,
) -> RomeStatus {
    guard(|| {
        let model = &arg(model, "model")?.0;
        let inst = &arg(instance, "instance")?.0;
        let out_result = out(out_result, "out_result")?;
        let params = SearchFractions::new(k0, k1, delta)?.params_for(inst.p, &limits(node_cap));
        let res = predict_and_search(model, inst, &params)?;
        *out_result = summarize(inst, &res.result, res.fallbacks(), x, x_len)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rome_model_free(model: *mut RomeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
