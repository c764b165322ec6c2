//! C ABI over `ddd-core`.
//!
//! Operators and solvers are exposed as opaque heap handles. Every entry
//! point returns a [`DddStatus`]; on failure a message is kept in a
//! thread-local slot readable through [`ddd_last_error`]. Panics are caught
//! at the boundary and reported as [`DddStatus::Panic`].
//!
//! Arrays cross the boundary as `(pointer, length)` pairs of `double`, with
//! images in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use ddd_core::ops::{GaussianBlur, Haar, Matrix};
use ddd_core::regularizer::TvInner;
use ddd_core::stopping::{gtg, theoretical_stop};
use ddd_core::{BoundedOperator, DataFit, Error, Regularizer, Schedule, Solver, Tensor};

/// Result code of every `ddd_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DddStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Domain = 4,
    Divergence = 5,
    Io = 6,
    Panic = 7,
    ScheduleExhausted = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DddLoss {
    Square = 0,
    L1 = 1,
    Huber = 2,
    Kl = 3,
    L1L2 = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DddRegularizer {
    SquaredNorm = 0,
    HaarL1 = 1,
    Tv = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DddScheduleKind {
    /// `lambda_max`, `lambda_min`, `length`.
    Vanilla = 0,
    /// `lambda0 / (n+1)^beta` with `lambda_max` as `lambda0`.
    Polynomial = 1,
    /// `lambda_max`, `lambda_min`, `length` grid points, restart tolerance `eps`.
    Warm = 2,
}

/// Model and schedule for [`ddd_solver_new`]. Fields not used by the chosen
/// variants are ignored. [`ddd_setup_default`] fills a usable baseline.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DddSetup {
    pub loss: DddLoss,
    /// Huber `sigma`, or `a1` for the L1+L2 loss.
    pub loss_a: f64,
    /// `a2` for the L1+L2 loss.
    pub loss_b: f64,
    pub regularizer: DddRegularizer,
    pub reg_mu: f64,
    pub reg_sigma: f64,
    pub haar_levels: u32,
    pub tv_inner_iters: u32,
    pub tv_inner_tol: f64,
    pub schedule: DddScheduleKind,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub beta: f64,
    pub length: u64,
    pub eps: f64,
}

/// Opaque linear operator with its norm bound.
pub struct DddOperator {
    op: BoundedOperator,
}

/// Opaque solver state.
pub struct DddSolver {
    solver: Solver,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DddStatus, msg: impl Into<String>) -> DddStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> DddStatus {
    match e {
        Error::Dimension(_) => DddStatus::Dimension,
        Error::Domain(_) => DddStatus::Domain,
        Error::Divergence { .. } => DddStatus::Divergence,
        Error::Io(_) => DddStatus::Io,
        Error::Config(_) | Error::Parse(_) | Error::Oracle(_) | Error::Numerical(_) => {
            DddStatus::InvalidArgument
        }
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), DddStatus>) -> DddStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DddStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DddStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, DddStatus>;
}

impl<T> OrStatus<T> for ddd_core::Result<T> {
    fn or_status(self) -> Result<T, DddStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], DddStatus> {
    if p.is_null() {
        return Err(fail(DddStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], DddStatus> {
    if p.is_null() {
        return Err(fail(DddStatus::NullPointer, "null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, DddStatus> {
    p.as_ref().ok_or_else(|| fail(DddStatus::NullPointer, "null handle"))
}

unsafe fn handle_mut<'a, T>(p: *mut T) -> Result<&'a mut T, DddStatus> {
    p.as_mut().ok_or_else(|| fail(DddStatus::NullPointer, "null handle"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), DddStatus> {
    if out.is_null() {
        return Err(fail(DddStatus::NullPointer, "null output pointer"));
    }
    out.write(v);
    Ok(())
}

fn copy_into(src: &Tensor, dst: &mut [f64]) -> Result<(), DddStatus> {
    if dst.len() != src.len() {
        return Err(fail(
            DddStatus::Dimension,
            format!("buffer holds {} values, {} needed", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src.as_slice());
    Ok(())
}

fn tensor_of(shape: (usize, usize), data: &[f64]) -> Result<Tensor, DddStatus> {
    Tensor::from_vec(shape.0, shape.1, data.to_vec()).or_status()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ddd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Square loss, squared-norm regularizer, polynomial schedule `1/(n+1)`.
#[no_mangle]
pub extern "C" fn ddd_setup_default() -> DddSetup {
    DddSetup {
        loss: DddLoss::Square,
        loss_a: 1.0,
        loss_b: 1.0,
        regularizer: DddRegularizer::SquaredNorm,
        reg_mu: 0.1,
        reg_sigma: 1.0,
        haar_levels: 3,
        tv_inner_iters: 50,
        tv_inner_tol: 1e-6,
        schedule: DddScheduleKind::Polynomial,
        lambda_max: 1.0,
        lambda_min: 0.1,
        beta: 1.0,
        length: 1000,
        eps: 1e-5,
    }
}

fn new_operator(
    op: Arc<dyn ddd_core::LinearOperator>,
    out: *mut *mut DddOperator,
) -> Result<(), DddStatus> {
    if out.is_null() {
        return Err(fail(DddStatus::NullPointer, "null output handle"));
    }
    let op = BoundedOperator::new(op).or_status()?;
    unsafe { out.write(Box::into_raw(Box::new(DddOperator { op }))) };
    Ok(())
}

/// Dense `rows × cols` matrix from row-major `data` of length `rows*cols`.
/// Inputs are vectors of length `cols`, outputs of length `rows`.
///
/// # Safety
/// `data` must point to `rows*cols` readable doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut DddOperator,
) -> DddStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(DddStatus::InvalidArgument, "matrix size overflows"))?;
        let data = slice(data, len)?;
        let m = Matrix::new(rows, cols, data.to_vec()).or_status()?;
        new_operator(Arc::new(m), out)
    })
}

/// The 9×9 Gaussian blur with variance 10 and reflecting boundaries on
/// `rows × cols` images.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_blur_new(
    rows: usize,
    cols: usize,
    out: *mut *mut DddOperator,
) -> DddStatus {
    guard(|| {
        let b = GaussianBlur::standard(rows, cols).or_status()?;
        new_operator(Arc::new(b), out)
    })
}

/// # Safety
/// `op` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_free(op: *mut DddOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Input and output lengths of the operator.
///
/// # Safety
/// `op` must be a live handle; `input_len` and `output_len` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_dims(
    op: *const DddOperator,
    input_len: *mut usize,
    output_len: *mut usize,
) -> DddStatus {
    guard(|| {
        let op = &handle(op)?.op;
        let (ir, ic) = op.input_shape();
        let (or, oc) = op.output_shape();
        write_out(input_len, ir * ic)?;
        write_out(output_len, or * oc)
    })
}

/// Upper bound on `‖A‖` used for the step size.
///
/// # Safety
/// `op` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_norm(op: *const DddOperator, out: *mut f64) -> DddStatus {
    guard(|| write_out(out, handle(op)?.op.norm_upper()))
}

/// `y = A x`.
///
/// # Safety
/// `op` must be a live handle and the arrays valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_apply(
    op: *const DddOperator,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> DddStatus {
    guard(|| {
        let op = &handle(op)?.op;
        let x = tensor_of(op.input_shape(), slice(x, x_len)?)?;
        copy_into(&op.apply(&x).or_status()?, slice_mut(y, y_len)?)
    })
}

/// `x = Aᵀ y`.
///
/// # Safety
/// `op` must be a live handle and the arrays valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn ddd_operator_adjoint(
    op: *const DddOperator,
    y: *const f64,
    y_len: usize,
    x: *mut f64,
    x_len: usize,
) -> DddStatus {
    guard(|| {
        let op = &handle(op)?.op;
        let y = tensor_of(op.output_shape(), slice(y, y_len)?)?;
        copy_into(&op.adjoint(&y).or_status()?, slice_mut(x, x_len)?)
    })
}

fn build_fit(s: &DddSetup, y: Tensor) -> ddd_core::Result<DataFit> {
    match s.loss {
        DddLoss::Square => DataFit::square(y),
        DddLoss::L1 => DataFit::l1(y),
        DddLoss::Huber => DataFit::huber(y, s.loss_a),
        DddLoss::Kl => DataFit::kl(y),
        DddLoss::L1L2 => DataFit::l1l2(y, s.loss_a, s.loss_b),
    }
}

fn build_reg(s: &DddSetup, shape: (usize, usize)) -> ddd_core::Result<Regularizer> {
    match s.regularizer {
        DddRegularizer::SquaredNorm => Ok(Regularizer::squared_norm()),
        DddRegularizer::HaarL1 => {
            let w = Haar::new(shape.0, shape.1, s.haar_levels as usize)?;
            Regularizer::l1_analysis(Arc::new(w), s.reg_mu, s.reg_sigma)
        }
        DddRegularizer::Tv => Regularizer::tv_quad(
            s.reg_mu,
            s.reg_sigma,
            TvInner {
                iters: s.tv_inner_iters as usize,
                tol: s.tv_inner_tol,
            },
        ),
    }
}

fn build_schedule(s: &DddSetup) -> ddd_core::Result<Schedule> {
    let len = usize::try_from(s.length).map_err(|_| Error::Config("schedule length overflows".into()))?;
    match s.schedule {
        DddScheduleKind::Vanilla => Schedule::vanilla_exp(s.lambda_max, s.lambda_min, len),
        DddScheduleKind::Polynomial => Schedule::polynomial(s.lambda_max, s.beta),
        DddScheduleKind::Warm => Schedule::warm_restart(s.lambda_max, s.lambda_min, len, s.eps),
    }
}

/// Creates a solver for datum `y` (length = operator output length) with
/// `u₀ = 0`. The operator is shared, so `op` may be freed afterwards.
///
/// # Safety
/// `op` must be a live handle, `y` valid for `y_len` reads, `setup`
/// readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_new(
    op: *const DddOperator,
    y: *const f64,
    y_len: usize,
    setup: *const DddSetup,
    out: *mut *mut DddSolver,
) -> DddStatus {
    guard(|| {
        let op = handle(op)?.op.clone();
        let setup = handle(setup)?;
        if out.is_null() {
            return Err(fail(DddStatus::NullPointer, "null output handle"));
        }
        let y = tensor_of(op.output_shape(), slice(y, y_len)?)?;
        let fit = build_fit(setup, y).or_status()?;
        let reg = build_reg(setup, op.input_shape()).or_status()?;
        let schedule = build_schedule(setup).or_status()?;
        let solver = Solver::new(op, reg, fit, schedule).or_status()?;
        out.write(Box::into_raw(Box::new(DddSolver { solver })));
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_free(s: *mut DddSolver) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// One step. Writes the parameter used and the dual value after the step
/// (`+inf` when infeasible) to the optional outputs.
///
/// # Safety
/// `s` must be a live handle; `lambda` and `dual_value` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_step(
    s: *mut DddSolver,
    lambda: *mut f64,
    dual_value: *mut f64,
) -> DddStatus {
    guard(|| {
        let solver = &mut handle_mut(s)?.solver;
        if solver.is_exhausted() {
            return Err(fail(DddStatus::ScheduleExhausted, "schedule is exhausted"));
        }
        let info = solver.step().or_status()?;
        if !lambda.is_null() {
            lambda.write(info.lambda);
        }
        if !dual_value.is_null() {
            dual_value.write(info.dual_value.to_f64());
        }
        Ok(())
    })
}

/// Up to `max_iters` steps, stopping early when the schedule ends. The
/// number of steps taken is written to `done` if non-null.
///
/// # Safety
/// `s` must be a live handle; `done` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_run(s: *mut DddSolver, max_iters: usize, done: *mut usize) -> DddStatus {
    guard(|| {
        let solver = &mut handle_mut(s)?.solver;
        let mut k = 0;
        let mut res = Ok(());
        while k < max_iters && !solver.is_exhausted() {
            if let Err(e) = solver.step() {
                res = Err(fail(status_of(&e), e.to_string()));
                break;
            }
            k += 1;
        }
        if !done.is_null() {
            done.write(k);
        }
        res
    })
}

/// Copies the primal iterate `x_n` (operator input length).
///
/// # Safety
/// `s` must be a live handle and `x` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_primal(s: *const DddSolver, x: *mut f64, len: usize) -> DddStatus {
    guard(|| copy_into(&handle(s)?.solver.state().x, slice_mut(x, len)?))
}

/// Copies the dual iterate `u_n` (operator output length).
///
/// # Safety
/// `s` must be a live handle and `u` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_dual(s: *const DddSolver, u: *mut f64, len: usize) -> DddStatus {
    guard(|| copy_into(&handle(s)?.solver.state().u, slice_mut(u, len)?))
}

/// Parameter of the last step, or the first parameter before any step.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_lambda(s: *const DddSolver, out: *mut f64) -> DddStatus {
    guard(|| write_out(out, handle(s)?.solver.state().lambda_n))
}

/// Number of completed steps.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_iteration(s: *const DddSolver, out: *mut usize) -> DddStatus {
    guard(|| write_out(out, handle(s)?.solver.state().n))
}

/// Step size `τ`.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_tau(s: *const DddSolver, out: *mut f64) -> DddStatus {
    guard(|| write_out(out, handle(s)?.solver.tau()))
}

/// Dual objective at the current iterate for parameter `lambda`; `+inf`
/// when the iterate is infeasible.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_solver_dual_value(s: *const DddSolver, lambda: f64, out: *mut f64) -> DddStatus {
    guard(|| {
        let solver = &handle(s)?.solver;
        let v = solver.dual_value(&solver.state().u, lambda).or_status()?;
        write_out(out, v.to_f64())
    })
}

/// Continuous stopping time `t` and index `n = ⌈t⌉` for noise level
/// `delta`, schedule exponent `beta`, conditioning exponent `theta`,
/// constants `a`, `b` and offset `t0`.
///
/// # Safety
/// `t` and `n` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_theoretical_stop(
    delta: f64,
    beta: f64,
    theta: f64,
    a: f64,
    b: f64,
    t0: f64,
    t: *mut f64,
    n: *mut usize,
) -> DddStatus {
    guard(|| {
        let st = theoretical_stop(delta, beta, theta, a, b, t0).or_status()?;
        if !t.is_null() {
            t.write(st.t);
        }
        if !n.is_null() {
            n.write(st.n);
        }
        Ok(())
    })
}

/// Ground-truth gap `‖x − x_true‖ / len`.
///
/// # Safety
/// Both arrays must be valid for `len` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddd_gtg(x: *const f64, x_true: *const f64, len: usize, out: *mut f64) -> DddStatus {
    guard(|| {
        let a = Tensor::vector(slice(x, len)?.to_vec());
        let b = Tensor::vector(slice(x_true, len)?.to_vec());
        write_out(out, gtg(&a, &b).or_status()?)
    })
}
