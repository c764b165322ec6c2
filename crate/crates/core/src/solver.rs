//! The diagonal dual descent iteration.
//!
//! With `τ ≤ 1/L` and a decreasing parameter sequence `λ_n`, each step is
//!
//! ```text
//! x_n     = ∇R*(−Aᵀ u_n)
//! w_{n+1} = u_n + τ A x_n − τ ∇ψ_y*(λ_n u_n)
//! u_{n+1} = w_{n+1} − τ prox_{(τλ_n)⁻¹ φ_y}(w_{n+1}/τ)
//! ```
//!
//! where `L = ‖A‖²/σ_R + λ₀/σ_ψ`. The primal iterate `x_n` is the output.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::time::Instant;

use crate::convex::ExtReal;
use crate::datafit::DataFit;
use crate::error::{Error, Result};
use crate::ops::BoundedOperator;
use crate::regularizer::Regularizer;
use crate::tensor::Tensor;

/// `‖A‖²/σ_R + λ₀/σ_ψ`, reading `λ₀/∞` as 0.
pub fn step_constant(norm_a: f64, sigma_r: f64, lambda0: f64, sigma_psi: f64) -> f64 {
    let smooth = if sigma_psi.is_infinite() {
        0.0
    } else {
        lambda0 / sigma_psi
    };
    norm_a * norm_a / sigma_r + smooth
}

/// A rule producing the parameters `λ_0, λ_1, …`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// `N_v` values spaced geometrically from `λ_max` down to `λ_min`.
    VanillaExp {
        lambda_max: f64,
        lambda_min: f64,
        n_v: usize,
    },
    /// `λ_n = λ₀/(n+1)^β`, unbounded.
    Polynomial { lambda0: f64, beta: f64 },
    /// Holds each grid value until the relative change of `d_λ` between two
    /// consecutive iterates drops below `eps`, then moves to the next value.
    /// Ends when the rule fires on the last grid value.
    WarmRestart { grid: Vec<f64>, eps: f64 },
    /// A fixed, finite sequence.
    Explicit(Vec<f64>),
}

fn check_lambda(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::config(format!("λ values must be positive and finite, got {v}")));
    }
    Ok(())
}

fn log_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|k| hi * (lo / hi).powf(k as f64 / (n - 1) as f64))
        .collect()
}

impl Schedule {
    pub fn vanilla_exp(lambda_max: f64, lambda_min: f64, n_v: usize) -> Result<Self> {
        check_lambda(lambda_max)?;
        check_lambda(lambda_min)?;
        if lambda_min > lambda_max || n_v == 0 {
            return Err(Error::config("need λ_min ≤ λ_max and N_v ≥ 1"));
        }
        Ok(Schedule::VanillaExp {
            lambda_max,
            lambda_min,
            n_v,
        })
    }

    pub fn polynomial(lambda0: f64, beta: f64) -> Result<Self> {
        check_lambda(lambda0)?;
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::config(format!("β must be nonnegative, got {beta}")));
        }
        Ok(Schedule::Polynomial { lambda0, beta })
    }

    /// Log-uniform grid of `n_wr` values from `lambda_max` to `lambda_min`.
    pub fn warm_restart(lambda_max: f64, lambda_min: f64, n_wr: usize, eps: f64) -> Result<Self> {
        check_lambda(lambda_max)?;
        check_lambda(lambda_min)?;
        if lambda_min > lambda_max || n_wr == 0 {
            return Err(Error::config("need λ_min ≤ λ_max and N_wr ≥ 1"));
        }
        if !(eps > 0.0) {
            return Err(Error::config(format!("warm restart tolerance must be positive, got {eps}")));
        }
        Ok(Schedule::WarmRestart {
            grid: log_grid(lambda_max, lambda_min, n_wr),
            eps,
        })
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("explicit schedule is empty"));
        }
        for &v in &values {
            check_lambda(v)?;
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("explicit schedule must be nonincreasing"));
        }
        Ok(Schedule::Explicit(values))
    }

    /// The first (largest) parameter.
    pub fn lambda0(&self) -> f64 {
        match self {
            Schedule::VanillaExp { lambda_max, .. } => *lambda_max,
            Schedule::Polynomial { lambda0, .. } => *lambda0,
            Schedule::WarmRestart { grid, .. } => grid[0],
            Schedule::Explicit(v) => v[0],
        }
    }

    /// Parameter at 0-based step `k` for position-indexed schedules, or at
    /// grid index `k` for warm restart. `None` past the end.
    pub fn value(&self, k: usize) -> Option<f64> {
        match self {
            Schedule::VanillaExp {
                lambda_max,
                lambda_min,
                n_v,
            } => {
                if k >= *n_v {
                    None
                } else if *n_v == 1 {
                    Some(*lambda_max)
                } else {
                    Some(lambda_max * (lambda_min / lambda_max).powf(k as f64 / (*n_v - 1) as f64))
                }
            }
            Schedule::Polynomial { lambda0, beta } => Some(lambda0 / ((k + 1) as f64).powf(*beta)),
            Schedule::WarmRestart { grid, .. } => grid.get(k).copied(),
            Schedule::Explicit(v) => v.get(k).copied(),
        }
    }

    /// Number of steps for position-indexed finite schedules.
    pub fn len(&self) -> Option<usize> {
        match self {
            Schedule::VanillaExp { n_v, .. } => Some(*n_v),
            Schedule::Explicit(v) => Some(v.len()),
            Schedule::Polynomial { .. } | Schedule::WarmRestart { .. } => None,
        }
    }

    pub fn is_warm_restart(&self) -> bool {
        matches!(self, Schedule::WarmRestart { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::VanillaExp { .. } => "vanilla",
            Schedule::Polynomial { .. } => "polynomial",
            Schedule::WarmRestart { .. } => "warm",
            Schedule::Explicit(_) => "explicit",
        }
    }
}

/// Iterates after `n` completed steps.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Dual iterate `u_n`.
    pub u: Tensor,
    /// Primal iterate `x_n = ∇R*(−Aᵀu_n)`.
    pub x: Tensor,
    /// Intermediate `w_n`; equals `u_0` before the first step.
    pub w: Tensor,
    pub n: usize,
    /// Parameter used by the last step (the first parameter before any step).
    pub lambda_n: f64,
    pub tau: f64,
}

/// One row of a run trace, describing the state after step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    /// Parameter used in step `n`.
    pub lambda: f64,
    /// `d_λ(u_n)` at that parameter; `+inf` when infeasible.
    pub dual_value: f64,
    pub gtg: Option<f64>,
    pub dist_opt: Option<f64>,
    pub sure: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCause {
    MaxIters,
    ScheduleExhausted,
    Observer,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub stop: StopCause,
}

pub const TRACE_HEADER: &str = "n,lambda,dual_value,gtg,dist_opt,sure,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunTrace {
    pub fn empty() -> Self {
        RunTrace {
            records: Vec::new(),
            stop: StopCause::MaxIters,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }

    pub fn duals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dual_value).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.n,
                r.lambda,
                r.dual_value,
                opt(r.gtg),
                opt(r.dist_opt),
                opt(r.sure),
                opt(r.wall_ms)
            );
        }
        s
    }
}

/// What a single step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub lambda: f64,
    pub dual_value: ExtReal,
}

/// `d_λ(u) = R*(−Aᵀu) + D_y*(λu)/λ`.
pub fn dual_value(
    u: &Tensor,
    lambda: f64,
    op: &BoundedOperator,
    reg: &Regularizer,
    fit: &DataFit,
) -> Result<ExtReal> {
    check_lambda(lambda)?;
    let v = -&op.adjoint(u)?;
    Ok(reg.conj_value(&v)? + fit.conj_value(&u.scale(lambda)).scale(1.0 / lambda))
}

/// `d_∞(u) = R*(−Aᵀu) + ⟨y, u⟩`.
pub fn dual_value_inf(
    u: &Tensor,
    op: &BoundedOperator,
    reg: &Regularizer,
    fit: &DataFit,
) -> Result<ExtReal> {
    let v = -&op.adjoint(u)?;
    Ok(reg.conj_value(&v)? + u.dot(fit.y()))
}

#[derive(Debug, Clone)]
struct WarmState {
    index: usize,
    /// `d_λ(u_n)` at the current grid value, when known.
    current: Option<(f64, ExtReal)>,
}

/// Stateful runner of the iteration.
#[derive(Debug, Clone)]
pub struct Solver {
    op: BoundedOperator,
    reg: Regularizer,
    fit: DataFit,
    schedule: Schedule,
    l_const: f64,
    state: SolverState,
    neg_atu: Tensor,
    warm: WarmState,
    exhausted: bool,
    timing: bool,
}

fn diverged(iteration: usize, reason: impl Into<String>) -> Error {
    Error::Divergence {
        iteration,
        reason: reason.into(),
        partial: Box::new(RunTrace::empty()),
    }
}

impl Solver {
    /// Starts from `u₀ = 0` with `τ = 1/L`.
    pub fn new(
        op: BoundedOperator,
        reg: Regularizer,
        fit: DataFit,
        schedule: Schedule,
    ) -> Result<Self> {
        let u0 = Tensor::zeros(op.output_shape().0, op.output_shape().1);
        Solver::with_initial_dual(op, reg, fit, schedule, u0)
    }

    pub fn with_initial_dual(
        op: BoundedOperator,
        reg: Regularizer,
        fit: DataFit,
        schedule: Schedule,
        u0: Tensor,
    ) -> Result<Self> {
        fit.y().ensure_shape(op.output_shape(), "datum")?;
        u0.ensure_shape(op.output_shape(), "initial dual")?;
        if !u0.is_finite() {
            return Err(Error::config("initial dual iterate must be finite"));
        }
        reg.check_shape(op.input_shape())?;
        let lambda0 = schedule.lambda0();
        let l_const = step_constant(op.norm_upper(), reg.sigma_r(), lambda0, fit.sigma_psi());
        if !(l_const > 0.0) || !l_const.is_finite() {
            return Err(Error::config(format!(
                "step constant L = {l_const} is not positive; the operator is zero"
            )));
        }
        let neg_atu = -&op.adjoint(&u0)?;
        let x = reg.grad_conj(&neg_atu)?;
        let state = SolverState {
            w: u0.clone(),
            u: u0,
            x,
            n: 0,
            lambda_n: lambda0,
            tau: 1.0 / l_const,
        };
        Ok(Solver {
            op,
            reg,
            fit,
            schedule,
            l_const,
            state,
            neg_atu,
            warm: WarmState {
                index: 0,
                current: None,
            },
            exhausted: false,
            timing: false,
        })
    }

    /// Replaces `τ`; must lie in `(0, 1/L]`.
    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0) || tau > 1.0 / self.l_const {
            return Err(Error::config(format!(
                "τ = {tau} outside (0, 1/L] with L = {}",
                self.l_const
            )));
        }
        self.state.tau = tau;
        Ok(())
    }

    /// Records wall-clock milliseconds in traces. Off by default so that
    /// traces are reproducible byte for byte.
    pub fn set_timing(&mut self, on: bool) {
        self.timing = on;
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn tau(&self) -> f64 {
        self.state.tau
    }

    pub fn step_constant(&self) -> f64 {
        self.l_const
    }

    pub fn operator(&self) -> &BoundedOperator {
        &self.op
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn datafit(&self) -> &DataFit {
        &self.fit
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Parameter the next [`step`](Solver::step) will use, if any.
    pub fn next_lambda(&self) -> Option<f64> {
        if self.exhausted {
            return None;
        }
        if self.schedule.is_warm_restart() {
            self.schedule.value(self.warm.index)
        } else {
            self.schedule.value(self.state.n)
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.next_lambda().is_none()
    }

    pub fn dual_value(&self, u: &Tensor, lambda: f64) -> Result<ExtReal> {
        dual_value(u, lambda, &self.op, &self.reg, &self.fit)
    }

    pub fn dual_value_inf(&self, u: &Tensor) -> Result<ExtReal> {
        dual_value_inf(u, &self.op, &self.reg, &self.fit)
    }

    /// `d_λ(u_n)` reusing the cached `x_n` and `−Aᵀu_n`.
    fn current_dual(&self, lambda: f64) -> Result<ExtReal> {
        let rstar = match self.reg.value(&self.state.x)? {
            ExtReal::Finite(r) => ExtReal::Finite(self.neg_atu.dot(&self.state.x) - r),
            ExtReal::PosInf => ExtReal::PosInf,
        };
        Ok(rstar + self.fit.conj_value(&self.state.u.scale(lambda)).scale(1.0 / lambda))
    }

    /// The forward map `T u = u + τ A ∇R*(−Aᵀu) − τ ∇ψ_y*(λu)`.
    pub fn forward_map(&self, u: &Tensor, lambda: f64) -> Result<Tensor> {
        let x = self.reg.grad_conj(&-&self.op.adjoint(u)?)?;
        let mut w = u.clone();
        w.axpy(self.state.tau, &self.op.apply(&x)?);
        w.axpy(-self.state.tau, &self.fit.grad_psi_conj(&u.scale(lambda)));
        Ok(w)
    }

    /// One step with the schedule's next parameter.
    pub fn step(&mut self) -> Result<StepInfo> {
        let lambda = self
            .next_lambda()
            .ok_or_else(|| Error::config("schedule is exhausted"))?;
        if !self.schedule.is_warm_restart() {
            return self.step_at(lambda);
        }
        let before = match self.warm.current {
            Some((l, d)) if l == lambda => d,
            _ => self.current_dual(lambda)?,
        };
        let info = self.step_at(lambda)?;
        let after = info.dual_value;
        self.warm.current = Some((lambda, after));
        let Schedule::WarmRestart { grid, eps } = &self.schedule else {
            unreachable!()
        };
        let fire = if eps.is_infinite() {
            true
        } else {
            match (before, after) {
                (ExtReal::Finite(d0), ExtReal::Finite(d1)) => {
                    let diff = (d1 - d0).abs();
                    diff == 0.0 || diff < eps * d1.abs()
                }
                _ => false,
            }
        };
        if fire {
            if self.warm.index + 1 >= grid.len() {
                self.exhausted = true;
            } else {
                self.warm.index += 1;
            }
        }
        Ok(info)
    }

    /// One step with an externally supplied parameter. The schedule position
    /// is left untouched, which lets a twin run replay another run's
    /// parameters.
    pub fn step_at(&mut self, lambda: f64) -> Result<StepInfo> {
        check_lambda(lambda)?;
        let tau = self.state.tau;
        let next_n = self.state.n + 1;
        let s = &mut self.state;

        let mut w = s.u.clone();
        w.axpy(tau, &self.op.apply(&s.x)?);
        w.axpy(-tau, &self.fit.grad_psi_conj(&s.u.scale(lambda)));
        let u = if self.fit.phi_is_zero() {
            w.clone()
        } else {
            let p = self.fit.prox_phi(1.0 / (tau * lambda), &w.scale(1.0 / tau));
            let mut u = w.clone();
            u.axpy(-tau, &p);
            u
        };
        if !u.is_finite() {
            return Err(diverged(next_n, "dual iterate is not finite"));
        }
        let neg_atu = -&self.op.adjoint(&u)?;
        let x = self.reg.grad_conj(&neg_atu)?;
        if !x.is_finite() {
            return Err(diverged(next_n, "primal iterate is not finite"));
        }
        s.u = u;
        s.w = w;
        s.x = x;
        s.n = next_n;
        s.lambda_n = lambda;
        self.neg_atu = neg_atu;
        let dual = self.current_dual(lambda)?;
        if dual.to_f64().is_nan() {
            return Err(diverged(next_n, "dual value is NaN"));
        }
        Ok(StepInfo {
            lambda,
            dual_value: dual,
        })
    }

    /// Steps until `max_iters` records exist, the schedule ends, or the
    /// observer breaks. The observer sees each new state and may fill in the
    /// optional metrics of its record.
    pub fn run<F>(&mut self, max_iters: usize, mut observer: F) -> Result<RunTrace>
    where
        F: FnMut(&SolverState, &mut TraceRecord) -> ControlFlow<()>,
    {
        let start = Instant::now();
        let mut records = Vec::with_capacity(max_iters.min(self.schedule.len().unwrap_or(max_iters)));
        let stop = loop {
            if records.len() >= max_iters {
                break StopCause::MaxIters;
            }
            if self.is_exhausted() {
                break StopCause::ScheduleExhausted;
            }
            let info = match self.step() {
                Ok(info) => info,
                Err(Error::Divergence {
                    iteration, reason, ..
                }) => {
                    return Err(Error::Divergence {
                        iteration,
                        reason,
                        partial: Box::new(RunTrace {
                            records,
                            stop: StopCause::Diverged,
                        }),
                    })
                }
                Err(e) => return Err(e),
            };
            let mut rec = TraceRecord {
                n: self.state.n,
                lambda: info.lambda,
                dual_value: info.dual_value.to_f64(),
                gtg: None,
                dist_opt: None,
                sure: None,
                wall_ms: self
                    .timing
                    .then(|| start.elapsed().as_secs_f64() * 1e3),
            };
            let flow = observer(&self.state, &mut rec);
            records.push(rec);
            if flow.is_break() {
                break StopCause::Observer;
            }
        };
        Ok(RunTrace { records, stop })
    }

    /// [`run`](Solver::run) without metrics.
    pub fn run_plain(&mut self, max_iters: usize) -> Result<RunTrace> {
        self.run(max_iters, |_, _| ControlFlow::Continue(()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ops::{LinearOperator, Matrix};

    fn toy() -> (BoundedOperator, DataFit) {
        let a: Arc<dyn LinearOperator> =
            Arc::new(Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 0.0]]).unwrap());
        let op = BoundedOperator::new(a).unwrap();
        let fit = DataFit::square(Tensor::vector(vec![2.0, 1.0])).unwrap();
        (op, fit)
    }

    #[test]
    fn step_constant_examples() {
        assert_eq!(step_constant(2.0, 1.0, 1.0, 1.0), 5.0);
        assert_eq!(step_constant(2.0, 1.0, 1.0, f64::INFINITY), 4.0);
        assert_eq!(step_constant(1.0, 2.0, 0.5, 0.25), 2.5);
    }

    #[test]
    fn vanilla_values() {
        let s = Schedule::vanilla_exp(10.0, 0.1, 3).unwrap();
        let v: Vec<f64> = (0..4).filter_map(|k| s.value(k)).collect();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], 10.0);
        assert!((v[1] - 1.0).abs() < 1e-15);
        assert!((v[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::vanilla_exp(0.1, 10.0, 3).is_err());
        assert!(Schedule::vanilla_exp(1.0, 0.0, 3).is_err());
        assert!(Schedule::polynomial(1.0, -1.0).is_err());
        assert!(Schedule::explicit(vec![1.0, 2.0]).is_err());
        assert!(Schedule::warm_restart(1.0, 0.1, 3, 0.0).is_err());
    }

    #[test]
    fn zero_step_leaves_state_unchanged() {
        let (op, fit) = toy();
        let mut s = Solver::new(op, Regularizer::squared_norm(), fit, Schedule::polynomial(1.0, 1.0).unwrap()).unwrap();
        s.step().unwrap();
        let before = s.state().clone();
        s.state.tau = 0.0;
        s.step().unwrap();
        assert_eq!(s.state().u, before.u);
        assert_eq!(s.state().x, before.x);
    }

    #[test]
    fn set_tau_is_checked() {
        let (op, fit) = toy();
        let mut s = Solver::new(op, Regularizer::squared_norm(), fit, Schedule::polynomial(1.0, 1.0).unwrap()).unwrap();
        assert!(s.set_tau(0.0).is_err());
        assert!(s.set_tau(2.0 / s.step_constant()).is_err());
        assert!(s.set_tau(0.5 / s.step_constant()).is_ok());
    }

    #[test]
    fn vanilla_run_length() {
        let (op, fit) = toy();
        let mut s = Solver::new(op, Regularizer::squared_norm(), fit, Schedule::vanilla_exp(10.0, 0.1, 3).unwrap()).unwrap();
        let t = s.run_plain(100).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.stop, StopCause::ScheduleExhausted);
        assert_eq!(t.records[0].lambda, 10.0);
        assert!((t.records[2].lambda - 0.1).abs() < 1e-15);
    }

    #[test]
    fn warm_restart_infinite_eps_is_a_staircase() {
        let (op, fit) = toy();
        let sched = Schedule::warm_restart(1.0, 0.01, 5, f64::INFINITY).unwrap();
        let mut s = Solver::new(op, Regularizer::squared_norm(), fit, sched.clone()).unwrap();
        let t = s.run_plain(100).unwrap();
        assert_eq!(t.len(), 5);
        for (k, r) in t.records.iter().enumerate() {
            assert_eq!(r.lambda, sched.value(k).unwrap());
        }
        assert_eq!(t.stop, StopCause::ScheduleExhausted);
    }

    #[test]
    fn csv_format() {
        let t = RunTrace {
            records: vec![TraceRecord {
                n: 1,
                lambda: 0.5,
                dual_value: -1.25,
                gtg: Some(0.1),
                dist_opt: None,
                sure: None,
                wall_ms: None,
            }],
            stop: StopCause::MaxIters,
        };
        assert_eq!(t.to_csv(), format!("{TRACE_HEADER}\n1,0.5,-1.25,0.1,,,\n"));
    }

    #[test]
    fn dual_at_zero_is_zero() {
        let (op, fit) = toy();
        let d = dual_value(&Tensor::vector(vec![0.0, 0.0]), 0.7, &op, &Regularizer::squared_norm(), &fit).unwrap();
        assert_eq!(d, ExtReal::Finite(0.0));
    }
}
