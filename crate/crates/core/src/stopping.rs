//! Early-stopping selectors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ops::BoundedOperator;
use crate::rng::Stream;
use crate::solver::{RunTrace, Solver, SolverState};
use crate::tensor::Tensor;

pub const DEFAULT_SURE_WINDOW: usize = 10;

/// `‖x − x̄‖ / d` with `d` the number of entries.
pub fn gtg(x: &Tensor, x_true: &Tensor) -> Result<f64> {
    x.ensure_shape(x_true.shape(), "gtg")?;
    Ok(x.distance(x_true) / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gtg,
    Sure,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopReport {
    /// Selected iteration, 1-based like trace records.
    pub chosen_n: usize,
    pub criterion: Criterion,
    pub curve: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing_window: Option<usize>,
}

/// Index of the first smallest finite entry.
pub fn argmin(curve: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in curve.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |(_, b)| v < b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

impl StopReport {
    /// Stops at the minimum of a ground-truth gap curve.
    pub fn from_gtg(curve: Vec<f64>) -> Result<Self> {
        let k = argmin(&curve).ok_or_else(|| Error::config("gtg curve has no finite value"))?;
        Ok(StopReport {
            chosen_n: k + 1,
            criterion: Criterion::Gtg,
            curve,
            smoothing_window: None,
        })
    }

    pub fn from_sure(curve: Vec<f64>, window: usize) -> Result<Self> {
        let k = select_by_min_slope(&curve, window)?;
        Ok(StopReport {
            chosen_n: k + 1,
            criterion: Criterion::Sure,
            curve,
            smoothing_window: Some(window),
        })
    }

    pub fn fixed(n: usize, curve: Vec<f64>) -> Self {
        StopReport {
            chosen_n: n,
            criterion: Criterion::Fixed,
            curve,
            smoothing_window: None,
        }
    }
}

/// Smooths `curve` by a centered moving average of width `window` (only
/// where the window fits), takes central-difference slopes and returns the
/// 0-based index with the smallest slope magnitude. Indices below `window`
/// are skipped. Near-ties go to the latest index.
pub fn select_by_min_slope(curve: &[f64], window: usize) -> Result<usize> {
    if window == 0 {
        return Err(Error::config("smoothing window must be at least 1"));
    }
    let len = curve.len();
    if len < 2 * window {
        return Err(Error::config(format!(
            "curve of length {len} is shorter than twice the window {window}"
        )));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("curve contains non-finite values"));
    }
    let lo = (window - 1) / 2;
    let hi = window - 1 - lo;
    let first = window.max(lo + 1);
    let Some(last) = len.checked_sub(2 + hi) else {
        return Err(Error::config("curve too short for slope estimation"));
    };
    if first > last {
        return Err(Error::config("no admissible index after the transient"));
    }
    // s_{k+1} − s_{k−1} written directly in terms of the raw samples
    let slopes: Vec<f64> = (first..=last)
        .map(|k| {
            let d = (curve[k + 1 + hi] - curve[k - 1 - lo]) + (curve[k + hi] - curve[k - lo]);
            (d / (2 * window) as f64).abs()
        })
        .collect();
    let best = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let largest = slopes.iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * best + 1e-12 * largest;
    let pos = slopes
        .iter()
        .rposition(|&s| s <= best + tol)
        .expect("slopes are nonempty");
    Ok(first + pos)
}

/// Finite-difference twin used to evaluate SURE along a primary run.
///
/// The twin solves the same problem on `ŷ + εξ` with `ξ` standard normal and
/// `ε = 1e-4 (1 + ‖ŷ‖)/‖ξ‖`, replaying the primary run's parameters, so that
/// `(x_n^ε − x_n)/ε` approximates the derivative of `x_n` along `ξ`.
#[derive(Debug, Clone)]
pub struct SureTwin {
    twin: Solver,
    op: BoundedOperator,
    y_hat: Tensor,
    xi: Tensor,
    eps: f64,
    sigma2: f64,
}

impl SureTwin {
    /// `primary` must not have stepped yet.
    pub fn new(primary: &Solver, sigma2: f64, xi_seed: u64) -> Result<Self> {
        let y_hat = primary.datafit().y();
        let (r, c) = y_hat.shape();
        let xi = Stream::new(xi_seed).normal_tensor(r, c);
        let eps = 1e-4 * (1.0 + y_hat.norm()) / xi.norm();
        SureTwin::with_direction(primary, sigma2, xi, eps)
    }

    pub fn with_direction(primary: &Solver, sigma2: f64, xi: Tensor, eps: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(Error::config(format!("noise variance must be nonnegative, got {sigma2}")));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::config(format!("finite-difference step must be positive, got {eps}")));
        }
        if primary.state().n != 0 {
            return Err(Error::config("twin must start together with the primary run"));
        }
        let y_hat = primary.datafit().y().clone();
        xi.ensure_shape(y_hat.shape(), "SURE direction")?;
        let mut shifted = y_hat.clone();
        shifted.axpy(eps, &xi);
        let fit = primary.datafit().with_datum(shifted)?;
        let mut twin = Solver::with_initial_dual(
            primary.operator().clone(),
            primary.regularizer().clone(),
            fit,
            primary.schedule().clone(),
            primary.state().u.clone(),
        )?;
        twin.set_tau(primary.tau())?;
        Ok(SureTwin {
            twin,
            op: primary.operator().clone(),
            y_hat,
            xi,
            eps,
            sigma2,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Advances the twin to match `state` and returns `SURE(x_n)`.
    pub fn observe(&mut self, state: &SolverState) -> Result<f64> {
        if state.n != self.twin.state().n + 1 {
            return Err(Error::config(format!(
                "twin is at step {}, primary at {}",
                self.twin.state().n,
                state.n
            )));
        }
        self.twin.step_at(state.lambda_n)?;
        let d = self.y_hat.len() as f64;
        let ax = self.op.apply(&state.x)?;
        let fit = ax.distance(&self.y_hat).powi(2) / d;
        if self.sigma2 == 0.0 {
            return Ok(fit);
        }
        let mut dn = self.twin.state().x.clone();
        dn.axpy(-1.0, &state.x);
        let adn = self.op.apply(&dn)?;
        Ok(fit + 2.0 * self.sigma2 / d * adn.dot(&self.xi) / self.eps)
    }

    /// `(x_n^ε − x_n)/ε` for the current twin state against `x`.
    pub fn derivative(&self, x: &Tensor) -> Tensor {
        let mut dn = self.twin.state().x.clone();
        dn.axpy(-1.0, x);
        dn.scale(1.0 / self.eps)
    }
}

/// Runs `solver` for up to `max_iters` steps and records SURE in the trace.
pub fn sure_run(
    solver: &mut Solver,
    max_iters: usize,
    sigma2: f64,
    xi_seed: u64,
) -> Result<RunTrace> {
    let mut twin = SureTwin::new(solver, sigma2, xi_seed)?;
    let mut failure = None;
    let trace = solver.run(max_iters, |state, rec| match twin.observe(state) {
        Ok(v) => {
            rec.sure = Some(v);
            std::ops::ControlFlow::Continue(())
        }
        Err(e) => {
            failure = Some(e);
            std::ops::ControlFlow::Break(())
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalStop {
    pub t: f64,
    pub n: usize,
}

/// Solves `t^α (t − T)^{3/2} = C₁/δ` on `(T, ∞)` with `α = βθ` and
/// `C₁ = b/(2a(1+α))`, returning the root and `n = ⌈t⌉`.
///
/// Bisection runs on `s = t − T` until the bracket stops shrinking, which
/// resolves `s` to machine precision.
pub fn theoretical_stop(
    delta: f64,
    beta: f64,
    theta: f64,
    a: f64,
    b: f64,
    t0: f64,
) -> Result<TheoreticalStop> {
    let pos = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!("{what} must be positive, got {v}")))
        }
    };
    let nonneg = |v: f64, what: &str| {
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!("{what} must be nonnegative, got {v}")))
        }
    };
    pos(delta, "δ")?;
    pos(a, "a")?;
    pos(b, "b")?;
    nonneg(beta, "β")?;
    nonneg(theta, "θ")?;
    nonneg(t0, "T")?;
    let alpha = beta * theta;
    let target = b / (2.0 * a * (1.0 + alpha)) / delta;
    let eta = |s: f64| (t0 + s).powf(alpha) * s.powf(1.5);
    let mut hi = 1.0;
    while eta(hi) < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("stopping time overflows".into()));
        }
    }
    let mut lo = 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eta(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = t0 + 0.5 * (lo + hi);
    Ok(TheoreticalStop {
        t,
        n: t.ceil() as usize,
    })
}
