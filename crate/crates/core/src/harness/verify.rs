//! The diagnostics suite behind `ddd verify`: small self-contained checks
//! printed as a pass/fail table.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::convex::{huber, prox_scalar_bruteforce, soft_threshold};
use crate::datafit::{kl_prox_scalar, DataFit};
use crate::diagnostics::{energy_violation, first_admissible_index, max_increase, oracle_pinv, rate_constant};
use crate::error::Result;
use crate::ops::{adjoint_residual, BoundedOperator, GaussianBlur, Grad2d, Haar, LinearOperator};
use crate::perturbation::stability_twin_run;
use crate::regularizer::Regularizer;
use crate::rng::Stream;
use crate::solver::{Schedule, Solver};
use crate::stopping::theoretical_stop;
use crate::tensor::Tensor;

use super::experiments::toy_matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn toy_fits() -> Result<Vec<DataFit>> {
    let y = Tensor::vector(vec![2.0, 1.0]);
    Ok(vec![
        DataFit::square(y.clone())?,
        DataFit::huber(y.clone(), 1.0)?,
        DataFit::l1(y)?,
    ])
}

fn toy_op() -> Result<BoundedOperator> {
    BoundedOperator::new(Arc::new(toy_matrix()))
}

fn adjoints() -> Result<(bool, String)> {
    let mut rng = Stream::new(11);
    let ops: Vec<Box<dyn LinearOperator>> = vec![
        Box::new(GaussianBlur::standard(16, 16)?),
        Box::new(Haar::new(16, 16, 3)?),
        Box::new(Grad2d::new(8, 8)?),
    ];
    let mut worst = 0.0f64;
    for op in &ops {
        let (ir, ic) = op.input_shape();
        let (or, oc) = op.output_shape();
        let x = rng.normal_tensor(ir, ic);
        let y = rng.normal_tensor(or, oc);
        worst = worst.max(adjoint_residual(op.as_ref(), &x, &y)? / (x.norm() * y.norm()));
    }
    Ok((worst <= 1e-12, format!("max relative residual {worst:.2e}")))
}

fn proxes() -> Result<(bool, String)> {
    let mut rng = Stream::new(12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u = 6.0 * rng.uniform() - 3.0;
        let alpha = 0.05 + 2.0 * rng.uniform();
        let y = 0.1 + 2.0 * rng.uniform();
        let bf = prox_scalar_bruteforce(f64::abs, alpha, u, 1e-10)?;
        worst = worst.max((soft_threshold(u, alpha) - bf).abs());
        let kl = |x: f64| if x > 0.0 { y * (y / x).ln() - y + x } else { f64::INFINITY };
        let bf = prox_scalar_bruteforce(kl, alpha, u, 1e-10)?;
        worst = worst.max((kl_prox_scalar(alpha, u, y) - bf).abs());
        let bf = prox_scalar_bruteforce(|x| huber(x, 0.7), alpha, u, 1e-10)?;
        let closed = if u.abs() <= 0.7 + alpha {
            u * 0.7 / (0.7 + alpha)
        } else {
            u - alpha * u.signum()
        };
        worst = worst.max((closed - bf).abs());
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:.2e} over 300 samples")))
}

fn energy() -> Result<(bool, String)> {
    let op = toy_op()?;
    let oracle = oracle_pinv(&toy_matrix(), &Tensor::vector(vec![2.0, 1.0]))?;
    let probes = [Tensor::zeros(2, 1), oracle.u_dagger.expect("pinv returns a dual")];
    let mut worst = f64::NEG_INFINITY;
    for fit in toy_fits()? {
        let mut s = Solver::new(op.clone(), Regularizer::squared_norm(), fit, Schedule::polynomial(1.0, 1.0)?)?;
        worst = worst.max(energy_violation(&mut s, &probes, 500)?);
    }
    Ok((worst <= 1e-9, format!("max violation {worst:.2e}")))
}

fn dissipativity() -> Result<(bool, String)> {
    let op = toy_op()?;
    let mut worst = f64::NEG_INFINITY;
    for fit in toy_fits()? {
        let mut s = Solver::new(op.clone(), Regularizer::squared_norm(), fit, Schedule::polynomial(1.0, 1.0)?)?;
        worst = worst.max(max_increase(&s.run_plain(2000)?.duals()));
    }
    Ok((worst <= 1e-9, format!("max increase {worst:.2e}")))
}

fn rate() -> Result<(bool, String)> {
    let a = toy_matrix();
    let y = Tensor::vector(vec![2.0, 1.0]);
    let oracle = oracle_pinv(&a, &y)?;
    let u_dagger = oracle.u_dagger.expect("pinv returns a dual");
    let schedule = Schedule::polynomial(1.0, 2.0)?;
    let fit = DataFit::huber(y, 1.0)?;
    let modulus = *fit.modulus();
    let lambdas = |k: usize| schedule.value(k);
    let n0 = first_admissible_index(&modulus, u_dagger.norm(), lambdas, 10_000)
        .ok_or_else(|| crate::error::Error::Numerical("no admissible index".into()))?;
    let mut s = Solver::new(toy_op()?, Regularizer::squared_norm(), fit, schedule.clone())?;
    let mut u_n0 = s.state().u.clone();
    let mut worst = 0.0f64;
    let mut c = f64::NAN;
    for n in 1..=2000usize {
        s.step()?;
        if n == n0 {
            u_n0 = s.state().u.clone();
        }
        if n == n0.max(1) {
            let u_start = if n0 == 0 { Tensor::zeros(2, 1) } else { u_n0.clone() };
            c = rate_constant(&u_start, &u_dagger, s.tau(), 1.0, &modulus, lambdas, n0)?;
        }
        if n > n0 {
            let ratio = s.state().x.distance(&oracle.x_dagger) * ((n - n0) as f64).sqrt() / c;
            worst = worst.max(ratio);
        }
    }
    Ok((worst <= 1.0, format!("N = {n0}, max ‖x_n − x†‖·√(n−N)/C = {worst:.3}")))
}

fn stability() -> Result<(bool, String)> {
    let op = toy_op()?;
    let y = Tensor::vector(vec![2.0, 1.0]);
    let reg = Regularizer::squared_norm();
    let schedule = Schedule::polynomial(1.0, 1.0)?;
    let mut violations = 0;
    for s in [0.1, 0.01] {
        let noisy = Tensor::vector(vec![2.0 + s, 1.0 - 2.0 * s]);
        for (clean, fit) in [
            (DataFit::l1(y.clone())?, DataFit::l1(noisy.clone())?),
            (DataFit::kl(y.clone())?, DataFit::kl(noisy.clone())?),
        ] {
            let r = stability_twin_run(&op, &reg, &clean, &fit, &schedule, 1000)?;
            violations += r.violations(1e-12).len();
        }
    }
    Ok((violations == 0, format!("{violations} violations over 4 twin runs")))
}

/// Least-squares slope of `ln t(δ)` against `ln δ`. A small `a` puts `t(δ)`
/// far above `T`, where the power law is exact up to `O(T/t)`.
pub fn stopping_slope(beta: f64, theta: f64, t0: f64, deltas: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .map(|&d| theoretical_stop(d, beta, theta, 1e-8, 1.0, t0).map(|t| (d.ln(), t.t.ln())))
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn stopping_exponent() -> Result<(bool, String)> {
    let (beta, theta) = (1.0, 0.5);
    let slope = stopping_slope(beta, theta, 3.0, &[1e-1, 1e-2, 1e-3, 1e-4])?;
    let expected = -2.0 / (3.0 + 2.0 * beta * theta);
    Ok((
        (slope - expected).abs() <= 1e-3,
        format!("slope {slope:.5}, expected {expected:.5}"),
    ))
}

fn toy_convergence() -> Result<(bool, String)> {
    let fit = DataFit::square(Tensor::vector(vec![2.0, 1.0]))?;
    let mut s = Solver::new(toy_op()?, Regularizer::squared_norm(), fit, Schedule::polynomial(1.0, 1.0)?)?;
    s.run_plain(10_000)?;
    let err = s.state().x.distance(&Tensor::vector(vec![1.0, 1.0]));
    Ok((err <= 1e-3, format!("‖x_10000 − (1,1)‖ = {err:.3e}")))
}

pub fn run_suite() -> Vec<Check> {
    vec![
        check("operator adjoints", adjoints()),
        check("prox closed forms", proxes()),
        check("energy estimate", energy()),
        check("dissipativity", dissipativity()),
        check("rate envelope", rate()),
        check("stability bound", stability()),
        check("stopping exponent", stopping_exponent()),
        check("toy convergence", toy_convergence()),
    ]
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "{tag}  {:width$}  {}", c.name, c.detail);
    }
    s
}
