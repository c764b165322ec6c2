//! Numerical checks of the convergence and stability estimates, plus a dense
//! oracle for small problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::convex::{ConditioningModulus, ExtReal};
use crate::error::{Error, Result};
use crate::ops::{BoundedOperator, Matrix};
use crate::regularizer::Regularizer;
use crate::solver::Solver;
use crate::tensor::Tensor;

/// Largest problem size accepted by the oracle.
pub const ORACLE_MAX_DIM: usize = 64;
pub const ORACLE_MAX_ITERS: usize = 1_000_000;
pub const ORACLE_TOL: f64 = 1e-12;
/// Feasibility tolerance `‖A x† − y‖`.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Terms below this end a tail sum.
pub const TAIL_TERM_TOL: f64 = 1e-15;
pub const TAIL_MAX_TERMS: usize = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Pinv,
    HighaccDual,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x_dagger: Tensor,
    pub u_dagger: Option<Tensor>,
    pub method: OracleMethod,
}

fn to_dmatrix(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

/// Moore–Penrose pseudoinverse of a symmetric positive semidefinite matrix.
fn psd_pinv(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = top * 1e-12 * eig.eigenvalues.len() as f64;
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

fn check_dims(a: &Matrix, y: &Tensor) -> Result<()> {
    if a.rows() > ORACLE_MAX_DIM || a.cols() > ORACLE_MAX_DIM {
        return Err(Error::dim(format!(
            "oracle is limited to {ORACLE_MAX_DIM} rows and columns"
        )));
    }
    y.ensure_shape((a.rows(), 1), "oracle datum")
}

fn check_feasible(a: &Matrix, x: &Tensor, y: &Tensor) -> Result<()> {
    use crate::ops::LinearOperator;
    let r = a.apply(x)?.distance(y);
    if r > FEASIBILITY_TOL {
        return Err(Error::Oracle(format!(
            "datum is not in the range of the operator (residual {r:.3e})"
        )));
    }
    Ok(())
}

/// Minimal-norm solution `x† = (AᵀA)⁺Aᵀy` and dual `u† = −(AAᵀ)⁺y`.
pub fn oracle_pinv(a: &Matrix, y: &Tensor) -> Result<OracleSolution> {
    check_dims(a, y)?;
    let am = to_dmatrix(a);
    let yv = DVector::from_column_slice(y.as_slice());
    let x = psd_pinv(am.transpose() * &am) * am.transpose() * &yv;
    let u = -(psd_pinv(&am * am.transpose()) * &yv);
    let x_dagger = Tensor::vector(x.as_slice().to_vec());
    check_feasible(a, &x_dagger, y)?;
    Ok(OracleSolution {
        x_dagger,
        u_dagger: Some(Tensor::vector(u.as_slice().to_vec())),
        method: OracleMethod::Pinv,
    })
}

/// Gradient descent on `d_∞(u) = R*(−Aᵀu) + ⟨y, u⟩` with step
/// `σ_R/‖A‖²`, stopped once `‖y − A∇R*(−Aᵀu)‖ ≤ 1e-12`.
pub fn oracle_dual(op: &BoundedOperator, y: &Tensor, reg: &Regularizer) -> Result<OracleSolution> {
    let (m, c) = op.output_shape();
    let (n, _) = op.input_shape();
    if m * c > ORACLE_MAX_DIM || n * op.input_shape().1 > ORACLE_MAX_DIM {
        return Err(Error::dim(format!("oracle is limited to dimension {ORACLE_MAX_DIM}")));
    }
    y.ensure_shape(op.output_shape(), "oracle datum")?;
    reg.check_shape(op.input_shape())?;
    let norm = op.norm_upper();
    if norm == 0.0 {
        return Err(Error::Oracle("zero operator".into()));
    }
    let step = reg.sigma_r() / (norm * norm);
    let mut u = Tensor::zeros(m, c);
    for _ in 0..ORACLE_MAX_ITERS {
        let x = reg.grad_conj(&-&op.adjoint(&u)?)?;
        let mut g = y.clone();
        g.axpy(-1.0, &op.apply(&x)?);
        if !g.is_finite() {
            return Err(Error::Oracle("dual ascent produced non-finite values".into()));
        }
        if g.norm() <= ORACLE_TOL {
            return Ok(OracleSolution {
                x_dagger: x,
                u_dagger: Some(u),
                method: OracleMethod::HighaccDual,
            });
        }
        u.axpy(-step, &g);
    }
    Err(Error::Oracle(format!(
        "dual ascent did not reach residual {ORACLE_TOL:e} in {ORACLE_MAX_ITERS} steps"
    )))
}

/// Pseudoinverse route for the squared norm, dual ascent otherwise.
pub fn oracle_solve(a: &Matrix, y: &Tensor, reg: &Regularizer) -> Result<OracleSolution> {
    check_dims(a, y)?;
    if reg.name() == "squared_norm" {
        return oracle_pinv(a, y);
    }
    let op = BoundedOperator::new(std::sync::Arc::new(a.clone()))?;
    oracle_dual(&op, y, reg)
}

/// First index `N` with `r·λ_N` strictly inside the domain of `m*`.
pub fn first_admissible_index(
    modulus: &ConditioningModulus,
    r: f64,
    lambdas: impl Fn(usize) -> Option<f64>,
    limit: usize,
) -> Option<usize> {
    let radius = modulus.conj_domain_radius();
    (0..limit)
        .map_while(|k| lambdas(k).map(|l| (k, l)))
        .find(|&(_, l)| r * l < radius)
        .map(|(k, _)| k)
}

/// `Σ_{n ≥ N} m*(r λ_n)/λ_n`, truncated once a term drops below 1e-15 or the
/// sequence ends.
pub fn tail_sum(
    modulus: &ConditioningModulus,
    r: f64,
    lambdas: impl Fn(usize) -> Option<f64>,
    n_start: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    for k in n_start..n_start.saturating_add(TAIL_MAX_TERMS) {
        let Some(l) = lambdas(k) else {
            return Ok(sum);
        };
        let term = match modulus.eval_conj(r * l) {
            ExtReal::Finite(v) => v / l,
            ExtReal::PosInf => {
                return Err(Error::domain(format!(
                    "r·λ_{k} = {} lies outside the domain of m*",
                    r * l
                )))
            }
        };
        sum += term;
        if term < TAIL_TERM_TOL {
            return Ok(sum);
        }
    }
    Err(Error::Numerical(format!(
        "tail sum did not settle within {TAIL_MAX_TERMS} terms"
    )))
}

/// `C = sqrt(‖u_N − u†‖²/(τσ_R) + (2/σ_R) Σ_{n≥N} m*(‖u†‖λ_n)/λ_n)`.
pub fn rate_constant(
    u_n: &Tensor,
    u_dagger: &Tensor,
    tau: f64,
    sigma_r: f64,
    modulus: &ConditioningModulus,
    lambdas: impl Fn(usize) -> Option<f64>,
    n_start: usize,
) -> Result<f64> {
    let tail = tail_sum(modulus, u_dagger.norm(), lambdas, n_start)?;
    let first = u_n.distance(u_dagger).powi(2) / (tau * sigma_r);
    Ok((first + 2.0 * tail / sigma_r).sqrt())
}

/// `sqrt(2(d_∞(u) − inf d)/σ_R)`, an upper bound on `‖∇R*(−Aᵀu) − x†‖`.
pub fn primal_gap_bound(
    u: &Tensor,
    op: &BoundedOperator,
    reg: &Regularizer,
    y: &Tensor,
    inf_d: f64,
) -> Result<f64> {
    if !inf_d.is_finite() {
        return Err(Error::config("inf d must be finite"));
    }
    let d = reg.conj_value(&-&op.adjoint(u)?)? + u.dot(y);
    let gap = match d {
        ExtReal::Finite(v) => v - inf_d,
        ExtReal::PosInf => return Ok(f64::INFINITY),
    };
    if gap < -1e-12 {
        return Err(Error::Numerical(format!(
            "dual value lies {:.3e} below its infimum",
            -gap
        )));
    }
    Ok((2.0 * gap.max(0.0) / reg.sigma_r()).sqrt())
}

/// Runs `steps` iterations and returns the largest violation of
/// `(‖u_{n+1} − p‖² − ‖u_n − p‖²)/(2τ) ≤ d_n(p) − d_n(u_{n+1})` over the
/// probes `p`. Non-positive means the estimate held everywhere.
pub fn energy_violation(solver: &mut Solver, probes: &[Tensor], steps: usize) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..steps {
        if solver.is_exhausted() {
            break;
        }
        let before = solver.state().u.clone();
        let info = solver.step()?;
        let after = &solver.state().u;
        let tau = solver.tau();
        let d_after = info.dual_value;
        for p in probes {
            let lhs = (after.distance(p).powi(2) - before.distance(p).powi(2)) / (2.0 * tau);
            let rhs = match (solver.dual_value(p, info.lambda)?, d_after) {
                (ExtReal::PosInf, _) => continue,
                (ExtReal::Finite(dp), ExtReal::Finite(da)) => dp - da,
                (ExtReal::Finite(_), ExtReal::PosInf) => f64::NEG_INFINITY,
            };
            worst = worst.max(lhs - rhs);
        }
    }
    Ok(worst)
}

/// Largest increase between consecutive entries.
pub fn max_increase(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ops::LinearOperator;

    fn toy() -> Matrix {
        Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn pinv_examples() {
        let id = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let s = oracle_pinv(&id, &Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(s.x_dagger.distance(&Tensor::vector(vec![1.0, 2.0])) < 1e-12);

        let s = oracle_pinv(&toy(), &Tensor::vector(vec![2.0, 1.0])).unwrap();
        assert!(s.x_dagger.distance(&Tensor::vector(vec![1.0, 1.0])) < 1e-12);

        let wide = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let s = oracle_pinv(&wide, &Tensor::vector(vec![3.0])).unwrap();
        assert!(s.x_dagger.distance(&Tensor::vector(vec![3.0, 0.0])) < 1e-12);
        let u = s.u_dagger.unwrap();
        let x = -&wide.adjoint(&u).unwrap();
        assert!(x.distance(&s.x_dagger) < 1e-12);
    }

    #[test]
    fn pinv_rejects_inconsistent_data() {
        let tall = Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        assert!(matches!(
            oracle_pinv(&tall, &Tensor::vector(vec![1.0, 2.0])),
            Err(Error::Oracle(_))
        ));
    }

    #[test]
    fn dual_oracle_matches_pinv() {
        let a = toy();
        let y = Tensor::vector(vec![2.0, 1.0]);
        let op = BoundedOperator::new(Arc::new(a.clone())).unwrap();
        let d = oracle_dual(&op, &y, &Regularizer::squared_norm()).unwrap();
        let p = oracle_pinv(&a, &y).unwrap();
        assert!(d.x_dagger.distance(&p.x_dagger) < 1e-10);
        assert!(d.u_dagger.unwrap().distance(&p.u_dagger.unwrap()) < 1e-9);
    }

    #[test]
    fn tail_sum_geometric() {
        let m = ConditioningModulus::power(2.0);
        let (l0, rho) = (2.0, 0.5f64);
        let lam = |k: usize| Some(l0 * rho.powi(k as i32));
        for n in [0usize, 3, 7] {
            let s = tail_sum(&m, 1.0, lam, n).unwrap();
            let exact = 0.5 * l0 * rho.powi(n as i32) / (1.0 - rho);
            assert!((s - exact).abs() < 1e-14);
        }
        assert!(tail_sum(&m, 1.0, lam, 3).unwrap() <= tail_sum(&m, 1.0, lam, 2).unwrap());
    }

    #[test]
    fn tail_sum_box_and_domain() {
        let abs = ConditioningModulus::absolute();
        assert_eq!(tail_sum(&abs, 0.5, |k| Some(1.0 / (k + 1) as f64), 0).unwrap(), 0.0);
        let kl = ConditioningModulus::kl(1.0);
        assert!(matches!(
            tail_sum(&kl, 2.0, |k| Some(1.0 / (k + 1) as f64), 0),
            Err(Error::Domain(_))
        ));
        assert_eq!(
            first_admissible_index(&kl, 2.0, |k| Some(1.0 / (k + 1) as f64), 100),
            Some(2)
        );
    }

    #[test]
    fn rate_constant_examples() {
        let u = Tensor::vector(vec![1.0, 2.0]);
        let abs = ConditioningModulus::absolute();
        let lam = |_: usize| None;
        assert_eq!(rate_constant(&u, &u, 0.5, 1.0, &abs, lam, 0).unwrap(), 0.0);
        let ud = Tensor::vector(vec![0.0, 0.0]);
        let u2 = u.scale(2.0);
        let c1 = rate_constant(&u, &ud, 0.5, 1.0, &abs, lam, 0).unwrap();
        let c2 = rate_constant(&u2, &ud, 0.5, 1.0, &abs, lam, 0).unwrap();
        assert!((c2 - 2.0 * c1).abs() < 1e-14);
    }

    #[test]
    fn gap_bound_examples() {
        let a = toy();
        let y = Tensor::vector(vec![2.0, 1.0]);
        let op = BoundedOperator::new(Arc::new(a.clone())).unwrap();
        let s = oracle_pinv(&a, &y).unwrap();
        let ud = s.u_dagger.unwrap();
        let reg = Regularizer::squared_norm();
        let inf_d = (reg.conj_value(&-&a.adjoint(&ud).unwrap()).unwrap() + ud.dot(&y)).to_f64();
        assert!(primal_gap_bound(&ud, &op, &reg, &y, inf_d).unwrap() < 1e-6);
        assert!(matches!(
            primal_gap_bound(&ud, &op, &reg, &y, inf_d + 1.0),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn increase_helper() {
        assert_eq!(max_increase(&[3.0, 2.0, 2.5, 1.0]), 0.5);
    }
}
