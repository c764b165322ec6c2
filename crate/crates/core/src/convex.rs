//! Convex-calculus primitives: extended reals, scalar proxes, conjugates via
//! Fenchel–Young, and conditioning moduli.

use std::fmt;
use std::ops::Add;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A real number or `+∞`. Arithmetic saturates at `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    /// Maps `+inf` to `PosInf`; other values are kept as they are.
    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(v)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(v) if v.is_finite())
    }

    pub fn is_inf(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// Multiplication by a nonnegative scalar, with `0·∞ = 0`.
    pub fn scale(self, s: f64) -> Self {
        debug_assert!(s >= 0.0);
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(s * v),
            ExtReal::PosInf if s == 0.0 => ExtReal::Finite(0.0),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

/// `sign(t)·max(|t| − a, 0)`, the prox of `a|·|`.
pub fn soft_threshold(t: f64, a: f64) -> f64 {
    if t > a {
        t - a
    } else if t < -a {
        t + a
    } else {
        0.0
    }
}

pub fn soft_threshold_tensor(u: &Tensor, a: f64) -> Tensor {
    u.map(|t| soft_threshold(t, a))
}

/// Componentwise clamp to `[-r, r]`, the projection onto the ∞-ball.
pub fn project_linf_ball(u: &Tensor, r: f64) -> Tensor {
    u.map(|t| t.clamp(-r, r))
}

/// Minimizes `α·f(x) + ½(x − u)²` numerically.
///
/// A uniform grid over `[u − 10(1+α), u + 10(1+α)]` locates the minimizer up
/// to one cell; golden-section search then narrows the bracket to `tol`.
/// `f` may return `+inf` outside its domain.
pub fn prox_scalar_bruteforce(
    f: impl Fn(f64) -> f64,
    alpha: f64,
    u: f64,
    tol: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("prox scale must be positive, got {alpha}")));
    }
    let fv = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let half = 10.0 * (1.0 + alpha);
    let (lo, hi) = (u - half, u + half);
    const CELLS: usize = 4000;
    let h = (hi - lo) / CELLS as f64;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..=CELLS {
        let x = lo + k as f64 * h;
        let v = alpha * fv(x) + 0.5 * (x - u) * (x - u);
        if v < best.0 {
            best = (v, k);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::domain(
            "function is not finite anywhere on the search interval",
        ));
    }
    // objective(c) − objective(d), arranged so that nearby points cancel
    // without forming the two objective values separately
    let left_wins = |c: f64, fc: f64, d: f64, fd: f64| {
        if fc.is_infinite() || fd.is_infinite() {
            return fc <= fd;
        }
        alpha * (fc - fd) + 0.5 * (c - d) * ((c - u) + (d - u)) <= 0.0
    };
    let mut a = lo + best.1.saturating_sub(1) as f64 * h;
    let mut b = lo + (best.1 + 1).min(CELLS) as f64 * h;
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (fv(c), fv(d));
    while b - a > tol {
        if left_wins(c, fc, d, fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = fv(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = fv(d);
        }
    }
    Ok(0.5 * (a + b))
}

/// `f*(v) = ⟨v, x⟩ − f(x)` at `x = ∇f*(v)`.
///
/// If `f(x) = +∞` the gradient was not exact; the result is reported as `+∞`.
pub fn conj_value_via_grad(
    f_value: impl Fn(&Tensor) -> ExtReal,
    grad_f_conj: impl Fn(&Tensor) -> Tensor,
    v: &Tensor,
) -> ExtReal {
    let x = grad_f_conj(v);
    match f_value(&x) {
        ExtReal::Finite(fx) => ExtReal::Finite(v.dot(&x) - fx),
        ExtReal::PosInf => ExtReal::PosInf,
    }
}

/// `‖prox_f(x) + prox_{f*}(x) − x‖`, which vanishes for a conjugate pair.
pub fn moreau_check(
    prox_f: impl Fn(&Tensor) -> Tensor,
    prox_f_conj: impl Fn(&Tensor) -> Tensor,
    x: &Tensor,
) -> f64 {
    let mut r = prox_f(x);
    r.axpy(1.0, &prox_f_conj(x));
    r.axpy(-1.0, x);
    r.norm()
}

/// Closed forms behind a [`ConditioningModulus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulusShape {
    /// `|t|^p / p`, conjugate `|t|^q / q` with `1/p + 1/q = 1`; `p > 1`.
    Power { p: f64 },
    /// `|t|`, conjugate the indicator of `[-1, 1]`.
    Absolute,
    /// `|t| − c·ln(1 + |t|/c)`, conjugate `−c(|t| + ln(1 − |t|))` on `(-1, 1)`.
    KlLog { c: f64 },
    /// Huber function `h_σ`, conjugate `δ_[-1,1] + σt²/2`.
    Huber { sigma: f64 },
    /// `a1|t| + a2 t²/2`, conjugate `(|t| − a1)₊² / (2 a2)`.
    AbsPlusQuadratic { a1: f64, a2: f64 },
}

/// An even growth function `m` with `m(‖x − x₀‖) ≤ f(x) − f(x₀)` around a
/// minimizer, and the local bound `m(t) ≥ (γ/p)|t|^p` for `|t| < ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningModulus {
    pub shape: ModulusShape,
    pub p: f64,
    pub gamma: f64,
    pub eps: f64,
}

pub fn huber(t: f64, sigma: f64) -> f64 {
    let a = t.abs();
    if a <= sigma {
        a * a / (2.0 * sigma)
    } else {
        a - 0.5 * sigma
    }
}

impl ConditioningModulus {
    pub fn power(p: f64) -> Self {
        ConditioningModulus {
            shape: ModulusShape::Power { p },
            p,
            gamma: 1.0,
            eps: f64::INFINITY,
        }
    }

    pub fn absolute() -> Self {
        ConditioningModulus {
            shape: ModulusShape::Absolute,
            p: 1.0,
            gamma: 1.0,
            eps: f64::INFINITY,
        }
    }

    /// Uses `γ = 1/(2c)` on `|t| < c`. `m(t)` stays strictly below `t²/(2c)`
    /// for `t ≠ 0`, so the leading Taylor coefficient is not a lower bound.
    pub fn kl(c: f64) -> Self {
        ConditioningModulus {
            shape: ModulusShape::KlLog { c },
            p: 2.0,
            gamma: 1.0 / (2.0 * c),
            eps: c,
        }
    }

    pub fn huber(sigma: f64) -> Self {
        ConditioningModulus {
            shape: ModulusShape::Huber { sigma },
            p: 2.0,
            gamma: 1.0 / sigma,
            eps: sigma,
        }
    }

    pub fn abs_plus_quadratic(a1: f64, a2: f64) -> Self {
        ConditioningModulus {
            shape: ModulusShape::AbsPlusQuadratic { a1, a2 },
            p: 2.0,
            gamma: a2,
            eps: f64::INFINITY,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let a = t.abs();
        match self.shape {
            ModulusShape::Power { p } => a.powf(p) / p,
            ModulusShape::Absolute => a,
            ModulusShape::KlLog { c } => a - c * (a / c).ln_1p(),
            ModulusShape::Huber { sigma } => huber(a, sigma),
            ModulusShape::AbsPlusQuadratic { a1, a2 } => a1 * a + 0.5 * a2 * a * a,
        }
    }

    pub fn eval_conj(&self, t: f64) -> ExtReal {
        let a = t.abs();
        match self.shape {
            ModulusShape::Power { p } => {
                let q = p / (p - 1.0);
                ExtReal::Finite(a.powf(q) / q)
            }
            ModulusShape::Absolute => {
                if a <= 1.0 {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::PosInf
                }
            }
            ModulusShape::KlLog { c } => {
                if a < 1.0 {
                    ExtReal::Finite(-c * (a + (-a).ln_1p()))
                } else {
                    ExtReal::PosInf
                }
            }
            ModulusShape::Huber { sigma } => {
                if a <= 1.0 {
                    ExtReal::Finite(0.5 * sigma * a * a)
                } else {
                    ExtReal::PosInf
                }
            }
            ModulusShape::AbsPlusQuadratic { a1, a2 } => {
                let e = (a - a1).max(0.0);
                ExtReal::Finite(e * e / (2.0 * a2))
            }
        }
    }

    /// Radius of the interior of `dom m*` (`+∞` when `m*` is finite everywhere).
    pub fn conj_domain_radius(&self) -> f64 {
        match self.shape {
            ModulusShape::Power { .. } | ModulusShape::AbsPlusQuadratic { .. } => f64::INFINITY,
            ModulusShape::Absolute | ModulusShape::KlLog { .. } | ModulusShape::Huber { .. } => {
                1.0
            }
        }
    }
}
