//! Data-fit terms `D(·; y) = ψ_y # φ_y`.
//!
//! The iteration touches a loss only through `∇ψ_y*` (smooth part, with
//! `ψ_y` σ_ψ-strongly convex) and `prox_{αφ_y}` (nonsmooth part). A factor
//! equal to the indicator of `{0}` is represented by `σ_ψ = +∞` with a zero
//! gradient, or by a prox that always returns zero.

use serde::{Deserialize, Serialize};

use crate::convex::{huber, soft_threshold, ConditioningModulus, ExtReal};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance applied to box constraints `‖v‖_∞ ≤ 1` in conjugate values.
pub const DUAL_BOX_TOL: f64 = 1e-12;

/// Lower clamp on the KL prox output.
pub const KL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Square,
    L1,
    Kl,
    Huber,
    L1l2,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::L1 => "l1",
            LossKind::Kl => "kl",
            LossKind::Huber => "huber",
            LossKind::L1l2 => "l1l2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Loss {
    /// `½‖u − y‖²`: `ψ = D`, `φ = δ_{0}`.
    Square,
    /// `‖u − y‖₁`: `ψ = δ_{0}`, `φ = D`.
    L1,
    /// `KL(y, u)`: `ψ = δ_{0}`, `φ = D`.
    Kl,
    /// `Σ h_σ(u − y)`: `ψ = ‖· − y‖²/(2σ)`, `φ = ‖·‖₁`.
    Huber { sigma: f64 },
    /// `a1‖u − y‖₁ + (a2/2)‖u − y‖²`: `ψ = D`, `φ = δ_{0}`.
    L1L2 { a1: f64, a2: f64 },
}

/// A data-fit term bound to its datum `y`.
#[derive(Debug, Clone)]
pub struct DataFit {
    loss: Loss,
    y: Tensor,
    modulus: ConditioningModulus,
}

fn check_finite(y: &Tensor) -> Result<()> {
    if y.is_empty() || !y.is_finite() {
        return Err(Error::domain("datum must be nonempty and finite"));
    }
    Ok(())
}

fn positive(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("{what} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// `Σ_j y_j ln(y_j/u_j) − y_j + u_j`, `+∞` off the positive orthant.
pub fn kl_divergence(y: &[f64], u: &[f64]) -> ExtReal {
    let mut s = 0.0;
    for (&yj, &uj) in y.iter().zip(u) {
        if !(uj > 0.0) {
            return ExtReal::PosInf;
        }
        s += yj * (yj / uj).ln() - yj + uj;
    }
    ExtReal::Finite(s)
}

/// `argmin_x α·kl(y, x) + ½(x − u)²`, evaluated without cancellation.
pub fn kl_prox_scalar(alpha: f64, u: f64, y: f64) -> f64 {
    let a = u - alpha;
    let disc = (a * a + 4.0 * alpha * y).sqrt();
    let x = if a >= 0.0 {
        0.5 * (a + disc)
    } else {
        2.0 * alpha * y / (disc - a)
    };
    x.max(KL_FLOOR)
}

fn within_box(v: &Tensor) -> bool {
    v.norm_inf() <= 1.0 + DUAL_BOX_TOL
}

impl DataFit {
    pub fn square(y: Tensor) -> Result<Self> {
        check_finite(&y)?;
        Ok(DataFit {
            loss: Loss::Square,
            y,
            modulus: ConditioningModulus::power(2.0),
        })
    }

    pub fn l1(y: Tensor) -> Result<Self> {
        check_finite(&y)?;
        Ok(DataFit {
            loss: Loss::L1,
            y,
            modulus: ConditioningModulus::absolute(),
        })
    }

    /// Requires a strictly positive datum. The modulus uses `c = d·‖y‖_∞`.
    pub fn kl(y: Tensor) -> Result<Self> {
        check_finite(&y)?;
        if let Some(v) = y.as_slice().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::domain(format!("KL datum must be positive, found {v}")));
        }
        let c = y.len() as f64 * y.norm_inf();
        Ok(DataFit {
            loss: Loss::Kl,
            y,
            modulus: ConditioningModulus::kl(c),
        })
    }

    pub fn huber(y: Tensor, sigma: f64) -> Result<Self> {
        check_finite(&y)?;
        positive(sigma, "Huber parameter")?;
        Ok(DataFit {
            loss: Loss::Huber { sigma },
            y,
            modulus: ConditioningModulus::huber(sigma),
        })
    }

    pub fn l1l2(y: Tensor, a1: f64, a2: f64) -> Result<Self> {
        check_finite(&y)?;
        positive(a1, "l1 weight")?;
        positive(a2, "l2 weight")?;
        Ok(DataFit {
            loss: Loss::L1L2 { a1, a2 },
            y,
            modulus: ConditioningModulus::abs_plus_quadratic(a1, a2),
        })
    }

    /// Same loss and parameters with a different datum.
    pub fn with_datum(&self, y: Tensor) -> Result<Self> {
        if y.shape() != self.y.shape() {
            return Err(Error::dim("replacement datum has a different shape"));
        }
        match self.loss {
            Loss::Square => DataFit::square(y),
            Loss::L1 => DataFit::l1(y),
            Loss::Kl => DataFit::kl(y),
            Loss::Huber { sigma } => DataFit::huber(y, sigma),
            Loss::L1L2 { a1, a2 } => DataFit::l1l2(y, a1, a2),
        }
    }

    pub fn kind(&self) -> LossKind {
        match self.loss {
            Loss::Square => LossKind::Square,
            Loss::L1 => LossKind::L1,
            Loss::Kl => LossKind::Kl,
            Loss::Huber { .. } => LossKind::Huber,
            Loss::L1L2 { .. } => LossKind::L1l2,
        }
    }

    pub fn y(&self) -> &Tensor {
        &self.y
    }

    pub fn modulus(&self) -> &ConditioningModulus {
        &self.modulus
    }

    /// Strong-convexity constant of `ψ_y`; `+∞` when `ψ_y = δ_{0}`.
    pub fn sigma_psi(&self) -> f64 {
        match self.loss {
            Loss::Square => 1.0,
            Loss::L1 | Loss::Kl => f64::INFINITY,
            Loss::Huber { sigma } => 1.0 / sigma,
            Loss::L1L2 { a2, .. } => a2,
        }
    }

    /// True when `φ_y = δ_{0}`, i.e. the prox is identically zero.
    pub fn phi_is_zero(&self) -> bool {
        matches!(self.loss, Loss::Square | Loss::L1L2 { .. })
    }

    pub fn grad_psi_conj(&self, u: &Tensor) -> Tensor {
        let y = &self.y;
        match self.loss {
            Loss::Square => u + y,
            Loss::L1 | Loss::Kl => u.zeros_like(),
            Loss::Huber { sigma } => u.zip_map(y, |a, b| b + sigma * a),
            Loss::L1L2 { a1, a2 } => u.zip_map(y, |a, b| b + soft_threshold(a / a2, a1 / a2)),
        }
    }

    /// `prox_{αφ_y}(u)` for `α > 0`.
    pub fn prox_phi(&self, alpha: f64, u: &Tensor) -> Tensor {
        let y = &self.y;
        match self.loss {
            Loss::Square | Loss::L1L2 { .. } => u.zeros_like(),
            Loss::L1 => u.zip_map(y, |a, b| b + soft_threshold(a - b, alpha)),
            Loss::Kl => u.zip_map(y, |a, b| kl_prox_scalar(alpha, a, b)),
            Loss::Huber { .. } => u.map(|a| soft_threshold(a, alpha)),
        }
    }

    pub fn value(&self, u: &Tensor) -> ExtReal {
        let y = &self.y;
        match self.loss {
            Loss::Square => ExtReal::Finite(0.5 * u.distance(y).powi(2)),
            Loss::L1 => ExtReal::Finite((u - y).norm_l1()),
            Loss::Kl => kl_divergence(y.as_slice(), u.as_slice()),
            Loss::Huber { sigma } => ExtReal::Finite(
                u.as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(a, b)| huber(a - b, sigma))
                    .sum(),
            ),
            Loss::L1L2 { a1, a2 } => {
                let r = u - y;
                ExtReal::Finite(a1 * r.norm_l1() + 0.5 * a2 * r.norm_sq())
            }
        }
    }

    /// `ψ_y*(v)`.
    pub fn psi_conj_value(&self, v: &Tensor) -> ExtReal {
        let y = &self.y;
        match self.loss {
            Loss::Square => ExtReal::Finite(v.dot(y) + 0.5 * v.norm_sq()),
            Loss::L1 | Loss::Kl => ExtReal::Finite(0.0),
            Loss::Huber { sigma } => ExtReal::Finite(v.dot(y) + 0.5 * sigma * v.norm_sq()),
            Loss::L1L2 { a1, a2 } => ExtReal::Finite(
                v.dot(y)
                    + v.as_slice()
                        .iter()
                        .map(|t| (t.abs() - a1).max(0.0).powi(2) / (2.0 * a2))
                        .sum::<f64>(),
            ),
        }
    }

    /// `φ_y*(v)`.
    pub fn phi_conj_value(&self, v: &Tensor) -> ExtReal {
        let y = &self.y;
        match self.loss {
            Loss::Square | Loss::L1L2 { .. } => ExtReal::Finite(0.0),
            Loss::L1 => {
                if within_box(v) {
                    ExtReal::Finite(v.dot(y))
                } else {
                    ExtReal::PosInf
                }
            }
            Loss::Kl => {
                let mut s = 0.0;
                for (&vj, &yj) in v.as_slice().iter().zip(y.as_slice()) {
                    if !(vj < 1.0) {
                        return ExtReal::PosInf;
                    }
                    s -= yj * (-vj).ln_1p();
                }
                ExtReal::Finite(s)
            }
            Loss::Huber { .. } => {
                if within_box(v) {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::PosInf
                }
            }
        }
    }

    /// `D_y*(v) = ψ_y*(v) + φ_y*(v)`.
    pub fn conj_value(&self, v: &Tensor) -> ExtReal {
        self.psi_conj_value(v) + self.phi_conj_value(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn square_examples() {
        let y = t(&[1.0, -2.0]);
        let d = DataFit::square(y.clone()).unwrap();
        assert_eq!(d.grad_psi_conj(&t(&[0.0, 0.0])), y);
        assert_eq!(d.modulus().eval(2.0), 2.0);
        assert_eq!(d.modulus().eval_conj(2.0), ExtReal::Finite(2.0));
        assert_eq!(d.value(&t(&[2.0, -2.0])), ExtReal::Finite(0.5));
        assert_eq!(d.conj_value(&t(&[0.0, 0.0])), ExtReal::Finite(0.0));
        assert_eq!(d.prox_phi(0.7, &t(&[3.0, 4.0])).norm(), 0.0);
        assert_eq!(d.sigma_psi(), 1.0);
    }

    #[test]
    fn l1_examples() {
        let y = t(&[0.5, 1.0]);
        let d = DataFit::l1(y.clone()).unwrap();
        for a in [0.1, 1.0, 10.0] {
            assert_eq!(d.prox_phi(a, &y), y);
        }
        assert_eq!(d.prox_phi(1.0, &t(&[2.5, 1.0])), t(&[1.5, 1.0]));
        assert_eq!(d.modulus().eval_conj(0.5), ExtReal::Finite(0.0));
        assert!(d.modulus().eval_conj(1.5).is_inf());
        assert_eq!(d.conj_value(&t(&[0.5, -1.0])), ExtReal::Finite(-0.75));
        assert!(d.conj_value(&t(&[0.5, -1.1])).is_inf());
        assert!(d.sigma_psi().is_infinite());
    }

    #[test]
    fn kl_examples() {
        let d = DataFit::kl(t(&[4.0])).unwrap();
        assert!((d.prox_phi(1.0, &t(&[1.0]))[0] - 2.0).abs() < 1e-15);
        assert_eq!(d.modulus().eval(0.0), 0.0);
        assert_eq!(d.modulus().eval_conj(0.0), ExtReal::Finite(0.0));
        let d1 = DataFit::kl(t(&[1.0])).unwrap();
        assert!((d1.modulus().eval_conj(0.5).to_f64() - 0.193_147_180_559_945_3).abs() < 1e-12);
        // sup_x 0.5x − kl(1,x) = −ln(1 − 0.5)
        assert!((d1.conj_value(&t(&[0.5])).to_f64() - 2f64.ln()).abs() < 1e-15);
        assert!(d1.conj_value(&t(&[1.0])).is_inf());
        assert!(DataFit::kl(t(&[1.0, 0.0])).is_err());
        assert!(d1.value(&t(&[0.0])).is_inf());
    }

    #[test]
    fn kl_prox_is_stable_for_large_negative_input() {
        let x = kl_prox_scalar(1.0, -1e9, 1e-3);
        assert!(x > 0.0);
        // x ≈ αy/(α − u) for u → −∞
        assert!((x - 1e-3 / (1.0 + 1e9)).abs() / x < 1e-9);
    }

    #[test]
    fn huber_examples() {
        let y = t(&[0.3]);
        let d = DataFit::huber(y.clone(), 1.0).unwrap();
        assert_eq!(d.value(&y), ExtReal::Finite(0.0));
        assert!((d.value(&t(&[0.8])).to_f64() - 0.125).abs() < 1e-15);
        assert!((d.value(&t(&[2.3])).to_f64() - 1.5).abs() < 1e-15);
        assert!(d.modulus().eval_conj(2.0).is_inf());
        assert_eq!(d.prox_phi(1.0, &t(&[2.0])), t(&[1.0]));
    }

    #[test]
    fn huber_value_is_inf_convolution() {
        // inf_z (1/2σ)(z − y)² + |u − z| by brute force over z
        let sigma = 0.4;
        let y = 0.2;
        let d = DataFit::huber(t(&[y]), sigma).unwrap();
        for u in [-2.0, -0.3, 0.1, 0.35, 0.9, 3.0] {
            let bf = (0..=200_000)
                .map(|k| {
                    let z = -5.0 + 10.0 * k as f64 / 200_000.0;
                    (z - y) * (z - y) / (2.0 * sigma) + (u - z).abs()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((d.value(&t(&[u])).to_f64() - bf).abs() < 1e-6);
        }
    }

    #[test]
    fn l1l2_examples() {
        let d = DataFit::l1l2(t(&[0.0]), 1.0, 1.0).unwrap();
        assert_eq!(d.grad_psi_conj(&t(&[0.0])), t(&[0.0]));
        assert_eq!(d.grad_psi_conj(&t(&[3.0])), t(&[2.0]));
        assert_eq!(d.value(&t(&[0.0])), ExtReal::Finite(0.0));
        let y = t(&[1.0, 2.0]);
        let d = DataFit::l1l2(y.clone(), 0.5, 2.0).unwrap();
        assert_eq!(d.grad_psi_conj(&t(&[0.0, 0.0])), y);
        assert_eq!(d.sigma_psi(), 2.0);
    }

    #[test]
    fn with_datum_keeps_parameters() {
        let d = DataFit::huber(t(&[0.0, 0.0]), 0.3).unwrap();
        let e = d.with_datum(t(&[1.0, 1.0])).unwrap();
        assert_eq!(e.kind(), LossKind::Huber);
        assert_eq!(e.sigma_psi(), d.sigma_psi());
        assert!(d.with_datum(t(&[1.0])).is_err());
    }
}
