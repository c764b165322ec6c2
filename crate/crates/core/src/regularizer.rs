//! Strongly convex regularizers, accessed through `∇R*`.

use std::fmt;
use std::sync::Arc;

use crate::convex::{conj_value_via_grad, soft_threshold, ExtReal};
use crate::error::{Error, Result};
use crate::ops::{Grad2d, LinearOperator};
use crate::rng::Stream;
use crate::tensor::Tensor;

/// Tolerance of the isometry test applied to analysis dictionaries.
pub const ISOMETRY_TOL: f64 = 1e-8;

/// Budget for the inner TV prox solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvInner {
    pub iters: usize,
    pub tol: f64,
}

impl Default for TvInner {
    fn default() -> Self {
        TvInner {
            iters: 50,
            tol: 1e-6,
        }
    }
}

#[derive(Clone)]
enum Kind {
    SquaredNorm,
    L1Analysis {
        w: Arc<dyn LinearOperator>,
        mu: f64,
    },
    TvQuad {
        mu: f64,
        inner: TvInner,
    },
}

/// A σ_R-strongly convex regularizer.
#[derive(Clone)]
pub struct Regularizer {
    kind: Kind,
    sigma_r: f64,
}

impl fmt::Debug for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::SquaredNorm => f.write_str("SquaredNorm"),
            Kind::L1Analysis { w, mu } => f
                .debug_struct("L1Analysis")
                .field("w", w)
                .field("mu", mu)
                .field("sigma", &self.sigma_r)
                .finish(),
            Kind::TvQuad { mu, inner } => f
                .debug_struct("TvQuad")
                .field("mu", mu)
                .field("sigma", &self.sigma_r)
                .field("inner", inner)
                .finish(),
        }
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::config(format!("{what} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Anisotropic TV prox `argmin_x ½‖x − z‖² + w‖∇x‖₁` by projected gradient on
/// the dual field `p` (`x = z + div p`, `‖p‖_∞ ≤ w`, step 1/8), starting from
/// `p = 0`. Stops after `inner.iters` steps or once `‖Δp‖ ≤ tol·‖p‖`.
pub fn tv_prox(z: &Tensor, w: f64, inner: TvInner) -> Result<Tensor> {
    let (r, c) = z.shape();
    let g = Grad2d::new(r, c)?;
    let mut p = vec![0.0; 2 * r * c];
    let mut x = z.as_slice().to_vec();
    let mut gx = vec![0.0; 2 * r * c];
    let mut div = vec![0.0; r * c];
    for _ in 0..inner.iters {
        g.apply_into(&x, &mut gx);
        let mut change = 0.0;
        let mut size = 0.0;
        for (pk, gk) in p.iter_mut().zip(&gx) {
            let next = (*pk + 0.125 * gk).clamp(-w, w);
            change += (next - *pk) * (next - *pk);
            size += next * next;
            *pk = next;
        }
        g.adjoint_into(&p, &mut div);
        for ((xk, zk), dk) in x.iter_mut().zip(z.as_slice()).zip(&div) {
            *xk = zk - dk;
        }
        if change <= inner.tol * inner.tol * size {
            break;
        }
    }
    Tensor::from_vec(r, c, x)
}

impl Regularizer {
    /// `½‖x‖²`, with `∇R*` the identity.
    pub fn squared_norm() -> Self {
        Regularizer {
            kind: Kind::SquaredNorm,
            sigma_r: 1.0,
        }
    }

    /// `μ‖Wx‖₁ + (σ/2)‖x‖²` for an orthogonal `W`, checked on seeded samples.
    pub fn l1_analysis(w: Arc<dyn LinearOperator>, mu: f64, sigma: f64) -> Result<Self> {
        positive(mu, "l1 weight")?;
        positive(sigma, "quadratic weight")?;
        let (r, c) = w.input_shape();
        if w.output_shape() != (r, c) {
            return Err(Error::config("analysis operator must be square"));
        }
        let mut rng = Stream::new(0x0a11_7715);
        for _ in 0..3 {
            let x = rng.normal_tensor(r, c);
            let wx = w.apply(&x)?;
            let back = w.adjoint(&wx)?;
            let scale = x.norm();
            if (wx.norm() - scale).abs() > ISOMETRY_TOL * scale
                || back.distance(&x) > ISOMETRY_TOL * scale
            {
                return Err(Error::config("analysis operator is not orthogonal"));
            }
        }
        Ok(Regularizer {
            kind: Kind::L1Analysis { w, mu },
            sigma_r: sigma,
        })
    }

    /// `μ‖∇x‖₁ + (σ/2)‖x‖²` with the forward-difference gradient.
    pub fn tv_quad(mu: f64, sigma: f64, inner: TvInner) -> Result<Self> {
        positive(mu, "TV weight")?;
        positive(sigma, "quadratic weight")?;
        if inner.iters == 0 {
            return Err(Error::config("TV inner solver needs at least one iteration"));
        }
        if !(inner.tol >= 0.0) {
            return Err(Error::config("TV inner tolerance must be nonnegative"));
        }
        Ok(Regularizer {
            kind: Kind::TvQuad { mu, inner },
            sigma_r: sigma,
        })
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    pub fn inner_cfg(&self) -> Option<TvInner> {
        match self.kind {
            Kind::TvQuad { inner, .. } => Some(inner),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::SquaredNorm => "squared_norm",
            Kind::L1Analysis { .. } => "l1_analysis",
            Kind::TvQuad { .. } => "tv_quad",
        }
    }

    /// Fails when the regularizer cannot act on tensors of this shape.
    pub fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        match &self.kind {
            Kind::SquaredNorm => Ok(()),
            Kind::L1Analysis { w, .. } => {
                if w.input_shape() != shape {
                    return Err(Error::dim(format!(
                        "dictionary acts on {:?}, primal space is {shape:?}",
                        w.input_shape()
                    )));
                }
                Ok(())
            }
            Kind::TvQuad { .. } => Grad2d::new(shape.0, shape.1).map(|_| ()),
        }
    }

    pub fn value(&self, x: &Tensor) -> Result<ExtReal> {
        let quad = 0.5 * self.sigma_r * x.norm_sq();
        let v = match &self.kind {
            Kind::SquaredNorm => quad,
            Kind::L1Analysis { w, mu } => mu * w.apply(x)?.norm_l1() + quad,
            Kind::TvQuad { mu, .. } => {
                let g = Grad2d::new(x.rows(), x.cols())?;
                mu * g.apply(x)?.norm_l1() + quad
            }
        };
        Ok(ExtReal::Finite(v))
    }

    pub fn grad_conj(&self, v: &Tensor) -> Result<Tensor> {
        let s = self.sigma_r;
        match &self.kind {
            Kind::SquaredNorm => Ok(v.clone()),
            Kind::L1Analysis { w, mu } => {
                let mut c = w.apply(v)?;
                let thr = mu / s;
                c.map_inplace(|t| soft_threshold(t / s, thr));
                w.adjoint(&c)
            }
            Kind::TvQuad { mu, inner } => tv_prox(&v.scale(1.0 / s), mu / s, *inner),
        }
    }

    /// `R*(v)` through the Fenchel–Young equality at `∇R*(v)`.
    pub fn conj_value(&self, v: &Tensor) -> Result<ExtReal> {
        let x = self.grad_conj(v)?;
        let rx = self.value(&x)?;
        Ok(conj_value_via_grad(|_| rx, |_| x.clone(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::prox_scalar_bruteforce;
    use crate::ops::{Haar, Identity};

    #[test]
    fn squared_norm_examples() {
        let r = Regularizer::squared_norm();
        let v = Tensor::vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(r.grad_conj(&v).unwrap(), v);
        assert_eq!(r.value(&v.zeros_like()).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(r.conj_value(&v).unwrap(), ExtReal::Finite(7.0));
    }

    #[test]
    fn l1_analysis_examples() {
        let id: Arc<dyn LinearOperator> = Arc::new(Identity::new(2, 1));
        let r = Regularizer::l1_analysis(id, 1.0, 1.0).unwrap();
        assert_eq!(r.grad_conj(&Tensor::vector(vec![0.0, 0.0])).unwrap().norm(), 0.0);
        assert_eq!(
            r.grad_conj(&Tensor::vector(vec![2.0, 0.0])).unwrap().as_slice(),
            &[1.0, 0.0]
        );

        let haar = Arc::new(Haar::new(8, 8, 2).unwrap());
        let r = Regularizer::l1_analysis(haar.clone(), 0.3, 2.0).unwrap();
        let x = Stream::new(1).normal_tensor(8, 8);
        let direct = r.value(&x).unwrap().to_f64();
        let via = 0.3 * haar.apply(&x).unwrap().norm_l1() + x.norm_sq();
        assert!((direct - via).abs() < 1e-12);
    }

    #[test]
    fn l1_analysis_rejects_non_orthogonal() {
        let d: Arc<dyn LinearOperator> =
            Arc::new(crate::ops::Diagonal::new(vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            Regularizer::l1_analysis(d, 1.0, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tv_examples() {
        let r = Regularizer::tv_quad(0.5, 2.0, TvInner::default()).unwrap();
        assert_eq!(r.grad_conj(&Tensor::zeros(4, 4)).unwrap().norm(), 0.0);
        let c = r.grad_conj(&Tensor::filled(4, 4, 3.0)).unwrap();
        assert!(c.as_slice().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }

    #[test]
    fn tv_two_block_matches_long_run() {
        let z = Tensor::from_fn(4, 4, |_, j| if j < 2 { 1.0 } else { 0.0 });
        let long = tv_prox(&z, 0.2, TvInner { iters: 100_000, tol: 0.0 }).unwrap();
        let short = tv_prox(&z, 0.2, TvInner { iters: 10_000, tol: 0.0 }).unwrap();
        assert!(long.distance(&short) < 1e-6);
        // each two-column block moves by w/2 toward the other
        assert!((long.get(0, 0) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn tv_two_pixel_matches_scalar_oracle() {
        let w = 0.3;
        for (a, b) in [(0.0, 1.0), (0.2, 0.1), (-1.0, 2.0)] {
            let z = Tensor::from_vec(1, 2, vec![a, b]).unwrap();
            let x = tv_prox(&z, w, TvInner { iters: 100_000, tol: 0.0 }).unwrap();
            let d = prox_scalar_bruteforce(|t: f64| t.abs(), 2.0 * w, b - a, 1e-10).unwrap();
            let m = 0.5 * (a + b);
            assert!((x[0] - (m - 0.5 * d)).abs() < 1e-6);
            assert!((x[1] - (m + 0.5 * d)).abs() < 1e-6);
        }
    }

    #[test]
    fn tv_rejects_bad_budget() {
        assert!(Regularizer::tv_quad(1.0, 1.0, TvInner { iters: 0, tol: 0.0 }).is_err());
    }
}
