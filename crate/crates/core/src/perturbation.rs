//! Noise models, the `(δ, θ)` size of a data perturbation, and twin runs
//! checking the stability bound.

use serde::Serialize;

use crate::datafit::{DataFit, LossKind};
use crate::error::{Error, Result};
use crate::ops::BoundedOperator;
use crate::regularizer::Regularizer;
use crate::rng::Stream;
use crate::solver::{Schedule, Solver};
use crate::tensor::Tensor;

/// Means above this use the normal approximation in Poisson sampling.
pub const POISSON_INVERSION_LIMIT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    Gaussian { variance: f64 },
    SaltPepper { intensity: f64 },
    Poisson { peak: f64 },
    /// Gaussian noise followed by salt and pepper.
    Mixed { variance: f64, intensity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let var_ok = |v: f64| v >= 0.0 && v.is_finite();
        let int_ok = |i: f64| (0.0..=1.0).contains(&i);
        let ok = match self.kind {
            NoiseKind::None => true,
            NoiseKind::Gaussian { variance } => var_ok(variance),
            NoiseKind::SaltPepper { intensity } => int_ok(intensity),
            NoiseKind::Poisson { peak } => peak > 0.0 && peak.is_finite(),
            NoiseKind::Mixed {
                variance,
                intensity,
            } => var_ok(variance) && int_ok(intensity),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid noise parameters {:?}", self.kind)))
        }
    }
}

fn in_unit_range(y: &Tensor) -> Result<()> {
    if y.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::domain("this noise model needs data in [0, 1]"));
    }
    Ok(())
}

fn gaussian(y: &Tensor, variance: f64, rng: &mut Stream) -> Tensor {
    let sd = variance.sqrt();
    y.map(|v| v + sd * rng.normal())
}

/// Sets exactly `round(intensity·d)` distinct entries to 0 or 1.
fn salt_pepper(y: &Tensor, intensity: f64, rng: &mut Stream) -> Tensor {
    let d = y.len();
    let k = (intensity * d as f64).round() as usize;
    let mut out = y.clone();
    for idx in rng.choose_distinct(d, k) {
        out[idx] = if rng.uniform() < 0.5 { 0.0 } else { 1.0 };
    }
    out
}

pub fn poisson_sample(mean: f64, rng: &mut Stream) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean > POISSON_INVERSION_LIMIT {
        return (mean + mean.sqrt() * rng.normal()).round().max(0.0);
    }
    let u = rng.uniform();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0.0;
    while u > cdf && p > 0.0 {
        k += 1.0;
        p *= mean / k;
        cdf += p;
    }
    k
}

/// Corrupts `y` according to `spec`; deterministic in the seed.
pub fn apply_noise(y: &Tensor, spec: &NoiseSpec) -> Result<Tensor> {
    spec.validate()?;
    let mut rng = Stream::new(spec.seed);
    Ok(match spec.kind {
        NoiseKind::None => y.clone(),
        NoiseKind::Gaussian { variance } => gaussian(y, variance, &mut rng),
        NoiseKind::SaltPepper { intensity } => {
            in_unit_range(y)?;
            salt_pepper(y, intensity, &mut rng)
        }
        NoiseKind::Poisson { peak } => {
            in_unit_range(y)?;
            y.map(|v| poisson_sample(peak * v, &mut rng) / peak)
        }
        NoiseKind::Mixed {
            variance,
            intensity,
        } => {
            in_unit_range(y)?;
            let g = gaussian(y, variance, &mut rng);
            salt_pepper(&g, intensity, &mut rng)
        }
    })
}

/// Size of a data perturbation for a given loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationCert {
    pub delta: f64,
    pub theta: f64,
    pub loss_kind: LossKind,
}

/// `δ = ‖y − ŷ‖, θ = 0` for additive-type losses; `δ = ‖√ŷ − √y‖, θ = ½`
/// for KL.
pub fn measure_delta(kind: LossKind, y: &Tensor, y_hat: &Tensor) -> Result<PerturbationCert> {
    if y.shape() != y_hat.shape() {
        return Err(Error::dim("clean and noisy data differ in shape"));
    }
    let (delta, theta) = match kind {
        LossKind::Kl => {
            if y.as_slice().iter().chain(y_hat.as_slice()).any(|v| !(*v > 0.0)) {
                return Err(Error::domain("KL perturbation needs positive data"));
            }
            (y.map(f64::sqrt).distance(&y_hat.map(f64::sqrt)), 0.5)
        }
        _ => (y.distance(y_hat), 0.0),
    };
    Ok(PerturbationCert {
        delta,
        theta,
        loss_kind: kind,
    })
}

/// `(δ/‖A‖)(n + τ^{θ−1} Σ_{k<n} λ_k^{−θ})` for every prefix of `lambdas`.
pub fn stability_bounds(cert: &PerturbationCert, norm_a: f64, tau: f64, lambdas: &[f64]) -> Vec<f64> {
    let scale = cert.delta / norm_a;
    let pre = tau.powf(cert.theta - 1.0);
    let mut sum = 0.0;
    lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            sum += l.powf(-cert.theta);
            scale * ((k + 1) as f64 + pre * sum)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub cert: PerturbationCert,
    pub tau: f64,
    pub lambdas: Vec<f64>,
    /// `‖x_n − x̂_n‖` for `n = 1..`.
    pub gaps: Vec<f64>,
    pub bounds: Vec<f64>,
}

impl StabilityReport {
    /// Steps `n` (1-based) where the gap exceeds the bound by more than `slack`.
    pub fn violations(&self, slack: f64) -> Vec<usize> {
        self.gaps
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .filter(|(_, (g, b))| **g > **b + slack)
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Runs the clean and noisy problems in lockstep for up to `n_max` steps.
pub fn stability_twin_run(
    op: &BoundedOperator,
    reg: &Regularizer,
    clean: &DataFit,
    noisy: &DataFit,
    schedule: &Schedule,
    n_max: usize,
) -> Result<StabilityReport> {
    if clean.kind() != noisy.kind() {
        return Err(Error::config("twin runs need the same loss"));
    }
    let cert = measure_delta(clean.kind(), clean.y(), noisy.y())?;
    let mut a = Solver::new(op.clone(), reg.clone(), clean.clone(), schedule.clone())?;
    let mut b = Solver::new(op.clone(), reg.clone(), noisy.clone(), schedule.clone())?;
    if a.tau() != b.tau() {
        return Err(Error::config("twin runs ended up with different step sizes"));
    }
    let mut lambdas = Vec::new();
    let mut gaps = Vec::new();
    while lambdas.len() < n_max && !a.is_exhausted() {
        let la = a.step()?.lambda;
        let lb = b.step()?.lambda;
        if la != lb {
            return Err(Error::config(format!(
                "schedules diverged at step {}: {la} vs {lb}",
                lambdas.len() + 1
            )));
        }
        lambdas.push(la);
        gaps.push(a.state().x.distance(&b.state().x));
    }
    let bounds = stability_bounds(&cert, op.norm_upper(), a.tau(), &lambdas);
    Ok(StabilityReport {
        cert,
        tau: a.tau(),
        lambdas,
        gaps,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let y = Tensor::from_fn(4, 5, |i, j| (i + j) as f64 / 10.0);
        for kind in [
            NoiseKind::None,
            NoiseKind::Gaussian { variance: 0.0 },
            NoiseKind::SaltPepper { intensity: 0.0 },
            NoiseKind::Mixed {
                variance: 0.0,
                intensity: 0.0,
            },
        ] {
            assert_eq!(apply_noise(&y, &NoiseSpec { kind, seed: 3 }).unwrap(), y);
        }
    }

    #[test]
    fn salt_pepper_count_is_exact() {
        let y = Tensor::filled(10, 10, 0.5);
        let z = apply_noise(
            &y,
            &NoiseSpec {
                kind: NoiseKind::SaltPepper { intensity: 0.35 },
                seed: 1,
            },
        )
        .unwrap();
        let changed = z.as_slice().iter().filter(|&&v| v != 0.5).count();
        assert_eq!(changed, 35);
        assert!(z.as_slice().iter().all(|&v| v == 0.5 || v == 0.0 || v == 1.0));
    }

    #[test]
    fn noise_is_reproducible() {
        let y = Tensor::filled(8, 8, 0.25);
        let spec = NoiseSpec {
            kind: NoiseKind::Mixed {
                variance: 0.01,
                intensity: 0.2,
            },
            seed: 77,
        };
        assert_eq!(apply_noise(&y, &spec).unwrap(), apply_noise(&y, &spec).unwrap());
        let other = NoiseSpec { seed: 78, ..spec };
        assert_ne!(apply_noise(&y, &spec).unwrap(), apply_noise(&y, &other).unwrap());
    }

    #[test]
    fn poisson_mean() {
        let mut rng = Stream::new(4);
        for mean in [0.5, 7.0, 120.0] {
            let n = 20_000;
            let avg = (0..n).map(|_| poisson_sample(mean, &mut rng)).sum::<f64>() / n as f64;
            assert!((avg - mean).abs() < 0.05 * mean.max(1.0), "{mean}: {avg}");
        }
    }

    #[test]
    fn noise_domain_checks() {
        let y = Tensor::filled(2, 2, 1.5);
        let sp = NoiseSpec {
            kind: NoiseKind::SaltPepper { intensity: 0.5 },
            seed: 0,
        };
        assert!(matches!(apply_noise(&y, &sp), Err(Error::Domain(_))));
        let bad = NoiseSpec {
            kind: NoiseKind::Gaussian { variance: -1.0 },
            seed: 0,
        };
        assert!(apply_noise(&Tensor::zeros(2, 2), &bad).is_err());
    }

    #[test]
    fn delta_examples() {
        let y = Tensor::vector(vec![0.0, 0.0]);
        let c = measure_delta(LossKind::L1, &y, &Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!((c.delta, c.theta), (5.0, 0.0));
        let c = measure_delta(LossKind::Square, &y, &y).unwrap();
        assert_eq!(c.delta, 0.0);
        let c = measure_delta(LossKind::Kl, &Tensor::vector(vec![4.0]), &Tensor::vector(vec![9.0])).unwrap();
        assert_eq!((c.delta, c.theta), (1.0, 0.5));
        assert!(measure_delta(LossKind::Kl, &y, &y).is_err());
    }

    #[test]
    fn theta_zero_bound() {
        let cert = PerturbationCert {
            delta: 0.3,
            theta: 0.0,
            loss_kind: LossKind::L1,
        };
        let b = stability_bounds(&cert, 2.0, 0.25, &[1.0, 0.5, 0.1]);
        for (k, v) in b.iter().enumerate() {
            let n = (k + 1) as f64;
            assert!((v - 0.15 * (n + n / 0.25)).abs() < 1e-12);
        }
    }
}
