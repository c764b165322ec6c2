mod common;

use std::sync::Arc;

use proptest::prelude::*;

use common::{dist, loss_value, Loss};
use ddd_core::convex::{moreau_check, project_linf_ball, soft_threshold, soft_threshold_tensor};
use ddd_core::datafit::kl_prox_scalar;
use ddd_core::ops::{adjoint_residual, GaussianBlur, Grad2d, Haar, LinearOperator};
use ddd_core::pgm::{self, PgmFormat};
use ddd_core::regularizer::TvInner;
use ddd_core::rng::Stream;
use ddd_core::stopping::{gtg, select_by_min_slope, theoretical_stop};
use ddd_core::{DataFit, Regularizer, Schedule, Tensor};

fn fit(loss: Loss, y: Vec<f64>) -> DataFit {
    let y = Tensor::vector(y);
    match loss {
        Loss::Square => DataFit::square(y),
        Loss::L1 => DataFit::l1(y),
        Loss::Huber(s) => DataFit::huber(y, s),
        Loss::Kl => DataFit::kl(y),
        Loss::L1L2(a, b) => DataFit::l1l2(y, a, b),
    }
    .unwrap()
}

fn loss_strategy() -> impl Strategy<Value = Loss> {
    prop_oneof![
        Just(Loss::Square),
        Just(Loss::L1),
        (0.1f64..3.0).prop_map(Loss::Huber),
        Just(Loss::Kl),
        (0.1f64..2.0, 0.1f64..2.0).prop_map(|(a, b)| Loss::L1L2(a, b)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn soft_threshold_moreau(xs in prop::collection::vec(-10.0f64..10.0, 1..20), alpha in 0.01f64..5.0) {
        let x = Tensor::vector(xs);
        let r = moreau_check(
            |v| soft_threshold_tensor(v, alpha),
            |v| project_linf_ball(v, alpha),
            &x,
        );
        prop_assert!(r <= 1e-12);
    }

    #[test]
    fn scalar_proxes_are_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, alpha in 0.01f64..5.0, y in 0.01f64..5.0) {
        prop_assert!((soft_threshold(a, alpha) - soft_threshold(b, alpha)).abs() <= (a - b).abs() + 1e-15);
        let d = (kl_prox_scalar(alpha, a, y) - kl_prox_scalar(alpha, b, y)).abs();
        prop_assert!(d <= (a - b).abs() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn operators_are_adjoint(r in 2usize..6, c in 2usize..6, seed in any::<u64>()) {
        let (rows, cols) = (8 * r, 8 * c);
        let ops: Vec<Box<dyn LinearOperator>> = vec![
            Box::new(GaussianBlur::new(rows, cols, 5, 2.0).unwrap()),
            Box::new(Haar::new(rows, cols, 3).unwrap()),
            Box::new(Grad2d::new(rows, cols).unwrap()),
        ];
        let mut rng = Stream::new(seed);
        for op in &ops {
            let (ir, ic) = op.input_shape();
            let (or, oc) = op.output_shape();
            let x = rng.normal_tensor(ir, ic);
            let y = rng.normal_tensor(or, oc);
            prop_assert!(adjoint_residual(op.as_ref(), &x, &y).unwrap() <= 1e-10 * x.norm() * y.norm());
        }
        let h = Haar::new(rows, cols, 3).unwrap();
        let x = rng.normal_tensor(rows, cols);
        prop_assert!((h.apply(&x).unwrap().norm() - x.norm()).abs() <= 1e-10 * x.norm());
    }

    #[test]
    fn datafit_is_minimal_at_the_datum(loss in loss_strategy(), ys in prop::collection::vec(0.1f64..3.0, 1..8), seed in any::<u64>()) {
        let f = fit(loss, ys.clone());
        let y = Tensor::vector(ys.clone());
        prop_assert!(f.value(&y).to_f64().abs() <= 1e-12);
        let mut rng = Stream::new(seed);
        let z: Vec<f64> = ys.iter().map(|v| (v + rng.normal()).abs() + 1e-3).collect();
        let dz = f.value(&Tensor::vector(z.clone())).to_f64();
        prop_assert!(dz >= -1e-12);
        prop_assert!((dz - loss_value(loss, &z, &ys)).abs() <= 1e-10 * (1.0 + dz));
    }

    #[test]
    fn datafit_fenchel_young(loss in loss_strategy(), ys in prop::collection::vec(0.1f64..3.0, 1..8), seed in any::<u64>()) {
        let f = fit(loss, ys.clone());
        let mut rng = Stream::new(seed);
        let z = Tensor::vector(ys.iter().map(|v| (v + rng.normal()).abs() + 1e-3).collect());
        let v = Tensor::vector(ys.iter().map(|_| 0.9 * (2.0 * rng.uniform() - 1.0)).collect());
        let lhs = f.value(&z).to_f64() + f.conj_value(&v).to_f64();
        prop_assert!(lhs >= z.dot(&v) - 1e-10);
    }

    #[test]
    fn scaled_conjugate_grows_with_lambda(loss in loss_strategy(), ys in prop::collection::vec(0.1f64..3.0, 1..6), seed in any::<u64>(), l1 in 0.01f64..1.0, l2 in 0.01f64..1.0) {
        let f = fit(loss, ys);
        let mut rng = Stream::new(seed);
        let u = Tensor::vector((0..f.y().len()).map(|_| 0.9 * (2.0 * rng.uniform() - 1.0)).collect());
        let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
        let a = f.conj_value(&u.scale(lo)).to_f64() / lo;
        let b = f.conj_value(&u.scale(hi)).to_f64() / hi;
        prop_assert!(a <= b + 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn prox_perturbation_bounds(ys in prop::collection::vec(0.1f64..3.0, 1..6), seed in any::<u64>(), alpha in 0.01f64..10.0) {
        let mut rng = Stream::new(seed);
        let yh: Vec<f64> = ys.iter().map(|v| v * (0.5 * rng.normal()).exp()).collect();
        let u = Tensor::vector(ys.iter().map(|_| 5.0 * rng.normal()).collect());
        let (a, b) = (fit(Loss::L1, ys.clone()), fit(Loss::L1, yh.clone()));
        let gap = a.prox_phi(alpha, &u).distance(&b.prox_phi(alpha, &u));
        prop_assert!(gap <= dist(&ys, &yh) + 1e-12);
        let (a, b) = (fit(Loss::Kl, ys.clone()), fit(Loss::Kl, yh.clone()));
        let gap = a.prox_phi(alpha, &u).distance(&b.prox_phi(alpha, &u));
        let rs: Vec<f64> = ys.iter().map(|v| v.sqrt()).collect();
        let rh: Vec<f64> = yh.iter().map(|v| v.sqrt()).collect();
        prop_assert!(gap <= alpha.sqrt() * dist(&rs, &rh) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn min_slope_is_shift_invariant(curve in prop::collection::vec(-5.0f64..5.0, 30..80), shift in -100.0f64..100.0, w in 1usize..8) {
        let shifted: Vec<f64> = curve.iter().map(|v| v + shift).collect();
        let a = select_by_min_slope(&curve, w);
        let b = select_by_min_slope(&shifted, w);
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(i), Ok(j)) = (a, b) {
            // ties are resolved with a relative tolerance, so allow a tie swap
            let slope = |c: &[f64], k: usize| c[k + 1] - c[k - 1];
            prop_assert!(i == j || (slope(&curve, i) - slope(&curve, j)).abs() <= 1e-9);
        }
    }

    #[test]
    fn gtg_is_homogeneous(xs in prop::collection::vec(-3.0f64..3.0, 1..20), s in -5.0f64..5.0, seed in any::<u64>()) {
        let truth = Tensor::vector(xs);
        let e = Stream::new(seed).normal_tensor(truth.len(), 1);
        let mut a = truth.clone();
        a.axpy(s, &e);
        let mut b = truth.clone();
        b.axpy(1.0, &e);
        let lhs = gtg(&a, &truth).unwrap();
        let rhs = s.abs() * gtg(&b, &truth).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn regularizer_gradients_are_cocoercive(seed in any::<u64>(), mu in 0.01f64..1.0, sigma in 0.2f64..3.0) {
        let regs = [
            Regularizer::squared_norm(),
            Regularizer::l1_analysis(Arc::new(Haar::new(8, 8, 2).unwrap()), mu, sigma).unwrap(),
            Regularizer::tv_quad(mu, sigma, TvInner { iters: 2000, tol: 1e-12 }).unwrap(),
        ];
        let mut rng = Stream::new(seed);
        for r in &regs {
            let v1 = rng.normal_tensor(8, 8);
            let v2 = rng.normal_tensor(8, 8);
            let g1 = r.grad_conj(&v1).unwrap();
            let g2 = r.grad_conj(&v2).unwrap();
            let dg = &g1 - &g2;
            let lhs = dg.dot(&(&v1 - &v2));
            prop_assert!(lhs >= r.sigma_r() * dg.norm_sq() - 1e-6 * (1.0 + lhs.abs()), "{}", r.name());
        }
    }

    #[test]
    fn vanilla_schedule_is_monotone(lmax in 0.5f64..50.0, ratio in 0.001f64..1.0, n in 2usize..500) {
        let s = Schedule::vanilla_exp(lmax, lmax * ratio, n).unwrap();
        prop_assert_eq!(s.len(), Some(n));
        prop_assert!((s.value(0).unwrap() - lmax).abs() <= 1e-12 * lmax);
        prop_assert!((s.value(n - 1).unwrap() - lmax * ratio).abs() <= 1e-9 * lmax);
        for k in 1..n {
            prop_assert!(s.value(k).unwrap() <= s.value(k - 1).unwrap());
        }
        prop_assert_eq!(s.value(n), None);
    }

    #[test]
    fn pgm_roundtrip_of_quantized_grids(r in 1usize..12, c in 1usize..12, seed in any::<u64>(), binary in any::<bool>()) {
        let mut rng = Stream::new(seed);
        let img = Tensor::from_fn(r, c, |_, _| rng.index_below(256) as f64 / 255.0);
        let format = if binary { PgmFormat::Binary } else { PgmFormat::Ascii };
        let (back, _) = pgm::decode(&pgm::encode(&img, format, 255).unwrap()).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn stopping_time_solves_its_equation(delta in 1e-6f64..1.0, beta in 0.0f64..3.0, theta in 0.0f64..1.0, a in 0.01f64..10.0, b in 0.01f64..10.0, t0 in 0.0f64..20.0) {
        let st = theoretical_stop(delta, beta, theta, a, b, t0).unwrap();
        let alpha = beta * theta;
        let c1 = b / (2.0 * a * (1.0 + alpha));
        let eta = st.t.powf(alpha) * (st.t - t0).powf(1.5);
        prop_assert!((eta * delta - c1).abs() <= 1e-9 * c1);
        prop_assert_eq!(st.n, st.t.ceil() as usize);
    }
}
