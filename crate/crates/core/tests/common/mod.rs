//! Test-side oracles, written without the library's numerical routines.

#![allow(dead_code)]

use std::path::PathBuf;

use ddd_core::ops::Matrix;
use ddd_core::rng::Stream;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn config_path(name: &str) -> PathBuf {
    repo_root().join("configs").join(name)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `k` orthonormal vectors of length `n` by Gram–Schmidt on seeded samples.
pub fn orthonormal(rng: &mut Stream, n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    basis
}

/// `U diag(s) Vᵀ` with `U` square orthogonal and `V` having orthonormal
/// columns, so that `‖A‖ = max s` exactly.
pub fn svd_matrix(rows: usize, cols: usize, s: &[f64], seed: u64) -> Vec<Vec<f64>> {
    assert_eq!(s.len(), rows.min(cols));
    let mut rng = Stream::new(seed);
    let u = orthonormal(&mut rng, rows, s.len());
    let v = orthonormal(&mut rng, cols, s.len());
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| (0..s.len()).map(|k| u[k][i] * s[k] * v[k][j]).sum())
                .collect()
        })
        .collect()
}

/// The shipped 4×6 test operator with singular values 1, 0.5, 0.2, 0.05.
pub fn underdetermined() -> Vec<Vec<f64>> {
    svd_matrix(4, 6, &[1.0, 0.5, 0.2, 0.05], 2024)
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Matrix::from_rows(&refs).unwrap()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| dot(r, x)).collect()
}

pub fn mat_t_vec(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let cols = a[0].len();
    (0..cols).map(|j| a.iter().zip(y).map(|(r, yi)| r[j] * yi).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    x
}

/// Minimal-norm solution and dual solution for a full-row-rank matrix:
/// `u† = −(AAᵀ)⁻¹y`, `x† = −Aᵀu†`.
pub fn min_norm(a: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gram: Vec<Vec<f64>> = a.iter().map(|r| a.iter().map(|s| dot(r, s)).collect()).collect();
    let u: Vec<f64> = solve_linear(gram, y.to_vec()).into_iter().map(|v| -v).collect();
    let x: Vec<f64> = mat_t_vec(a, &u).into_iter().map(|v| -v).collect();
    (x, u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Square,
    L1,
    Huber(f64),
    Kl,
    L1L2(f64, f64),
}

pub fn huber(t: f64, sigma: f64) -> f64 {
    let a = t.abs();
    if a <= sigma {
        a * a / (2.0 * sigma)
    } else {
        a - sigma / 2.0
    }
}

/// `D(z; y)` from the textbook formulas.
pub fn loss_value(loss: Loss, z: &[f64], y: &[f64]) -> f64 {
    z.iter()
        .zip(y)
        .map(|(&zi, &yi)| {
            let t = zi - yi;
            match loss {
                Loss::Square => 0.5 * t * t,
                Loss::L1 => t.abs(),
                Loss::Huber(s) => huber(t, s),
                Loss::Kl => {
                    if zi > 0.0 {
                        yi * (yi / zi).ln() - yi + zi
                    } else {
                        f64::INFINITY
                    }
                }
                Loss::L1L2(a1, a2) => a1 * t.abs() + 0.5 * a2 * t * t,
            }
        })
        .sum()
}

/// `D*(λu)/λ` from the textbook conjugates, `+∞` off the domain.
pub fn loss_conj_scaled(loss: Loss, u: &[f64], y: &[f64], lambda: f64) -> f64 {
    const BOX: f64 = 1e-12;
    let mut s = 0.0;
    for (&ui, &yi) in u.iter().zip(y) {
        let w = lambda * ui;
        s += match loss {
            Loss::Square => yi * ui + 0.5 * lambda * ui * ui,
            Loss::L1 if w.abs() <= 1.0 + BOX => yi * ui,
            Loss::Huber(sig) if w.abs() <= 1.0 + BOX => yi * ui + 0.5 * sig * lambda * ui * ui,
            Loss::Kl if w < 1.0 => -yi * (-w).ln_1p() / lambda,
            Loss::L1L2(a1, a2) => {
                let e = (w.abs() - a1).max(0.0);
                yi * ui + e * e / (2.0 * a2 * lambda)
            }
            _ => return f64::INFINITY,
        };
    }
    s
}

/// `d_λ(u) = ½‖Aᵀu‖² + D*(λu)/λ` for `R = ½‖·‖²`.
pub fn dual_value(a: &[Vec<f64>], loss: Loss, y: &[f64], u: &[f64], lambda: f64) -> f64 {
    let atu = mat_t_vec(a, u);
    0.5 * dot(&atu, &atu) + loss_conj_scaled(loss, u, y, lambda)
}

/// Minimizer of a unimodal scalar function on `[lo, hi]`: a 20001-point
/// scan, then golden-section refinement around the best grid point.
pub fn scalar_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const N: usize = 20_000;
    let h = (hi - lo) / N as f64;
    let k = (0..=N)
        .min_by(|&i, &j| f(lo + i as f64 * h).total_cmp(&f(lo + j as f64 * h)))
        .unwrap();
    let (mut a, mut b) = (lo + k.saturating_sub(1) as f64 * h, lo + (k + 1).min(N) as f64 * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 * (1.0 + a.abs()) {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
