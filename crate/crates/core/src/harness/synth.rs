//! Seeded ground-truth images with values in `[0, 1]`.

use crate::rng::Stream;
use crate::tensor::Tensor;

use super::config::Generator;

pub fn generate(kind: Generator, rows: usize, cols: usize, seed: u64) -> Tensor {
    match kind {
        Generator::Blocks => blocks(rows, cols, seed),
        Generator::Bumps => bumps(rows, cols, seed),
        Generator::Checkerboard => checkerboard(rows, cols),
    }
}

/// Overlapping axis-aligned rectangles of constant intensity on a dark
/// background.
pub fn blocks(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = Stream::new(seed);
    let mut img = Tensor::filled(rows, cols, 0.1);
    for _ in 0..8 {
        let h = 1 + rows / 8 + rng.index_below(rows / 3 + 1);
        let w = 1 + cols / 8 + rng.index_below(cols / 3 + 1);
        let i0 = rng.index_below(rows.saturating_sub(h) + 1);
        let j0 = rng.index_below(cols.saturating_sub(w) + 1);
        let v = 0.3 + 0.6 * rng.uniform();
        for i in i0..(i0 + h).min(rows) {
            for j in j0..(j0 + w).min(cols) {
                img.set(i, j, v);
            }
        }
    }
    img
}

/// A sum of Gaussian bumps rescaled to `[0.05, 0.95]`.
pub fn bumps(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = Stream::new(seed);
    let centers: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let ci = rng.uniform() * rows as f64;
            let cj = rng.uniform() * cols as f64;
            let width = (0.05 + 0.1 * rng.uniform()) * rows.max(cols) as f64;
            let amp = 0.5 + 0.5 * rng.uniform();
            (ci, cj, width, amp)
        })
        .collect();
    let img = Tensor::from_fn(rows, cols, |i, j| {
        centers
            .iter()
            .map(|&(ci, cj, w, a)| {
                let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                a * (-d2 / (2.0 * w * w)).exp()
            })
            .sum()
    });
    let (lo, hi) = (img.min(), img.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    img.map(|v| 0.05 + 0.9 * (v - lo) / span)
}

/// Alternating 8×8 squares at 0.25 and 0.75.
pub fn checkerboard(rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |i, j| {
        if (i / 8 + j / 8) % 2 == 0 {
            0.25
        } else {
            0.75
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_stay_in_unit_range_and_are_seeded() {
        for g in [Generator::Blocks, Generator::Bumps, Generator::Checkerboard] {
            let a = generate(g, 64, 64, 5);
            assert_eq!(a.shape(), (64, 64));
            assert!(a.min() >= 0.0 && a.max() <= 1.0);
            assert_eq!(a, generate(g, 64, 64, 5));
        }
        assert_ne!(blocks(32, 32, 1), blocks(32, 32, 2));
    }
}
