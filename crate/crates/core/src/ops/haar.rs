use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

use super::LinearOperator;

/// Orthogonal multilevel Haar analysis.
///
/// Column vectors and single-row images use the 1-D transform; other images
/// use the separable 2-D transform, recursing on the approximation block.
/// Within each processed segment the approximation coefficients come first
/// and the details follow.
#[derive(Debug, Clone)]
pub struct Haar {
    rows: usize,
    cols: usize,
    levels: usize,
}

impl Haar {
    pub fn new(rows: usize, cols: usize, levels: usize) -> Result<Self> {
        let block = 1usize
            .checked_shl(levels as u32)
            .ok_or_else(|| Error::config(format!("{levels} Haar levels is too many")))?;
        let check = |n: usize, what: &str| {
            if n == 0 || n % block != 0 {
                Err(Error::dim(format!(
                    "{what} {n} is not divisible by 2^{levels}"
                )))
            } else {
                Ok(())
            }
        };
        if rows == 0 || cols == 0 {
            return Err(Error::dim("empty Haar domain"));
        }
        if cols == 1 {
            check(rows, "length")?;
        } else if rows == 1 {
            check(cols, "length")?;
        } else {
            check(rows, "rows")?;
            check(cols, "cols")?;
        }
        Ok(Haar { rows, cols, levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn is_1d(&self) -> bool {
        self.rows == 1 || self.cols == 1
    }
}

/// One analysis step on `n` entries spaced by `stride`, using `buf` as scratch.
fn forward_step(data: &mut [f64], start: usize, stride: usize, n: usize, buf: &mut [f64]) {
    let half = n / 2;
    for k in 0..half {
        let a = data[start + 2 * k * stride];
        let b = data[start + (2 * k + 1) * stride];
        buf[k] = (a + b) * FRAC_1_SQRT_2;
        buf[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
    for k in 0..n {
        data[start + k * stride] = buf[k];
    }
}

fn inverse_step(data: &mut [f64], start: usize, stride: usize, n: usize, buf: &mut [f64]) {
    let half = n / 2;
    for k in 0..half {
        let s = data[start + k * stride];
        let d = data[start + (half + k) * stride];
        buf[2 * k] = (s + d) * FRAC_1_SQRT_2;
        buf[2 * k + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    for k in 0..n {
        data[start + k * stride] = buf[k];
    }
}

impl LinearOperator for Haar {
    fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        let mut buf = vec![0.0; self.rows.max(self.cols)];
        if self.is_1d() {
            let mut n = x.len();
            for _ in 0..self.levels {
                forward_step(out, 0, 1, n, &mut buf);
                n /= 2;
            }
            return;
        }
        let (mut r, mut c) = (self.rows, self.cols);
        for _ in 0..self.levels {
            for i in 0..r {
                forward_step(out, i * self.cols, 1, c, &mut buf);
            }
            for j in 0..c {
                forward_step(out, j, self.cols, r, &mut buf);
            }
            r /= 2;
            c /= 2;
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        if self.levels == 0 {
            return;
        }
        let mut buf = vec![0.0; self.rows.max(self.cols)];
        let shift = self.levels - 1;
        if self.is_1d() {
            let mut n = y.len() >> shift;
            for _ in 0..self.levels {
                inverse_step(out, 0, 1, n, &mut buf);
                n *= 2;
            }
            return;
        }
        let (mut r, mut c) = (self.rows >> shift, self.cols >> shift);
        for _ in 0..self.levels {
            for j in 0..c {
                inverse_step(out, j, self.cols, r, &mut buf);
            }
            for i in 0..r {
                inverse_step(out, i * self.cols, 1, c, &mut buf);
            }
            r *= 2;
            c *= 2;
        }
    }
}
