use crate::error::{Error, Result};

use super::LinearOperator;

/// 2-D convolution with a normalized sampled Gaussian and half-sample
/// symmetric boundary extension (`x[-1] = x[0]`, `x[n] = x[n-1]`).
///
/// The kernel `exp(-(i² + j²) / (2v))` factors into two 1-D passes. Under
/// this boundary rule each pass is a symmetric, doubly stochastic matrix, so
/// constants are preserved and the operator norm is exactly 1.
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    rows: usize,
    cols: usize,
    kernel: Vec<f64>,
}

fn reflect(idx: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if idx < 0 {
        -idx - 1
    } else if idx >= n {
        2 * n - idx - 1
    } else {
        idx
    };
    r as usize
}

impl GaussianBlur {
    pub fn new(rows: usize, cols: usize, size: usize, variance: f64) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(Error::config(format!("kernel size must be odd, got {size}")));
        }
        if !(variance > 0.0) {
            return Err(Error::config(format!("kernel variance must be positive, got {variance}")));
        }
        if rows < size || cols < size {
            return Err(Error::dim(format!(
                "{rows}x{cols} image is smaller than the {size}x{size} kernel"
            )));
        }
        let h = (size / 2) as isize;
        let mut kernel: Vec<f64> = (-h..=h)
            .map(|k| (-((k * k) as f64) / (2.0 * variance)).exp())
            .collect();
        let s: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= s);
        Ok(GaussianBlur { rows, cols, kernel })
    }

    /// The standard 9×9, variance 10 blur.
    pub fn standard(rows: usize, cols: usize) -> Result<Self> {
        GaussianBlur::new(rows, cols, 9, 10.0)
    }

    /// Normalized 1-D factor; the 2-D kernel is its outer product.
    pub fn kernel_1d(&self) -> &[f64] {
        &self.kernel
    }

    fn pass_rows(&self, src: &[f64], dst: &mut [f64], transpose: bool) {
        let h = (self.kernel.len() / 2) as isize;
        let (r, c) = (self.rows, self.cols);
        if transpose {
            dst.fill(0.0);
        }
        for i in 0..r {
            let s = &src[i * c..(i + 1) * c];
            let d = &mut dst[i * c..(i + 1) * c];
            for j in 0..c {
                if transpose {
                    let v = s[j];
                    for (k, w) in self.kernel.iter().enumerate() {
                        d[reflect(j as isize + k as isize - h, c)] += w * v;
                    }
                } else {
                    d[j] = self
                        .kernel
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * s[reflect(j as isize + k as isize - h, c)])
                        .sum();
                }
            }
        }
    }

    fn pass_cols(&self, src: &[f64], dst: &mut [f64], transpose: bool) {
        let h = (self.kernel.len() / 2) as isize;
        let (r, c) = (self.rows, self.cols);
        if transpose {
            dst.fill(0.0);
            for i in 0..r {
                for (k, w) in self.kernel.iter().enumerate() {
                    let ii = reflect(i as isize + k as isize - h, r);
                    for j in 0..c {
                        dst[ii * c + j] += w * src[i * c + j];
                    }
                }
            }
        } else {
            dst.fill(0.0);
            for i in 0..r {
                for (k, w) in self.kernel.iter().enumerate() {
                    let ii = reflect(i as isize + k as isize - h, r);
                    for j in 0..c {
                        dst[i * c + j] += w * src[ii * c + j];
                    }
                }
            }
        }
    }
}

impl LinearOperator for GaussianBlur {
    fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; x.len()];
        self.pass_rows(x, &mut tmp, false);
        self.pass_cols(&tmp, out, false);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; y.len()];
        self.pass_cols(y, &mut tmp, true);
        self.pass_rows(&tmp, out, true);
    }
}
