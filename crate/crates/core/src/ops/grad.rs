use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::LinearOperator;

/// Forward-difference gradient with Neumann boundary.
///
/// An `r×c` image maps to a `2r×c` field: rows `0..r` hold the horizontal
/// differences `x[i,j+1] − x[i,j]`, rows `r..2r` the vertical differences
/// `x[i+1,j] − x[i,j]`. Differences leaving the image are zero.
#[derive(Debug, Clone)]
pub struct Grad2d {
    rows: usize,
    cols: usize,
}

impl Grad2d {
    /// Single-row and single-column images are accepted; one channel is then
    /// identically zero.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows * cols < 2 {
            return Err(Error::dim(format!(
                "gradient needs at least two pixels, got {rows}x{cols}"
            )));
        }
        Ok(Grad2d { rows, cols })
    }

    /// Discrete divergence, the negative adjoint of the gradient.
    pub fn div(&self, p: &Tensor) -> Result<Tensor> {
        let mut out = self.adjoint(p)?;
        out.map_inplace(|v| -v);
        Ok(out)
    }
}

impl LinearOperator for Grad2d {
    fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn output_shape(&self) -> (usize, usize) {
        (2 * self.rows, self.cols)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (r, c) = (self.rows, self.cols);
        let (h, v) = out.split_at_mut(r * c);
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                h[k] = if j + 1 < c { x[k + 1] - x[k] } else { 0.0 };
                v[k] = if i + 1 < r { x[k + c] - x[k] } else { 0.0 };
            }
        }
    }

    fn adjoint_into(&self, p: &[f64], out: &mut [f64]) {
        let (r, c) = (self.rows, self.cols);
        let (h, v) = p.split_at(r * c);
        out.fill(0.0);
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                if j + 1 < c {
                    out[k + 1] += h[k];
                    out[k] -= h[k];
                }
                if i + 1 < r {
                    out[k + c] += v[k];
                    out[k] -= v[k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn constant_has_zero_gradient() {
        let g = Grad2d::new(5, 7).unwrap();
        let p = g.apply(&Tensor::filled(5, 7, 3.0)).unwrap();
        assert_eq!(p.norm(), 0.0);
        assert_eq!(p.shape(), (10, 7));
    }

    #[test]
    fn ramp_gradient() {
        let g = Grad2d::new(4, 4).unwrap();
        let x = Tensor::from_fn(4, 4, |_, j| j as f64);
        let p = g.apply(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(p.get(i, j), if j < 3 { 1.0 } else { 0.0 });
                assert_eq!(p.get(4 + i, j), 0.0);
            }
        }
    }

    #[test]
    fn div_is_negative_adjoint() {
        let mut rng = Stream::new(2);
        for (r, c) in [(6, 5), (1, 9), (9, 1)] {
            let g = Grad2d::new(r, c).unwrap();
            let x = rng.normal_tensor(r, c);
            let p = rng.normal_tensor(2 * r, c);
            let lhs = g.apply(&x).unwrap().dot(&p);
            let rhs = -x.dot(&g.div(&p).unwrap());
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
