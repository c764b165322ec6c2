//! Linear operators and operator-norm estimation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor::Tensor;

mod blur;
mod grad;
mod haar;

pub use blur::GaussianBlur;
pub use grad::Grad2d;
pub use haar::Haar;

/// A bounded linear map between tensor spaces together with its adjoint.
///
/// Implementors provide the slice kernels; the checked, allocating
/// [`apply`](LinearOperator::apply) and [`adjoint`](LinearOperator::adjoint)
/// wrappers come for free.
pub trait LinearOperator: fmt::Debug + Send + Sync {
    fn input_shape(&self) -> (usize, usize);
    fn output_shape(&self) -> (usize, usize);

    /// `out = A x`, with `x` and `out` of the input and output sizes.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// `out = Aᵀ y`.
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.ensure_shape(self.input_shape(), "operator input")?;
        let (r, c) = self.output_shape();
        let mut out = Tensor::zeros(r, c);
        self.apply_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        y.ensure_shape(self.output_shape(), "adjoint input")?;
        let (r, c) = self.input_shape();
        let mut out = Tensor::zeros(r, c);
        self.adjoint_into(y.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

/// Result of [`power_norm`]: the raw estimate and the padded upper value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorNorm {
    pub estimate: f64,
    pub upper: f64,
}

pub const NORM_SAFETY: f64 = 1.01;
pub const DEFAULT_POWER_ITERS: usize = 200;

/// Estimates `‖A‖` by power iteration on `AᵀA` from a seeded Gaussian start.
///
/// The estimate is the largest `‖A v_k‖` seen over the normalized iterates,
/// so it never decreases when `iters` grows. `upper` is the estimate times
/// [`NORM_SAFETY`].
pub fn power_norm(op: &dyn LinearOperator, iters: usize, seed: u64) -> Result<OperatorNorm> {
    if iters == 0 {
        return Err(Error::config("power iteration needs at least one step"));
    }
    let (ir, ic) = op.input_shape();
    let (or, oc) = op.output_shape();
    let mut rng = Stream::new(seed);
    let mut v = rng.normal_tensor(ir, ic).into_vec();
    let mut av = vec![0.0; or * oc];
    let mut best = 0.0f64;
    for _ in 0..iters {
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|t| *t /= nv);
        op.apply_into(&v, &mut av);
        best = best.max(norm(&av));
        op.adjoint_into(&av, &mut v);
    }
    Ok(OperatorNorm {
        estimate: best,
        upper: NORM_SAFETY * best,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// `|⟨Ax, y⟩ − ⟨x, Aᵀy⟩|` for the given pair.
pub fn adjoint_residual(op: &dyn LinearOperator, x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok((op.apply(x)?.dot(y) - x.dot(&op.adjoint(y)?)).abs())
}

/// An operator paired with an upper bound on its norm.
#[derive(Debug, Clone)]
pub struct BoundedOperator {
    op: Arc<dyn LinearOperator>,
    norm_upper: f64,
}

impl BoundedOperator {
    /// Estimates the norm with [`DEFAULT_POWER_ITERS`] power steps from seed 0.
    pub fn new(op: Arc<dyn LinearOperator>) -> Result<Self> {
        let n = power_norm(op.as_ref(), DEFAULT_POWER_ITERS, 0)?;
        Ok(BoundedOperator {
            op,
            norm_upper: n.upper,
        })
    }

    pub fn with_norm(op: Arc<dyn LinearOperator>, norm_upper: f64) -> Result<Self> {
        if !(norm_upper >= 0.0) || !norm_upper.is_finite() {
            return Err(Error::config(format!("invalid operator norm {norm_upper}")));
        }
        Ok(BoundedOperator { op, norm_upper })
    }

    pub fn norm_upper(&self) -> f64 {
        self.norm_upper
    }

    pub fn inner(&self) -> &Arc<dyn LinearOperator> {
        &self.op
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.op.input_shape()
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.op.output_shape()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.op.apply(x)
    }

    pub fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        self.op.adjoint(y)
    }
}

/// Identity on a fixed shape.
#[derive(Debug, Clone)]
pub struct Identity {
    shape: (usize, usize),
}

impl Identity {
    pub fn new(rows: usize, cols: usize) -> Self {
        Identity { shape: (rows, cols) }
    }
}

impl LinearOperator for Identity {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn output_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
}

/// Componentwise multiplication of a vector by fixed weights.
#[derive(Debug, Clone)]
pub struct Diagonal {
    diag: Vec<f64>,
}

impl Diagonal {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|d| !d.is_finite()) {
            return Err(Error::config("diagonal must be nonempty and finite"));
        }
        Ok(Diagonal { diag })
    }
}

impl LinearOperator for Diagonal {
    fn input_shape(&self) -> (usize, usize) {
        (self.diag.len(), 1)
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.diag.len(), 1)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = d * v;
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out);
    }
}

/// Dense row-major matrix acting on column vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries do not form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("ragged matrix rows"));
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Materializes any operator on column vectors by probing basis vectors.
    pub fn from_operator(op: &dyn LinearOperator) -> Result<Self> {
        let (n, ic) = op.input_shape();
        let (m, oc) = op.output_shape();
        if ic != 1 || oc != 1 {
            return Err(Error::dim("dense materialization needs vector spaces"));
        }
        let mut data = vec![0.0; m * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            op.apply_into(&e, &mut col);
            e[j] = 0.0;
            for i in 0..m {
                data[i * n + j] = col[i];
            }
        }
        Matrix::new(m, n, data)
    }
}

impl LinearOperator for Matrix {
    fn input_shape(&self) -> (usize, usize) {
        (self.cols, 1)
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.rows, 1)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, yi) in y.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_norm_examples() {
        let id = Identity::new(5, 1);
        let n = power_norm(&id, 50, 1).unwrap();
        assert!((n.estimate - 1.0).abs() < 1e-6);
        assert!((n.upper - 1.01).abs() < 1e-6);

        let a = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 0.0]]).unwrap();
        let n = power_norm(&a, 100, 1).unwrap();
        assert!((n.estimate - 1.618_033_988_749_895).abs() < 1e-4);

        let d = Diagonal::new(vec![3.0, 0.5]).unwrap();
        assert!((power_norm(&d, 100, 1).unwrap().estimate - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_operator_has_zero_norm() {
        let z = Matrix::new(2, 3, vec![0.0; 6]).unwrap();
        let n = power_norm(&z, 10, 4).unwrap();
        assert_eq!(n.estimate, 0.0);
        assert_eq!(n.upper, 0.0);
    }

    #[test]
    fn power_norm_rejects_zero_iters() {
        assert!(power_norm(&Identity::new(2, 1), 0, 0).is_err());
    }

    #[test]
    fn matrix_shape_checks() {
        let a = Matrix::new(2, 3, vec![1.0; 6]).unwrap();
        assert!(a.apply(&Tensor::vector(vec![1.0; 2])).is_err());
        assert!(a.adjoint(&Tensor::vector(vec![1.0; 3])).is_err());
        assert_eq!(
            a.apply(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap().as_slice(),
            &[6.0, 6.0]
        );
    }

    #[test]
    fn from_operator_roundtrip() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[-1.0, 0.5, 3.0]]).unwrap();
        assert_eq!(Matrix::from_operator(&a).unwrap(), a);
    }
}
