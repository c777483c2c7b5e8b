use nalgebra::{DMatrix, DVector, Dyn};

use super::Tensor;
use crate::error::{Error, Result};

/// Pivot ratio below which a factorization is treated as near-singular.
const NEAR_SINGULAR: f64 = 1e-14;
/// Tikhonov shift, relative to the largest diagonal entry.
const RELATIVE_SHIFT: f64 = 1e-10;

/// Cholesky factor of a symmetric positive (semi-)definite matrix, with an
/// automatic diagonal shift when the matrix is near-singular.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: nalgebra::Cholesky<f64, Dyn>,
    shift: f64,
}

impl Cholesky {
    pub fn factor(a: &Tensor) -> Result<Self> {
        let (n, m) = a.dims2().ok_or_else(|| Error::Shape {
            op: "cholesky",
            left: a.shape().to_vec(),
            right: vec![],
        })?;
        if n != m {
            return Err(Error::Shape {
                op: "cholesky",
                left: a.shape().to_vec(),
                right: vec![m, n],
            });
        }
        let mat = DMatrix::from_row_slice(n, n, a.data());
        let max_diag = (0..n).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max);

        if let Some(factor) = mat.clone().cholesky() {
            if pivot_ratio(&factor) >= NEAR_SINGULAR {
                return Ok(Self { factor, shift: 0.0 });
            }
        }
        if max_diag == 0.0 || !max_diag.is_finite() {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let shift = RELATIVE_SHIFT * max_diag;
        let mut shifted = mat;
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        match shifted.cholesky() {
            Some(factor) if pivot_ratio(&factor) > 0.0 => Ok(Self { factor, shift }),
            Some(factor) => Err(Error::Singular {
                condition: 1.0 / pivot_ratio(&factor),
            }),
            None => Err(Error::Singular {
                condition: f64::INFINITY,
            }),
        }
    }

    /// Diagonal shift that was added before factoring (0 when none).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.factor
            .solve(&DVector::from_column_slice(b))
            .as_slice()
            .to_vec()
    }
}

fn pivot_ratio(factor: &nalgebra::Cholesky<f64, Dyn>) -> f64 {
    let l = factor.l_dirty();
    let n = l.nrows();
    let (lo, hi) = (0..n)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
    if hi == 0.0 || !lo.is_finite() {
        0.0
    } else {
        lo / hi
    }
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn cholesky_solve(a: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Cholesky::factor(a)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = Tensor::matrix(2, 2, vec![4.0, 1.0, 1.0, 3.0]).unwrap();
        let x = cholesky_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_gets_shifted() {
        // rank one
        let a = Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let chol = Cholesky::factor(&a).unwrap();
        assert!(chol.shift() > 0.0);
        let x = chol.solve(&[1.0, 1.0]);
        assert!(((x[0] + x[1]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_matrix_is_rejected() {
        let a = Tensor::zeros(&[3, 3]);
        assert!(matches!(Cholesky::factor(&a), Err(Error::Singular { .. })));
    }
}
