//! Partial-pivoting LU for determinants and small complex solves.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Determinant via Gaussian elimination with partial pivoting.
pub fn determinant(a: &Matrix) -> Result<f64> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("determinant", a.shape(), a.shape()));
    }
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().partial_cmp(&m[(j, k)].abs()).unwrap())
            .unwrap();
        if m[(pivot, k)] == 0.0 {
            return Ok(0.0);
        }
        if pivot != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(pivot, j)];
                m[(pivot, j)] = tmp;
            }
            det = -det;
        }
        let pv = m[(k, k)];
        det *= pv;
        for i in k + 1..n {
            let f = m[(i, k)] / pv;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                let delta = f * m[(k, j)];
                m[(i, j)] -= delta;
            }
        }
    }
    Ok(det)
}

/// LU factors of a dense complex matrix stored column-per-vector.
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    /// Factors the matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let n = columns.len();
        let mut lu = vec![Complex64::new(0.0, 0.0); n * n];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::dim("ComplexLu", (col.len(), 1), (n, n)));
            }
            for (i, &c) in col.iter().enumerate() {
                lu[i * n + j] = c;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&i, &j| lu[i * n + k].norm().partial_cmp(&lu[j * n + k].norm()).unwrap())
                .unwrap();
            if lu[pivot * n + k].norm() == 0.0 {
                return Err(Error::Numerical(format!("singular matrix at column {k}")));
            }
            if pivot != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot * n + j);
                }
                perm.swap(k, pivot);
            }
            let pv = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pv;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    let delta = f * lu[k * n + j];
                    lu[i * n + j] -= delta;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let delta = self.lu[i * n + k] * y[k];
                y[i] -= delta;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let delta = self.lu[i * n + k] * y[k];
                y[i] -= delta;
            }
            y[i] /= self.lu[i * n + i];
        }
        y
    }

    /// Columns of the inverse.
    pub fn inverse_columns(&self) -> Vec<Vec<Complex64>> {
        (0..self.n)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); self.n];
                e[j] = Complex64::new(1.0, 0.0);
                self.solve(&e)
            })
            .collect()
    }
}

/// Induced 1-norm of a matrix given by columns.
pub fn complex_norm_one(columns: &[Vec<Complex64>]) -> f64 {
    columns
        .iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `κ₁(U) = ‖U‖₁ ‖U⁻¹‖₁`; infinite for singular `U`.
pub fn condition_number(columns: &[Vec<Complex64>]) -> f64 {
    match ComplexLu::from_columns(columns) {
        Ok(lu) => complex_norm_one(columns) * complex_norm_one(&lu.inverse_columns()),
        Err(_) => f64::INFINITY,
    }
}
