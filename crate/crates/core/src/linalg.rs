//! Small dense linear algebra on row-major square matrices: Gaussian
//! elimination, cyclic Jacobi eigendecomposition and the symmetric
//! pseudo-inverse built from it.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major `n x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} matrix", data.len())));
        }
        Ok(Matrix { n, data })
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting. Pivots
/// below `1e-12` times the largest absolute entry of `a` are singular.
pub fn solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::Shape(format!("rhs length {} for {n}x{n} system", b.len())));
    }
    let scale = a.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = scale * T::lit(1e-12);
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())
            .unwrap();
        if !(m[pivot * n + col].abs() > tol) {
            return Err(Error::Solver(format!("singular system at column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let p = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                m[row * n + k] = m[row * n + k] - f * m[col * n + k];
            }
            x[row] = x[row] - f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in row + 1..n {
            acc = acc - m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the eigenvectors as matrix columns.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.n;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix. Eigenvalues with
/// magnitude below `n * eps * max|lambda|` are treated as zero.
pub fn symmetric_pinv<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    let n = a.n;
    let (vals, vecs) = symmetric_eigen(a);
    let max = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cutoff = max * T::epsilon() * T::from_usize_lossy(n.max(1)) * T::lit(16.0);
    let mut out = Matrix::zeros(n);
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda == T::zero() {
            continue;
        }
        let inv = T::one() / lambda;
        for i in 0..n {
            let vi = vecs[(i, k)] * inv;
            for j in 0..n {
                out[(i, j)] = out[(i, j)] + vi * vecs[(j, k)];
            }
        }
    }
    out
}

/// Column means and sample (n-1) covariance of row vectors; the covariance
/// is all zeros for a single row.
pub fn mean_and_covariance<T: Real>(rows: &[Vec<T>]) -> Result<(Vec<T>, Matrix<T>)> {
    let first = rows.first().ok_or_else(|| Error::Size("covariance of zero rows".into()))?;
    let d = first.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged rows".into()));
    }
    // Shift by the first row so that identical rows give exactly zero.
    let origin = first.clone();
    let count = T::from_usize_lossy(rows.len());
    let mut shift_mean = vec![T::zero(); d];
    for r in rows {
        for j in 0..d {
            shift_mean[j] = shift_mean[j] + (r[j] - origin[j]);
        }
    }
    shift_mean.iter_mut().for_each(|m| *m = *m / count);
    let mean: Vec<T> = origin.iter().zip(&shift_mean).map(|(&o, &m)| o + m).collect();
    let mut cov = Matrix::zeros(d);
    if rows.len() > 1 {
        for r in rows {
            for i in 0..d {
                let di = (r[i] - origin[i]) - shift_mean[i];
                for j in 0..=i {
                    cov[(i, j)] = cov[(i, j)] + di * ((r[j] - origin[j]) - shift_mean[j]);
                }
            }
        }
        let denom = T::from_usize_lossy(rows.len() - 1);
        for i in 0..d {
            for j in 0..=i {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
    }
    Ok((mean, cov))
}
