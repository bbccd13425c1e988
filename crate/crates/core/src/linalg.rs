//! Small dense symmetric matrices and a cyclic Jacobi eigensolver.

use crate::error::{Result, SyncError};
use crate::scalar::Real;

/// Square matrix stored row-major. Used for the `N x N` comparison
/// matrices, so sizes stay in the hundreds at most.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(SyncError::Dimension("matrix rows must form a square".into()));
        }
        Ok(Matrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Matrix<T>, scale: T) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scaled(&self, s: T) -> Matrix<T> {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// `vᵀ M v`
    pub fn quadratic_form(&self, v: &[T]) -> T {
        let n = self.n;
        let mut acc = T::zero();
        for i in 0..n {
            let mut row = T::zero();
            for j in 0..n {
                row += self.data[i * n + j] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Eigen-decomposition `A = Q diag(λ) Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: Matrix<T>,
}

const MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi rotations on the upper triangle of `a`, which is assumed
/// symmetric.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> SymmetricEigen<T> {
    let n = a.n;
    let mut m = a.clone();
    let mut q = Matrix::identity(n);
    let scale = a.max_abs();
    if n > 1 && scale > T::zero() {
        let eps = T::epsilon();
        for _ in 0..MAX_SWEEPS {
            let mut off = T::zero();
            for i in 0..n {
                for j in i + 1..n {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
            if off.sqrt() <= eps * scale * T::lit(1e-2) {
                break;
            }
            for p in 0..n {
                for r in p + 1..n {
                    let apr = m[(p, r)];
                    if apr.abs() <= T::min_positive_value() {
                        continue;
                    }
                    let theta = (m[(r, r)] - m[(p, p)]) / (T::lit(2.0) * apr);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    rotate(&mut m, &mut q, p, r, c, s);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, new)] = q[(row, old)];
        }
    }
    SymmetricEigen { values, vectors }
}

fn rotate<T: Real>(m: &mut Matrix<T>, q: &mut Matrix<T>, p: usize, r: usize, c: T, s: T) {
    let n = m.n;
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkr = m[(k, r)];
        m[(k, p)] = c * mkp - s * mkr;
        m[(k, r)] = s * mkp + c * mkr;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mrk = m[(r, k)];
        m[(p, k)] = c * mpk - s * mrk;
        m[(r, k)] = s * mpk + c * mrk;
    }
    for k in 0..n {
        let qkp = q[(k, p)];
        let qkr = q[(k, r)];
        q[(k, p)] = c * qkp - s * qkr;
        q[(k, r)] = s * qkp + c * qkr;
    }
}

impl<T: Real> SymmetricEigen<T> {
    /// `Q diag(g(λ)) Qᵀ`
    pub fn map(&self, g: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let gl: Vec<T> = self.values.iter().map(|&l| g(l)).collect();
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += self.vectors[(i, k)] * gl[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    /// `Qᵀ v`
    pub fn to_eigenbasis(&self, v: &[T]) -> Vec<T> {
        let n = self.values.len();
        (0..n)
            .map(|k| (0..n).map(|i| self.vectors[(i, k)] * v[i]).sum())
            .collect()
    }

    /// `Q w`
    pub fn from_eigenbasis(&self, w: &[T]) -> Vec<T> {
        self.vectors.mul_vec(w)
    }

    pub fn max_value(&self) -> T {
        *self.values.last().expect("non-empty spectrum")
    }
}

/// `exp(A)` for symmetric `A`.
pub fn sym_expm<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    symmetric_eigen(a).map(|l| l.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 1.0],
            vec![-2.0, 0.0, -1.0, 2.0],
            vec![0.5, 1.0, 2.0, 0.0],
        ])
        .unwrap();
        let eig = symmetric_eigen(&a);
        let back = eig.map(|l| l);
        assert!(back.sub(&a).max_abs() < 1e-12);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let qtq = {
            let mut qt = Matrix::zeros(4);
            for i in 0..4 {
                for j in 0..4 {
                    qt[(i, j)] = eig.vectors[(j, i)];
                }
            }
            qt.matmul(&eig.vectors)
        };
        assert!(qtq.sub(&Matrix::identity(4)).max_abs() < 1e-12);
    }

    #[test]
    fn diagonal_and_one_by_one() {
        let eig = symmetric_eigen(&Matrix::from_diagonal(&[3.0, -1.0, 2.0]));
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
        let one = symmetric_eigen(&Matrix::from_diagonal(&[-7.5f32]));
        assert_eq!(one.values, vec![-7.5]);
    }

    #[test]
    fn expm_of_diagonal() {
        let e = sym_expm(&Matrix::from_diagonal(&[-1.0, 0.0, 2.0]));
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((e[(2, 2)] - 2.0f64.exp()).abs() < 1e-14);
        assert_eq!(e[(0, 2)], 0.0);
    }
}
