//! Small dense linear algebra used by the Newton solver and the
//! sensitivity back-solve. Row-major matrices, LU with partial pivoting.

use crate::scalar::Real;
use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Matrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n_cols + j] = self.data[i * self.n_cols + j] + v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// LU factorization with partial pivoting of a square matrix.
pub struct LuFactors<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> LuFactors<T> {
    /// Factor `a` in place. Fails on a numerically singular matrix.
    pub fn factor(mut a: Matrix<T>) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols, "LU needs a square matrix");
        let n = a.n_rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // pivot search
            let mut p = k;
            let mut pmax = a.get(k, k).abs();
            for i in k + 1..n {
                let v = a.get(i, k).abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == T::zero() || !pmax.is_finite() {
                return Err(Error::SingularJacobian);
            }
            if p != k {
                perm.swap(k, p);
                for j in 0..n {
                    let t = a.get(k, j);
                    a.set(k, j, a.get(p, j));
                    a.set(p, j, t);
                }
            }
            let pivot = a.get(k, k);
            for i in k + 1..n {
                let m = a.get(i, k) / pivot;
                a.set(i, k, m);
                if m != T::zero() {
                    for j in k + 1..n {
                        let v = a.get(i, j) - m * a.get(k, j);
                        a.set(i, j, v);
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n_rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        // forward: L y = P b
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }

    /// Solve `A^T x = b` using the same factors (A^T = U^T L^T P).
    pub fn solve_transposed(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n_rows;
        let mut x = b.to_vec();
        // forward: U^T y = b
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.get(j, i) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        // backward: L^T z = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu.get(j, i) * x[j];
            }
            x[i] = s;
        }
        // undo pivoting: x = P^T z
        let mut out = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }
}
