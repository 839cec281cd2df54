//! Small dense matrices, Cholesky factorisation and triangular solves.
//!
//! Only what the simulation and the networks need: row-major storage,
//! matrix products with a cache-friendly inner loop, and lower-triangular
//! factor handling for correlation matrices.

use crate::error::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * other`, accumulating row-by-row so the inner loop runs over
    /// contiguous slices of both operands.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shapes");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ * other` without materialising the transpose, accumulated as
    /// a sum of row outer products.
    pub fn matmul_at_b(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_at_b shapes");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = other.row(i);
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = out.row_mut(p);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * otherᵀ` without materialising the transpose.
    pub fn matmul_transpose(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transpose shapes");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let dot: f64 = a_row.iter().zip(other.row(j)).map(|(a, b)| a * b).sum();
                out[(i, j)] = dot;
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `C` with `C·Cᵀ = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangularFactor {
    dim: usize,
    entries: Matrix,
}

impl LowerTriangularFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// True when the factor is (numerically) a diagonal matrix.
    pub fn is_diagonal(&self) -> bool {
        for i in 0..self.dim {
            for j in 0..i {
                if self.entries[(i, j)] != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Reconstruct `C·Cᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.entries.matmul_transpose(&self.entries)
    }

    /// Solve `C x = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.entries[(i, j)] * x[j];
            }
            x[i] = acc / self.entries[(i, i)];
        }
        x
    }

    /// Dense inverse of the factor (forward substitution per unit vector).
    pub fn inverse(&self) -> Matrix {
        let n = self.dim;
        let mut inv = Matrix::zeros(n, n);
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let x = self.solve_lower(&e);
            for (i, v) in x.iter().enumerate() {
                inv[(i, col)] = *v;
            }
        }
        inv
    }
}

/// Cholesky decomposition of a symmetric positive-definite matrix.
///
/// Fails with the index of the first non-positive pivot.
pub fn cholesky(sigma: &Matrix) -> Result<LowerTriangularFactor> {
    let n = sigma.rows();
    if sigma.cols() != n {
        return Err(Error::Dimension { what: "cholesky input", expected: n, actual: sigma.cols() });
    }
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = sigma[(i, j)];
            for k in 0..j {
                acc -= c[(i, k)] * c[(j, k)];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                c[(i, j)] = acc.sqrt();
            } else {
                c[(i, j)] = acc / c[(j, j)];
            }
        }
    }
    Ok(LowerTriangularFactor { dim: n, entries: c })
}
