use serde::{Deserialize, Serialize};

use crate::error::{MinfoError, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MinfoError::shape(
                "Matrix::from_vec",
                format!("{} entries for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(MinfoError::shape(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Side-by-side concatenation `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(MinfoError::shape("Matrix::hstack", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(MinfoError::shape("Matrix::vstack", self.cols, other.cols));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Gathers rows by index; indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self · weightᵀ + bias` for `self: b×in`, `weight: out×in`.
    pub fn affine(&self, weight: &Matrix, bias: &[f64]) -> Result<Matrix> {
        if weight.cols != self.cols || bias.len() != weight.rows {
            return Err(MinfoError::shape(
                "Matrix::affine",
                format!("weight ?x{} and bias {}", self.cols, weight.rows),
                format!("weight {}x{} and bias {}", weight.rows, weight.cols, bias.len()),
            ));
        }
        let out_dim = weight.rows;
        // k-major layout keeps the inner loop a contiguous axpy
        let wt = weight.transpose();
        let mut out = Matrix::zeros(self.rows, out_dim);
        for i in 0..self.rows {
            let dst = &mut out.data[i * out_dim..(i + 1) * out_dim];
            dst.copy_from_slice(bias);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(dst, a, wt.row(k));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` for `self: b×p`, `other: b×q`, giving `p×q`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(MinfoError::shape("Matrix::t_matmul", self.rows, other.rows));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for i in 0..self.rows {
            let src = other.row(i);
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(&mut out.data[p * other.cols..(p + 1) * other.cols], a, src);
            }
        }
        Ok(out)
    }

    /// `self · other` for `self: b×p`, `other: p×q`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(MinfoError::shape("Matrix::matmul", self.cols, other.rows));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(dst, a, other.row(p));
            }
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
        assert_eq!(Matrix::from_vec(2, 3, vec![0.0; 6]).unwrap().shape(), (2, 3));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn affine_matches_hand_product() {
        let x = m(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let w = m(&[&[1.0, 0.0], &[2.0, 1.0], &[0.0, -1.0]]);
        let y = x.affine(&w, &[0.5, 0.0, 1.0]).unwrap();
        assert_eq!(y, m(&[&[1.5, 4.0, -1.0], &[3.5, 5.0, 2.0]]));
    }

    #[test]
    fn t_matmul_and_matmul_agree_with_transpose() {
        let a = m(&[&[1.0, 2.0, 0.0], &[-1.0, 0.5, 3.0]]);
        let b = m(&[&[2.0, 1.0], &[0.0, 4.0]]);
        let via_t = a.t_matmul(&b).unwrap();
        let direct = a.transpose().matmul(&b).unwrap();
        assert_eq!(via_t, direct);
        assert_eq!(via_t.shape(), (3, 2));
    }

    #[test]
    fn stacking() {
        let a = m(&[&[1.0], &[2.0]]);
        let b = m(&[&[3.0], &[4.0]]);
        assert_eq!(a.hstack(&b).unwrap(), m(&[&[1.0, 3.0], &[2.0, 4.0]]));
        assert_eq!(a.vstack(&b).unwrap().column(0), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(a.hstack(&Matrix::zeros(3, 1)).is_err());
    }
}
