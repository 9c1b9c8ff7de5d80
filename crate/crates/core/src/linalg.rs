//! Small dense linear algebra: row-major matrices, Gaussian elimination with
//! partial pivoting, and Gram–Schmidt based rank / representation queries.
//!
//! Everything here operates at tabular scale (a few thousand unknowns at
//! most), so the routines favour clarity and stability over blocking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: format!("{rows}x{cols} = {} entries", rows * cols),
                actual: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty input yields a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape {
                    expected: format!("row {i} of length {cols}"),
                    actual: format!("length {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                expected: format!("{} rows on the right operand", self.cols),
                actual: format!("{}", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
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

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Shape {
            expected: format!("square system of size {n}"),
            actual: format!("{}x{} with rhs {}", a.rows(), a.cols(), b.len()),
        });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("non-empty pivot range");
        if m[(pivot, col)].abs() <= 1e-300 * scale {
            return Err(Error::Numerical(format!("singular matrix at column {col}")));
        }
        if pivot != col {
            for j in 0..n {
                m.data.swap(col * n + j, pivot * n + j);
            }
            x.swap(col, pivot);
        }
        let p = m[(col, col)];
        for i in col + 1..n {
            let factor = m[(i, col)] / p;
            if factor == 0.0 {
                continue;
            }
            m[(i, col)] = 0.0;
            for j in col + 1..n {
                let v = m[(col, j)];
                m[(i, j)] -= factor * v;
            }
            x[i] -= factor * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= m[(i, j)] * x[j];
        }
        x[i] = acc / m[(i, i)];
    }
    Ok(x)
}

/// Max-norm of `a x - b`.
pub fn residual_inf(a: &Matrix, x: &[f64], b: &[f64]) -> f64 {
    a.matvec(x)
        .iter()
        .zip(b)
        .fold(0.0f64, |acc, (ax, bi)| acc.max((ax - bi).abs()))
}

/// Orthonormal basis of a set of rows, built by modified Gram–Schmidt with one
/// round of re-orthogonalization.
///
/// `coords[j][k] = <row_j, basis_k>` is lower triangular, so a vector in the
/// span of the rows can be expressed back in terms of them by a triangular
/// solve.
#[derive(Debug, Clone)]
pub struct RowBasis {
    basis: Vec<Vec<f64>>,
    coords: Vec<Vec<f64>>,
}

impl RowBasis {
    /// Returns `None` when the rows are numerically dependent (a residual norm
    /// falls below `tol` times the largest row norm).
    pub fn new(rows: &[&[f64]], tol: f64) -> Option<Self> {
        let scale = rows.iter().map(|r| norm2(r)).fold(0.0f64, f64::max);
        if scale == 0.0 && !rows.is_empty() {
            return None;
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
        let mut coords = Vec::with_capacity(rows.len());
        for row in rows {
            let mut v = row.to_vec();
            let mut c = vec![0.0; rows.len()];
            for _ in 0..2 {
                for (k, u) in basis.iter().enumerate() {
                    let proj = dot(&v, u);
                    c[k] += proj;
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi -= proj * ui;
                    }
                }
            }
            let nv = norm2(&v);
            if nv <= tol * scale {
                return None;
            }
            c[basis.len()] = nv;
            for vi in &mut v {
                *vi /= nv;
            }
            basis.push(v);
            coords.push(c);
        }
        Some(Self { basis, coords })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coefficients `beta` minimizing `|x - sum_j beta_j row_j|`, plus the
    /// norm of the remaining residual.
    pub fn represent(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let r = self.dim();
        let g: Vec<f64> = self.basis.iter().map(|u| dot(x, u)).collect();
        let mut resid = x.to_vec();
        for (gk, u) in g.iter().zip(&self.basis) {
            for (ri, ui) in resid.iter_mut().zip(u) {
                *ri -= gk * ui;
            }
        }
        // coords^T beta = g, coords lower triangular => upper-triangular solve
        let mut beta = vec![0.0; r];
        for k in (0..r).rev() {
            let mut acc = g[k];
            for j in k + 1..r {
                acc -= self.coords[j][k] * beta[j];
            }
            beta[k] = acc / self.coords[k][k];
        }
        (beta, norm2(&resid))
    }

    /// Absolute volume of the parallelotope spanned by the rows (square root
    /// of the Gram determinant).
    pub fn volume(&self) -> f64 {
        self.coords
            .iter()
            .enumerate()
            .map(|(k, c)| c[k])
            .product()
    }
}

/// Numerical rank by pivoted Gram–Schmidt: rows are absorbed in order of
/// largest remaining residual until every residual norm is at most
/// `tol * max_row_norm`.
pub fn numerical_rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let scale = rows.iter().map(|r| norm2(r)).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut resid: Vec<Vec<f64>> = rows.to_vec();
    let mut used = vec![false; rows.len()];
    let mut rank = 0;
    loop {
        let next = (0..resid.len())
            .filter(|&i| !used[i])
            .map(|i| (i, norm2(&resid[i])))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((i, nrm)) = next else { break };
        if nrm <= tol * scale {
            break;
        }
        used[i] = true;
        rank += 1;
        let u: Vec<f64> = resid[i].iter().map(|v| v / nrm).collect();
        for (j, r) in resid.iter_mut().enumerate() {
            if used[j] {
                continue;
            }
            for _ in 0..2 {
                let p = dot(r, &u);
                for (ri, ui) in r.iter_mut().zip(&u) {
                    *ri -= p * ui;
                }
            }
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn solve_needs_pivoting() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x = solve(&a, &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn rank_of_dependent_rows() {
        let rows = vec![
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 2.0],
            vec![2.0, -1.0, 1.0],
        ];
        assert_eq!(numerical_rank(&rows, 1e-10), 2);
        assert_eq!(numerical_rank(&[vec![0.0; 3]], 1e-10), 0);
    }

    #[test]
    fn row_basis_represents_span_members() {
        let r0 = [1.0, 2.0, 0.0];
        let r1 = [0.0, 1.0, 1.0];
        let basis = RowBasis::new(&[&r0, &r1], 1e-12).unwrap();
        let x: Vec<f64> = r0.iter().zip(&r1).map(|(a, b)| 3.0 * a - 2.0 * b).collect();
        let (beta, res) = basis.represent(&x);
        assert!((beta[0] - 3.0).abs() < 1e-12 && (beta[1] + 2.0).abs() < 1e-12);
        assert!(res < 1e-12);
        // volume^2 = det [[5, 2], [2, 2]] = 6
        assert!((basis.volume().powi(2) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn row_basis_rejects_dependent_rows() {
        let r0 = [1.0, 1.0];
        let r1 = [2.0, 2.0];
        assert!(RowBasis::new(&[&r0, &r1], 1e-10).is_none());
    }
}
