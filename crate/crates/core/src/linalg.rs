//! Dense row-major matrices and partial-pivoting LU factorization of square
//! basis matrices.
//!
//! Factorizations are recomputed from scratch at every pivot. Dimensions stay
//! small (tens of columns) so the cubic cost is irrelevant next to the drift a
//! rank-one update scheme would accumulate.

use thiserror::Error;

/// Relative pivot threshold below which a matrix is declared singular.
pub const SINGULAR_RELATIVE_PIVOT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix shape {rows}x{cols} does not match {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is numerically singular (min pivot {min_pivot:e}, max entry {max_entry:e})")]
    Singular { min_pivot: f64, max_entry: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape { rows, cols, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::Shape { rows: rows.len(), cols, len: data.len() + r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    /// Submatrix formed by the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), cols: self.cols, data }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.cols != other.cols {
            return Err(LinalgError::Shape { rows: self.rows + other.rows, cols: self.cols, len: other.data.len() });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows + other.rows, cols: self.cols, data })
    }

    /// Appends one column on the right.
    pub fn append_column(&self, column: &[f64]) -> Result<Self, LinalgError> {
        if column.len() != self.rows {
            return Err(LinalgError::Shape { rows: self.rows, cols: self.cols + 1, len: column.len() });
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for (r, &extra) in column.iter().enumerate() {
            data.extend_from_slice(self.row(r));
            data.push(extra);
        }
        Self::new(self.rows, self.cols + 1, data)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "vector length mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), &mut out);
            }
        }
        out
    }

    pub fn mul_mat(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                axpy(a, other.row(k), dst);
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> DenseMatrix {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.rows).map(|r| norm(self.row(r))).fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm_l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scaled(a: &[f64], factor: f64) -> Vec<f64> {
    a.iter().map(|v| v * factor).collect()
}

/// `(1 - t) a + t b`
pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

/// Partial-pivoting LU factorization `P·m = L·U` of a square matrix.
///
/// `L` is unit lower triangular and stored below the diagonal of `lu`; `U`
/// occupies the diagonal and above. `perm[k]` is the source row placed at
/// position `k`.
#[derive(Debug, Clone)]
pub struct BasisFactorization {
    dim: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    pivots: Vec<f64>,
    parity_negative: bool,
}

impl BasisFactorization {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Absolute pivot magnitudes `|U_kk|` in elimination order.
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn min_pivot(&self) -> f64 {
        self.pivots.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Ratio of smallest to largest pivot, a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        let max = self.pivots.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            0.0
        } else {
            self.min_pivot() / max
        }
    }

    pub fn determinant(&self) -> f64 {
        let d = self.dim;
        let prod: f64 = (0..d).map(|k| self.lu[k * d + k]).product();
        if self.parity_negative {
            -prod
        } else {
            prod
        }
    }

    pub fn lower(&self) -> DenseMatrix {
        let d = self.dim;
        let mut l = DenseMatrix::identity(d);
        for r in 0..d {
            for c in 0..r {
                l.set(r, c, self.lu[r * d + c]);
            }
        }
        l
    }

    pub fn upper(&self) -> DenseMatrix {
        let d = self.dim;
        let mut u = DenseMatrix::zeros(d, d);
        for r in 0..d {
            for c in r..d {
                u.set(r, c, self.lu[r * d + c]);
            }
        }
        u
    }

    /// Rebuilds the source matrix as `Pᵀ·L·U`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let lu = self.lower().mul_mat(&self.upper());
        let mut out = DenseMatrix::zeros(self.dim, self.dim);
        for (k, &src) in self.perm.iter().enumerate() {
            out.row_mut(src).copy_from_slice(lu.row(k));
        }
        out
    }

    /// Solves `m·x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(rhs.len(), d, "rhs length mismatch");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..d {
            let row = &self.lu[r * d..r * d + r];
            let s = dot(row, &x[..r]);
            x[r] -= s;
        }
        for r in (0..d).rev() {
            let mut s = x[r];
            for c in r + 1..d {
                s -= self.lu[r * d + c] * x[c];
            }
            x[r] = s / self.lu[r * d + r];
        }
        x
    }

    /// Solves `mᵀ·x = rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(rhs.len(), d, "rhs length mismatch");
        // mᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = rhs, Lᵀ v = w, then x = Pᵀ v.
        let mut w = rhs.to_vec();
        for r in 0..d {
            let mut s = w[r];
            for c in 0..r {
                s -= self.lu[c * d + r] * w[c];
            }
            w[r] = s / self.lu[r * d + r];
        }
        for r in (0..d).rev() {
            let mut s = w[r];
            for c in r + 1..d {
                s -= self.lu[c * d + r] * w[c];
            }
            w[r] = s;
        }
        let mut x = vec![0.0; d];
        for (k, &src) in self.perm.iter().enumerate() {
            x[src] = w[k];
        }
        x
    }
}

/// Factorizes a square matrix, or reports it singular when the smallest pivot
/// falls below `1e-12` times the largest entry.
pub fn factorize(m: &DenseMatrix) -> Result<BasisFactorization, LinalgError> {
    if m.rows != m.cols {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    let d = m.rows;
    let max_entry = m.max_abs();
    let threshold = SINGULAR_RELATIVE_PIVOT * max_entry;
    let mut lu = m.data.clone();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut pivots = Vec::with_capacity(d);
    let mut parity_negative = false;

    for k in 0..d {
        let (mut best, mut best_abs) = (k, lu[k * d + k].abs());
        for r in k + 1..d {
            let v = lu[r * d + k].abs();
            if v > best_abs {
                best = r;
                best_abs = v;
            }
        }
        if best_abs <= threshold || best_abs == 0.0 {
            return Err(LinalgError::Singular { min_pivot: best_abs, max_entry });
        }
        if best != k {
            for c in 0..d {
                lu.swap(k * d + c, best * d + c);
            }
            perm.swap(k, best);
            parity_negative = !parity_negative;
        }
        pivots.push(best_abs);
        let pivot = lu[k * d + k];
        for r in k + 1..d {
            let factor = lu[r * d + k] / pivot;
            lu[r * d + k] = factor;
            if factor != 0.0 {
                for c in k + 1..d {
                    lu[r * d + c] -= factor * lu[k * d + c];
                }
            }
        }
    }
    Ok(BasisFactorization { dim: d, lu, perm, pivots, parity_negative })
}

/// Convenience wrapper: factorize and solve a single system.
pub fn solve_square(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    Ok(factorize(m)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_matrix(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
        let data = (0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        DenseMatrix::new(d, d, data).unwrap()
    }

    fn residual_inf(m: &DenseMatrix, x: &[f64], rhs: &[f64]) -> f64 {
        norm_inf(&sub(&m.mul_vec(x), rhs))
    }

    #[test]
    fn identity_has_unit_pivots() {
        let f = factorize(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.pivots(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn duplicated_row_is_singular() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [0.5, -1.0, 2.0], [1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(factorize(&m), Err(LinalgError::Singular { .. })));
        assert!(matches!(factorize(&m.transpose()), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn gaussian_5x5_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = gaussian_matrix(&mut rng, 5);
        let f = factorize(&m).unwrap();
        assert!(f.reconstruct().max_abs_diff(&m) < 1e-10);
        let rel = DenseMatrix::new(5, 5, sub(f.reconstruct().as_slice(), m.as_slice())).unwrap().frobenius_norm()
            / m.frobenius_norm();
        assert!(rel < 1e-10);
    }

    #[test]
    fn solve_small_cases() {
        let f = factorize(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(f.solve(&[2.0, 3.0]), vec![2.0, 3.0]);
        let diag = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        assert_eq!(factorize(&diag).unwrap().solve(&[2.0, 4.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn solve_transpose_small_cases() {
        let f = factorize(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(f.solve_transpose(&[1.0, 0.0]), vec![1.0, 0.0]);
        // Aᵀ = [[1,0],[1,1]]; Aᵀ μ = (1,1) gives μ = (1,0).
        let upper = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let mu = factorize(&upper).unwrap().solve_transpose(&[1.0, 1.0]);
        assert!((mu[0] - 1.0).abs() < 1e-15 && mu[1].abs() < 1e-15);
    }

    #[test]
    fn seeded_6x6_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = gaussian_matrix(&mut rng, 6);
        let rhs: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let f = factorize(&m).unwrap();
        let tol = 1e-9 * (1.0 + norm_inf(&rhs));
        assert!(residual_inf(&m, &f.solve(&rhs), &rhs) <= tol);
        assert!(residual_inf(&m.transpose(), &f.solve_transpose(&rhs), &rhs) <= tol);
    }

    #[test]
    fn determinant_sign_tracks_permutation() {
        let swap = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((factorize(&swap).unwrap().determinant() + 1.0).abs() < 1e-15);
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!((factorize(&m).unwrap().determinant() + 2.0).abs() < 1e-12);
    }

    /// 1000 seeded matrices: solve then apply reproduces the rhs, and the
    /// transposed factorization agrees on the singularity verdict.
    #[test]
    fn random_solves_reproduce_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let mut checked = 0;
        for trial in 0..1000 {
            let d = 1 + trial % 8;
            let m = gaussian_matrix(&mut rng, d);
            let rhs: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let f = factorize(&m).unwrap();
            assert!(factorize(&m.transpose()).is_ok());
            if f.pivot_ratio() < 1e-8 {
                continue;
            }
            let x = f.solve(&rhs);
            assert!(residual_inf(&m, &x, &rhs) <= 1e-9 * (1.0 + norm_inf(&rhs)), "trial {trial}");
            checked += 1;
        }
        assert!(checked > 900);
    }

    #[test]
    fn rank_deficient_verdicts_agree_under_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for d in 2..7 {
            let mut m = gaussian_matrix(&mut rng, d);
            // last column = sum of the first two
            for r in 0..d {
                let v = m.get(r, 0) + m.get(r, 1);
                m.set(r, d - 1, v);
            }
            if d == 2 {
                for r in 0..d {
                    let v = 2.0 * m.get(r, 0);
                    m.set(r, 1, v);
                }
            }
            assert!(factorize(&m).is_err(), "d={d}");
            assert!(factorize(&m.transpose()).is_err(), "d={d}");
        }
    }
}
