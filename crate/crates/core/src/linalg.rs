//! Dense row-major matrices, flop accounting and the few small solvers the
//! decoders need. Heavy lifting (QR, SVD) is delegated to nalgebra.

use nalgebra::DMatrix;
use std::fmt;
use std::ops::{AddAssign, Index, IndexMut};

/// Counts floating-point operations. A fused multiply-add counts as two.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Flops(pub u64);

impl Flops {
    pub fn add(&mut self, n: usize) {
        self.0 += n as u64;
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl AddAssign for Flops {
    fn add_assign(&mut self, rhs: Flops) {
        self.0 += rhs.0;
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
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
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn push_row(&mut self, row: &[f64]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(row.len(), self.cols, "row length does not match");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Appends a column; `col` must have one entry per row.
    pub fn push_column(&mut self, col: &[f64]) {
        assert_eq!(col.len(), self.rows, "column length does not match");
        let new_cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * new_cols);
        for (i, &c) in col.iter().enumerate() {
            data.extend_from_slice(&self.data[i * self.cols..(i + 1) * self.cols]);
            data.push(c);
        }
        self.cols = new_cols;
        self.data = data;
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    let (src, dst) = (other.row(k), &mut out.data[i * other.cols..(i + 1) * other.cols]);
                    axpy(a, src, dst);
                }
            }
        }
        out
    }

    /// Submatrix made of the listed rows and the first `ncols` columns.
    pub fn select(&self, rows: &[usize], ncols: usize) -> Matrix {
        Matrix::from_fn(rows.len(), ncols, |i, j| self[(rows[i], j)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a·x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b).max(f64::MIN_POSITIVE)
}

/// Least-squares solve `min ‖A x − b‖` through a thin QR. Returns `None` when
/// `A` is numerically rank deficient.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let (rows, cols) = a.shape();
    assert_eq!(b.len(), rows);
    if cols == 0 {
        return Some(vec![]);
    }
    if rows < cols {
        return None;
    }
    let qr = a.to_nalgebra().qr();
    let r = qr.r();
    let diag_max = (0..cols).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
    let diag_min = (0..cols).fold(f64::INFINITY, |m, i| m.min(r[(i, i)].abs()));
    if diag_max == 0.0 || diag_min <= diag_max * 1e-14 {
        return None;
    }
    let qtb = qr.q().transpose() * nalgebra::DVector::from_column_slice(b);
    let x = r.solve_upper_triangular(&qtb)?;
    Some(x.iter().copied().collect())
}

/// Precomputed left pseudo-inverse `R⁻¹Qᵀ` of a tall full-column-rank matrix.
#[derive(Debug, Clone)]
pub struct Pinv {
    inner: Matrix,
}

impl Pinv {
    pub fn new(a: &Matrix) -> Option<Self> {
        let (rows, cols) = a.shape();
        if cols == 0 {
            return Some(Pinv { inner: Matrix::zeros(0, rows) });
        }
        if rows < cols {
            return None;
        }
        let qr = a.to_nalgebra().qr();
        let r = qr.r();
        let q = qr.q();
        let diag_max = (0..cols).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
        let diag_min = (0..cols).fold(f64::INFINITY, |m, i| m.min(r[(i, i)].abs()));
        if diag_max == 0.0 || diag_min <= diag_max * 1e-13 {
            return None;
        }
        let qt = q.transpose();
        let x = r.solve_upper_triangular(&qt)?;
        Some(Pinv { inner: Matrix::from_nalgebra(&x) })
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        self.inner.mul_vec(b)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }
}

/// Right singular vector for the smallest singular value of `a`, plus the
/// ratio of the smallest to the largest singular value.
pub fn smallest_right_singular(a: &Matrix) -> (Vec<f64>, f64) {
    let cols = a.cols();
    // Pad to at least square so the thin SVD exposes the full right basis.
    let rows = a.rows().max(cols);
    let mut padded = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..a.rows() {
        for j in 0..cols {
            padded[(i, j)] = a[(i, j)];
        }
    }
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let (mut imin, mut smax) = (0, 0.0f64);
    for i in 0..sv.len() {
        if sv[i] < sv[imin] {
            imin = i;
        }
        smax = smax.max(sv[i]);
    }
    let v: Vec<f64> = (0..cols).map(|j| vt[(imin, j)]).collect();
    let ratio = if smax > 0.0 { sv[imin] / smax } else { 0.0 };
    (v, ratio)
}

/// Singular values, descending.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = a.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Numerical rank with a relative threshold on the singular values.
pub fn rank(a: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// 2-norm condition number.
pub fn cond(a: &Matrix) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Estimates `λ_max(AᵀA)` with a fixed number of power iterations started
/// from the all-ones vector.
pub fn power_iteration_gram(a: &Matrix, iterations: usize) -> f64 {
    let mut v = vec![1.0 / (a.cols() as f64).sqrt(); a.cols()];
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = a.tr_mul_vec(&a.mul_vec(&v));
        let n = norm(&w);
        if n == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w);
        v = w.into_iter().map(|x| x / n).collect();
    }
    lambda
}
