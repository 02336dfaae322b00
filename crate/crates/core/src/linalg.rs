//! Dense row-major matrices and the handful of factorizations the greedy
//! solvers need.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Result};
use crate::math;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_len("matrix row", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn scale_columns(&mut self, factors: &[f64]) {
        debug_assert_eq!(factors.len(), self.cols);
        for i in 0..self.rows {
            for (v, f) in self.row_mut(i).iter_mut().zip(factors) {
                *v *= f;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `alpha * op(A) * op(B)`, where `op` optionally transposes.
pub fn gemm(alpha: f64, a: &Matrix, trans_a: bool, b: &Matrix, trans_b: bool) -> Result<Matrix> {
    let (m, k, rsa, csa) = if trans_a {
        (a.cols, a.rows, 1, a.cols)
    } else {
        (a.rows, a.cols, a.cols, 1)
    };
    let (kb, n, rsb, csb) = if trans_b {
        (b.cols, b.rows, 1, b.cols)
    } else {
        (b.rows, b.cols, b.cols, 1)
    };
    check_len("gemm inner dimension", k, kb)?;
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    // SAFETY: strides describe the row-major buffers above and `c` is m x n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

const BLOCK: usize = 256;

/// Dot product; blocks are summed with four lanes and combined with
/// Neumaier compensation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = Neumaier::default();
    for (ca, cb) in a.chunks(BLOCK).zip(b.chunks(BLOCK)) {
        sum.add(dot_block(ca, cb));
    }
    sum.value()
}

/// `sum_i w_i a_i b_i` with the same summation scheme as [`dot`].
pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(w.len(), a.len());
    let mut sum = Neumaier::default();
    for ((cw, ca), cb) in w.chunks(BLOCK).zip(a.chunks(BLOCK)).zip(b.chunks(BLOCK)) {
        let mut lanes = [0.0; 4];
        let mut i = 0;
        while i + 4 <= ca.len() {
            for l in 0..4 {
                lanes[l] += cw[i + l] * ca[i + l] * cb[i + l];
            }
            i += 4;
        }
        let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
        while i < ca.len() {
            s += cw[i] * ca[i] * cb[i];
            i += 1;
        }
        sum.add(s);
    }
    sum.value()
}

#[inline]
fn dot_block(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let mut i = 0;
    while i + 4 <= a.len() {
        for l in 0..4 {
            lanes[l] += a[i + l] * b[i + l];
        }
        i += 4;
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    while i < a.len() {
        s += a[i] * b[i];
        i += 1;
    }
    s
}

pub fn sum(values: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for block in values.chunks(BLOCK) {
        acc.add(block.iter().sum());
    }
    acc.value()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix stored
/// row-major in an `n x n` slice.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = math::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l[i * n..i * n + i], &y[..i]);
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Squared ratio of the extreme diagonal entries of the factor; a cheap
    /// lower estimate of the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            let d = self.l[i * n + i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let r = hi / lo;
        r * r
    }
}

/// Eigen-truncated pseudo-solve of a symmetric system: eigenpairs with
/// `lambda <= rel_tol * lambda_max` are discarded. Returns the solution, the
/// condition number of the retained spectrum and the number of discarded
/// directions. `None` if the matrix has no positive eigenvalue.
pub fn truncated_symmetric_solve(
    a: &[f64],
    n: usize,
    b: &[f64],
    rel_tol: f64,
) -> Option<(Vec<f64>, f64, usize)> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let eig = nalgebra::SymmetricEigen::new(m);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) || !lmax.is_finite() {
        return None;
    }
    let cut = rel_tol * lmax;
    let mut x = vec![0.0; n];
    let mut lmin = lmax;
    let mut dropped = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= cut {
            dropped += 1;
            continue;
        }
        lmin = lmin.min(lam);
        let v = eig.eigenvectors.column(k);
        let proj: f64 = v.iter().zip(b).map(|(vi, bi)| vi * bi).sum();
        let c = proj / lam;
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += c * vi;
        }
    }
    Some((x, lmax / lmin, dropped))
}

/// Singular values of a dense matrix in decreasing order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Vec::new();
    }
    let m = nalgebra::DMatrix::from_row_slice(a.rows, a.cols, &a.data);
    let mut s: Vec<f64> = nalgebra::SVD::new(m, false, false)
        .singular_values
        .iter()
        .cloned()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Outcome of a diagonally pivoted, rank-revealing Cholesky factorization.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    /// Columns of the factor `L` (each of length `n`), so `A ~= L L^T`.
    pub columns: Vec<Vec<f64>>,
    pub pivots: Vec<usize>,
    /// Largest remaining diagonal of the Schur complement at termination.
    pub residual: f64,
}

/// Partial pivoted Cholesky of an implicit symmetric positive semi-definite
/// matrix given by its diagonal and a column oracle. Stops when the largest
/// remaining conditional variance is `<= tol`. Fails if a remaining diagonal
/// entry drops below `-neg_tol` (numerically indefinite input).
pub fn pivoted_cholesky(
    diag: &[f64],
    mut column: impl FnMut(usize, &mut [f64]),
    tol: f64,
    neg_tol: f64,
) -> Result<PivotedCholesky> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut selected = vec![false; n];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut buf = vec![0.0; n];
    loop {
        let mut p = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for (i, &di) in d.iter().enumerate() {
            if selected[i] {
                continue;
            }
            if di < -neg_tol || !di.is_finite() {
                return Err(invalid("covariance is numerically indefinite"));
            }
            if di > best {
                best = di;
                p = i;
            }
        }
        if p == usize::MAX || best <= tol {
            return Ok(PivotedCholesky {
                columns,
                pivots,
                residual: best.max(0.0),
            });
        }
        column(p, &mut buf);
        for c in &columns {
            axpy(-c[p], c, &mut buf);
        }
        let piv = math::sqrt(best);
        let mut l = vec![0.0; n];
        for i in 0..n {
            if !selected[i] && i != p {
                l[i] = buf[i] / piv;
            }
        }
        l[p] = piv;
        for i in 0..n {
            if !selected[i] {
                d[i] -= l[i] * l[i];
            }
        }
        d[p] = 0.0;
        selected[p] = true;
        pivots.push(p);
        columns.push(l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn gemm_matches_naive_product_for_all_transpositions() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 1.0);
        let b = Matrix::from_fn(4, 2, |i, j| (i as f64 - j as f64) * 0.25);
        let expected = naive_mul(&a, &b);
        let c = gemm(1.0, &a, false, &b, false).unwrap();
        assert_eq!(c.rows(), 3);
        assert_eq!(c.cols(), 2);
        for i in 0..3 {
            for j in 0..2 {
                assert!((c.get(i, j) - expected.get(i, j)).abs() < 1e-14);
            }
        }
        let at = a.transpose();
        let bt = b.transpose();
        for (ta, tb) in [(true, false), (false, true), (true, true)] {
            let lhs = if ta { &at } else { &a };
            let rhs = if tb { &bt } else { &b };
            let c = gemm(1.0, lhs, ta, rhs, tb).unwrap();
            for i in 0..3 {
                for j in 0..2 {
                    assert!((c.get(i, j) - expected.get(i, j)).abs() < 1e-14);
                }
            }
        }
        assert!(gemm(1.0, &a, false, &a, false).is_err());
    }

    #[test]
    fn compensated_dot_handles_cancellation() {
        // block sums are exact; a plain running sum would lose the ones
        let n = 10_000;
        let c = 1e16 / 256.0;
        let mut a = vec![1.0; n];
        a[..256].fill(c);
        a[n - 256..].fill(-c);
        let b = vec![1.0; n];
        assert_eq!(dot(&a, &b), (n - 512) as f64);
        let w = vec![2.0; n];
        assert_eq!(weighted_dot(&w, &a, &b), 2.0 * (n - 512) as f64);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let ch = Cholesky::factor(&a, 3).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-13);
        }
        assert!(ch.condition_estimate() >= 1.0);
        assert!(Cholesky::factor(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn truncated_solve_drops_null_direction() {
        // rank-one matrix [1 1; 1 1]
        let a = [1.0, 1.0, 1.0, 1.0];
        let (x, _, dropped) = truncated_symmetric_solve(&a, 2, &[2.0, 2.0], 1e-12).unwrap();
        assert_eq!(dropped, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!(truncated_symmetric_solve(&[0.0], 1, &[1.0], 1e-12).is_none());
    }

    #[test]
    fn pivoted_cholesky_reveals_rank() {
        // A = v v^T + u u^T with n = 4
        let v = [1.0, 2.0, 0.0, -1.0];
        let u = [0.5, -1.0, 1.0, 0.0];
        let entry = |i: usize, j: usize| v[i] * v[j] + u[i] * u[j];
        let diag: Vec<f64> = (0..4).map(|i| entry(i, i)).collect();
        let pc = pivoted_cholesky(
            &diag,
            |p, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = entry(i, p);
                }
            },
            1e-12,
            1e-10,
        )
        .unwrap();
        assert_eq!(pc.columns.len(), 2);
        for i in 0..4 {
            for j in 0..4 {
                let r: f64 = pc.columns.iter().map(|c| c[i] * c[j]).sum();
                assert!((r - entry(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_values_sorted_decreasing() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let s = singular_values(&a);
        assert!((s[0] - 4.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12);
    }
}
