//! Dense kernels: a row-major matrix, a reduced SVD by one-sided Jacobi
//! rotations, and central finite differences.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic RNG used everywhere a seed is accepted.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
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
        if rows * cols != data.len() {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let rows = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != rows) {
            return Err(Error::invalid("columns of unequal length"));
        }
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
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

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy of rows `range` as a new matrix.
    pub fn row_range(&self, range: std::ops::Range<usize>) -> Matrix {
        Matrix {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
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

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::invalid(format!(
                "matmul shape mismatch {}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, a) in self.row(i).iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::invalid(format!(
                "matvec: expected length {}, got {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ * x`, without forming the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::invalid(format!(
                "tr_matvec: expected length {}, got {}",
                self.rows,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
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
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows.min(12) {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        if self.rows > 12 {
            writeln!(f, "  ...")?;
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Thin SVD `A = Q·diag(sigma)·Vᵀ` with rank-truncated columns.
#[derive(Debug, Clone)]
pub struct ReducedSvd {
    pub q: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl ReducedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut qs = self.q.clone();
        for i in 0..qs.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                qs[(i, j)] *= s;
            }
        }
        qs.matmul(&self.v.transpose())
            .expect("factor shapes are consistent")
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Default relative cut-off for discarding singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Reduced SVD of a tall matrix by one-sided (Hestenes) Jacobi rotations.
///
/// Singular values below `rank_tol * sigma_max`, and exact zeros, are
/// dropped together with their columns, so `Q` always has orthonormal
/// columns even when `A` is rank deficient.
pub fn reduced_svd(a: &Matrix, rank_tol: f64) -> Result<ReducedSvd> {
    let (m, n) = (a.rows(), a.cols());
    if n == 0 || m < n {
        return Err(Error::invalid(format!(
            "reduced_svd needs m >= n >= 1, got {m}x{n}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::invalid("reduced_svd: non-finite entries"));
    }
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid("reduced_svd: rank_tol must be nonnegative"));
    }

    // Column-major working copy; rotations act on column pairs.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v = Matrix::identity(n);
    let eps = f64::EPSILON;

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norm_sq(&cols[p]);
                let beta = norm_sq(&cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (ap, aq) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (x, y) = (*ap, *aq);
                    *ap = c * x - s * y;
                    *aq = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<(usize, f64)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (j, norm_sq(c).sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let sigma_max = order[0].1;
    let kept: Vec<(usize, f64)> = order
        .into_iter()
        .filter(|&(_, s)| s > 0.0 && s >= rank_tol * sigma_max)
        .collect();

    let r = kept.len();
    let mut q = Matrix::zeros(m, r);
    let mut vr = Matrix::zeros(n, r);
    let mut sigma = Vec::with_capacity(r);
    for (k, &(j, s)) in kept.iter().enumerate() {
        for i in 0..m {
            q[(i, k)] = cols[j][i] / s;
        }
        for i in 0..n {
            vr[(i, k)] = v[(i, j)];
        }
        sigma.push(s);
    }
    Ok(ReducedSvd { q, sigma, v: vr })
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numerical {
                context: "finite_diff_gradient".into(),
                detail: format!("non-finite evaluation at coordinate {i}"),
            });
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference Jacobian (`m x n`) of a vector function.
pub fn finite_diff_jacobian<F>(mut f: F, x: &[f64], h: f64) -> Result<Matrix>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        let col: Vec<f64> = fp
            .iter()
            .zip(&fm)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                context: "finite_diff_jacobian".into(),
                detail: format!("non-finite evaluation at coordinate {i}"),
            });
        }
        columns.push(col);
    }
    Matrix::from_columns(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded_rng(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let qtq = q.transpose().matmul(q).unwrap();
        qtq.max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn svd_of_identity() {
        let svd = reduced_svd(&Matrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.sigma, vec![1.0, 1.0, 1.0]);
        for j in 0..3 {
            for i in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((svd.q[(i, j)].abs() - expected).abs() < 1e-15);
                assert!((svd.v[(i, j)].abs() - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn svd_drops_zero_direction() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let svd = reduced_svd(&a, 1e-12).unwrap();
        assert_eq!(svd.rank(), 1);
        assert_eq!(svd.sigma, vec![2.0]);
        assert_eq!(
            svd.q.column(0).iter().map(|v| v.abs()).collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn svd_random_reconstruction() {
        let a = random_matrix(12, 3, 42);
        let svd = reduced_svd(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.rank(), 3);
        let err = svd.reconstruct().max_abs_diff(&a);
        let rel = (0..12)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|ij| (svd.reconstruct()[ij] - a[ij]).powi(2))
            .sum::<f64>()
            .sqrt()
            / a.frobenius_norm();
        assert!(rel < 1e-12, "relative reconstruction error {rel}");
        assert!(err < 1e-12);
        assert!(orthonormality_error(&svd.q) <= 1e-10);
    }

    #[test]
    fn svd_sorts_and_handles_badly_scaled_columns() {
        let mut a = random_matrix(40, 4, 3);
        for i in 0..40 {
            a[(i, 0)] *= 1e6;
            a[(i, 3)] *= 1e-5;
        }
        let svd = reduced_svd(&a, DEFAULT_RANK_TOL).unwrap();
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(orthonormality_error(&svd.q) <= 1e-10);
        let rel = {
            let r = svd.reconstruct();
            let mut d = r.clone();
            for (x, y) in d.as_mut_slice().iter_mut().zip(a.as_slice()) {
                *x -= y;
            }
            d.frobenius_norm() / a.frobenius_norm()
        };
        assert!(rel < 1e-8);
    }

    #[test]
    fn svd_rejects_bad_input() {
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(
            reduced_svd(&a, 1e-12),
            Err(Error::InvalidInput(_))
        ));
        assert!(reduced_svd(&Matrix::zeros(2, 3), 1e-12).is_err());
    }

    #[test]
    fn fd_gradient_quadratic() {
        let g = finite_diff_gradient(|x| Ok(norm_sq(x)), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn fd_gradient_constant_and_sine() {
        let g = finite_diff_gradient(|_| Ok(3.5), &[0.1, -4.0, 2.0], 1e-4).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = finite_diff_gradient(|x| Ok(x[0].sin()), &[0.3], 1e-6).unwrap();
        assert!((g[0] - 0.3f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn fd_gradient_propagates_non_finite() {
        let r = finite_diff_gradient(|x| Ok(x[0].ln()), &[0.0], 1e-3);
        assert!(r.is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn svd_invariants(seed in 0u64..10_000, m in 3usize..30, n in 1usize..6) {
                prop_assume!(m >= n);
                let a = random_matrix(m, n, seed);
                let svd = reduced_svd(&a, DEFAULT_RANK_TOL).unwrap();
                prop_assert!(orthonormality_error(&svd.q) <= 1e-10);
                prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(svd.sigma.iter().all(|s| *s >= 0.0));
                let r = svd.reconstruct();
                let mut d = r.clone();
                for (x, y) in d.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    *x -= y;
                }
                prop_assert!(d.frobenius_norm() <= 1e-8 * a.frobenius_norm());
            }
        }
    }
}
