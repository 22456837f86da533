//! Dense vectors, matrices, and symmetric positive-semidefinite operators.
//!
//! Everything here is desk-scale (n up to a few hundred): storage is dense,
//! eigendecompositions use cyclic Jacobi rotations, and all values are
//! immutable after construction.

use crate::error::{OpaveError, Result};

/// Relative symmetry tolerance for [`SpdOperator`] construction.
pub const SYMMETRY_RTOL: f64 = 1e-12;
/// Relative PSD tolerance: eig_min >= -PSD_RTOL * eig_max.
pub const PSD_RTOL: f64 = 1e-10;

/// A dense real vector. Construction rejects NaN/Inf entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(OpaveError::NonFinite(i));
        }
        Ok(Self { data })
    }

    /// Construction without the finiteness check; intended for values that
    /// are products of already-validated arithmetic.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { data: s.to_vec() }
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: vec![0.0; n] }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            data: (0..n).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector::from_vec(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector::from_vec(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::from_vec(self.data.iter().map(|v| s * v).collect())
    }

    /// self + s * other
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector::from_vec(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

/// A dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(OpaveError::InvalidParam(
                "matrix dimensions must be positive".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(OpaveError::DimensionMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(OpaveError::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

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
            m.set(i, i, 1.0);
        }
        m
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

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, entries[i]);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.cols, x.len());
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        }
        Vector::from_vec(out)
    }

    /// A^T x
    pub fn matvec_t(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        Vector::from_vec(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// A^T A
    pub fn gram(&self) -> DenseMatrix {
        self.transpose().matmul(self)
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| s * v).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        debug_assert!(self.is_square());
        let mut m = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn symmetrize(&self) -> DenseMatrix {
        debug_assert!(self.is_square());
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        })
    }

    fn is_diagonal(&self) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..self.cols).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }
}

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(OpaveError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.max_asymmetry();
    let tol = SYMMETRY_RTOL * m.frobenius_norm();
    if asym > tol && asym > 0.0 {
        return Err(OpaveError::NotSymmetric {
            asymmetry: asym,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the orthogonal matrix whose
/// columns are the matching eigenvectors, so that `M = Q diag(l) Q^T`.
pub fn eig_sym(m: &DenseMatrix) -> Result<(Vector, DenseMatrix)> {
    check_symmetric(m)?;
    let n = m.rows();
    // Work on the symmetrized copy so round-off asymmetry cannot bias rotations.
    let mut a = m.symmetrize();
    let mut q = DenseMatrix::identity(n);
    let fro = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let max_sweeps = 100;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= 1e-15 * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a.get(p, r);
                if apr.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(r, r) - a.get(p, p)) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows and columns p, r of a.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akr = a.get(k, r);
                    a.set(k, p, c * akp - s * akr);
                    a.set(k, r, s * akp + c * akr);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let ark = a.get(r, k);
                    a.set(p, k, c * apk - s * ark);
                    a.set(r, k, s * apk + c * ark);
                }
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkr = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkr);
                    q.set(k, r, s * qkp + c * qkr);
                }
            }
        }
    }
    if !converged {
        // Final check: the last sweep may have reached the threshold.
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() > 1e-13 * fro {
            return Err(OpaveError::EigNoConvergence(max_sweeps));
        }
    }
    // Sort ascending, permuting eigenvector columns along.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let eigenvalues = Vector::from_vec(idx.iter().map(|&i| a.get(i, i)).collect());
    let eigenvectors = DenseMatrix::from_fn(n, n, |i, j| q.get(i, idx[j]));
    Ok((eigenvalues, eigenvectors))
}

/// A symmetric positive-semidefinite linear operator with cached eigenvalue
/// bounds. Diagonal operators keep a flag so callers can take closed-form
/// paths (component-wise application, scaled proximal maps).
#[derive(Debug, Clone)]
pub struct SpdOperator {
    matrix: DenseMatrix,
    eig_min: f64,
    eig_max: f64,
    diagonal: bool,
}

impl SpdOperator {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        check_symmetric(&matrix)?;
        let (eig_min, eig_max, diagonal) = if matrix.is_diagonal() {
            let d = matrix.diagonal();
            let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, true)
        } else {
            let (evals, _) = eig_sym(&matrix)?;
            (evals[0], evals[evals.len() - 1], false)
        };
        if eig_min < -PSD_RTOL * eig_max.max(0.0) {
            return Err(OpaveError::NotPsd { eig_min });
        }
        Ok(Self {
            matrix,
            eig_min,
            eig_max,
            diagonal,
        })
    }

    pub fn from_diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DenseMatrix::diag(entries))
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        assert!(s >= 0.0 && s.is_finite());
        Self {
            matrix: DenseMatrix::diag(&vec![s; n]),
            eig_min: s,
            eig_max: s,
            diagonal: true,
        }
    }

    /// Constructor for matrices reassembled from a known eigendecomposition;
    /// skips the eigenvalue sweep. The bounds are trusted as-is.
    pub(crate) fn with_known_bounds(
        matrix: DenseMatrix,
        eig_min: f64,
        eig_max: f64,
    ) -> Result<Self> {
        check_symmetric(&matrix)?;
        if eig_min < -PSD_RTOL * eig_max.max(0.0) {
            return Err(OpaveError::NotPsd { eig_min });
        }
        let diagonal = matrix.is_diagonal();
        Ok(Self {
            matrix,
            eig_min,
            eig_max,
            diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn eig_min(&self) -> f64 {
        self.eig_min
    }

    pub fn eig_max(&self) -> f64 {
        self.eig_max
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Diagonal entries if this operator is diagonal.
    pub fn diag_entries(&self) -> Option<Vec<f64>> {
        self.diagonal.then(|| self.matrix.diagonal())
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), x.len());
        if self.diagonal {
            Vector::from_vec(
                (0..x.len()).map(|i| self.matrix.get(i, i) * x[i]).collect(),
            )
        } else {
            self.matrix.matvec(x)
        }
    }
}

/// Frobenius norm of AV - VA. For diagonal V this is computed entrywise as
/// A_ij (v_j - v_i) without forming products; a scaled identity commutes
/// exactly and returns 0.
pub fn commutation_defect(a: &DenseMatrix, v: &SpdOperator) -> Result<f64> {
    if a.rows() != v.dim() || a.cols() != v.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "matrix is {}x{} but metric has dimension {}",
            a.rows(),
            a.cols(),
            v.dim()
        )));
    }
    if let Some(d) = v.diag_entries() {
        if d.iter().all(|&x| x == d[0]) {
            return Ok(0.0);
        }
        let n = a.rows();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let e = a.get(i, j) * (d[j] - d[i]);
                sum += e * e;
            }
        }
        return Ok(sum.sqrt());
    }
    let av = a.matmul(v.matrix());
    let va = v.matrix().matmul(a);
    Ok(av.sub(&va).frobenius_norm())
}

/// Loewner comparison: `a >= b` iff the minimum eigenvalue of `a - b` is
/// at least `-tol`.
pub fn loewner_geq(a: &SpdOperator, b: &SpdOperator, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "operators of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = a.matrix().sub(b.matrix());
    if diff.is_diagonal() {
        let lo = diff.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
        return Ok(lo >= -tol);
    }
    let (evals, _) = eig_sym(&diff)?;
    Ok(evals[0] >= -tol)
}

/// Positive square root of a PSD operator.
pub fn sqrt_spd(op: &SpdOperator) -> Result<SpdOperator> {
    if op.eig_min() < -PSD_RTOL * op.eig_max().max(0.0) {
        return Err(OpaveError::NotPsd {
            eig_min: op.eig_min(),
        });
    }
    if op.is_diagonal() {
        let d: Vec<f64> = op
            .matrix()
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        return SpdOperator::from_diagonal(&d);
    }
    let (evals, q) = eig_sym(op.matrix())?;
    let n = op.dim();
    let root = assemble_from_eig(&q, &(0..n).map(|i| evals[i].max(0.0).sqrt()).collect::<Vec<_>>());
    SpdOperator::new(root.symmetrize())
}

/// Q diag(d) Q^T
pub fn assemble_from_eig(q: &DenseMatrix, d: &[f64]) -> DenseMatrix {
    let n = q.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let dk = d[k];
        if dk == 0.0 {
            continue;
        }
        for i in 0..n {
            let qik = q.get(i, k);
            if qik == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = out.get(i, j) + dk * qik * q.get(j, k);
                out.set(i, j, v);
            }
        }
    }
    out
}

/// Semi-norm induced by a PSD metric: sqrt(<Mx, x>).
pub fn metric_norm(x: &Vector, metric: &SpdOperator) -> Result<f64> {
    if x.len() != metric.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "vector of length {} vs metric of dimension {}",
            x.len(),
            metric.dim()
        )));
    }
    Ok(metric.apply(x).dot(x).max(0.0).sqrt())
}

/// Inverse of a strictly positive definite operator.
pub fn inverse_spd(op: &SpdOperator) -> Result<SpdOperator> {
    let tol = 1e-14 * op.eig_max().max(1.0);
    if op.eig_min() <= tol {
        return Err(OpaveError::Singular {
            eig_min: op.eig_min(),
        });
    }
    if op.is_diagonal() {
        let d: Vec<f64> = op.matrix().diagonal().iter().map(|v| 1.0 / v).collect();
        return SpdOperator::from_diagonal(&d);
    }
    let (evals, q) = eig_sym(op.matrix())?;
    let n = op.dim();
    let inv = assemble_from_eig(&q, &(0..n).map(|i| 1.0 / evals[i]).collect::<Vec<_>>());
    let mut out = SpdOperator::new(inv.symmetrize())?;
    // The reciprocal bounds are exact; replace the Jacobi estimates.
    out.eig_min = 1.0 / op.eig_max();
    out.eig_max = 1.0 / op.eig_min();
    Ok(out)
}
