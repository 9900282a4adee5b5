//! Dense linear algebra for small matrices on the orthogonal group.
//!
//! [`Mat`] is a plain row-major real matrix. The factorizations (`svd`,
//! `sym_eigen`) delegate to nalgebra; everything specific to the probe
//! (skew bases, the skew exponential, commutators, column-wise
//! vectorization) is implemented here directly.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};
#[allow(unused_imports)] // float methods come from `Float` without std
use num_traits::Float;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix, stored row-major. Entries are finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Builds a matrix from row-major entries, rejecting bad counts and
    /// non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(
                "matrix must have at least one row and column",
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics if rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
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

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `tr(Aᵀ B)`.
    pub fn frobenius_inner(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        })
    }

    /// Off-diagonal squared Frobenius mass.
    pub fn off_diagonal_energy(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    acc += self.get(i, j) * self.get(i, j);
                }
            }
        }
        acc
    }

    /// `‖A Aᵀ − I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let aat = self * &self.transpose();
        (&aat - &Self::identity(self.rows)).frobenius_norm()
    }

    pub fn determinant(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::ContractViolation(
                "determinant of a non-square matrix",
            ));
        }
        Ok(self.to_nalgebra().determinant())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Stacks matrices with a shared column count on top of each other.
    pub fn vstack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or(Error::InvalidDimension("cannot stack an empty list"))?;
        let cols = first.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: p.cols,
                });
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: bad.len(),
            });
        }
        let data = (0..rows)
            .flat_map(|i| columns.iter().map(move |c| c[i]))
            .collect();
        Self::from_row_major(rows, cols, data)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch"
        );
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a - b)
    }
}

/// Panics on inner-dimension mismatch; use [`Mat::try_mul`] for checked
/// multiplication.
impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.try_mul(rhs).expect("inner dimensions must agree")
    }
}

/// Canonical basis of so(n): `Ω_(a,b) = e_a e_bᵀ − e_b e_aᵀ` for `a < b`,
/// ordered (0,1), (0,2), …, (0,n−1), (1,2), …
#[derive(Debug, Clone, PartialEq)]
pub struct SkewBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
    generators: Vec<Mat>,
}

impl SkewBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of generators, `n(n−1)/2`.
    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Mat] {
        &self.generators
    }

    /// Zero-based index pair of each generator.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `Σ_k c_k Ω_k`.
    pub fn combine(&self, coeffs: &[f64]) -> Mat {
        assert_eq!(coeffs.len(), self.dim());
        let mut out = Mat::zeros(self.n, self.n);
        for (&(a, b), &c) in self.pairs.iter().zip(coeffs) {
            out.set(a, b, out.get(a, b) + c);
            out.set(b, a, out.get(b, a) - c);
        }
        out
    }
}

pub fn skew_basis(n: usize) -> Result<SkewBasis> {
    if n < 2 {
        return Err(Error::InvalidDimension("skew basis needs n >= 2"));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut generators = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            let mut g = Mat::zeros(n, n);
            g.set(a, b, 1.0);
            g.set(b, a, -1.0);
            pairs.push((a, b));
            generators.push(g);
        }
    }
    Ok(SkewBasis {
        n,
        pairs,
        generators,
    })
}

/// Matrix exponential of a skew-symmetric matrix by scaling and squaring
/// around a truncated Taylor series.
pub fn expm_skew(omega: &Mat) -> Result<Mat> {
    if !omega.is_square() {
        return Err(Error::ContractViolation("expm_skew needs a square matrix"));
    }
    let norm = omega.frobenius_norm();
    let skew_defect = (omega + &omega.transpose()).frobenius_norm();
    if skew_defect > 1e-12 * norm.max(1.0) {
        return Err(Error::ContractViolation(
            "expm_skew needs a skew-symmetric matrix",
        ));
    }
    let n = omega.rows();

    let mut squarings = 0u32;
    while norm / f64::from(1u32 << squarings.min(31)) > 0.5 {
        squarings += 1;
    }
    let scaled = omega.scale(1.0 / f64::from(1u32 << squarings));

    let mut result = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..=64 {
        term = (&term * &scaled).scale(1.0 / f64::from(k));
        result = &result + &term;
        if term.frobenius_norm() < 1e-16 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// `[A, B] = AB − BA`.
pub fn commutator(a: &Mat, b: &Mat) -> Result<Mat> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::ContractViolation("commutator needs square matrices"));
    }
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.rows(),
        });
    }
    Ok(&(a * b) - &(b * a))
}

/// Column-wise vectorization: entry `(i, j)` lands at `j·rows + i`.
pub fn vectorize(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push(m.get(i, j));
        }
    }
    out
}

/// Thin singular value decomposition `J = U diag(σ) Vᵀ` with σ descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        let sigma = Mat::diag(&self.singular_values);
        &(&self.u * &sigma) * &self.v.transpose()
    }
}

pub fn svd(j: &Mat) -> Result<Svd> {
    if let Some(idx) = j.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(idx));
    }
    let dec = j
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::Decomposition("svd did not converge"))?;
    let u = dec.u.ok_or(Error::Decomposition("svd produced no U"))?;
    let v_t = dec.v_t.ok_or(Error::Decomposition("svd produced no Vᵀ"))?;
    let sv = dec.singular_values;

    let k = sv.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let u_cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| (0..u.nrows()).map(|i| u[(i, c)]).collect())
        .collect();
    let v_cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| (0..v_t.ncols()).map(|i| v_t[(c, i)]).collect())
        .collect();
    Ok(Svd {
        u: Mat::from_columns(&u_cols)?,
        singular_values: order.iter().map(|&c| sv[c].max(0.0)).collect(),
        v: Mat::from_columns(&v_cols)?,
    })
}

/// Singular values in descending order; `min(rows, cols)` of them.
pub fn singular_spectrum(j: &Mat) -> Result<Vec<f64>> {
    Ok(svd(j)?.singular_values)
}

/// Eigendecomposition of a symmetric matrix. Eigenvalues are returned in
/// descending order, eigenvectors as the matching columns.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if !a.is_square() {
        return Err(Error::ContractViolation("sym_eigen needs a square matrix"));
    }
    let dec = nalgebra::linalg::SymmetricEigen::try_new(a.to_nalgebra(), f64::EPSILON, 0).ok_or(
        Error::Decomposition("symmetric eigendecomposition did not converge"),
    )?;
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| dec.eigenvalues[y].total_cmp(&dec.eigenvalues[x]));
    let vectors = Mat::from_fn(n, n, |i, j| dec.eigenvectors[(i, order[j])]);
    Ok((order.iter().map(|&i| dec.eigenvalues[i]).collect(), vectors))
}
