//! Symmetric-matrix coordinates and the geometry of the centered Gaussian
//! covariance family.
//!
//! Symmetric `m × m` matrices are identified with vectors of length
//! `m(m+1)/2` indexed by pairs `(i, j)` with `i ≤ j` in lexicographic order:
//! `(0,0), (0,1), …, (0,m-1), (1,1), …, (m-1,m-1)`. All indices are zero based.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalue threshold separating positive definite from singular.
pub const PD_TOL: f64 = 1e-10;
/// Largest condition number accepted when inverting a Fisher matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Number of vech coordinates of an `m × m` symmetric matrix.
pub fn vech_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Position of pair `(i, j)`, `i ≤ j < m`, in vech order.
pub fn vech_index(i: usize, j: usize, m: usize) -> Result<usize> {
    if i > j || j >= m {
        return Err(Error::IndexOutOfRange { i, j, m });
    }
    Ok(vech_index_unchecked(i, j, m))
}

#[inline]
pub(crate) fn vech_index_unchecked(i: usize, j: usize, m: usize) -> usize {
    // Rows 0..i contribute m + (m-1) + … + (m-i+1) entries.
    i * m - i * i.saturating_sub(1) / 2 + (j - i)
}

/// All pairs in vech order.
pub fn vech_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(vech_len(m));
    for i in 0..m {
        for j in i..m {
            pairs.push((i, j));
        }
    }
    pairs
}

/// A symmetric matrix flattened to its upper-triangle coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VechVector {
    m: usize,
    entries: Vec<f64>,
}

impl VechVector {
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if entries.len() != vech_len(m) {
            return Err(Error::DimensionMismatch { expected: vech_len(m), got: entries.len() });
        }
        Ok(Self { m, entries })
    }

    pub fn zeros(m: usize) -> Self {
        Self { m, entries: vec![0.0; vech_len(m)] }
    }

    /// Reads the upper triangle. The matrix must be symmetric.
    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(a)?;
        let m = a.nrows();
        let entries = vech_pairs(m).into_iter().map(|(i, j)| a[(i, j)]).collect();
        Self::new(m, entries)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut a = DMatrix::zeros(m, m);
        for (k, (i, j)) in vech_pairs(m).into_iter().enumerate() {
            a[(i, j)] = self.entries[k];
            a[(j, i)] = self.entries[k];
        }
        a
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    /// Entry `(i, j)`; order of the indices does not matter.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.entries[vech_index_unchecked(a, b, self.m)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.entries[vech_index_unchecked(a, b, self.m)] = value;
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let scale = a.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// A symmetric covariance matrix. Construction checks symmetry; use
/// [`CovMatrix::new_pd`] when positive definiteness is required.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    values: DMatrix<f64>,
}

impl CovMatrix {
    /// Symmetric input; the stored matrix is exactly symmetrised.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&values)?;
        let sym = (&values + values.transpose()) * 0.5;
        Ok(Self { values: sym })
    }

    pub fn new_pd(values: DMatrix<f64>) -> Result<Self> {
        let c = Self::new(values)?;
        c.check_pd()?;
        Ok(c)
    }

    pub fn identity(m: usize) -> Self {
        Self { values: DMatrix::identity(m, m) }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self { values: DMatrix::from_diagonal(&DVector::from_column_slice(d)) }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let mut a = DMatrix::zeros(m, m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        Self::new(a)
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.values)
    }

    pub fn check_pd(&self) -> Result<()> {
        let lmin = self.min_eigenvalue();
        if lmin > PD_TOL {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite(lmin))
        }
    }

    pub fn is_pd(&self) -> bool {
        self.check_pd().is_ok()
    }

    /// `log det`, via Cholesky.
    pub fn log_det(&self) -> Result<f64> {
        let chol = self
            .values
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(self.min_eigenvalue()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let chol = self
            .values
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(self.min_eigenvalue()))?;
        Ok(chol.inverse())
    }

    /// Correlation matrix `D^{-1/2} Σ D^{-1/2}`.
    pub fn correlation(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut r = self.values.clone();
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] /= (self.values[(i, i)] * self.values[(j, j)]).sqrt();
            }
        }
        r
    }

    pub fn vech(&self) -> VechVector {
        VechVector::from_matrix(&self.values).expect("stored matrix is symmetric")
    }
}

/// Inverse Fisher information of `N(0, Σ)` in vech coordinates: the
/// `(ij, kl)` entry is `σ_ik σ_jl + σ_il σ_jk`.
pub fn fisher_info_inverse(sigma: &CovMatrix) -> Result<DMatrix<f64>> {
    sigma.check_pd()?;
    let m = sigma.m();
    let s = sigma.values();
    let pairs = vech_pairs(m);
    let k = pairs.len();
    let mut out = DMatrix::zeros(k, k);
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for (b, &(p, l)) in pairs.iter().enumerate().skip(a) {
            let v = s[(i, p)] * s[(j, l)] + s[(i, l)] * s[(j, p)];
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Fisher information in vech coordinates, the numeric inverse of
/// [`fisher_info_inverse`].
pub fn fisher_info(sigma: &CovMatrix) -> Result<DMatrix<f64>> {
    let inv = fisher_info_inverse(sigma)?;
    let eig = SymmetricEigen::new(inv.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite(lmin));
    }
    let cond = lmax / lmin;
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let chol = inv.cholesky().ok_or(Error::NotPositiveDefinite(lmin))?;
    let mut out = chol.inverse();
    // Cholesky inverse is symmetric up to round-off.
    out = (&out + out.transpose()) * 0.5;
    Ok(out)
}

/// Spectral square root of a symmetric positive semidefinite matrix.
pub fn mat_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    let eig = SymmetricEigen::new(a.clone());
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -PD_TOL {
            return Err(Error::NegativeEigenvalue(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// `(z − τ)ᵗ · info · (z − τ)`.
pub fn mahalanobis_sq(z: &VechVector, tau: &VechVector, info: &DMatrix<f64>) -> Result<f64> {
    if z.len() != tau.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: tau.len() });
    }
    if info.nrows() != z.len() || info.ncols() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: info.nrows() });
    }
    let d = DVector::from_iterator(z.len(), z.entries().iter().zip(tau.entries()).map(|(a, b)| a - b));
    Ok((d.transpose() * info * &d)[(0, 0)])
}
