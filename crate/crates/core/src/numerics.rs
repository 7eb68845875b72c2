//! Complex Hermitian linear algebra and Gaussian density algebra.
//!
//! Covariance matrices are stored as [`HermitianPsd`], a thin wrapper over a
//! dense complex matrix that guarantees self-adjointness and a nonnegative
//! spectrum. Zero covariances are valid and represent point masses (known
//! pilots, EM-restricted beliefs).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Tolerance used when validating Hermitian symmetry and PSD-ness.
pub const CONSTRUCTION_TOL: f64 = 1e-10;
/// Minimum ratio of smallest to largest eigenvalue accepted by [`hpd_inverse`].
pub const INVERSION_COND_TOL: f64 = 1e-12;

/// Hermitian positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPsd(ComplexMatrix);

impl HermitianPsd {
    /// Validates `m` and wraps it. The stored matrix is the Hermitian part of
    /// `m`, so tiny asymmetries from round-off are removed.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotPsd(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = max_abs(&m).max(1.0);
        let asym = max_abs(&(&m - m.adjoint()));
        if asym > CONSTRUCTION_TOL * scale {
            return Err(Error::NotPsd(format!("asymmetry {asym:e}")));
        }
        let h = hermitian_part(m);
        if h.nrows() > 0 {
            let eig = SymmetricEigen::new(h.clone());
            let min = eig.eigenvalues.min();
            if min < -CONSTRUCTION_TOL * scale {
                return Err(Error::NotPsd(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(Self(h))
    }

    /// Wraps a matrix known to be PSD by construction (e.g. an inverse of
    /// an HPD matrix or a sum of outer products). Only symmetrizes.
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        debug_assert!(m.is_square());
        Self(hermitian_part(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    /// Diagonal matrix; negative entries are rejected.
    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        if let Some(v) = d.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(Error::NotPsd(format!("diagonal entry {v}")));
        }
        let v = ComplexVector::from_iterator(d.len(), d.iter().map(|&x| Complex64::new(x, 0.0)));
        Ok(Self(ComplexMatrix::from_diagonal(&v)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// Real diagonal (the marginal variances).
    pub fn diagonal_re(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal_re().iter().sum()
    }

    /// Sum of two PSD matrices.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self(&self.0 + &other.0))
    }

    /// Scales by a nonnegative real.
    pub fn scale(&self, s: f64) -> Self {
        assert!(s >= 0.0, "PSD scale must be nonnegative");
        Self(&self.0 * Complex64::new(s, 0.0))
    }

    /// Eigendecomposition with eigenvalues clamped at zero.
    pub fn eigen(&self) -> (Vec<f64>, ComplexMatrix) {
        let eig = SymmetricEigen::new(self.0.clone());
        let vals = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        (vals, eig.eigenvectors)
    }
}

fn hermitian_part(m: ComplexMatrix) -> ComplexMatrix {
    let adj = m.adjoint();
    (m + adj) * Complex64::new(0.5, 0.0)
}

fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Relative Frobenius distance `‖a − b‖_F / ‖b‖_F` (absolute when `b = 0`).
pub fn rel_frobenius(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// Inverse of a strictly positive definite Hermitian matrix.
///
/// Fails with [`Error::SingularMatrix`] when the smallest eigenvalue is not
/// above `1e-12` times the largest.
pub fn hpd_inverse(m: &HermitianPsd) -> Result<HermitianPsd> {
    let n = m.dim();
    if n == 0 {
        return Ok(HermitianPsd::zeros(0));
    }
    let eig = SymmetricEigen::new(m.matrix().clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max <= 0.0 || min <= INVERSION_COND_TOL * max {
        return Err(Error::SingularMatrix(format!(
            "eigenvalue range [{min:e}, {max:e}]"
        )));
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / lam);
    }
    Ok(HermitianPsd::from_trusted(scaled * u.adjoint()))
}

/// Inverse of a positive definite Hermitian matrix through its Cholesky
/// factor. Cheaper than [`hpd_inverse`] and used in the per-iteration
/// updates, where the conditioning is guaranteed by the prior precision.
pub fn hpd_inverse_cholesky(m: &HermitianPsd) -> Result<HermitianPsd> {
    let chol = m
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("Cholesky factorization failed".into()))?;
    let inv = chol.inverse();
    Ok(HermitianPsd::from_trusted((&inv + inv.adjoint()) * Complex64::new(0.5, 0.0)))
}

/// Square-root factor `B = U Λ^{1/2}` of `m = U Λ Uᴴ`, so that `B Bᴴ = m`.
///
/// Columns carry an arbitrary unit phase from the eigensolver. `B` is only
/// ever used through products of the form `Bᴴ X B` and `B Bᴴ`, which are
/// phase-invariant, so no canonical phase is imposed.
pub fn psd_sqrt_factor(m: &HermitianPsd) -> ComplexMatrix {
    if let Some(d) = diagonal_entries(m.matrix()) {
        let v = ComplexVector::from_iterator(
            d.len(),
            d.iter().map(|&x| Complex64::new(x.max(0.0).sqrt(), 0.0)),
        );
        return ComplexMatrix::from_diagonal(&v);
    }
    let (vals, mut u) = m.eigen();
    for (j, lam) in vals.iter().enumerate() {
        u.column_mut(j).scale_mut(lam.sqrt());
    }
    u
}

/// Returns the real diagonal if `m` is exactly diagonal.
fn diagonal_entries(m: &ComplexMatrix) -> Option<Vec<f64>> {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != Complex64::new(0.0, 0.0) {
                return None;
            }
        }
    }
    Some((0..n).map(|i| m[(i, i)].re).collect())
}

/// Multivariate circularly-symmetric complex Gaussian density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: ComplexVector,
    pub cov: HermitianPsd,
}

impl GaussianDensity {
    pub fn new(mean: ComplexVector, cov: HermitianPsd) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean length {} vs covariance dimension {}",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Point mass at `mean`.
    pub fn point_mass(mean: ComplexVector) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: HermitianPsd::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// True for zero-covariance (degenerate) densities.
    pub fn is_point_mass(&self) -> bool {
        self.cov.is_zero()
    }
}

/// Normalized product of two Gaussian densities.
///
/// Evaluated in covariance form, `Σ = Σa (Σa+Σb)^{-1} Σb`, which is the
/// inverse of the summed precisions but stays valid when one factor is a
/// point mass.
pub fn gaussian_product(a: &GaussianDensity, b: &GaussianDensity) -> Result<GaussianDensity> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_point_mass() && b.is_point_mass() {
        return Err(Error::SingularMatrix(
            "product of two point masses".to_string(),
        ));
    }
    let sa = a.cov.matrix();
    let sb = b.cov.matrix();
    let s_inv = hpd_inverse(&a.cov.add(&b.cov)?)?;
    let s_inv = s_inv.matrix();
    let ab = sa * s_inv * sb;
    let ba = sb * s_inv * sa;
    let cov = HermitianPsd::from_trusted((ab + ba) * Complex64::new(0.5, 0.0));
    let mean = sb * (s_inv * &a.mean) + sa * (s_inv * &b.mean);
    Ok(GaussianDensity { mean, cov })
}
