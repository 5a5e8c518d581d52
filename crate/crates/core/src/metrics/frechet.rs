use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Mean and covariance of a feature cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    /// Symmetrized unbiased covariance.
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl GaussianFit {
    /// Fits rows of `features` (`count` × `dim`, row-major).
    pub fn from_features(features: &[f64], count: usize, dim: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Analysis(format!("need at least 2 samples for a Gaussian fit, got {count}")));
        }
        if features.len() != count * dim {
            return Err(Error::Analysis(format!("{} feature values for {count}×{dim}", features.len())));
        }
        let x = DMatrix::from_row_slice(count, dim, features);
        let mean = DVector::from_iterator(dim, x.column_iter().map(|c| c.sum() / count as f64));
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (count - 1) as f64;
        Ok(Self { mean, cov: symmetrize(&cov), count })
    }

    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov: symmetrize(&cov), count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped to 0.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, the symmetric matrix similar to `Σ₁Σ₂`.
pub fn similar_product(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> DMatrix<f64> {
    let a = sqrt_psd(s1);
    symmetrize(&(&a * s2 * &a))
}

/// `Tr((Σ₁Σ₂)^{1/2})` via the eigenvalues of the symmetric similar matrix.
pub fn trace_sqrt_product(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    let m = similar_product(s1, s2);
    SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`, clamped at 0.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.dim() != b.dim() || a.cov.shape() != b.cov.shape() {
        return Err(Error::Analysis(format!("Gaussian dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    if a.cov.iter().chain(b.cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Analysis("covariance is not finite".into()));
    }
    let dm = (&a.mean - &b.mean).norm_squared();
    let tr = a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt_product(&a.cov, &b.cov);
    Ok((dm + tr).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_fits_give_zero() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = GaussianFit::new(DVector::from_vec(vec![1.0, -1.0]), cov);
        assert!(frechet_distance(&g, &g).unwrap() < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let a = GaussianFit::new(DVector::zeros(2), DMatrix::identity(2, 2));
        let b = GaussianFit::new(DVector::zeros(3), DMatrix::identity(3, 3));
        assert!(frechet_distance(&a, &b).is_err());
    }

    #[test]
    fn fit_requires_two_samples() {
        assert!(GaussianFit::from_features(&[1.0, 2.0], 1, 2).is_err());
        let g = GaussianFit::from_features(&[1.0, 2.0, 3.0, 6.0], 2, 2).unwrap();
        assert_eq!(g.mean.as_slice(), &[2.0, 4.0]);
        assert_eq!(g.cov.as_slice(), &[2.0, 4.0, 4.0, 8.0]);
    }
}
