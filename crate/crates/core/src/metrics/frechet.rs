//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure, Error, Result};

/// Diagonal shrinkage added to every covariance estimate.
pub const SHRINKAGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Sample mean and unbiased covariance (zero covariance for a single
    /// sample), plus diagonal shrinkage.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        ensure!(!features.is_empty(), InvalidArgument, "cannot fit a Gaussian to no samples");
        let d = features[0].len();
        ensure!(d > 0, InvalidArgument, "features must be non-empty");
        ensure!(
            features.iter().all(|f| f.len() == d),
            Shape,
            "feature vectors have differing lengths"
        );
        let n = features.len();
        let mut mean = DVector::zeros(d);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for f in features {
            let c = DVector::from_column_slice(f) - &mean;
            cov += &c * c.transpose();
        }
        if n > 1 {
            cov /= (n - 1) as f64;
        }
        for i in 0..d {
            cov[(i, i)] += SHRINKAGE;
        }
        Ok(Self { mean, cov })
    }
}

fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0f64, |a, v| a.max(v.abs())).max(1.0);
    if let Some(bad) = eig.eigenvalues.iter().find(|v| **v < -1e-8 * scale) {
        return Err(Error::NonFinite(format!("covariance is not positive semidefinite (eigenvalue {bad})")));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `|μa − μb|² + tr(Σa + Σb − 2 (Σa Σb)^{1/2})`.
///
/// The cross term uses `tr((Σa Σb)^{1/2}) = tr((Σa^{1/2} Σb Σa^{1/2})^{1/2})`,
/// which only needs symmetric eigendecompositions.
pub fn frechet_gaussian(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    ensure!(
        a.mean.len() == b.mean.len(),
        Shape,
        "feature dims {} and {} differ",
        a.mean.len(),
        b.mean.len()
    );
    let ra = sym_sqrt(&a.cov)?;
    let inner = &ra * &b.cov * &ra;
    let cross = sym_sqrt(&inner)?.trace();
    let dm = (&a.mean - &b.mean).norm_squared();
    let d = dm + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    ensure!(d.is_finite(), NonFinite, "Fréchet distance is not finite");
    Ok(d.max(0.0))
}

pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    frechet_gaussian(&Gaussian::fit(a)?, &Gaussian::fit(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(mu: f64, var: f64) -> Gaussian {
        Gaussian {
            mean: DVector::from_element(1, mu),
            cov: DMatrix::from_element(1, 1, var),
        }
    }

    #[test]
    fn one_dimensional_closed_form() {
        assert!((frechet_gaussian(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        // (sqrt(4) - sqrt(1))^2 = 1
        assert!((frechet_gaussian(&g1(0.0, 4.0), &g1(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_give_zero() {
        let f: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0]).collect();
        assert!(frechet_distance(&f, &f).unwrap() < 1e-6);
    }

    #[test]
    fn indefinite_covariance_is_reported() {
        let bad = Gaussian {
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        };
        assert!(frechet_gaussian(&bad, &bad).is_err());
    }
}
