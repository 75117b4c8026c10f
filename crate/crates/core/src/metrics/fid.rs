use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    /// `max(mean_term + trace_term, 0)`.
    pub value: f64,
    pub dim: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// `‖μa − μb‖²`
    pub mean_term: f64,
    /// `Tr(Σa + Σb − 2(Σa Σb)^{1/2})`
    pub trace_term: f64,
}

/// Row-major `[n, d]` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::ShapeMismatch(format!("{} values for [{n}, {d}] features", data.len())));
        }
        Ok(Features { n, d, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let x = DMatrix::from_row_slice(self.n, self.d, &self.data);
        let mean = x.row_mean().transpose();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (self.n - 1) as f64;
        (mean, cov)
    }
}

/// Symmetric square root with negative eigenvalues clamped to zero.
fn sqrtm_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets.
pub fn fid(a: &Features, b: &Features) -> Result<FidReport> {
    if a.d != b.d || a.d == 0 {
        return Err(Error::ShapeMismatch(format!("feature widths {} and {}", a.d, b.d)));
    }
    if a.n < 2 || b.n < 2 {
        return Err(Error::InvalidInput(format!("fid needs at least 2 samples per set, got {} and {}", a.n, b.n)));
    }
    if a.n < a.d || b.n < b.d {
        log::warn!("fid: fewer samples ({}, {}) than feature dimensions ({}); covariances are singular", a.n, b.n, a.d);
    }
    let (mu_a, cov_a) = a.moments();
    let (mu_b, cov_b) = b.moments();
    let mean_term = (&mu_a - &mu_b).norm_squared();
    let root_a = sqrtm_psd(cov_a.clone());
    let mut inner = &root_a * &cov_b * &root_a;
    // Symmetrize against rounding before the eigensolve.
    inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(FidReport { value: (mean_term + trace_term).max(0.0), dim: a.d, n_a: a.n, n_b: b.n, mean_term, trace_term })
}
