//! Closed-form KLS and HKLS coefficient estimators and the residual variance.
//!
//! Both estimators solve a P x P regularized Gram system:
//!
//! ```text
//! alpha_kls  = (K K^T   + lambda I)^-1 K Y
//! alpha_hkls = (K Psi K^T + lambda I)^-1 K Psi Y
//! ```
//!
//! with Psi = diag(||Z_j||^2). The solves go through a symmetric Cholesky
//! factorization with jitter escalation; no explicit inverse is ever formed.

use crate::error::{Error, Result};
use crate::kernel::{BasisKernel, BasisSelection, KernelSpec, WeightedBasisKernel};
use crate::linalg::{symmetrize, SpdFactor};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Configuration for one detection run: basis size, aggregate ridge strength
/// lambda = N*xi, kernel, basis selection, and the seed driving any random
/// choices (basis sampling, bandwidth subsampling).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub p: usize,
    pub lambda: f64,
    pub kernel: KernelSpec,
    pub selection: BasisSelection,
    pub seed: u64,
    /// Replace the basis rows by orthonormal combinations before fitting.
    /// Keeps the span, normalizes the Gram spectrum to O(1).
    #[serde(default)]
    pub orthonormal_basis: bool,
}

impl RidgeConfig {
    pub fn new(p: usize, lambda: f64, kernel: KernelSpec, seed: u64) -> Self {
        RidgeConfig {
            p,
            lambda,
            kernel,
            selection: BasisSelection::FirstP,
            seed,
            orthonormal_basis: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda <= 0.0 || self.lambda.is_infinite() {
            return Err(Error::config("lambda must be finite and > 0"));
        }
        if self.p < 1 {
            return Err(Error::config("basis size P must be >= 1"));
        }
        self.kernel.validate()
    }
}

/// The fitted coefficient vectors and their difference, the diagnostic marker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientPair {
    pub alpha_kls: Vec<f64>,
    pub alpha_hkls: Vec<f64>,
    pub delta: Vec<f64>,
}

impl CoefficientPair {
    pub fn new(alpha_kls: Array1<f64>, alpha_hkls: Array1<f64>) -> Self {
        let delta = alpha_hkls
            .iter()
            .zip(alpha_kls.iter())
            .map(|(h, k)| h - k)
            .collect();
        CoefficientPair {
            alpha_kls: alpha_kls.to_vec(),
            alpha_hkls: alpha_hkls.to_vec(),
            delta,
        }
    }
}

fn check_fit_inputs(k: &BasisKernel, y: &[f64], lambda: f64) -> Result<()> {
    if y.len() != k.sample_count() {
        return Err(Error::argument(format!(
            "outcome has {} entries but kernel has {} columns",
            y.len(),
            k.sample_count()
        )));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::input("outcome vector contains non-finite entries"));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::config("lambda must be > 0"));
    }
    Ok(())
}

fn add_ridge(mut gram: ndarray::Array2<f64>, lambda: f64) -> ndarray::Array2<f64> {
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    gram
}

/// Ratio used by the regularization-regularity guard: lambda against the
/// Frobenius scale of the Gram matrix. The asymptotic test drops lambda, so
/// once this stops being small the normal approximation degrades.
pub fn lambda_dominance_ratio(k: &BasisKernel, lambda: f64) -> f64 {
    let gram = k.k.dot(&k.k.t());
    let fro = gram.iter().map(|v| v * v).sum::<f64>().sqrt();
    let p = k.basis_size() as f64;
    lambda / (fro / p.sqrt()).max(f64::MIN_POSITIVE)
}

/// Solves the standard kernel ridge system for the KLS coefficients.
pub fn fit_kls(k: &BasisKernel, y: &[f64], lambda: f64) -> Result<Array1<f64>> {
    check_fit_inputs(k, y, lambda)?;
    let gram = symmetrize(&k.k.dot(&k.k.t()));
    let system = add_ridge(gram, lambda);
    let rhs = k.k.dot(&Array1::from_vec(y.to_vec()));
    let factor = SpdFactor::new(&system, lambda)?;
    Ok(factor.solve_vec(rhs.view()))
}

/// Solves the ||Z||^2-weighted system for the HKLS coefficients.
///
/// K_psi K^T = K Psi K^T is symmetric PSD because Psi is a nonnegative
/// diagonal; it is symmetrized before factorization to absorb float
/// asymmetry of order 1e-13.
pub fn fit_hkls(
    k: &BasisKernel,
    k_psi: &WeightedBasisKernel,
    y: &[f64],
    lambda: f64,
) -> Result<Array1<f64>> {
    check_fit_inputs(k, y, lambda)?;
    if k_psi.k_psi.shape() != k.k.shape() {
        return Err(Error::argument(
            "weighted kernel shape does not match basis kernel",
        ));
    }
    let gram = symmetrize(&k_psi.k_psi.dot(&k.k.t()));
    let system = add_ridge(gram, lambda);
    let rhs = k_psi.k_psi.dot(&Array1::from_vec(y.to_vec()));
    let factor = SpdFactor::new(&system, lambda)?;
    Ok(factor.solve_vec(rhs.view()))
}

/// Mean squared KLS residual, (1/N) * ||Y - K^T alpha||^2.
pub fn residual_variance(k: &BasisKernel, alpha_kls: &Array1<f64>, y: &[f64]) -> Result<f64> {
    if alpha_kls.len() != k.basis_size() {
        return Err(Error::argument("coefficient length does not match basis"));
    }
    if y.len() != k.sample_count() {
        return Err(Error::argument("outcome length does not match kernel"));
    }
    let fitted = k.k.t().dot(alpha_kls);
    let n = y.len() as f64;
    let ss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    Ok(ss / n)
}
