//! The confounder hypothesis test: difference operator, plug-in covariance,
//! coordinate-wise z-tests, and the Bonferroni-corrected verdict.

use crate::error::{Error, Result};
use crate::estimator::{
    fit_hkls, fit_kls, lambda_dominance_ratio, residual_variance, CoefficientPair, RidgeConfig,
};
use crate::kernel::{
    basis_kernel, orthonormalize_basis, weighted_basis, BasisKernel, DesignMatrix,
    WeightedBasisKernel,
};
use crate::linalg::{symmetrize, SpdFactor};
use crate::stats::two_sided_p;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Overall outcome of the detection test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SupportNull,
    RejectNull,
}

/// Result of one detection run.
///
/// Serializes to the documented JSON layout; `lambda_warning` is diagnostic
/// only and not part of the wire format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub verdict: Verdict,
    pub alpha_level: f64,
    #[serde(rename = "P")]
    pub p_dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub kernel: crate::kernel::KernelSpec,
    pub z_scores: Vec<f64>,
    pub p_values: Vec<f64>,
    pub rejected: Vec<bool>,
    pub degenerate: Vec<bool>,
    pub sigma_sq: f64,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub lambda_warning: bool,
}

impl TestResult {
    /// Continuous confounding score: max |z_j| over non-degenerate
    /// coordinates, the monotone statistic the verdict thresholds.
    pub fn max_abs_z(&self) -> f64 {
        self.z_scores
            .iter()
            .zip(self.degenerate.iter())
            .filter(|(_, &d)| !d)
            .map(|(z, _)| z.abs())
            .fold(0.0, f64::max)
    }
}

/// The linear map V0 with V0 * Y = alpha_hkls(Y) - alpha_kls(Y) for every
/// outcome vector, computed via two SPD solves with N right-hand-side
/// columns.
pub fn difference_operator(
    k: &BasisKernel,
    k_psi: &WeightedBasisKernel,
    lambda: f64,
) -> Result<Array2<f64>> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::config("lambda must be > 0"));
    }
    let gram = symmetrize(&k.k.dot(&k.k.t()));
    let gram_psi = symmetrize(&k_psi.k_psi.dot(&k.k.t()));
    let p = k.basis_size();
    let mut sys = gram;
    let mut sys_psi = gram_psi;
    for i in 0..p {
        sys[(i, i)] += lambda;
        sys_psi[(i, i)] += lambda;
    }
    let plain = SpdFactor::new(&sys, lambda)?.solve_mat(k.k.view());
    let weighted = SpdFactor::new(&sys_psi, lambda)?.solve_mat(k_psi.k_psi.view());
    Ok(weighted - plain)
}

/// Plug-in asymptotic covariance V = N * V0 V0^T.
pub fn covariance_matrix(v0: &Array2<f64>, n: usize) -> Array2<f64> {
    let mut v = v0.dot(&v0.t());
    v.mapv_inplace(|x| x * n as f64);
    v
}

/// Per-coordinate z-scores and two-sided p-values.
///
/// z_j = sqrt(N) * delta_j / sqrt(sigma_sq * V_jj). Coordinates where the
/// variance falls below tolerance are flagged degenerate with z=0, p=1:
/// exact KLS/HKLS coincidence carries no evidence against the null.
pub fn z_and_p(
    delta: &[f64],
    sigma_sq: f64,
    v: &Array2<f64>,
    n: usize,
) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let p = delta.len();
    let delta_max = delta.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let tol_var = 1e-14 * (delta_max * delta_max * n as f64).max(1.0);
    let sqrt_n = (n as f64).sqrt();
    let mut z_scores = vec![0.0; p];
    let mut p_values = vec![1.0; p];
    let mut degenerate = vec![false; p];
    for j in 0..p {
        let var = sigma_sq * v[(j, j)].max(0.0);
        if var < tol_var {
            degenerate[j] = true;
            continue;
        }
        let z = sqrt_n * delta[j] / var.sqrt();
        z_scores[j] = z;
        p_values[j] = two_sided_p(z);
    }
    (z_scores, p_values, degenerate)
}

/// Bonferroni correction: coordinate j rejects when p_j < alpha / P; the
/// null is rejected when any coordinate does.
pub fn bonferroni_verdict(p_values: &[f64], alpha_level: f64) -> (Vec<bool>, Verdict) {
    let p = p_values.len() as f64;
    let threshold = alpha_level / p;
    let rejected: Vec<bool> = p_values.iter().map(|&pv| pv < threshold).collect();
    let verdict = if rejected.iter().any(|&r| r) {
        Verdict::RejectNull
    } else {
        Verdict::SupportNull
    };
    (rejected, verdict)
}

/// A detection input: covariates, treatment, outcome.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.x.nrows() != n || self.y.len() != n {
            return Err(Error::argument(format!(
                "row counts disagree: X has {}, T has {}, Y has {}",
                self.x.nrows(),
                n,
                self.y.len()
            )));
        }
        let finite = self.x.iter().all(|v| v.is_finite())
            && self.t.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::input("dataset contains non-finite values"));
        }
        Ok(())
    }
}

/// Runs the full detection pipeline on (X, T, Y).
///
/// Deterministic given `config.seed`. Errors on N <= P or non-finite data.
pub fn detect(dataset: &Dataset, config: &RidgeConfig, alpha_level: f64) -> Result<TestResult> {
    let start = std::time::Instant::now();
    dataset.validate()?;
    config.validate()?;
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::config("alpha level must be in (0, 1)"));
    }
    let n = dataset.t.len();
    if n <= config.p {
        return Err(Error::config(format!(
            "basis size P={} requires N > P, got N={}",
            config.p, n
        )));
    }

    let z = DesignMatrix::from_parts(&dataset.t, &dataset.x)?;
    let mut k = basis_kernel(&config.kernel, &z, config.p, config.selection, config.seed)?;
    if config.orthonormal_basis {
        k = orthonormalize_basis(&k)?;
    }
    let k_psi = weighted_basis(&k, &z)?;

    let alpha_kls = fit_kls(&k, &dataset.y, config.lambda)?;
    let alpha_hkls = fit_hkls(&k, &k_psi, &dataset.y, config.lambda)?;
    let pair = CoefficientPair::new(alpha_kls.clone(), alpha_hkls);

    let v0 = difference_operator(&k, &k_psi, config.lambda)?;
    let v = covariance_matrix(&v0, n);
    let sigma_sq = residual_variance(&k, &alpha_kls, &dataset.y)?;

    let (z_scores, p_values, degenerate) = z_and_p(&pair.delta, sigma_sq, &v, n);
    let (rejected, verdict) = bonferroni_verdict(&p_values, alpha_level);
    let lambda_warning = lambda_dominance_ratio(&k, config.lambda) >= 0.1;

    Ok(TestResult {
        verdict,
        alpha_level,
        p_dim: config.p,
        n,
        lambda: config.lambda,
        kernel: k.resolved_spec,
        z_scores,
        p_values,
        rejected,
        degenerate,
        sigma_sq,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        lambda_warning,
    })
}
