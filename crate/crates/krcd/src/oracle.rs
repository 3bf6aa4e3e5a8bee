//! Independent brute-force references used to validate the closed forms and
//! the test's calibration before trusting the fast path.
//!
//! The minimizers below run plain gradient descent with backtracking line
//! search on the empirical objectives. They deliberately share no linear
//! solve code with the estimators: agreement between the two routes is the
//! point of the check.

use crate::confounder::{detect, Verdict};
use crate::datagen::{generate, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimator::RidgeConfig;
use crate::kernel::BasisKernel;
use crate::stats::normal_cdf;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Outcome of an oracle comparison run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub max_coord_error: f64,
    /// Oracle objective minus closed-form objective; the closed form should
    /// never be worse beyond tolerance.
    pub objective_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITERATIONS: usize = 1_000_000;

/// Empirical objective (1/N) sum_i w_i (Y_i - (K^T a)_i)^2 + (lambda/N) ||a||^2.
fn objective(k: &BasisKernel, y: &[f64], weights: Option<&[f64]>, lambda: f64, a: &Array1<f64>) -> f64 {
    let n = y.len() as f64;
    let fitted = k.k.t().dot(a);
    let mut loss = 0.0;
    for i in 0..y.len() {
        let r = y[i] - fitted[i];
        let w = weights.map_or(1.0, |w| w[i]);
        loss += w * r * r;
    }
    let ridge: f64 = a.iter().map(|v| v * v).sum();
    (loss + lambda * ridge) / n
}

fn gradient(
    k: &BasisKernel,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    a: &Array1<f64>,
) -> Array1<f64> {
    let n = y.len() as f64;
    let fitted = k.k.t().dot(a);
    let mut scaled = Array1::<f64>::zeros(y.len());
    for i in 0..y.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        scaled[i] = w * (fitted[i] - y[i]);
    }
    let mut grad = k.k.dot(&scaled);
    grad.mapv_inplace(|g| 2.0 * g / n);
    for (g, v) in grad.iter_mut().zip(a.iter()) {
        *g += 2.0 * lambda * v / n;
    }
    grad
}

fn minimize(
    k: &BasisKernel,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    tol: f64,
) -> Result<(Array1<f64>, usize, bool)> {
    if tol <= 0.0 {
        return Err(Error::argument("oracle tolerance must be > 0"));
    }
    let p = k.basis_size();
    let mut a = Array1::<f64>::zeros(p);
    let mut obj = objective(k, y, weights, lambda, &a);
    let mut step = 1.0;
    for iter in 0..MAX_ITERATIONS {
        let grad = gradient(k, y, weights, lambda, &a);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < tol {
            return Ok((a, iter, true));
        }
        // backtracking line search with Armijo condition
        step *= 2.0;
        let quantum = 8.0 * f64::EPSILON * obj.abs().max(1e-300);
        loop {
            let candidate = &a - &(&grad * step);
            let cand_obj = objective(k, y, weights, lambda, &candidate);
            let margin = 0.5 * step * gnorm * gnorm;
            if margin >= quantum {
                if cand_obj <= obj - margin {
                    a = candidate;
                    obj = cand_obj;
                    break;
                }
            } else if cand_obj <= obj + quantum {
                // the sufficient-decrease margin is no longer resolvable in
                // the objective; require the gradient itself to contract
                let cand_grad = gradient(k, y, weights, lambda, &candidate);
                let cand_gnorm = cand_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if cand_gnorm < 0.999 * gnorm {
                    a = candidate;
                    obj = cand_obj;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-300 {
                return Ok((a, iter, false));
            }
        }
    }
    Ok((a, MAX_ITERATIONS, false))
}

/// Gradient-descent minimizer of the KLS objective.
pub fn oracle_minimize_kls(
    k: &BasisKernel,
    y: &[f64],
    lambda: f64,
    tol: f64,
) -> Result<(Array1<f64>, usize, bool)> {
    minimize(k, y, None, lambda, tol)
}

/// Gradient-descent minimizer of the ||Z||^2-weighted objective.
pub fn oracle_minimize_hkls(
    k: &BasisKernel,
    y: &[f64],
    squared_norms: &[f64],
    lambda: f64,
    tol: f64,
) -> Result<(Array1<f64>, usize, bool)> {
    if squared_norms.len() != y.len() {
        return Err(Error::argument("weight vector length mismatch"));
    }
    minimize(k, y, Some(squared_norms), lambda, tol)
}

/// Compares a closed-form solution against the oracle minimizer.
pub fn compare_to_oracle(
    k: &BasisKernel,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    closed_form: &Array1<f64>,
    tol: f64,
) -> Result<OracleReport> {
    let (oracle, iterations, converged) = minimize(k, y, weights, lambda, tol)?;
    let max_coord_error = oracle
        .iter()
        .zip(closed_form.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let objective_gap =
        objective(k, y, weights, lambda, &oracle) - objective(k, y, weights, lambda, closed_form);
    Ok(OracleReport {
        max_coord_error,
        objective_gap,
        iterations,
        converged,
    })
}

/// One oracle-agreement check of the validation suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub kernel: String,
    pub seed: u64,
    pub kls: OracleReport,
    pub hkls: OracleReport,
    pub ok: bool,
}

/// Runs the oracle-agreement suite: for each kernel family and seed, fits
/// the closed forms on a small random instance and compares them against
/// the gradient-descent minimizers.
pub fn validation_suite(
    base_seed: u64,
    lambda: f64,
    repeats_per_kernel: u64,
) -> Result<Vec<ValidationCheck>> {
    use crate::estimator::{fit_hkls, fit_kls};
    use crate::kernel::{basis_kernel, weighted_basis, BasisSelection, DesignMatrix, KernelSpec};
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let kernels = [
        ("linear", KernelSpec::Linear),
        ("polynomial", KernelSpec::default_polynomial()),
        ("gaussian", KernelSpec::default_gaussian()),
    ];
    let mut checks = Vec::new();
    for (name, spec) in &kernels {
        for rep in 0..repeats_per_kernel {
            let seed = base_seed.wrapping_add(rep);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z_mat = Array2::from_shape_fn((30, 3), |_| rng.random_range(-1.0..1.0));
            let z = DesignMatrix::from_matrix(z_mat)?;
            let y: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
            let k = basis_kernel(spec, &z, 6, BasisSelection::FirstP, seed)?;
            let w = weighted_basis(&k, &z)?;
            let kls = fit_kls(&k, &y, lambda)?;
            let kls_report = compare_to_oracle(&k, &y, None, lambda, &kls, 1e-10)?;
            let hkls = fit_hkls(&k, &w, &y, lambda)?;
            let norms: Vec<f64> = w.squared_norms.to_vec();
            let hkls_report = compare_to_oracle(&k, &y, Some(&norms), lambda, &hkls, 1e-10)?;
            let ok = kls_report.converged
                && hkls_report.converged
                && kls_report.max_coord_error < 1e-6
                && hkls_report.max_coord_error < 1e-6;
            checks.push(ValidationCheck {
                kernel: name.to_string(),
                seed,
                kls: kls_report,
                hkls: hkls_report,
                ok,
            });
        }
    }
    Ok(checks)
}

/// Null-calibration summary over seeded H0 replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullCalibration {
    pub rejection_rate: f64,
    pub z_mean: f64,
    pub z_var: f64,
    pub ks_distance: f64,
    pub repeats: usize,
    pub pooled_z_count: usize,
}

/// Runs `repeats` independently seeded detections on H0 data and summarizes
/// the family-wise rejection rate and the pooled non-degenerate z moments,
/// plus the Kolmogorov-Smirnov distance to the standard normal.
pub fn monte_carlo_null_calibration(
    ridge: &RidgeConfig,
    scenario: &ScenarioConfig,
    repeats: usize,
    alpha_level: f64,
) -> Result<NullCalibration> {
    if repeats < 1 {
        return Err(Error::argument("repeats must be >= 1"));
    }
    if scenario.rho != 0.0 {
        return Err(Error::argument("null calibration requires rho = 0"));
    }
    let mut rejections = 0usize;
    let mut pooled = Vec::new();
    for r in 0..repeats {
        let mut cfg = scenario.clone();
        cfg.seed = scenario.seed.wrapping_add(r as u64);
        let data = generate(&cfg)?;
        let mut ridge_r = ridge.clone();
        ridge_r.seed = cfg.seed;
        let result = detect(&data.detection_input(), &ridge_r, alpha_level)?;
        if result.verdict == Verdict::RejectNull {
            rejections += 1;
        }
        for (z, degen) in result.z_scores.iter().zip(result.degenerate.iter()) {
            if !degen {
                pooled.push(*z);
            }
        }
    }
    let count = pooled.len();
    let (z_mean, z_var) = if count > 1 {
        let mean = pooled.iter().sum::<f64>() / count as f64;
        let var = pooled.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / count as f64;
        (mean, var)
    } else {
        (0.0, 0.0)
    };
    let ks_distance = ks_against_standard_normal(&mut pooled);
    Ok(NullCalibration {
        rejection_rate: rejections as f64 / repeats as f64,
        z_mean,
        z_var,
        ks_distance,
        repeats,
        pooled_z_count: count,
    })
}

fn ks_against_standard_normal(sample: &mut [f64]) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut sup = 0.0f64;
    for (i, z) in sample.iter().enumerate() {
        let cdf = normal_cdf(*z);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        sup = sup.max(hi).max(lo);
    }
    sup
}
