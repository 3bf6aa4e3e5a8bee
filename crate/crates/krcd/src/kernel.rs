//! Kernel matrices over the joint design Z = (T, X), the P-row basis used by
//! the coefficient estimators, and the ||Z||^2-weighted variant.

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdFactor};
use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Gaussian bandwidth: either fixed or resolved from the data by the median
/// heuristic at kernel-construction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    MedianHeuristic,
    Fixed(f64),
}

/// Kernel family plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Gaussian { bandwidth: Bandwidth },
}

impl KernelSpec {
    /// Degree-2, offset-1 polynomial; matches the squared-norm structural
    /// forms of the synthetic generators.
    pub fn default_polynomial() -> Self {
        KernelSpec::Polynomial {
            degree: 2,
            offset: 1.0,
        }
    }

    pub fn default_gaussian() -> Self {
        KernelSpec::Gaussian {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if *degree < 1 {
                    return Err(Error::config("polynomial degree must be >= 1"));
                }
                if offset.is_nan() || *offset < 0.0 || offset.is_infinite() {
                    return Err(Error::config("polynomial offset must be finite and >= 0"));
                }
                Ok(())
            }
            KernelSpec::Gaussian { bandwidth } => match bandwidth {
                Bandwidth::MedianHeuristic => Ok(()),
                Bandwidth::Fixed(b) => {
                    if *b > 0.0 && b.is_finite() {
                        Ok(())
                    } else {
                        Err(Error::config("gaussian bandwidth must be finite and > 0"))
                    }
                }
            },
        }
    }
}

/// How the P basis rows are chosen from the N samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSelection {
    /// Rows 1..P of the kernel matrix, exactly as in the detection algorithm.
    FirstP,
    /// P distinct row indices drawn from a seeded stream.
    SeededRandom,
}

/// The joint design: column 0 is the treatment, columns 1..=d the covariates.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    z: Array2<f64>,
}

impl DesignMatrix {
    /// Assembles Z = [T, X] and validates shape and finiteness.
    pub fn from_parts(t: &[f64], x: &Array2<f64>) -> Result<Self> {
        let n = t.len();
        if n != x.nrows() {
            return Err(Error::argument(format!(
                "treatment has {} rows but covariates have {}",
                n,
                x.nrows()
            )));
        }
        if n < 2 {
            return Err(Error::argument("need at least 2 samples"));
        }
        let d = x.ncols();
        let mut z = Array2::<f64>::zeros((n, d + 1));
        for i in 0..n {
            z[(i, 0)] = t[i];
            for c in 0..d {
                z[(i, c + 1)] = x[(i, c)];
            }
        }
        let dm = DesignMatrix { z };
        dm.check_finite()?;
        Ok(dm)
    }

    pub fn from_matrix(z: Array2<f64>) -> Result<Self> {
        if z.nrows() < 2 {
            return Err(Error::argument("need at least 2 samples"));
        }
        if z.ncols() < 1 {
            return Err(Error::argument("design matrix needs at least one column"));
        }
        let dm = DesignMatrix { z };
        dm.check_finite()?;
        Ok(dm)
    }

    fn check_finite(&self) -> Result<()> {
        if self.z.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::input("design matrix contains non-finite entries"))
        }
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Covariate dimension (excluding the treatment column).
    pub fn covariate_dim(&self) -> usize {
        self.z.ncols() - 1
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.z
    }

    /// ||Z_j||^2 for every row, the diagonal of the weighting matrix.
    pub fn squared_norms(&self) -> Array1<f64> {
        self.z.rows().into_iter().map(row_sq_norm).collect()
    }
}

fn row_sq_norm(row: ndarray::ArrayView1<f64>) -> f64 {
    row.iter().map(|v| v * v).sum()
}

/// Evaluates k(z1, z2) for one pair of points.
///
/// The gaussian variant requires a resolved (fixed) bandwidth.
pub fn kernel_eval(spec: &KernelSpec, z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::argument(format!(
            "kernel arguments have lengths {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    spec.validate()?;
    let value = match spec {
        KernelSpec::Linear => dot(z1, z2),
        KernelSpec::Polynomial { degree, offset } => (dot(z1, z2) + offset).powi(*degree as i32),
        KernelSpec::Gaussian { bandwidth } => {
            let b = match bandwidth {
                Bandwidth::Fixed(b) => *b,
                Bandwidth::MedianHeuristic => {
                    return Err(Error::config(
                        "gaussian bandwidth must be resolved before evaluation",
                    ))
                }
            };
            let d2: f64 = z1
                .iter()
                .zip(z2.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-d2 / (2.0 * b * b)).exp()
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric {
            message: "kernel evaluation produced a non-finite value".into(),
            condition_estimate: f64::NAN,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Median of pairwise Euclidean distances between rows of Z, over at most
/// 1000 uniformly subsampled rows. Returns 1.0 when the median is zero.
pub fn resolve_bandwidth(z: &DesignMatrix, seed: u64) -> f64 {
    const CAP: usize = 1000;
    let n = z.n();
    let rows = z.rows();
    let chosen: Vec<usize> = if n <= CAP {
        (0..n).collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBA4D_EB1D);
        idx.shuffle(&mut rng);
        idx.truncate(CAP);
        idx.sort_unstable();
        idx
    };
    let m = chosen.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        let ra = rows.row(chosen[a]);
        for &cb in chosen.iter().skip(a + 1) {
            let rb = rows.row(cb);
            let d2: f64 = ra
                .iter()
                .zip(rb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    let med = median(&mut dists);
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// P rows of the full N x N kernel matrix, K[i][j] = k(Z_{b_i}, Z_j).
#[derive(Debug, Clone)]
pub struct BasisKernel {
    /// P x N kernel slab.
    pub k: Array2<f64>,
    /// Sample indices of the chosen basis points.
    pub row_indices: Vec<usize>,
    /// The kernel spec with any data-resolved hyperparameters filled in.
    pub resolved_spec: KernelSpec,
}

impl BasisKernel {
    pub fn basis_size(&self) -> usize {
        self.k.nrows()
    }

    pub fn sample_count(&self) -> usize {
        self.k.ncols()
    }
}

/// Full symmetric N x N kernel matrix. Built via Z Z^T, which is the O(N^2 d)
/// step that dominates the pipeline.
fn full_kernel_matrix(spec: &KernelSpec, z: &DesignMatrix) -> Array2<f64> {
    let rows = z.rows();
    let gram = rows.dot(&rows.t());
    match spec {
        KernelSpec::Linear => gram,
        KernelSpec::Polynomial { degree, offset } => {
            let deg = *degree as i32;
            let off = *offset;
            gram.mapv(|g| (g + off).powi(deg))
        }
        KernelSpec::Gaussian { bandwidth } => {
            let b = match bandwidth {
                Bandwidth::Fixed(b) => *b,
                Bandwidth::MedianHeuristic => unreachable!("bandwidth resolved by basis_kernel"),
            };
            let norms: Vec<f64> = (0..z.n()).map(|i| gram[(i, i)]).collect();
            let inv = 1.0 / (2.0 * b * b);
            let mut k = gram;
            for i in 0..norms.len() {
                for j in 0..norms.len() {
                    let d2 = (norms[i] + norms[j] - 2.0 * k[(i, j)]).max(0.0);
                    k[(i, j)] = (-d2 * inv).exp();
                }
            }
            k
        }
    }
}

/// Builds the P x N basis kernel.
///
/// `first_p` takes rows 1..P of the full kernel matrix; `seeded_random`
/// draws P distinct sample indices from `seed`.
pub fn basis_kernel(
    spec: &KernelSpec,
    z: &DesignMatrix,
    p: usize,
    selection: BasisSelection,
    seed: u64,
) -> Result<BasisKernel> {
    spec.validate()?;
    let n = z.n();
    if p < 1 || p >= n {
        return Err(Error::config(format!(
            "basis size must satisfy 1 <= P < N, got P={p}, N={n}"
        )));
    }
    let resolved = match spec {
        KernelSpec::Gaussian {
            bandwidth: Bandwidth::MedianHeuristic,
        } => KernelSpec::Gaussian {
            bandwidth: Bandwidth::Fixed(resolve_bandwidth(z, seed)),
        },
        other => *other,
    };
    let full = full_kernel_matrix(&resolved, z);
    let row_indices: Vec<usize> = match selection {
        BasisSelection::FirstP => (0..p).collect(),
        BasisSelection::SeededRandom => {
            let mut idx: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            idx.shuffle(&mut rng);
            idx.truncate(p);
            idx
        }
    };
    let mut k = Array2::<f64>::zeros((p, n));
    for (out_row, &src) in row_indices.iter().enumerate() {
        k.slice_mut(s![out_row, ..]).assign(&full.row(src));
    }
    Ok(BasisKernel {
        k,
        row_indices,
        resolved_spec: resolved,
    })
}

/// The basis kernel with each column j scaled by ||Z_j||^2.
#[derive(Debug, Clone)]
pub struct WeightedBasisKernel {
    /// P x N weighted slab: K_psi[i][j] = K[i][j] * ||Z_j||^2.
    pub k_psi: Array2<f64>,
    /// The diagonal of the weighting matrix.
    pub squared_norms: Array1<f64>,
}

/// Right-multiplies the basis kernel by diag(||Z_j||^2).
pub fn weighted_basis(k: &BasisKernel, z: &DesignMatrix) -> Result<WeightedBasisKernel> {
    if k.sample_count() != z.n() {
        return Err(Error::argument(format!(
            "basis kernel has {} columns but design has {} rows",
            k.sample_count(),
            z.n()
        )));
    }
    let squared_norms = z.squared_norms();
    let mut k_psi = k.k.clone();
    for (j, &w) in squared_norms.iter().enumerate() {
        k_psi.column_mut(j).mapv_inplace(|v| v * w);
    }
    Ok(WeightedBasisKernel {
        k_psi,
        squared_norms,
    })
}

/// Replaces the basis rows with orthonormal combinations of themselves:
/// the output satisfies K K^T = I (up to a vanishing stabilizer) while
/// spanning exactly the same function subspace.
///
/// This is the eigenfunction-flavored basis: with a normalized Gram the
/// ridge strength is directly comparable across data sets, which is what
/// makes the regularization-sweep benchmarks meaningful down to 1e-12.
pub fn orthonormalize_basis(k: &BasisKernel) -> Result<BasisKernel> {
    let p = k.basis_size();
    let gram = symmetrize(&k.k.dot(&k.k.t()));
    let scale = gram.diag().iter().sum::<f64>() / p as f64;
    let mut shifted = gram;
    for i in 0..p {
        shifted[(i, i)] += 1e-10 * scale.max(1.0);
    }
    let factor = SpdFactor::new(&shifted, 1e-12 * scale.max(1.0))?;
    let whitened = factor.solve_lower_mat(k.k.view());
    Ok(BasisKernel {
        k: whitened,
        row_indices: k.row_indices.clone(),
        resolved_spec: k.resolved_spec,
    })
}
