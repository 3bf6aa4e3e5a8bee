//! Seeded synthetic benchmark generators with controllable confounding
//! strength rho, plus the CSV interchange format.
//!
//! All three scenarios share the same ground-truth convention: rho = 0
//! generates data with no hidden-confounder term at all (the null holds
//! structurally), rho > 0 injects the confounder into both the treatment
//! and the outcome.
//!
//! Randomness is counter-based: every row's draws come from an independent
//! stream keyed by (seed, stream id, row index), so generation order never
//! affects the output.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Gain applied inside the squared hidden-confounder channel of the
/// single-environment outcome equation.
///
/// The outcome's confounder term is (GAIN * rho * ||U||^2)^2: a quadratic
/// function of the same hidden score that enters the treatment linearly.
/// If the outcome reused the identical linear channel, substituting
/// rho*||U||^2 = T - ||X||^2 - eps would collapse the outcome to an exact
/// function of (T, X) plus noise, and no regression contrast could ever
/// see the confounding. The squared channel keeps the confounder visible
/// while rho = 0 still removes it entirely.
pub const SINGLE_ENV_CONFOUNDER_GAIN: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleEnvNonlinear,
    MultiEnvNonlinear,
    BinarySynthetic,
}

/// Generator configuration. `n_envs` only applies to the multi-environment
/// scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub rho: f64,
    pub n: usize,
    pub d_x: usize,
    pub d_u: usize,
    pub n_envs: usize,
    pub seed: u64,
    pub noise_half_width: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, rho: f64, n: usize, seed: u64) -> Self {
        ScenarioConfig {
            scenario,
            rho,
            n,
            d_x: 3,
            d_u: 3,
            n_envs: 2,
            seed,
            noise_half_width: 0.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rho.is_nan() || self.rho < 0.0 || self.rho.is_infinite() {
            return Err(Error::config("rho must be finite and >= 0"));
        }
        if self.n < 2 {
            return Err(Error::config("sample count must be >= 2"));
        }
        if self.d_x < 1 || self.d_u < 1 {
            return Err(Error::config("dimensions must be >= 1"));
        }
        if self.noise_half_width.is_nan() || self.noise_half_width <= 0.0 {
            return Err(Error::config("noise half-width must be > 0"));
        }
        match self.scenario {
            Scenario::MultiEnvNonlinear => {
                if self.n_envs < 2 {
                    return Err(Error::config("multi-env scenario needs n_envs >= 2"));
                }
                if self.n_envs > self.n {
                    return Err(Error::config("more environments than samples"));
                }
            }
            Scenario::BinarySynthetic => {
                if self.d_x != 1 || self.d_u != 1 {
                    return Err(Error::config("binary scenario requires d_x = d_u = 1"));
                }
            }
            Scenario::SingleEnvNonlinear => {}
        }
        Ok(())
    }
}

/// A generated benchmark dataset. `u` is the hidden-confounder matrix: it is
/// never fed to detection and exists only for auditing.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub x: Array2<f64>,
    pub u: Array2<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub env_labels: Option<Vec<usize>>,
    pub truth: bool,
}

impl GeneratedDataset {
    pub fn detection_input(&self) -> crate::confounder::Dataset {
        crate::confounder::Dataset {
            x: self.x.clone(),
            t: self.t.clone(),
            y: self.y.clone(),
        }
    }
}

// stream ids for the counter-based draws
const STREAM_X: u64 = 1;
const STREAM_U: u64 = 2;
const STREAM_E1: u64 = 3;
const STREAM_E2: u64 = 4;
const STREAM_ENV: u64 = 5;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn row_rng(seed: u64, stream: u64, row: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(stream ^ splitmix64(row)));
    ChaCha8Rng::seed_from_u64(key)
}

fn uniform_matrix(n: usize, d: usize, seed: u64, stream: u64) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let mut rng = row_rng(seed, stream, i as u64);
        for c in 0..d {
            m[(i, c)] = rng.random_range(0.0..1.0);
        }
    }
    m
}

fn noise_vector(n: usize, half_width: f64, seed: u64, stream: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut rng = row_rng(seed, stream, i as u64);
            rng.random_range(-half_width..half_width)
        })
        .collect()
}

/// Per column: min-max scale to [0,1], then subtract the column mean.
/// Constant columns map to all zeros.
pub fn normalize_covariates(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut col in out.columns_mut() {
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            col.fill(0.0);
            continue;
        }
        let range = max - min;
        col.mapv_inplace(|v| (v - min) / range);
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
    }
    out
}

fn row_sq_sum(m: &Array2<f64>, i: usize) -> f64 {
    m.row(i).iter().map(|v| v * v).sum()
}

/// Single-environment nonlinear scenario.
///
/// T_i = ||X_i||^2 + rho ||U_i||^2 + e1,
/// Y_i = ||Z_i||^2 + (GAIN * rho * ||U_i||^2)^2 + e2, Z_i = (T_i, X_i),
/// with X, U uniform then min-max scaled and centered, e ~ U(-w, w).
pub fn gen_single_env(config: &ScenarioConfig) -> Result<GeneratedDataset> {
    config.validate()?;
    if config.scenario != Scenario::SingleEnvNonlinear {
        return Err(Error::config("scenario mismatch: expected single_env"));
    }
    let n = config.n;
    let x = normalize_covariates(&uniform_matrix(n, config.d_x, config.seed, STREAM_X));
    let u = normalize_covariates(&uniform_matrix(n, config.d_u, config.seed, STREAM_U));
    let e1 = noise_vector(n, config.noise_half_width, config.seed, STREAM_E1);
    let e2 = noise_vector(n, config.noise_half_width, config.seed, STREAM_E2);

    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let su = row_sq_sum(&u, i);
        let sx = row_sq_sum(&x, i);
        t[i] = sx + config.rho * su + e1[i];
        let z_sq = t[i] * t[i] + sx;
        let channel = SINGLE_ENV_CONFOUNDER_GAIN * config.rho * su;
        y[i] = z_sq + channel * channel + e2[i];
    }
    Ok(GeneratedDataset {
        x,
        u,
        t,
        y,
        env_labels: None,
        truth: config.rho > 0.0,
    })
}

/// Multi-environment nonlinear scenario: round-robin environment assignment,
/// per-environment weights w_{T,x}, w_{T,u}, w_{Y,x}, w_{Y,u} ~ U(1,5) and
/// w_{Y,T} ~ U(1,2), confounder entering as (3 rho u)^2.
pub fn gen_multi_env(config: &ScenarioConfig) -> Result<GeneratedDataset> {
    config.validate()?;
    if config.scenario != Scenario::MultiEnvNonlinear {
        return Err(Error::config("scenario mismatch: expected multi_env"));
    }
    let n = config.n;
    let (d_x, d_u) = (config.d_x, config.d_u);
    let x = normalize_covariates(&uniform_matrix(n, d_x, config.seed, STREAM_X));
    let u = normalize_covariates(&uniform_matrix(n, d_u, config.seed, STREAM_U));
    let e1 = noise_vector(n, config.noise_half_width, config.seed, STREAM_E1);
    let e2 = noise_vector(n, config.noise_half_width, config.seed, STREAM_E2);

    struct EnvWeights {
        w_tx: Vec<f64>,
        w_tu: Vec<f64>,
        w_yx: Vec<f64>,
        w_yu: Vec<f64>,
        w_yt: f64,
    }
    let weights: Vec<EnvWeights> = (0..config.n_envs)
        .map(|e| {
            let mut rng = row_rng(config.seed, STREAM_ENV, e as u64);
            let mut draw = |count: usize| -> Vec<f64> {
                (0..count).map(|_| rng.random_range(1.0..5.0)).collect()
            };
            let w_tx = draw(d_x);
            let w_tu = draw(d_u);
            let w_yx = draw(d_x);
            let w_yu = draw(d_u);
            let w_yt = rng.random_range(1.0..2.0);
            EnvWeights {
                w_tx,
                w_tu,
                w_yx,
                w_yu,
                w_yt,
            }
        })
        .collect();

    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut env_labels = vec![0usize; n];
    for i in 0..n {
        let e = i % config.n_envs;
        env_labels[i] = e;
        let w = &weights[e];
        let mut t_val = e1[i];
        for c in 0..d_x {
            t_val += w.w_tx[c] * x[(i, c)] * x[(i, c)];
        }
        for c in 0..d_u {
            let hu = 3.0 * config.rho * u[(i, c)];
            t_val += w.w_tu[c] * hu * hu;
        }
        t[i] = t_val;
        let mut y_val = w.w_yt * t_val * t_val + e2[i];
        for c in 0..d_x {
            y_val += w.w_yx[c] * x[(i, c)] * x[(i, c)];
        }
        for c in 0..d_u {
            let hu = 3.0 * config.rho * u[(i, c)];
            y_val += w.w_yu[c] * hu * hu;
        }
        y[i] = y_val;
    }
    Ok(GeneratedDataset {
        x,
        u,
        t,
        y,
        env_labels: Some(env_labels),
        truth: config.rho > 0.0,
    })
}

/// Binary-threshold synthetic scenario with scalar X, U ~ U(0,1):
/// T0 = X^2 + 2.5 rho U^2 + e1, T = 1[T0 > 1],
/// Y0 = ||(T, X)||^2 + 2.5 rho U^2 + e2, Y = 1[Y0 > 1].
pub fn gen_binary_synthetic(config: &ScenarioConfig) -> Result<GeneratedDataset> {
    config.validate()?;
    if config.scenario != Scenario::BinarySynthetic {
        return Err(Error::config("scenario mismatch: expected binary_synthetic"));
    }
    let n = config.n;
    let x = uniform_matrix(n, 1, config.seed, STREAM_X);
    let u = uniform_matrix(n, 1, config.seed, STREAM_U);
    let e1 = noise_vector(n, config.noise_half_width, config.seed, STREAM_E1);
    let e2 = noise_vector(n, config.noise_half_width, config.seed, STREAM_E2);

    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let confound = 2.5 * config.rho * u[(i, 0)] * u[(i, 0)];
        let t0 = x[(i, 0)] * x[(i, 0)] + confound + e1[i];
        let t_bin = if t0 > 1.0 { 1.0 } else { 0.0 };
        t[i] = t_bin;
        let z_sq = t_bin * t_bin + x[(i, 0)] * x[(i, 0)];
        let y0 = z_sq + confound + e2[i];
        y[i] = if y0 > 1.0 { 1.0 } else { 0.0 };
    }
    Ok(GeneratedDataset {
        x,
        u,
        t,
        y,
        env_labels: None,
        truth: config.rho > 0.0,
    })
}

/// Dispatches on the configured scenario.
pub fn generate(config: &ScenarioConfig) -> Result<GeneratedDataset> {
    match config.scenario {
        Scenario::SingleEnvNonlinear => gen_single_env(config),
        Scenario::MultiEnvNonlinear => gen_multi_env(config),
        Scenario::BinarySynthetic => gen_binary_synthetic(config),
    }
}

/// Writes the dataset as CSV: header `y,t,x1..xd[,env][,u1..ud]`, floats with
/// 17 significant digits. Hidden columns only appear when `include_hidden`.
pub fn write_csv<W: Write>(
    dataset: &GeneratedDataset,
    include_hidden: bool,
    mut out: W,
) -> Result<()> {
    let d_x = dataset.x.ncols();
    let d_u = dataset.u.ncols();
    let mut header = String::from("y,t");
    for c in 0..d_x {
        header.push_str(&format!(",x{}", c + 1));
    }
    if dataset.env_labels.is_some() {
        header.push_str(",env");
    }
    if include_hidden {
        for c in 0..d_u {
            header.push_str(&format!(",u{}", c + 1));
        }
    }
    writeln!(out, "{header}")?;
    for i in 0..dataset.t.len() {
        let mut line = format!("{:.16e},{:.16e}", dataset.y[i], dataset.t[i]);
        for c in 0..d_x {
            line.push_str(&format!(",{:.16e}", dataset.x[(i, c)]));
        }
        if let Some(env) = &dataset.env_labels {
            line.push_str(&format!(",{}", env[i]));
        }
        if include_hidden {
            for c in 0..d_u {
                line.push_str(&format!(",{:.16e}", dataset.u[(i, c)]));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// A dataset parsed back from CSV. Hidden `u*` columns are counted but not
/// retained; `env` is kept so the caller can opt into using it.
#[derive(Debug, Clone)]
pub struct CsvDataset {
    pub x: Array2<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub env: Option<Vec<f64>>,
    pub hidden_columns: usize,
}

impl CsvDataset {
    /// Converts to a detection input, optionally appending the environment
    /// label as one extra covariate column.
    pub fn into_dataset(self, use_env: bool) -> Result<crate::confounder::Dataset> {
        let x = if use_env {
            let env = self
                .env
                .as_ref()
                .ok_or_else(|| Error::argument("no `env` column present in the input"))?;
            let n = self.x.nrows();
            let d = self.x.ncols();
            let mut wide = Array2::<f64>::zeros((n, d + 1));
            for i in 0..n {
                for c in 0..d {
                    wide[(i, c)] = self.x[(i, c)];
                }
                wide[(i, d)] = env[i];
            }
            wide
        } else {
            self.x
        };
        Ok(crate::confounder::Dataset {
            x,
            t: self.t,
            y: self.y,
        })
    }
}

/// Reads the CSV layout produced by [`write_csv`].
pub fn read_csv<R: BufRead>(reader: R) -> Result<CsvDataset> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::input("empty CSV input"))??;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut y_idx = None;
    let mut t_idx = None;
    let mut env_idx = None;
    let mut x_idx: Vec<(usize, usize)> = Vec::new();
    let mut hidden = 0usize;
    for (i, name) in columns.iter().enumerate() {
        match name.as_str() {
            "y" => y_idx = Some(i),
            "t" => t_idx = Some(i),
            "env" => env_idx = Some(i),
            other => {
                if let Some(num) = other.strip_prefix('x') {
                    let ord: usize = num
                        .parse()
                        .map_err(|_| Error::input(format!("bad covariate column `{other}`")))?;
                    x_idx.push((ord, i));
                } else if other.starts_with('u') {
                    hidden += 1;
                } else {
                    return Err(Error::input(format!("unrecognized CSV column `{other}`")));
                }
            }
        }
    }
    let y_idx = y_idx.ok_or_else(|| Error::input("missing `y` column"))?;
    let t_idx = t_idx.ok_or_else(|| Error::input("missing `t` column"))?;
    if x_idx.is_empty() {
        return Err(Error::input("missing covariate columns `x1..`"));
    }
    x_idx.sort_unstable();

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut env = env_idx.map(|_| Vec::new());
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::input(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                columns.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64> {
            fields[idx]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::input(format!("bad number `{}` at row {}", fields[idx], lineno + 2)))
        };
        y.push(parse(y_idx)?);
        t.push(parse(t_idx)?);
        if let (Some(env_vec), Some(idx)) = (env.as_mut(), env_idx) {
            env_vec.push(parse(idx)?);
        }
        let mut row = Vec::with_capacity(x_idx.len());
        for &(_, idx) in &x_idx {
            row.push(parse(idx)?);
        }
        x_rows.push(row);
    }
    let n = x_rows.len();
    if n == 0 {
        return Err(Error::input("CSV has a header but no data rows"));
    }
    let d = x_idx.len();
    let mut x = Array2::<f64>::zeros((n, d));
    for (i, row) in x_rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            x[(i, c)] = *v;
        }
    }
    Ok(CsvDataset {
        x,
        t,
        y,
        env,
        hidden_columns: hidden,
    })
}
