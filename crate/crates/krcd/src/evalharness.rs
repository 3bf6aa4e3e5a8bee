//! Benchmark harness: detection-rate sweeps, ROC/AUC, the regularization
//! sensitivity table, and runtime scaling.

use crate::confounder::{detect, Verdict};
use crate::datagen::{generate, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimator::RidgeConfig;
use crate::kernel::{BasisSelection, KernelSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Sweep configuration shared by the detection-rate and AUC benchmarks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rho_values: Vec<f64>,
    pub repeats: usize,
    pub sample_size: usize,
    pub ridge: RidgeConfig,
    pub scenario: ScenarioConfig,
    pub base_seed: u64,
    pub alpha_level: f64,
    /// Worker threads for independent runs; 1 = serial.
    pub jobs: usize,
}

impl SweepConfig {
    pub fn new(ridge: RidgeConfig, scenario: ScenarioConfig, base_seed: u64) -> Self {
        SweepConfig {
            rho_values: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            repeats: 30,
            sample_size: 1000,
            ridge,
            scenario,
            base_seed,
            alpha_level: 0.05,
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::config("repeats must be >= 1"));
        }
        if self.rho_values.is_empty() {
            return Err(Error::config("rho grid must be non-empty"));
        }
        Ok(())
    }
}

/// One benchmark run in the tidy record format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub rho: f64,
    pub lambda: f64,
    pub repeat: usize,
    pub seed: u64,
    pub verdict: Verdict,
    pub score: f64,
    pub wall_ms: f64,
}

/// Aggregated sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub detection_rates: Vec<(f64, f64)>,
    pub roc_points: Vec<(f64, f64)>,
    pub auc: Option<f64>,
    pub runtimes_ms: Vec<f64>,
    pub records: Vec<RunRecord>,
    pub config: SweepConfig,
}

impl MetricsReport {
    /// Tidy CSV of the per-run records.
    pub fn write_records_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rho,lambda,repeat,seed,verdict,score,wall_ms")?;
        for r in &self.records {
            let verdict = match r.verdict {
                Verdict::SupportNull => "support_null",
                Verdict::RejectNull => "reject_null",
            };
            writeln!(
                out,
                "{},{:e},{},{},{},{:.16e},{:.3}",
                r.rho, r.lambda, r.repeat, r.seed, verdict, r.score, r.wall_ms
            )?;
        }
        Ok(())
    }
}

fn run_indexed<T, F>(jobs: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..count).into_par_iter().map(&f).collect())
    } else {
        (0..count).map(f).collect()
    }
}

fn single_run(cfg: &SweepConfig, rho: f64, lambda: f64, repeat: usize, seed: u64) -> Result<RunRecord> {
    let mut scenario = cfg.scenario.clone();
    scenario.rho = rho;
    scenario.n = cfg.sample_size;
    scenario.seed = seed;
    let data = generate(&scenario)?;
    let mut ridge = cfg.ridge.clone();
    ridge.lambda = lambda;
    ridge.seed = seed;
    let result = detect(&data.detection_input(), &ridge, cfg.alpha_level)?;
    Ok(RunRecord {
        rho,
        lambda,
        repeat,
        seed,
        verdict: result.verdict,
        score: result.max_abs_z(),
        wall_ms: result.wall_time_ms,
    })
}

/// For each rho, runs `repeats` seeded detections and reports the fraction of
/// rejections. Dataset seeds are `base_seed + run_index`, so the sweep is
/// reproducible run for run.
pub fn detection_rate_sweep(cfg: &SweepConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.rho_values.len() * cfg.repeats);
    let mut detection_rates = Vec::new();
    let lambda = cfg.ridge.lambda;
    for (r_idx, &rho) in cfg.rho_values.iter().enumerate() {
        let base = cfg.base_seed + (r_idx * cfg.repeats) as u64;
        let cell = run_indexed(cfg.jobs, cfg.repeats, |j| {
            single_run(cfg, rho, lambda, j, base + j as u64)
        })?;
        let hits = cell
            .iter()
            .filter(|r| r.verdict == Verdict::RejectNull)
            .count();
        detection_rates.push((rho, hits as f64 / cfg.repeats as f64));
        records.extend(cell);
    }
    let runtimes_ms = records.iter().map(|r| r.wall_ms).collect();
    Ok(MetricsReport {
        detection_rates,
        roc_points: Vec::new(),
        auc: None,
        runtimes_ms,
        records,
        config: cfg.clone(),
    })
}

/// Threshold-sweep ROC curve and trapezoidal AUC over a continuous score.
/// Tied scores share one threshold step.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(Vec<(f64, f64)>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::argument("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::argument(
            "ROC needs at least one positive and one negative label",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // consume the whole tie group at this threshold
        let threshold = scores[order[i]];
        let mut tie_tp = 0usize;
        let mut tie_fp = 0usize;
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tie_tp += 1;
            } else {
                tie_fp += 1;
            }
            i += 1;
        }
        let prev_tpr = tp as f64 / pos as f64;
        let prev_fpr = fp as f64 / neg as f64;
        tp += tie_tp;
        fp += tie_fp;
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        auc += (fpr - prev_fpr) * 0.5 * (tpr + prev_tpr);
        points.push((fpr, tpr));
    }
    Ok((points, auc))
}

/// The per-cell output of the regularization sensitivity table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaTable {
    pub lambda_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    /// auc[i][j] for lambda_grid[i] x rho_grid[j].
    pub auc: Vec<Vec<f64>>,
    pub records: Vec<RunRecord>,
}

/// Default harness configuration for the regularization table.
///
/// The basis is orthonormalized so its Gram spectrum sits at O(1): with raw
/// kernel rows the Gram is rank-deficient at the default dimensions and the
/// smallest regularizers in the grid fall below the float noise floor,
/// which turns those cells into noise instead of a sensitivity measurement.
/// With a normalized spectrum the grid spans "negligible" through
/// "dominant" exactly as intended.
pub fn default_lambda_table_sweep(base_seed: u64) -> SweepConfig {
    let mut ridge = RidgeConfig::new(15, 1e-8, KernelSpec::default_polynomial(), base_seed);
    ridge.selection = BasisSelection::FirstP;
    ridge.orthonormal_basis = true;
    let scenario = ScenarioConfig::new(Scenario::SingleEnvNonlinear, 0.0, 1500, base_seed);
    let mut cfg = SweepConfig::new(ridge, scenario, base_seed);
    cfg.sample_size = 1500;
    cfg.rho_values = vec![0.25, 0.5, 1.0, 2.0];
    cfg
}

pub fn default_lambda_grid() -> Vec<f64> {
    vec![1e-12, 1e-8, 1e-4, 1.0]
}

/// AUC per (lambda, rho) cell: `repeats` confounded runs at rho scored
/// against `repeats` fresh null runs at the same lambda, ranked by the max
/// non-degenerate |z|.
pub fn lambda_sensitivity(
    lambda_grid: &[f64],
    rho_grid: &[f64],
    cfg: &SweepConfig,
) -> Result<LambdaTable> {
    cfg.validate()?;
    if lambda_grid.is_empty() || rho_grid.is_empty() {
        return Err(Error::config("lambda and rho grids must be non-empty"));
    }
    let mut table = Vec::with_capacity(lambda_grid.len());
    let mut records = Vec::new();
    for &lambda in lambda_grid {
        let mut row = Vec::with_capacity(rho_grid.len());
        for (rho_idx, &rho) in rho_grid.iter().enumerate() {
            // seeds depend on the rho column and repeat only, so every
            // lambda row scores the same dataset draws: the table isolates
            // the effect of the regularizer
            let base = cfg.base_seed + (rho_idx * 2 * cfg.repeats) as u64;
            let positives = run_indexed(cfg.jobs, cfg.repeats, |j| {
                single_run(cfg, rho, lambda, j, base + j as u64)
            })?;
            let negatives = run_indexed(cfg.jobs, cfg.repeats, |j| {
                single_run(cfg, 0.0, lambda, j, base + (cfg.repeats + j) as u64)
            })?;
            let mut scores: Vec<f64> = Vec::with_capacity(2 * cfg.repeats);
            let mut labels: Vec<bool> = Vec::with_capacity(2 * cfg.repeats);
            for r in &positives {
                scores.push(r.score);
                labels.push(true);
            }
            for r in &negatives {
                scores.push(r.score);
                labels.push(false);
            }
            let (_, auc) = roc_auc(&scores, &labels)?;
            row.push(auc);
            records.extend(positives);
            records.extend(negatives);
        }
        table.push(row);
    }
    Ok(LambdaTable {
        lambda_grid: lambda_grid.to_vec(),
        rho_grid: rho_grid.to_vec(),
        auc: table,
        records,
    })
}

/// One timing observation of the runtime-scaling grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub p: usize,
    pub median_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuntimeTable {
    pub rows: Vec<TimingRow>,
    /// log-log slope of time vs N, fitted at each fixed P and averaged.
    pub n_slope: f64,
    /// log-log slope of time vs P, fitted at each fixed N and averaged.
    pub p_slope: f64,
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Times `detect` end-to-end (excluding data generation) over an N x P grid,
/// median of 3 runs per point, and fits log-log scaling exponents.
pub fn runtime_scaling(
    n_grid: &[usize],
    p_grid: &[usize],
    cfg: &SweepConfig,
) -> Result<RuntimeTable> {
    if n_grid.is_empty() || p_grid.is_empty() {
        return Err(Error::config("runtime grids must be non-empty"));
    }
    let mut rows = Vec::with_capacity(n_grid.len() * p_grid.len());
    for &n in n_grid {
        for &p in p_grid {
            let mut scenario = cfg.scenario.clone();
            scenario.n = n;
            scenario.seed = cfg.base_seed;
            let data = generate(&scenario)?;
            let input = data.detection_input();
            let mut ridge = cfg.ridge.clone();
            ridge.p = p;
            ridge.seed = cfg.base_seed;
            let mut times = Vec::with_capacity(3);
            for _ in 0..3 {
                let start = std::time::Instant::now();
                let _ = detect(&input, &ridge, cfg.alpha_level)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            rows.push(TimingRow {
                n,
                p,
                median_ms: times[1],
            });
        }
    }

    let mut n_slopes = Vec::new();
    for &p in p_grid {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.p == p)
            .map(|r| (r.n as f64, r.median_ms.max(1e-6)))
            .collect();
        if pts.len() >= 2 {
            n_slopes.push(log_log_slope(&pts));
        }
    }
    let mut p_slopes = Vec::new();
    for &n in n_grid {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| (r.p as f64, r.median_ms.max(1e-6)))
            .collect();
        if pts.len() >= 2 {
            p_slopes.push(log_log_slope(&pts));
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(RuntimeTable {
        rows,
        n_slope: mean(&n_slopes),
        p_slope: mean(&p_slopes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sweep() -> SweepConfig {
        let ridge = RidgeConfig::new(8, 1e-8, KernelSpec::default_polynomial(), 0);
        let scenario = ScenarioConfig::new(Scenario::SingleEnvNonlinear, 0.0, 120, 0);
        let mut cfg = SweepConfig::new(ridge, scenario, 1000);
        cfg.repeats = 3;
        cfg.sample_size = 120;
        cfg.rho_values = vec![0.0, 2.0];
        cfg
    }

    #[test]
    fn perfectly_separated_scores_give_auc_one() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let labels = [true, true, true, false, false];
        let (points, auc) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(points.first().unwrap(), &(0.0, 0.0));
        assert_eq!(points.last().unwrap(), &(1.0, 1.0));
    }

    #[test]
    fn constant_scores_give_auc_half() {
        let scores = [0.5; 6];
        let labels = [true, false, true, false, true, false];
        let (points, auc) = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 1e-15);
        // one diagonal step
        assert_eq!(points.len(), 2);
    }

    #[test]
    fn single_class_labels_error() {
        let err = roc_auc(&[0.1, 0.2], &[true, true]).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn auc_matches_pair_counting_with_one_flip() {
        let mut scores = vec![0.0; 10];
        let mut labels = vec![false; 10];
        for i in 0..5 {
            labels[i] = true;
            scores[i] = 1.0;
        }
        // one flip: a positive scored as low as the negatives
        scores[4] = 0.0;
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        // pair counting: positives {1,1,1,1,0}, negatives {0,0,0,0,0}
        // wins: 4*5 = 20 full + 5 ties at 0.5 -> 22.5 / 25
        assert!((auc - 0.9).abs() < 1e-12);
    }

    #[test]
    fn roc_points_are_monotone() {
        let scores = [0.9, 0.1, 0.8, 0.3, 0.7, 0.2, 0.6, 0.5];
        let labels = [true, false, true, false, false, true, true, false];
        let (points, _) = roc_auc(&scores, &labels).unwrap();
        for w in points.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn sweep_is_reproducible_and_rates_are_fractions() {
        let cfg = tiny_sweep();
        let a = detection_rate_sweep(&cfg).unwrap();
        let b = detection_rate_sweep(&cfg).unwrap();
        assert_eq!(a.detection_rates, b.detection_rates);
        for (_, rate) in &a.detection_rates {
            let scaled = rate * cfg.repeats as f64;
            assert!((scaled - scaled.round()).abs() < 1e-12);
        }
        assert_eq!(a.records.len(), 6);
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        let mut cfg = tiny_sweep();
        let serial = detection_rate_sweep(&cfg).unwrap();
        cfg.jobs = 4;
        let parallel = detection_rate_sweep(&cfg).unwrap();
        assert_eq!(serial.detection_rates, parallel.detection_rates);
        for (a, b) in serial.records.iter().zip(parallel.records.iter()) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.score, b.score);
        }
    }

    #[test]
    fn repeats_of_one_give_zero_or_one_rates() {
        let mut cfg = tiny_sweep();
        cfg.repeats = 1;
        let report = detection_rate_sweep(&cfg).unwrap();
        for (_, rate) in report.detection_rates {
            assert!(rate == 0.0 || rate == 1.0);
        }
    }

    #[test]
    fn runtime_table_has_expected_rows_and_monotone_p() {
        let cfg = tiny_sweep();
        let table = runtime_scaling(&[100, 200, 400], &[8, 16], &cfg).unwrap();
        assert_eq!(table.rows.len(), 6);
        assert!(table.rows.iter().all(|r| r.median_ms > 0.0));
    }

    #[test]
    fn lambda_table_shape() {
        let mut cfg = tiny_sweep();
        cfg.repeats = 2;
        let table = lambda_sensitivity(&[1e-8, 1e-4], &[0.5, 2.0], &cfg).unwrap();
        assert_eq!(table.auc.len(), 2);
        assert_eq!(table.auc[0].len(), 2);
        assert_eq!(table.records.len(), 2 * 2 * 4);
        for row in &table.auc {
            for &a in row {
                assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn records_csv_has_header_and_rows() {
        let cfg = tiny_sweep();
        let report = detection_rate_sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        report.write_records_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "rho,lambda,repeat,seed,verdict,score,wall_ms"
        );
        assert_eq!(lines.count(), 6);
    }
}
