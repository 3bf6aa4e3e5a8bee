//! Acceptance suite: each test pins one release criterion at its stated
//! tolerance and prints a PASS line on success (run with --nocapture to see
//! them; a failing criterion fails its test).

use krcd::confounder::{detect, Dataset, Verdict};
use krcd::datagen::{gen_single_env, Scenario, ScenarioConfig};
use krcd::estimator::{fit_hkls, fit_kls, RidgeConfig};
use krcd::evalharness::{
    default_lambda_grid, default_lambda_table_sweep, lambda_sensitivity, roc_auc, runtime_scaling,
    SweepConfig,
};
use krcd::kernel::{basis_kernel, weighted_basis, BasisSelection, DesignMatrix, KernelSpec};
use krcd::oracle::{compare_to_oracle, monte_carlo_null_calibration};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn default_ridge(p: usize, seed: u64) -> RidgeConfig {
    RidgeConfig::new(p, 1e-8, KernelSpec::default_polynomial(), seed)
}

fn single_env(rho: f64, n: usize, seed: u64) -> Dataset {
    let cfg = ScenarioConfig::new(Scenario::SingleEnvNonlinear, rho, n, seed);
    gen_single_env(&cfg).unwrap().detection_input()
}

/// Criterion 1: closed-form estimators agree with the gradient-descent
/// oracle within 1e-6 per coordinate on 20 seeded instances per kernel
/// family (N=30, P=6).
#[test]
fn criterion_1_closed_form_fidelity() {
    let start = std::time::Instant::now();
    let kernels = [
        ("linear", KernelSpec::Linear),
        ("polynomial", KernelSpec::default_polynomial()),
        ("gaussian", KernelSpec::default_gaussian()),
    ];
    let lambda = 0.5;
    let mut worst: f64 = 0.0;
    for (name, spec) in &kernels {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let z_mat = Array2::from_shape_fn((30, 3), |_| rng.random_range(-1.0..1.0));
            let z = DesignMatrix::from_matrix(z_mat).unwrap();
            let y: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
            let k = basis_kernel(spec, &z, 6, BasisSelection::FirstP, seed).unwrap();
            let w = weighted_basis(&k, &z).unwrap();

            let kls = fit_kls(&k, &y, lambda).unwrap();
            let r = compare_to_oracle(&k, &y, None, lambda, &kls, 1e-10).unwrap();
            assert!(r.converged, "{name} seed {seed}: KLS oracle did not converge");
            assert!(
                r.max_coord_error < 1e-6,
                "{name} seed {seed}: KLS error {}",
                r.max_coord_error
            );
            assert!(
                r.objective_gap.abs() < 1e-10,
                "{name} seed {seed}: KLS objective gap {}",
                r.objective_gap
            );
            worst = worst.max(r.max_coord_error);

            let hkls = fit_hkls(&k, &w, &y, lambda).unwrap();
            let norms: Vec<f64> = w.squared_norms.to_vec();
            let r = compare_to_oracle(&k, &y, Some(&norms), lambda, &hkls, 1e-10).unwrap();
            assert!(r.converged, "{name} seed {seed}: HKLS oracle did not converge");
            assert!(
                r.max_coord_error < 1e-6,
                "{name} seed {seed}: HKLS error {}",
                r.max_coord_error
            );
            assert!(
                r.objective_gap.abs() < 1e-10,
                "{name} seed {seed}: HKLS objective gap {}",
                r.objective_gap
            );
            worst = worst.max(r.max_coord_error);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 1 took {elapsed:.1}s, budget 30s");
    println!("PASS criterion 1: closed-form fidelity, max coord error {worst:.2e} ({elapsed:.1}s)");
}

/// Criterion 2: unit-norm rows (Psi = identity) give a vanishing delta,
/// unit p-values, and a support_null verdict.
#[test]
fn criterion_2_degenerate_exactness() {
    let start = std::time::Instant::now();
    // rows whose computed squared norm is exactly 1.0
    let pattern = [
        [0.6, 0.8, 0.0],
        [0.0, 0.6, 0.8],
        [0.8, 0.0, 0.6],
        [-0.6, 0.0, 0.8],
        [0.0, -1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.8, -0.6],
        [-0.8, 0.6, 0.0],
    ];
    let n = 48;
    let t: Vec<f64> = (0..n).map(|i| pattern[i % pattern.len()][0]).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| pattern[i % pattern.len()][j + 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();

    // delta through the estimator layer
    let z = DesignMatrix::from_parts(&t, &x).unwrap();
    assert!(z.squared_norms().iter().all(|&w| w == 1.0));
    let k = basis_kernel(
        &KernelSpec::default_polynomial(),
        &z,
        10,
        BasisSelection::FirstP,
        0,
    )
    .unwrap();
    let w = weighted_basis(&k, &z).unwrap();
    let a = fit_kls(&k, &y, 1e-8).unwrap();
    let b = fit_hkls(&k, &w, &y, 1e-8).unwrap();
    let delta_inf = a
        .iter()
        .zip(b.iter())
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    assert!(delta_inf < 1e-10, "||delta||_inf = {delta_inf}");

    // full pipeline verdict
    let ds = Dataset { x, t, y };
    let result = detect(&ds, &default_ridge(10, 0), 0.05).unwrap();
    assert_eq!(result.verdict, Verdict::SupportNull);
    assert!(result.p_values.iter().all(|&p| p == 1.0));
    assert!(result.degenerate.iter().all(|&d| d));
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "criterion 2 took {elapsed:.2}s, budget 1s");
    println!("PASS criterion 2: degenerate exactness, ||delta||_inf = {delta_inf:.2e} ({elapsed:.2}s)");
}

/// Criterion 3: family-wise rejection rate under the null is at most 0.08
/// (single-env generator, rho=0, N=1000, P=40, polynomial kernel,
/// lambda=1e-8, alpha=0.05, 200 seeds).
#[test]
fn criterion_3_type_i_control() {
    let start = std::time::Instant::now();
    let mut rejections = 0usize;
    let seeds = 200u64;
    for seed in 0..seeds {
        let ds = single_env(0.0, 1000, 30_000 + seed);
        let result = detect(&ds, &default_ridge(40, 30_000 + seed), 0.05).unwrap();
        if result.verdict == Verdict::RejectNull {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / seeds as f64;
    let elapsed = start.elapsed().as_secs_f64();
    assert!(rate <= 0.08, "type I rate {rate} > 0.08");
    assert!(elapsed < 300.0, "criterion 3 took {elapsed:.0}s, budget 300s");
    println!("PASS criterion 3: type I rate {rate:.3} <= 0.08 over {seeds} seeds ({elapsed:.1}s)");
}

/// Criterion 4: detection rate at least 0.90 at rho=1 and 0.95 at rho=2
/// (same configuration as criterion 3, 100 seeds each).
#[test]
fn criterion_4_power() {
    let start = std::time::Instant::now();
    let mut rates = Vec::new();
    for (rho, floor) in [(1.0, 0.90), (2.0, 0.95)] {
        let mut rejections = 0usize;
        let seeds = 100u64;
        for seed in 0..seeds {
            let ds = single_env(rho, 1000, 40_000 + seed);
            let result = detect(&ds, &default_ridge(40, 40_000 + seed), 0.05).unwrap();
            if result.verdict == Verdict::RejectNull {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / seeds as f64;
        assert!(rate >= floor, "power at rho={rho}: {rate} < {floor}");
        rates.push((rho, rate));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "criterion 4 took {elapsed:.0}s, budget 300s");
    println!(
        "PASS criterion 4: power {} ({elapsed:.1}s)",
        rates
            .iter()
            .map(|(r, p)| format!("rho={r}: {p:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
}

/// Criterion 5: regularization sensitivity table. For lambda in
/// {1e-12, 1e-8, 1e-4} every AUC cell lies within 0.10 of the reference
/// values (0.507, 0.980, 1.000, 1.000 at rho = 0.25, 0.5, 1, 2); at
/// lambda=1 the rho=0.5 cell degrades below 0.6.
#[test]
fn criterion_5_lambda_table() {
    let start = std::time::Instant::now();
    let cfg = default_lambda_table_sweep(21_000);
    let lambda_grid = default_lambda_grid();
    let rho_grid = cfg.rho_values.clone();
    let table = lambda_sensitivity(&lambda_grid, &rho_grid, &cfg).unwrap();

    let reference = [0.507, 0.980, 1.000, 1.000];
    for (i, &lambda) in lambda_grid.iter().enumerate() {
        if lambda >= 1.0 {
            let auc_half = table.auc[i][1];
            assert!(
                auc_half < 0.6,
                "lambda=1: AUC at rho=0.5 is {auc_half}, expected < 0.6"
            );
            continue;
        }
        for (j, &target) in reference.iter().enumerate() {
            let auc = table.auc[i][j];
            assert!(
                (auc - target).abs() <= 0.10,
                "lambda={lambda:e}, rho={}: AUC {auc:.3} not within 0.10 of {target}",
                rho_grid[j]
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1200.0, "criterion 5 took {elapsed:.0}s, budget 1200s");
    let row8: Vec<String> = table.auc[1].iter().map(|a| format!("{a:.3}")).collect();
    println!(
        "PASS criterion 5: lambda table reproduced; lambda=1e-8 row = [{}] ({elapsed:.1}s)",
        row8.join(", ")
    );
}

/// Criterion 6: pooled non-degenerate z over 200 null replications at
/// N=2000 has mean in [-0.15, 0.15] and variance in [0.7, 1.3].
#[test]
fn criterion_6_null_z_calibration() {
    let start = std::time::Instant::now();
    let ridge = default_ridge(40, 0);
    let scenario = ScenarioConfig::new(Scenario::SingleEnvNonlinear, 0.0, 2000, 60_000);
    let calib = monte_carlo_null_calibration(&ridge, &scenario, 200, 0.05).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        (-0.15..=0.15).contains(&calib.z_mean),
        "pooled z mean {} outside [-0.15, 0.15]",
        calib.z_mean
    );
    assert!(
        (0.7..=1.3).contains(&calib.z_var),
        "pooled z variance {} outside [0.7, 1.3]",
        calib.z_var
    );
    assert!(elapsed < 600.0, "criterion 6 took {elapsed:.0}s, budget 600s");
    println!(
        "PASS criterion 6: null z mean {:.3}, var {:.3} over {} pooled scores ({elapsed:.1}s)",
        calib.z_mean, calib.z_var, calib.pooled_z_count
    );
}

/// Criterion 7: z-scores are invariant (1e-8 relative) under Y -> 10*Y on
/// 10 random instances.
#[test]
fn criterion_7_scale_invariance() {
    let start = std::time::Instant::now();
    for seed in 0..10u64 {
        let ds = single_env(1.0, 400, 70_000 + seed);
        // P below the polynomial feature rank keeps the solves well
        // conditioned, which the float-level invariance needs
        let config = default_ridge(12, seed);
        let base = detect(&ds, &config, 0.05).unwrap();
        let scaled = Dataset {
            x: ds.x.clone(),
            t: ds.t.clone(),
            y: ds.y.iter().map(|v| 10.0 * v).collect(),
        };
        let other = detect(&scaled, &config, 0.05).unwrap();
        assert_eq!(base.verdict, other.verdict, "verdict changed under scaling");
        for (a, b) in base.z_scores.iter().zip(other.z_scores.iter()) {
            let denom = a.abs().max(1e-30);
            assert!(
                (a - b).abs() / denom < 1e-8,
                "seed {seed}: z {a} vs {b} differ beyond 1e-8 relative"
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 7 took {elapsed:.1}s, budget 5s");
    println!("PASS criterion 7: scale invariance on 10 instances ({elapsed:.1}s)");
}

/// Criterion 8: end-to-end detect wall time scales with N at a log-log
/// slope in [1.6, 2.4] over N in {500, 1000, 2000, 4000} at P=40, d=3
/// (the N^2 d kernel-construction term dominates).
#[test]
fn criterion_8_complexity_scaling() {
    let start = std::time::Instant::now();
    let ridge = default_ridge(40, 0);
    let scenario = ScenarioConfig::new(Scenario::SingleEnvNonlinear, 0.0, 1000, 80_000);
    let cfg = SweepConfig::new(ridge, scenario, 80_000);
    let table = runtime_scaling(&[500, 1000, 2000, 4000], &[40], &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        (1.6..=2.4).contains(&table.n_slope),
        "N-scaling slope {} outside [1.6, 2.4]; rows: {:?}",
        table.n_slope,
        table
            .rows
            .iter()
            .map(|r| (r.n, r.median_ms))
            .collect::<Vec<_>>()
    );
    assert!(elapsed < 180.0, "criterion 8 took {elapsed:.0}s, budget 180s");
    println!(
        "PASS criterion 8: N-scaling slope {:.2} in [1.6, 2.4] ({elapsed:.1}s)",
        table.n_slope
    );
}

/// Criterion 9: trapezoidal AUC equals Mann-Whitney pair counting (ties at
/// half weight) within 1e-12 on 50 random label/score sets of size <= 200.
#[test]
fn criterion_9_auc_oracle_equivalence() {
    let start = std::time::Instant::now();

    // independent pair-counting oracle
    fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    let mut rng = ChaCha8Rng::seed_from_u64(90_000);
    for case in 0..50 {
        let n = rng.random_range(5..=200);
        let n_pos = rng.random_range(1..n);
        let labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        // quantized scores force plenty of ties
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0.0..1.0f64) * 8.0).round() / 8.0)
            .collect();
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        let reference = mann_whitney_auc(&scores, &labels);
        assert!(
            (auc - reference).abs() < 1e-12,
            "case {case}: trapezoid {auc} vs pair counting {reference}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 9 took {elapsed:.1}s, budget 5s");
    println!("PASS criterion 9: AUC equals Mann-Whitney pair counting on 50 sets ({elapsed:.1}s)");
}
