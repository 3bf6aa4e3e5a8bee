//! Command-line entry point for kernel regression confounder detection:
//! dataset simulation, detection, benchmark sweeps, and oracle validation.
//!
//! Exit status contract: 0 = success / null supported, 3 = null rejected,
//! 2 = usage or configuration error, 1 = validation failure or runtime error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use krcd::confounder::{detect, Verdict};
use krcd::datagen::{generate, read_csv, write_csv, Scenario, ScenarioConfig};
use krcd::estimator::RidgeConfig;
use krcd::evalharness::{
    default_lambda_grid, default_lambda_table_sweep, detection_rate_sweep, lambda_sensitivity,
    runtime_scaling, SweepConfig,
};
use krcd::kernel::{Bandwidth, BasisSelection, KernelSpec};
use krcd::oracle::{monte_carlo_null_calibration, validation_suite};
use serde::Serialize;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const FORMAT_VERSION: u32 = 1;

const EXIT_SUPPORT: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REJECT: u8 = 3;

enum CliError {
    Usage(String),
    Failure(String),
}

impl From<krcd::Error> for CliError {
    fn from(e: krcd::Error) -> Self {
        match e {
            krcd::Error::Config(_) | krcd::Error::Argument(_) => CliError::Usage(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type CliResult = Result<u8, CliError>;

#[derive(Parser)]
#[command(
    name = "krcd",
    version = concat!(env!("CARGO_PKG_VERSION"), " (format 1)"),
    about = "Kernel regression confounder detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset as CSV.
    Simulate(SimulateArgs),
    /// Run the confounder detection test on a CSV dataset.
    Detect(DetectArgs),
    /// Run benchmark sweeps (detection rate, AUC, lambda table, runtime).
    Benchmark(BenchmarkArgs),
    /// Validate the closed forms against the gradient-descent oracle and
    /// check null calibration.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    SingleEnv,
    MultiEnv,
    Binary,
}

impl From<ScenarioArg> for Scenario {
    fn from(value: ScenarioArg) -> Self {
        match value {
            ScenarioArg::SingleEnv => Scenario::SingleEnvNonlinear,
            ScenarioArg::MultiEnv => Scenario::MultiEnvNonlinear,
            ScenarioArg::Binary => Scenario::BinarySynthetic,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    dx: usize,
    #[arg(long, default_value_t = 3)]
    du: usize,
    /// Environment count (multi-env scenario only).
    #[arg(long, default_value_t = 2)]
    envs: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also emit the hidden confounder columns (audit only).
    #[arg(long)]
    include_hidden: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    Poly,
    Gaussian,
}

#[derive(Args)]
struct KernelFlags {
    #[arg(long, value_enum, default_value = "poly")]
    kernel: KernelArg,
    /// Polynomial degree.
    #[arg(long, default_value_t = 2)]
    degree: u32,
    /// Polynomial offset.
    #[arg(long, default_value_t = 1.0)]
    offset: f64,
    /// Gaussian bandwidth; "median" resolves it from the data.
    #[arg(long, default_value = "median")]
    bandwidth: String,
}

impl KernelFlags {
    fn build(&self) -> Result<KernelSpec, CliError> {
        Ok(match self.kernel {
            KernelArg::Linear => KernelSpec::Linear,
            KernelArg::Poly => KernelSpec::Polynomial {
                degree: self.degree,
                offset: self.offset,
            },
            KernelArg::Gaussian => {
                let bandwidth = if self.bandwidth == "median" {
                    Bandwidth::MedianHeuristic
                } else {
                    let b: f64 = self.bandwidth.parse().map_err(|_| {
                        CliError::Usage(format!("bad bandwidth `{}`", self.bandwidth))
                    })?;
                    Bandwidth::Fixed(b)
                };
                KernelSpec::Gaussian { bandwidth }
            }
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    FirstP,
    SeededRandom,
}

#[derive(Args)]
struct DetectArgs {
    /// CSV file with `y`, `t`, `x1..xd` columns.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelFlags,
    /// Basis size; defaults to min(40, N-1).
    #[arg(long)]
    p_dim: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "first-p")]
    selection: SelectionArg,
    /// Orthonormalize the basis rows before fitting.
    #[arg(long)]
    orthonormal: bool,
    /// Append the `env` column (when present) as an extra covariate.
    #[arg(long)]
    use_env: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Detection,
    Auc,
    LambdaTable,
    Runtime,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    sweep: SweepKind,
    /// Comma-separated confounding strengths.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Comma-separated lambda grid (lambda-table sweep).
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Vec<f64>,
    /// Comma-separated sample sizes (runtime sweep).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Comma-separated basis sizes (runtime sweep).
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    #[arg(long, value_enum, default_value = "single-env")]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 30)]
    repeats: usize,
    #[arg(long, default_value_t = 1000)]
    sample_size: usize,
    #[command(flatten)]
    kernel: KernelFlags,
    #[arg(long)]
    p_dim: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parallel workers for independent runs (capped by KRCD_THREADS).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the ridge strength fed to the validation suite (testing hook).
    #[arg(long, hide = true, allow_hyphen_values = true)]
    inject_lambda: Option<f64>,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    tool_version: String,
    format_version: u32,
    inputs: Vec<String>,
    outputs: Vec<String>,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn write_manifest(
    path: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    inputs: &[String],
    outputs: &[String],
    started: u128,
) -> std::io::Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        tool_version: TOOL_VERSION.to_string(),
        format_version: FORMAT_VERSION,
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
    };
    fs::write(path, serde_json::to_string_pretty(&manifest).unwrap())
}

fn effective_jobs(requested: usize) -> usize {
    let cap = std::env::var("KRCD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(usize::MAX)
        .max(1);
    requested.clamp(1, cap)
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult {
    let started = unix_ms();
    let mut cfg = ScenarioConfig::new(args.scenario.into(), args.rho, args.n, args.seed);
    cfg.d_x = args.dx;
    cfg.d_u = args.du;
    cfg.n_envs = args.envs;
    cfg.noise_half_width = args.noise;
    let dataset = generate(&cfg)?;
    let mut buf = Vec::new();
    write_csv(&dataset, args.include_hidden, &mut buf)?;
    fs::write(&args.out, &buf)?;
    let manifest_path = manifest_path_for(&args.out);
    write_manifest(
        &manifest_path,
        "simulate",
        serde_json::to_value(&cfg).unwrap(),
        args.seed,
        &[],
        &[args.out.display().to_string()],
        started,
    )?;
    eprintln!(
        "wrote {} rows to {} (manifest {})",
        args.n,
        args.out.display(),
        manifest_path.display()
    );
    Ok(EXIT_SUPPORT)
}

fn cmd_detect(args: &DetectArgs) -> CliResult {
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::Failure(format!("cannot open {}: {e}", args.input.display())))?;
    let csv = read_csv(BufReader::new(file))?;
    if csv.hidden_columns > 0 {
        eprintln!(
            "warning: ignoring {} hidden confounder column(s) in {}",
            csv.hidden_columns,
            args.input.display()
        );
    }
    if csv.env.is_some() && !args.use_env {
        eprintln!("note: `env` column present but unused; pass --use-env to include it");
    }
    let dataset = csv.into_dataset(args.use_env)?;
    let n = dataset.t.len();
    let p = args.p_dim.unwrap_or_else(|| 40.min(n.saturating_sub(1)));
    let mut config = RidgeConfig::new(p, args.lambda, args.kernel.build()?, args.seed);
    config.selection = match args.selection {
        SelectionArg::FirstP => BasisSelection::FirstP,
        SelectionArg::SeededRandom => BasisSelection::SeededRandom,
    };
    config.orthonormal_basis = args.orthonormal;
    let result = detect(&dataset, &config, args.alpha)?;
    if result.lambda_warning {
        eprintln!(
            "warning: lambda={} is not negligible against the Gram scale; \
             the asymptotic test may be over-regularized",
            result.lambda
        );
    }
    println!("{}", serde_json::to_string_pretty(&result).unwrap());
    Ok(match result.verdict {
        Verdict::SupportNull => EXIT_SUPPORT,
        Verdict::RejectNull => EXIT_REJECT,
    })
}

fn build_sweep_config(args: &BenchmarkArgs) -> Result<SweepConfig, CliError> {
    let kernel = args.kernel.build()?;
    let p = args
        .p_dim
        .unwrap_or_else(|| 40.min(args.sample_size.saturating_sub(1)));
    let ridge = RidgeConfig::new(p, args.lambda, kernel, args.seed);
    let scenario = ScenarioConfig::new(args.scenario.into(), 0.0, args.sample_size, args.seed);
    let mut cfg = SweepConfig::new(ridge, scenario, args.seed);
    cfg.repeats = args.repeats;
    cfg.sample_size = args.sample_size;
    cfg.alpha_level = args.alpha;
    cfg.jobs = effective_jobs(args.jobs);
    if !args.rho.is_empty() {
        cfg.rho_values = args.rho.clone();
    }
    Ok(cfg)
}

fn records_csv(records: &[krcd::evalharness::RunRecord]) -> String {
    let mut buf = String::from("rho,lambda,repeat,seed,verdict,score,wall_ms\n");
    for r in records {
        let verdict = match r.verdict {
            Verdict::SupportNull => "support_null",
            Verdict::RejectNull => "reject_null",
        };
        buf.push_str(&format!(
            "{},{:e},{},{},{},{:.16e},{:.3}\n",
            r.rho, r.lambda, r.repeat, r.seed, verdict, r.score, r.wall_ms
        ));
    }
    buf
}

fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult {
    let started = unix_ms();
    fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    let config_echo;
    match args.sweep {
        SweepKind::Detection => {
            let cfg = build_sweep_config(args)?;
            config_echo = serde_json::to_value(&cfg).unwrap();
            let report = detection_rate_sweep(&cfg)?;
            let json_path = args.out.join("detection_rates.json");
            fs::write(&json_path, serde_json::to_string_pretty(&report).unwrap())?;
            let csv_path = args.out.join("runs.csv");
            let mut buf = Vec::new();
            report.write_records_csv(&mut buf)?;
            fs::write(&csv_path, buf)?;
            outputs.push(json_path.display().to_string());
            outputs.push(csv_path.display().to_string());
            for (rho, rate) in &report.detection_rates {
                println!("rho={rho}: detection_rate={rate}");
            }
        }
        SweepKind::Auc | SweepKind::LambdaTable => {
            let (cfg, lambdas, rhos) = if matches!(args.sweep, SweepKind::LambdaTable)
                && args.rho.is_empty()
                && args.lambda_grid.is_empty()
                && args.p_dim.is_none()
            {
                // canonical sensitivity-table configuration
                let mut cfg = default_lambda_table_sweep(args.seed);
                cfg.repeats = args.repeats;
                cfg.jobs = effective_jobs(args.jobs);
                let rhos = cfg.rho_values.clone();
                (cfg, default_lambda_grid(), rhos)
            } else {
                let cfg = build_sweep_config(args)?;
                let lambdas = if matches!(args.sweep, SweepKind::Auc) {
                    vec![args.lambda]
                } else if args.lambda_grid.is_empty() {
                    default_lambda_grid()
                } else {
                    args.lambda_grid.clone()
                };
                let rhos: Vec<f64> = cfg
                    .rho_values
                    .iter()
                    .cloned()
                    .filter(|&r| r > 0.0)
                    .collect();
                if rhos.is_empty() {
                    return Err(CliError::Usage(
                        "AUC sweeps need at least one rho > 0".to_string(),
                    ));
                }
                (cfg, lambdas, rhos)
            };
            config_echo = serde_json::to_value(&cfg).unwrap();
            let table = lambda_sensitivity(&lambdas, &rhos, &cfg)?;
            let json_path = args.out.join("auc_table.json");
            fs::write(&json_path, serde_json::to_string_pretty(&table).unwrap())?;
            let csv_path = args.out.join("runs.csv");
            fs::write(&csv_path, records_csv(&table.records))?;
            outputs.push(json_path.display().to_string());
            outputs.push(csv_path.display().to_string());
            println!(
                "lambda \\ rho {}",
                rhos.iter().map(|r| format!("{r:>9}")).collect::<String>()
            );
            for (i, lambda) in table.lambda_grid.iter().enumerate() {
                let row: String = table.auc[i].iter().map(|a| format!("{a:>9.3}")).collect();
                println!("{lambda:<12e} {row}");
            }
        }
        SweepKind::Runtime => {
            let cfg = build_sweep_config(args)?;
            config_echo = serde_json::to_value(&cfg).unwrap();
            let n_grid = if args.n.is_empty() {
                vec![500, 1000, 2000, 4000]
            } else {
                args.n.clone()
            };
            let p_grid = if args.p.is_empty() {
                vec![40]
            } else {
                args.p.clone()
            };
            let table = runtime_scaling(&n_grid, &p_grid, &cfg)?;
            let json_path = args.out.join("runtime.json");
            fs::write(&json_path, serde_json::to_string_pretty(&table).unwrap())?;
            outputs.push(json_path.display().to_string());
            for row in &table.rows {
                println!("N={} P={}: {:.3} ms", row.n, row.p, row.median_ms);
            }
            println!("n_slope={:.3} p_slope={:.3}", table.n_slope, table.p_slope);
        }
    }
    let manifest = args.out.join("manifest.json");
    write_manifest(
        &manifest,
        "benchmark",
        config_echo,
        args.seed,
        &[],
        &outputs,
        started,
    )?;
    Ok(EXIT_SUPPORT)
}

fn cmd_validate(args: &ValidateArgs) -> CliResult {
    let lambda = args.inject_lambda.unwrap_or(0.5);
    let (checks, suite_error) = match validation_suite(args.seed, lambda, 5) {
        Ok(checks) => (checks, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let mut all_ok = suite_error.is_none() && checks.iter().all(|c| c.ok);

    // null calibration on the single-environment generator, skipped when a
    // lambda override is injected (the override targets the oracle suite)
    let calib = if args.inject_lambda.is_none() {
        let ridge = RidgeConfig::new(40, 1e-8, KernelSpec::default_polynomial(), args.seed);
        let scenario = ScenarioConfig::new(
            Scenario::SingleEnvNonlinear,
            0.0,
            1000,
            args.seed.wrapping_add(10_000),
        );
        let calib = monte_carlo_null_calibration(&ridge, &scenario, args.repeats, 0.05)?;
        if calib.rejection_rate > 0.08 {
            all_ok = false;
        }
        Some(calib)
    } else {
        None
    };

    let summary = serde_json::json!({
        "oracle_checks": checks,
        "suite_error": suite_error,
        "null_calibration": calib,
        "ok": all_ok,
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(if all_ok { EXIT_SUPPORT } else { EXIT_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
