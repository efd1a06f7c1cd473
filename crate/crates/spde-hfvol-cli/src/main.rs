//! Command-line front door. Machine-readable output goes to stdout or the
//! `--out` file exclusively; diagnostics go to stderr. Exit codes: 0 success
//! (including degenerate estimates), 2 validation/parse failures, 3
//! simulation failures, 4 estimator domain errors, 5 failed Monte Carlo
//! acceptance gates.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use spde_hfvol::constants::{
    big_r, c0_constants, check_alpha, gamma_weight, gamma_weight_n, SeriesTruncation,
};
use spde_hfvol::estimators::{
    alpha_report_json, estimate_alpha_cof, estimate_alpha_corr, estimate_vol_known_alpha,
    estimate_vol_unknown_alpha, vol_report_json, AlphaMethod, EstimatorError,
};
use spde_hfvol::ingest::{read_path_csv, write_path_csv};
use spde_hfvol::model::{ModelParams, MultipowerSpec, SamplingScheme};
use spde_hfvol::montecarlo::{
    run_experiment_with_workers, write_replications_csv, ExperimentConfig, SimulatorKind,
};
use spde_hfvol::simulate::{simulate_exact_stationary, simulate_fd, SeedSpec, VolatilityModel};
use spde_hfvol::special::gaussian_abs_moment;

#[derive(Parser)]
#[command(
    name = "spde-hfvol",
    about = "High-frequency variation statistics for the damped stochastic heat equation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the model constants (μ_p, Γ_r, Γ_r^n, R_p, C0, C̃0) as JSON.
    Constants {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Damping rate; with --delta enables the finite-Δ lag weights Γ_r^n.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Number of lag weights to print.
        #[arg(long, default_value_t = 10)]
        rmax: u64,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one observed path and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate α or integrated volatility from a path CSV.
    Estimate {
        #[arg(long)]
        path: PathBuf,
        #[arg(long, value_enum)]
        method: EstimateMethod,
        /// Power for --method cof and the multipower weight for vol methods.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Known correlation index (vol-known).
        #[arg(long)]
        alpha: Option<f64>,
        /// Known diffusivity (vol-known, vol-unknown).
        #[arg(long)]
        kappa: Option<f64>,
        /// Power used by the embedded α estimator (vol-unknown).
        #[arg(long, default_value_t = 2.0)]
        p0: f64,
        #[arg(long, value_enum, default_value_t = AlphaMethodArg::Cof)]
        alpha_method: AlphaMethodArg,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Hypothesized true value; fills the studentized field.
        #[arg(long)]
        target: Option<f64>,
        /// Relative tolerance for the regular-grid check.
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment batch from a JSON config.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Report JSON destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional per-replication CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMethod {
    Cof,
    Corr,
    VolKnown,
    VolUnknown,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaMethodArg {
    Cof,
    Corr,
}

#[derive(Deserialize)]
struct SimulateConfig {
    model: ModelParams,
    scheme: SamplingScheme,
    volatility: VolatilityModel,
    simulator: SimulatorKind,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_SIMULATION: u8 = 3;
const EXIT_ESTIMATOR: u8 = 4;
const EXIT_GATE: u8 = 5;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(msg: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_VALIDATION,
            message: msg.into(),
        }
    }

    fn simulation(msg: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_SIMULATION,
            message: msg.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Constants {
            alpha,
            p,
            lambda,
            delta,
            rmax,
            out,
        } => cmd_constants(alpha, p, lambda, delta, rmax, out),
        Command::Simulate { config, seed, out } => cmd_simulate(&config, seed, out),
        Command::Estimate {
            path,
            method,
            p,
            alpha,
            kappa,
            p0,
            alpha_method,
            level,
            target,
            rtol,
            out,
        } => cmd_estimate(
            &path,
            method,
            p,
            alpha,
            kappa,
            p0,
            alpha_method,
            level,
            target,
            rtol,
            out,
        ),
        Command::Mc { config, out, csv } => cmd_mc(&config, out, csv),
    }
}

fn write_output(out: Option<PathBuf>, payload: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let mut f = File::create(&path)
                .map_err(|e| Failure::validation(format!("cannot create {path:?}: {e}")))?;
            f.write_all(payload.as_bytes())
                .and_then(|_| f.write_all(b"\n"))
                .map_err(|e| Failure::validation(format!("write failed: {e}")))
        }
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}

fn cmd_constants(
    alpha: f64,
    p: f64,
    lambda: Option<f64>,
    delta: Option<f64>,
    rmax: u64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    check_alpha(alpha).map_err(|e| Failure::validation(e.to_string()))?;
    if !(p > 0.0) {
        return Err(Failure::validation(format!("p must be > 0, got {p}")));
    }
    let trunc = SeriesTruncation::default();
    let as_val = |e: spde_hfvol::constants::ConstantsError| Failure::validation(e.to_string());
    let mu_p = gaussian_abs_moment(p).map_err(|e| Failure::validation(e.to_string()))?;
    let gamma: Vec<f64> = (0..=rmax)
        .map(|r| gamma_weight(alpha, r))
        .collect::<Result<_, _>>()
        .map_err(as_val)?;
    let gamma_n = match (lambda, delta) {
        (Some(l), Some(d)) => {
            let values: Vec<f64> = (0..=rmax)
                .map(|r| gamma_weight_n(alpha, l, d, r))
                .collect::<Result<_, _>>()
                .map_err(as_val)?;
            Some(values)
        }
        (None, None) => None,
        _ => {
            return Err(Failure::validation(
                "--lambda and --delta must be given together",
            ))
        }
    };
    let r_p = big_r(p, alpha, &trunc).map_err(as_val)?;
    let consts = c0_constants(p, alpha, &trunc).map_err(as_val)?;
    let payload = serde_json::json!({
        "alpha": alpha,
        "p": p,
        "mu_p": mu_p,
        "gamma": gamma,
        "gamma_n": gamma_n,
        "R_p": r_p,
        "C0": consts.c0,
        "C0_tilde": consts.tilde_c0,
    });
    write_output(out, &serde_json::to_string_pretty(&payload).unwrap())
}

fn cmd_simulate(config: &PathBuf, seed: u64, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = File::open(config)
        .map_err(|e| Failure::validation(format!("cannot open {config:?}: {e}")))?;
    let cfg: SimulateConfig = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Failure::validation(format!("invalid config: {e}")))?;
    spde_hfvol::model::validate_params(cfg.model)
        .map_err(|e| Failure::validation(e.to_string()))?;
    cfg.volatility
        .validate()
        .map_err(|e| Failure::validation(e.to_string()))?;
    let seed = SeedSpec::new(seed, 0);
    let path = match &cfg.simulator {
        SimulatorKind::ExactStationary => {
            let sigma = match cfg.volatility {
                VolatilityModel::Constant { value } => value,
                _ => {
                    return Err(Failure::validation(
                        "the exact stationary simulator requires constant volatility",
                    ))
                }
            };
            simulate_exact_stationary(&cfg.model, &cfg.scheme, sigma, &seed)
                .map_err(|e| Failure::simulation(e.to_string()))?
        }
        SimulatorKind::FiniteDifference { grid } => {
            // grid problems are configuration mistakes, not runtime failures
            grid.validate(cfg.model.kappa, &cfg.scheme)
                .map_err(|e| Failure::validation(e.to_string()))?;
            simulate_fd(&cfg.model, &cfg.scheme, &cfg.volatility, grid, &seed, &[])
                .map_err(|e| Failure::simulation(e.to_string()))?
                .path
        }
    };
    match out {
        Some(dest) => {
            let f = File::create(&dest)
                .map_err(|e| Failure::validation(format!("cannot create {dest:?}: {e}")))?;
            write_path_csv(&path, BufWriter::new(f))
                .map_err(|e| Failure::simulation(format!("write failed: {e}")))
        }
        None => {
            let mut buf = Vec::new();
            write_path_csv(&path, &mut buf)
                .map_err(|e| Failure::simulation(format!("write failed: {e}")))?;
            print!("{}", String::from_utf8_lossy(&buf));
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    path: &PathBuf,
    method: EstimateMethod,
    p: f64,
    alpha: Option<f64>,
    kappa: Option<f64>,
    p0: f64,
    alpha_method: AlphaMethodArg,
    level: f64,
    target: Option<f64>,
    rtol: f64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let file = File::open(path)
        .map_err(|e| Failure::validation(format!("cannot open {path:?}: {e}")))?;
    let (observed, _report) = read_path_csv(BufReader::new(file), rtol)
        .map_err(|e| Failure::validation(e.to_string()))?;
    let map_est = |e: EstimatorError| Failure {
        code: EXIT_ESTIMATOR,
        message: e.to_string(),
    };
    let n_sites = observed.n_sites();
    let targets: Option<Vec<f64>> = target.map(|t| vec![t; n_sites]);
    let payload = match method {
        EstimateMethod::Cof => {
            let est = estimate_alpha_cof(&observed, p, level, target).map_err(map_est)?;
            alpha_report_json(&est)
        }
        EstimateMethod::Corr => {
            let est = estimate_alpha_corr(&observed, level, target).map_err(map_est)?;
            alpha_report_json(&est)
        }
        EstimateMethod::VolKnown => {
            let alpha = alpha
                .ok_or_else(|| Failure::validation("--method vol-known requires --alpha"))?;
            let kappa = kappa
                .ok_or_else(|| Failure::validation("--method vol-known requires --kappa"))?;
            let spec = MultipowerSpec::absolute(p, n_sites)
                .map_err(|e| Failure::validation(e.to_string()))?;
            let est = estimate_vol_known_alpha(
                &observed,
                &spec,
                alpha,
                kappa,
                level,
                targets.as_deref(),
            )
            .map_err(map_est)?;
            vol_report_json(&est)
        }
        EstimateMethod::VolUnknown => {
            let kappa = kappa
                .ok_or_else(|| Failure::validation("--method vol-unknown requires --kappa"))?;
            let spec = MultipowerSpec::absolute(p, n_sites)
                .map_err(|e| Failure::validation(e.to_string()))?;
            let am = match alpha_method {
                AlphaMethodArg::Cof => AlphaMethod::Cof { p0 },
                AlphaMethodArg::Corr => AlphaMethod::Corr,
            };
            let est =
                estimate_vol_unknown_alpha(&observed, &spec, kappa, am, level, targets.as_deref())
                    .map_err(map_est)?;
            vol_report_json(&est)
        }
    };
    write_output(out, &serde_json::to_string_pretty(&payload).unwrap())
}

fn cmd_mc(config: &PathBuf, out: Option<PathBuf>, csv: Option<PathBuf>) -> Result<(), Failure> {
    let file = File::open(config)
        .map_err(|e| Failure::validation(format!("cannot open {config:?}: {e}")))?;
    let cfg: ExperimentConfig = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Failure::validation(format!("invalid config: {e}")))?;
    cfg.validate().map_err(|e| Failure::validation(e.to_string()))?;
    let workers = std::env::var("SPDE_HFVOL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let report = run_experiment_with_workers(&cfg, workers).map_err(|e| Failure {
        code: EXIT_SIMULATION,
        message: e.to_string(),
    })?;
    if let Some(dest) = csv {
        let f = File::create(&dest)
            .map_err(|e| Failure::validation(format!("cannot create {dest:?}: {e}")))?;
        write_replications_csv(&report, BufWriter::new(f))
            .map_err(|e| Failure::simulation(format!("csv write failed: {e}")))?;
    }
    write_output(out, &serde_json::to_string_pretty(&report).unwrap())?;
    if report.gates_passed == Some(false) {
        return Err(Failure {
            code: EXIT_GATE,
            message: format!("acceptance gates failed: {}", report.gate_failures.join("; ")),
        });
    }
    Ok(())
}
