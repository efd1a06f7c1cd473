//! Replicated-experiment harness: runs a simulator/estimator pair across
//! independent replications and summarizes bias, RMSE, studentized-statistic
//! normality and confidence-interval coverage.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{mu_multipower, tau_sq_exact, ConstantsError};
use crate::estimators::{
    estimate_alpha_cof, estimate_alpha_corr, estimate_vol_known_alpha, estimate_vol_unknown_alpha,
    AlphaMethod, EstimatorError,
};
use crate::model::{
    EstimateReport, ModelError, ModelParams, MultipowerKind, MultipowerSpec, ObservedPath,
    SamplingScheme,
};
use crate::parallel::map_replications;
use crate::simulate::{
    derive_stream, simulate_fd, ExactSampler, FdGridConfig, SeedSpec, SimError, VolatilityModel,
};
use crate::special::{normal_cdf, normal_quantile, SpecialError};
use crate::variation::{variation, VariationError};

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{n_errors} of {total} replications errored (> 1% tolerated); first: {first}")]
    ExcessiveErrors {
        n_errors: u64,
        total: u64,
        first: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Multipower functional in configuration form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecConfig {
    Absolute { p: f64 },
    SignedPair,
    SecondOrder { p: f64 },
    CorrSum,
    Weights {
        multipower: MultipowerKind,
        weights: Vec<Vec<f64>>,
    },
}

impl SpecConfig {
    pub fn build(&self, n_sites: usize) -> Result<MultipowerSpec, McError> {
        let bad = |e: ModelError| McError::Config(e.to_string());
        match self {
            SpecConfig::Absolute { p } => MultipowerSpec::absolute(*p, n_sites).map_err(bad),
            SpecConfig::SignedPair => MultipowerSpec::signed_pair(n_sites).map_err(bad),
            SpecConfig::SecondOrder { p } => MultipowerSpec::second_order(*p, n_sites).map_err(bad),
            SpecConfig::CorrSum => MultipowerSpec::corr_sum(n_sites).map_err(bad),
            SpecConfig::Weights {
                multipower,
                weights,
            } => {
                let rows = weights.len();
                let cols = weights.first().map_or(0, Vec::len);
                if rows != n_sites || cols == 0 || weights.iter().any(|r| r.len() != cols) {
                    return Err(McError::Config(
                        "weight matrix must be rectangular with one row per site".into(),
                    ));
                }
                let flat: Vec<f64> = weights.iter().flatten().copied().collect();
                let arr = ndarray::Array2::from_shape_vec((rows, cols), flat)
                    .map_err(|e| McError::Config(e.to_string()))?;
                MultipowerSpec::new(arr, *multipower).map_err(bad)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulatorKind {
    ExactStationary,
    FiniteDifference { grid: FdGridConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Normalized variation against its law-of-large-numbers limit.
    Lln { spec: SpecConfig },
    /// Studentized variation via the known-α estimator machinery.
    CltStudentized { spec: SpecConfig },
    AlphaCof { p: f64 },
    AlphaCorr,
    VolKnownAlpha { spec: SpecConfig },
    VolUnknownAlpha {
        spec: SpecConfig,
        alpha_method: AlphaMethodConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaMethodConfig {
    Cof { p0: f64 },
    Corr,
}

impl AlphaMethodConfig {
    fn to_method(self) -> AlphaMethod {
        match self {
            AlphaMethodConfig::Cof { p0 } => AlphaMethod::Cof { p0 },
            AlphaMethodConfig::Corr => AlphaMethod::Corr,
        }
    }
}

/// Acceptance gates evaluated on the summary; any violated gate is listed in
/// the report and fails the `mc` command with a dedicated exit code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    #[serde(default)]
    pub coverage_min: Option<f64>,
    #[serde(default)]
    pub coverage_max: Option<f64>,
    #[serde(default)]
    pub ks_pvalue_min: Option<f64>,
    /// Apply the KS gate to mean-centered studentized statistics (used when a
    /// known discretization bias is budgeted separately).
    #[serde(default)]
    pub ks_use_centered: bool,
    #[serde(default)]
    pub max_abs_bias: Option<f64>,
    #[serde(default)]
    pub max_abs_rel_bias: Option<f64>,
    #[serde(default)]
    pub max_rmse: Option<f64>,
}

impl GateSpec {
    pub fn evaluate(&self, s: &McSummary) -> Vec<String> {
        let mut failures = Vec::new();
        if let (Some(min), Some(cov)) = (self.coverage_min, s.coverage) {
            if cov < min {
                failures.push(format!("coverage {cov:.4} < {min}"));
            }
        }
        if let (Some(max), Some(cov)) = (self.coverage_max, s.coverage) {
            if cov > max {
                failures.push(format!("coverage {cov:.4} > {max}"));
            }
        }
        if let Some(min) = self.ks_pvalue_min {
            let p = if self.ks_use_centered {
                s.ks_pvalue_centered
            } else {
                s.ks_pvalue
            };
            match p {
                Some(p) if p >= min => {}
                Some(p) => failures.push(format!("ks p-value {p:.3e} < {min:.3e}")),
                None => failures.push("ks p-value unavailable".into()),
            }
        }
        if let Some(max) = self.max_abs_bias {
            if s.bias.abs() > max {
                failures.push(format!("|bias| {:.4e} > {max}", s.bias.abs()));
            }
        }
        if let (Some(max), Some(mt)) = (self.max_abs_rel_bias, s.mean_truth) {
            if mt != 0.0 && (s.bias / mt).abs() > max {
                failures.push(format!("|relative bias| {:.4e} > {max}", (s.bias / mt).abs()));
            }
        }
        if let Some(max) = self.max_rmse {
            if s.rmse > max {
                failures.push(format!("rmse {:.4e} > {max}", s.rmse));
            }
        }
        failures
    }
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub scheme: SamplingScheme,
    pub volatility: VolatilityModel,
    pub simulator: SimulatorKind,
    pub target: TargetSpec,
    pub replications: u64,
    pub master_seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub gates: Option<GateSpec>,
    /// Wall-clock timing is reported as 0 unless enabled, keeping report
    /// bytes reproducible across runs and worker counts.
    #[serde(default)]
    pub report_runtime: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), McError> {
        crate::model::validate_params(self.model)?;
        self.volatility.validate()?;
        if self.replications < 2 {
            return Err(McError::Config("replications must be >= 2".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(McError::Config("level must lie in (0, 1)".into()));
        }
        match &self.simulator {
            SimulatorKind::ExactStationary => {
                if !matches!(self.volatility, VolatilityModel::Constant { value } if value > 0.0) {
                    return Err(McError::Config(
                        "the exact stationary simulator requires constant positive volatility"
                            .into(),
                    ));
                }
                if self.scheme.n_sites() != 1 {
                    return Err(McError::Config(
                        "the exact stationary simulator observes a single site".into(),
                    ));
                }
            }
            SimulatorKind::FiniteDifference { grid } => {
                grid.validate(self.model.kappa, &self.scheme)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub replication: u64,
    pub estimate: f64,
    pub studentized: Option<f64>,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_hit: Option<bool>,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub ks_statistic: Option<f64>,
    pub ks_pvalue: Option<f64>,
    pub ks_statistic_centered: Option<f64>,
    pub ks_pvalue_centered: Option<f64>,
    pub mean_ci_width: Option<f64>,
    pub mean_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub per_replication: Vec<RepRecord>,
    pub summary: McSummary,
    /// Analytic target when volatility is deterministic; null for stochastic
    /// volatility, where each replication carries its realized target.
    pub truth: Option<f64>,
    pub n_errors: u64,
    pub errors: Vec<String>,
    pub gates_passed: Option<bool>,
    pub gate_failures: Vec<String>,
    pub runtime_seconds: f64,
}

struct RepOutcome {
    index: u64,
    result: Result<RepRecord, String>,
}

enum SimShared {
    Exact(ExactSampler),
    Fd {
        grid: FdGridConfig,
        realized_powers: Vec<f64>,
    },
}

/// Runs the experiment on the default worker pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport, McError> {
    run_experiment_with_workers(cfg, None)
}

/// Deterministic given (config, master_seed) for every worker count: each
/// replication derives its own stream and aggregation runs in replication
/// order.
pub fn run_experiment_with_workers(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<McReport, McError> {
    cfg.validate()?;
    let started = Instant::now();

    let target_weight = target_power(cfg)?;
    let shared = match &cfg.simulator {
        SimulatorKind::ExactStationary => {
            let sigma = match cfg.volatility {
                VolatilityModel::Constant { value } => value,
                _ => unreachable!("validated above"),
            };
            SimShared::Exact(ExactSampler::new(&cfg.model, &cfg.scheme, sigma)?)
        }
        SimulatorKind::FiniteDifference { grid } => SimShared::Fd {
            grid: grid.clone(),
            realized_powers: target_weight.map(|w| vec![w]).unwrap_or_default(),
        },
    };
    let analytic_truth = analytic_truth(cfg)?;

    let outcomes = map_replications(cfg.replications, workers, |idx| {
        run_replication(cfg, &shared, analytic_truth, idx)
    });

    let mut per_replication = Vec::with_capacity(outcomes.len());
    let mut errors = Vec::new();
    for o in outcomes {
        match o.result {
            Ok(rec) => per_replication.push(rec),
            Err(msg) => errors.push(format!("replication {}: {msg}", o.index)),
        }
    }
    let n_errors = errors.len() as u64;
    if n_errors * 100 > cfg.replications {
        return Err(McError::ExcessiveErrors {
            n_errors,
            total: cfg.replications,
            first: errors[0].clone(),
        });
    }

    let summary = summarize(&per_replication);
    let (gates_passed, gate_failures) = match &cfg.gates {
        Some(g) => {
            let failures = g.evaluate(&summary);
            (Some(failures.is_empty()), failures)
        }
        None => (None, Vec::new()),
    };
    let runtime_seconds = if cfg.report_runtime {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(McReport {
        per_replication,
        summary,
        truth: analytic_truth,
        n_errors,
        errors,
        gates_passed,
        gate_failures,
        runtime_seconds,
    })
}

/// The integrated-volatility exponent w the target needs from the simulator
/// record, if any.
fn target_power(cfg: &ExperimentConfig) -> Result<Option<f64>, McError> {
    let spec_cfg = match &cfg.target {
        TargetSpec::Lln { spec }
        | TargetSpec::CltStudentized { spec }
        | TargetSpec::VolKnownAlpha { spec }
        | TargetSpec::VolUnknownAlpha { spec, .. } => spec,
        TargetSpec::AlphaCof { .. } | TargetSpec::AlphaCorr => return Ok(None),
    };
    let spec = spec_cfg.build(cfg.scheme.n_sites())?;
    Ok(Some(spec.row_weight(0)))
}

/// Analytic target for deterministic volatility; None when the target is
/// random and must be realized per replication.
fn analytic_truth(cfg: &ExperimentConfig) -> Result<Option<f64>, McError> {
    let t_end = cfg.scheme.n_increments() as f64 * cfg.scheme.delta();
    match &cfg.target {
        TargetSpec::AlphaCof { .. } | TargetSpec::AlphaCorr => Ok(Some(cfg.model.alpha)),
        TargetSpec::Lln { spec } => {
            let spec = spec.build(cfg.scheme.n_sites())?;
            let mu = mu_multipower(&spec, cfg.model.alpha)?;
            match cfg.volatility.integrated_power(spec.row_weight(0), t_end) {
                Some(iv) => {
                    let pooled =
                        mu.iter().map(|m| m * iv).sum::<f64>() / mu.len() as f64;
                    Ok(Some(pooled))
                }
                None => Ok(None),
            }
        }
        TargetSpec::CltStudentized { spec }
        | TargetSpec::VolKnownAlpha { spec }
        | TargetSpec::VolUnknownAlpha { spec, .. } => {
            let spec = spec.build(cfg.scheme.n_sites())?;
            Ok(cfg.volatility.integrated_power(spec.row_weight(0), t_end))
        }
    }
}

fn run_replication(
    cfg: &ExperimentConfig,
    shared: &SimShared,
    analytic_truth: Option<f64>,
    idx: u64,
) -> RepOutcome {
    let result = run_replication_inner(cfg, shared, analytic_truth, idx)
        .map_err(|e| e.to_string());
    RepOutcome { index: idx, result }
}

fn run_replication_inner(
    cfg: &ExperimentConfig,
    shared: &SimShared,
    analytic_truth: Option<f64>,
    idx: u64,
) -> Result<RepRecord, McError> {
    let seed = SeedSpec::new(cfg.master_seed, idx);
    // simulate, carrying realized volatility integrals when stochastic
    let (path, realized): (ObservedPath, Option<Vec<f64>>) = match shared {
        SimShared::Exact(sampler) => {
            let mut rng = derive_stream(&seed);
            (sampler.sample_path(&mut rng)?, None)
        }
        SimShared::Fd {
            grid,
            realized_powers,
        } => {
            let out = simulate_fd(
                &cfg.model,
                &cfg.scheme,
                &cfg.volatility,
                grid,
                &seed,
                realized_powers,
            )?;
            let realized = (!realized_powers.is_empty()).then(|| {
                (0..cfg.scheme.n_sites())
                    .map(|m| out.realized.integrals[(0, m)])
                    .collect::<Vec<f64>>()
            });
            (out.path, realized)
        }
    };

    // per-site truths: analytic when available, realized otherwise
    let site_truths: Option<Vec<f64>> = match (&cfg.target, analytic_truth, realized) {
        (TargetSpec::AlphaCof { .. } | TargetSpec::AlphaCorr, _, _) => {
            Some(vec![cfg.model.alpha; cfg.scheme.n_sites()])
        }
        (_, Some(t), _) => Some(vec![t; cfg.scheme.n_sites()]),
        (_, None, Some(r)) => Some(r),
        (_, None, None) => None,
    };

    match &cfg.target {
        TargetSpec::Lln { spec } => {
            let spec = spec.build(cfg.scheme.n_sites())?;
            let tau = tau_sq_exact(&cfg.model, cfg.scheme.delta())?.sqrt();
            let v = variation(&path, &spec, tau, false)?.per_site;
            let estimate = v.iter().sum::<f64>() / v.len() as f64;
            // the LLN target has no studentization; truth may still be realized
            let truth = lln_truth(cfg, &spec, site_truths.as_deref())?;
            Ok(RepRecord {
                replication: idx,
                estimate,
                studentized: None,
                ci_lower: f64::NAN,
                ci_upper: f64::NAN,
                ci_hit: None,
                truth,
            })
        }
        TargetSpec::CltStudentized { spec } | TargetSpec::VolKnownAlpha { spec } => {
            let spec = spec.build(cfg.scheme.n_sites())?;
            let est = estimate_vol_known_alpha(
                &path,
                &spec,
                cfg.model.alpha,
                cfg.model.kappa,
                cfg.level,
                site_truths.as_deref(),
            )?;
            Ok(record_from_site(idx, &est.per_site[0], site_truths.as_deref()))
        }
        TargetSpec::VolUnknownAlpha { spec, alpha_method } => {
            let spec = spec.build(cfg.scheme.n_sites())?;
            let est = estimate_vol_unknown_alpha(
                &path,
                &spec,
                cfg.model.kappa,
                alpha_method.to_method(),
                cfg.level,
                site_truths.as_deref(),
            )?;
            Ok(record_from_site(idx, &est.per_site[0], site_truths.as_deref()))
        }
        TargetSpec::AlphaCof { p } => {
            let est = estimate_alpha_cof(&path, *p, cfg.level, Some(cfg.model.alpha))?;
            Ok(record_from_report(idx, &est.report, cfg.model.alpha))
        }
        TargetSpec::AlphaCorr => {
            let est = estimate_alpha_corr(&path, cfg.level, Some(cfg.model.alpha))?;
            Ok(record_from_report(idx, &est.report, cfg.model.alpha))
        }
    }
}

fn lln_truth(
    cfg: &ExperimentConfig,
    spec: &MultipowerSpec,
    site_truths: Option<&[f64]>,
) -> Result<Option<f64>, McError> {
    // Lln targets compare V against μ_f · ∫|σ|^w; with realized integrals the
    // per-site truth is μ_m · realized_m
    match site_truths {
        None => Ok(None),
        Some(ts) => {
            let mu = mu_multipower(spec, cfg.model.alpha)?;
            let pooled = mu
                .iter()
                .zip(ts)
                .map(|(m, t)| m * t)
                .sum::<f64>()
                / mu.len() as f64;
            Ok(Some(pooled))
        }
    }
}

fn record_from_site(idx: u64, rep: &EstimateReport, site_truths: Option<&[f64]>) -> RepRecord {
    let truth = site_truths.map(|t| t[0]);
    let ci_hit = match (rep.degenerate, truth) {
        (false, Some(t)) => Some(rep.ci_lower <= t && t <= rep.ci_upper),
        _ => None,
    };
    RepRecord {
        replication: idx,
        estimate: rep.estimate,
        studentized: rep.studentized,
        ci_lower: rep.ci_lower,
        ci_upper: rep.ci_upper,
        ci_hit,
        truth,
    }
}

fn record_from_report(idx: u64, rep: &EstimateReport, truth: f64) -> RepRecord {
    let ci_hit =
        (!rep.degenerate).then(|| rep.ci_lower <= truth && truth <= rep.ci_upper);
    RepRecord {
        replication: idx,
        estimate: rep.estimate,
        studentized: rep.studentized,
        ci_lower: rep.ci_lower,
        ci_upper: rep.ci_upper,
        ci_hit,
        truth: Some(truth),
    }
}

fn summarize(records: &[RepRecord]) -> McSummary {
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.estimate).sum::<f64>() / n;
    let with_truth: Vec<&RepRecord> = records.iter().filter(|r| r.truth.is_some()).collect();
    let (bias, rmse, mean_truth) = if with_truth.is_empty() {
        (f64::NAN, f64::NAN, None)
    } else {
        let nt = with_truth.len() as f64;
        let bias = with_truth
            .iter()
            .map(|r| r.estimate - r.truth.unwrap())
            .sum::<f64>()
            / nt;
        let rmse = (with_truth
            .iter()
            .map(|r| (r.estimate - r.truth.unwrap()).powi(2))
            .sum::<f64>()
            / nt)
            .sqrt();
        let mt = with_truth.iter().map(|r| r.truth.unwrap()).sum::<f64>() / nt;
        (bias, rmse, Some(mt))
    };
    let hits: Vec<bool> = records.iter().filter_map(|r| r.ci_hit).collect();
    let coverage = (!hits.is_empty())
        .then(|| hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64);
    let studs: Vec<f64> = records.iter().filter_map(|r| r.studentized).collect();
    let (ks_statistic, ks_pvalue) = match ks_against_standard_normal(&studs) {
        Ok((s, p)) => (Some(s), Some(p)),
        Err(_) => (None, None),
    };
    let (ks_statistic_centered, ks_pvalue_centered) = if studs.len() >= 10 {
        let m = studs.iter().sum::<f64>() / studs.len() as f64;
        let centered: Vec<f64> = studs.iter().map(|s| s - m).collect();
        match ks_against_standard_normal(&centered) {
            Ok((s, p)) => (Some(s), Some(p)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    let widths: Vec<f64> = records
        .iter()
        .filter(|r| r.ci_lower.is_finite() && r.ci_upper.is_finite())
        .map(|r| r.ci_upper - r.ci_lower)
        .collect();
    let mean_ci_width =
        (!widths.is_empty()).then(|| widths.iter().sum::<f64>() / widths.len() as f64);
    McSummary {
        mean,
        bias,
        rmse,
        coverage,
        ks_statistic,
        ks_pvalue,
        ks_statistic_centered,
        ks_pvalue_centered,
        mean_ci_width,
        mean_truth,
    }
}

/// Wilson score interval for a binomial proportion.
pub fn coverage_ci(hits: u64, n: u64, level: f64) -> Result<(f64, f64), McError> {
    if n == 0 || hits > n {
        return Err(McError::Domain(format!(
            "need 0 <= hits <= n with n >= 1, got hits = {hits}, n = {n}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(McError::Domain(format!("level must lie in (0,1), got {level}")));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    let nf = n as f64;
    let p_hat = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p_hat + z2 / (2.0 * nf)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// One-sample Kolmogorov–Smirnov statistic against N(0,1) with the
/// asymptotic p-value (Stephens' effective-n correction).
pub fn ks_against_standard_normal(sample: &[f64]) -> Result<(f64, f64), McError> {
    let n = sample.len();
    if n < 10 {
        return Err(McError::Domain(format!(
            "KS test needs at least 10 observations, got {n}"
        )));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal_cdf(*x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    Ok((d, kolmogorov_tail(lambda)))
}

/// Tail of the Kolmogorov distribution; the alternating series converges
/// fast for large arguments, and the dual theta-series form handles small
/// ones (Marsaglia's switch point).
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let x = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (x + x.powi(9) + x.powi(25) + x.powi(49));
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Per-replication CSV: `replication,estimate,studentized,ci_lo,ci_hi,hit`.
pub fn write_replications_csv<W: Write>(report: &McReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "replication,estimate,studentized,ci_lo,ci_hi,hit")?;
    for r in &report.per_replication {
        let stud = r
            .studentized
            .map_or(String::new(), |s| format!("{s:.17e}"));
        let hit = r.ci_hit.map_or(String::new(), |h| u8::from(h).to_string());
        writeln!(
            w,
            "{},{:.17e},{},{:.17e},{:.17e},{}",
            r.replication, r.estimate, stud, r.ci_lower, r.ci_upper, hit
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wilson_interval_reference() {
        let (lo, hi) = coverage_ci(950, 1000, 0.95).unwrap();
        assert_abs_diff_eq!(lo, 0.934_686_2, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 0.961_869_7, epsilon = 1e-6);
        let (lo, _) = coverage_ci(0, 10, 0.95).unwrap();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        let (_, hi) = coverage_ci(10, 10, 0.95).unwrap();
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
        assert!(coverage_ci(11, 10, 0.95).is_err());
    }

    #[test]
    fn ks_self_checks() {
        // harness's own generator should look normal
        let mut rng = derive_stream(&SeedSpec::new(123, 0));
        let sample: Vec<f64> = (0..10_000)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let (_, p) = ks_against_standard_normal(&sample).unwrap();
        assert!(p > 1e-3, "p = {p}");
        // a constant sample is maximally non-normal
        let (d, _) = ks_against_standard_normal(&vec![0.0; 100]).unwrap();
        assert!(d >= 0.5);
        // exact quantile grid attains the minimal possible statistic
        let n = 1000;
        let grid: Vec<f64> = (0..n)
            .map(|i| normal_quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        let (d, p) = ks_against_standard_normal(&grid).unwrap();
        assert!(d <= 0.5 / n as f64 + 1e-9, "d = {d}");
        assert!(p > 0.999);
        assert!(ks_against_standard_normal(&[0.0; 5]).is_err());
    }

    #[test]
    fn spec_config_builds() {
        assert!(SpecConfig::Absolute { p: 2.0 }.build(1).is_ok());
        assert!(SpecConfig::SecondOrder { p: 2.0 }.build(3).is_ok());
        let bad = SpecConfig::Weights {
            multipower: MultipowerKind::AbsolutePower,
            weights: vec![vec![1.0], vec![1.0, 2.0]],
        };
        assert!(bad.build(2).is_err());
    }
}
