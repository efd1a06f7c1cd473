//! Inference procedures: two estimators of the spatial correlation index α
//! and integrated-volatility estimators for known and estimated α, each with
//! studentized asymptotic confidence intervals.
//!
//! None of the α estimators take κ or λ, and the volatility estimators take
//! κ only; every studentization here is a ratio of variation functionals in
//! which the increment normalizer cancels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{
    c0_constants, c0_tilde_constants, mu_multipower, rho_f, tau_sq_plugin, ConstantsError,
    SeriesTruncation,
};
use crate::model::{EstimateReport, MultipowerKind, MultipowerSpec, ObservedPath};
use crate::special::{gamma_fn, normal_quantile, SpecialError};
use crate::variation::{variation, variation_ratio_cof, VariationError};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("variation ratio at site {site} is {ratio}, outside (-1, ∞)")]
    RatioOutOfDomain { site: usize, ratio: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported spec: {0}")]
    UnsupportedSpec(String),
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Which α estimator produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaMethodKind {
    ChangeOfFrequency { p: f64 },
    CorrelationRatio,
}

/// α selection for the unknown-α volatility estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaMethod {
    Cof { p0: f64 },
    Corr,
    Known { alpha: f64 },
}

#[derive(Debug, Clone)]
pub struct AlphaEstimate {
    pub report: EstimateReport,
    pub method: AlphaMethodKind,
    pub per_site: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateTag {
    /// √Δ rate when α is known.
    Root,
    /// √Δ · |log Δ| rate when α is estimated.
    RootLog,
}

#[derive(Debug, Clone)]
pub enum AlphaMode {
    Known(f64),
    Estimated(Box<AlphaEstimate>),
}

#[derive(Debug, Clone)]
pub struct VolatilityEstimate {
    pub per_site: Vec<EstimateReport>,
    pub alpha_mode: AlphaMode,
    pub rate_tag: RateTag,
    pub warnings: Vec<String>,
}

impl VolatilityEstimate {
    pub fn pooled_estimate(&self) -> f64 {
        self.per_site.iter().map(|r| r.estimate).sum::<f64>() / self.per_site.len() as f64
    }
}

/// Finite-sample α estimates may leave (0, 2); constants with poles at the
/// boundary are evaluated at a clipped value while the raw estimate is
/// reported unchanged.
pub const ALPHA_CLIP: (f64, f64) = (0.01, 1.99);

fn check_level(level: f64) -> Result<(), EstimatorError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimatorError::Domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

fn clt_power_warning(p: f64) -> Option<String> {
    if p == 2.0 || p >= 4.0 {
        None
    } else {
        Some(format!(
            "power p = {p} is outside {{2}} ∪ [4, ∞); the confidence interval is not backed \
             by the central limit theorem"
        ))
    }
}

/// Change-of-frequency estimator:
/// α̂^{(p),m} = 2 - (4/p) log₂( Σ|Δ_i Y + Δ_{i+1} Y|^p / Σ|Δ_i Y|^p ),
/// pooled by an unweighted mean over sites. The optional `hypothesis` is a
/// true α at which the studentized pivot is evaluated.
pub fn estimate_alpha_cof(
    path: &ObservedPath,
    p: f64,
    level: f64,
    hypothesis: Option<f64>,
) -> Result<AlphaEstimate, EstimatorError> {
    check_level(level)?;
    if !(p > 0.0) {
        return Err(EstimatorError::Domain(format!("need p > 0, got {p}")));
    }
    let method = AlphaMethodKind::ChangeOfFrequency { p };
    let mut warnings = Vec::new();
    if let Some(w) = clt_power_warning(p) {
        warnings.push(w);
    }
    let ratios = match variation_ratio_cof(path, p) {
        Ok(r) => r,
        Err(VariationError::DegenerateDenominator { .. }) => {
            return Ok(degenerate_alpha(method, path.n_sites(), level, warnings));
        }
        Err(e) => return Err(e.into()),
    };
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Ok(degenerate_alpha(method, path.n_sites(), level, warnings));
    }
    let per_site: Vec<f64> = ratios.iter().map(|r| 2.0 - (4.0 / p) * r.log2()).collect();
    let pooled = per_site.iter().sum::<f64>() / per_site.len() as f64;

    // studentization per the change-of-frequency CLT
    let n_sites = path.n_sites() as f64;
    let delta = path.scheme().delta();
    let clipped = pooled.clamp(ALPHA_CLIP.0, ALPHA_CLIP.1);
    let c0 = c0_constants(p, clipped, &SeriesTruncation::default())?.c0;
    let ratio_sum = match cof_ratio_sum(path, p)? {
        Some(s) => s,
        None => return Ok(degenerate_alpha(method, path.n_sites(), level, warnings)),
    };
    // statistic: (N/√Δ) sqrt(2^p Γ((2p+1)/2) / (√π C0)) (Σ_m V_{2p}/V_p²)^{-1/2} (α̂ - α)
    let gtop = (2f64).powf(p) * gamma_fn(0.5 * (2.0 * p + 1.0));
    let se = delta.sqrt() / n_sites * (std::f64::consts::PI.sqrt() * c0 / gtop).sqrt()
        * ratio_sum.sqrt();
    let report = report_from(pooled, se, level, hypothesis)?;
    Ok(AlphaEstimate {
        report,
        method,
        per_site,
        warnings,
    })
}

/// Correlation-ratio estimator: α̃^m = -2 log₂(1 + V_Ψ(1,1) / V_Φ(2)).
pub fn estimate_alpha_corr(
    path: &ObservedPath,
    level: f64,
    hypothesis: Option<f64>,
) -> Result<AlphaEstimate, EstimatorError> {
    check_level(level)?;
    let method = AlphaMethodKind::CorrelationRatio;
    let n_sites = path.n_sites();
    let psi = MultipowerSpec::signed_pair(n_sites).map_err(domain)?;
    let phi2 = MultipowerSpec::absolute(2.0, n_sites).map_err(domain)?;
    let v_psi = variation(path, &psi, 1.0, false)?.per_site;
    let v_phi = variation(path, &phi2, 1.0, false)?.per_site;
    if v_phi.iter().any(|&v| v == 0.0) {
        return Ok(degenerate_alpha(method, n_sites, level, Vec::new()));
    }
    let mut per_site = Vec::with_capacity(n_sites);
    for m in 0..n_sites {
        let ratio = v_psi[m] / v_phi[m];
        per_site.push(corr_alpha_from_ratio(ratio, m)?);
    }
    let pooled = per_site.iter().sum::<f64>() / n_sites as f64;

    let delta = path.scheme().delta();
    let clipped = pooled.clamp(ALPHA_CLIP.0, ALPHA_CLIP.1);
    let tilde_c0 = c0_tilde_constants(clipped, &SeriesTruncation::default())?.tilde_c0;
    let ratio_sum = match corr_ratio_sum(path)? {
        Some(s) => s,
        None => return Ok(degenerate_alpha(method, n_sites, level, Vec::new())),
    };
    // statistic: (N/√Δ) sqrt(3 / C̃0) (Σ_m V_{Φ(4)}/V²_{Ψ(1,1)+Φ(2)})^{-1/2} (α̃ - α)
    let se =
        delta.sqrt() / n_sites as f64 * (tilde_c0 / 3.0).sqrt() * ratio_sum.sqrt();
    let report = report_from(pooled, se, level, hypothesis)?;
    Ok(AlphaEstimate {
        report,
        method,
        per_site,
        warnings: Vec::new(),
    })
}

fn corr_alpha_from_ratio(ratio: f64, site: usize) -> Result<f64, EstimatorError> {
    if !(ratio > -1.0) {
        return Err(EstimatorError::RatioOutOfDomain { site, ratio });
    }
    Ok(-2.0 * (1.0 + ratio).log2())
}

/// Σ_m V_{Φ(2p),m} / V_{Φ(p),m}² computed with unit normalizer, where the
/// τ powers cancel; None marks a degenerate denominator.
fn cof_ratio_sum(path: &ObservedPath, p: f64) -> Result<Option<f64>, EstimatorError> {
    let n_sites = path.n_sites();
    let v_p = variation(path, &MultipowerSpec::absolute(p, n_sites).map_err(domain)?, 1.0, false)?
        .per_site;
    let v_2p = variation(
        path,
        &MultipowerSpec::absolute(2.0 * p, n_sites).map_err(domain)?,
        1.0,
        false,
    )?
    .per_site;
    let mut sum = 0.0;
    for m in 0..n_sites {
        if v_p[m] == 0.0 {
            return Ok(None);
        }
        sum += v_2p[m] / (v_p[m] * v_p[m]);
    }
    Ok(Some(sum))
}

/// Σ_m V_{Φ(4),m} / V_{Ψ(1,1)+Φ(2),m}², normalizer-free as above.
fn corr_ratio_sum(path: &ObservedPath) -> Result<Option<f64>, EstimatorError> {
    let n_sites = path.n_sites();
    let v4 = variation(
        path,
        &MultipowerSpec::absolute(4.0, n_sites).map_err(domain)?,
        1.0,
        false,
    )?
    .per_site;
    let vcs = variation(
        path,
        &MultipowerSpec::corr_sum(n_sites).map_err(domain)?,
        1.0,
        false,
    )?
    .per_site;
    let mut sum = 0.0;
    for m in 0..n_sites {
        if vcs[m] == 0.0 {
            return Ok(None);
        }
        sum += v4[m] / (vcs[m] * vcs[m]);
    }
    Ok(Some(sum))
}

/// Integrated-volatility estimator for known α: per-site point estimate
/// Ṽ_f / μ_f targeting ∫_0^T |σ(s, x_m)|^{w_m} ds, with the studentized
/// interval built from the doubled-weight functional. λ is not an input.
///
/// `hypothesis` optionally holds per-site true integrals for pivot
/// evaluation. The observed sites are scalar, so d = 1 throughout.
pub fn estimate_vol_known_alpha(
    path: &ObservedPath,
    spec: &MultipowerSpec,
    alpha: f64,
    kappa: f64,
    level: f64,
    hypothesis: Option<&[f64]>,
) -> Result<VolatilityEstimate, EstimatorError> {
    check_level(level)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(EstimatorError::Domain(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )));
    }
    if !(kappa > 0.0) {
        return Err(EstimatorError::Domain(format!(
            "kappa must be > 0, got {kappa}"
        )));
    }
    let warnings = vol_spec_warnings(spec)?;
    let delta = path.scheme().delta();
    let tau = tau_sq_plugin(alpha, kappa, 1, delta)?.sqrt();
    let trunc = SeriesTruncation::default();
    let mu = mu_multipower(spec, alpha)?;
    let doubled = spec.doubled();
    let mu2 = mu_multipower(&doubled, alpha)?;
    let rho = rho_f(spec, alpha, &trunc)?;
    let v = variation(path, spec, tau, false)?.per_site;
    let v2 = variation(path, &doubled, tau, false)?.per_site;

    let mut per_site = Vec::with_capacity(path.n_sites());
    for m in 0..path.n_sites() {
        if mu[m] == 0.0 {
            return Err(EstimatorError::UnsupportedSpec(
                "limit mean is zero (odd signed weights); the point estimate is undefined".into(),
            ));
        }
        let estimate = v[m] / mu[m];
        // se = √Δ (√ρ_f / μ_f) √(Ṽ_{2w} / μ_{2w})
        let inner = v2[m] / mu2[m];
        if !(inner > 0.0) || !(rho[m] > 0.0) {
            per_site.push(EstimateReport::degenerate(estimate, level));
            continue;
        }
        let se = delta.sqrt() * rho[m].sqrt() / mu[m] * inner.sqrt();
        per_site.push(site_report(
            estimate,
            se,
            level,
            hypothesis.map(|h| h[m]),
        )?);
    }
    Ok(VolatilityEstimate {
        per_site,
        alpha_mode: AlphaMode::Known(alpha),
        rate_tag: RateTag::Root,
        warnings,
    })
}

/// Integrated-volatility estimator with plug-in α: the normalizer becomes
/// τ̂(α_n) and the interval widens by the |log Δ| factor, the α-estimation
/// error being the dominant term. All sites share one limiting fluctuation.
pub fn estimate_vol_unknown_alpha(
    path: &ObservedPath,
    spec: &MultipowerSpec,
    kappa: f64,
    alpha_method: AlphaMethod,
    level: f64,
    hypothesis: Option<&[f64]>,
) -> Result<VolatilityEstimate, EstimatorError> {
    check_level(level)?;
    if !(kappa > 0.0) {
        return Err(EstimatorError::Domain(format!(
            "kappa must be > 0, got {kappa}"
        )));
    }
    let mut warnings = vol_spec_warnings(spec)?;
    let trunc = SeriesTruncation::default();
    let delta = path.scheme().delta();
    let n_sites = path.n_sites() as f64;

    // α plug-in plus the variance factor of the chosen α estimator
    let (alpha_est, b_factor): (AlphaEstimate, f64) = match alpha_method {
        AlphaMethod::Known { alpha } => {
            return estimate_vol_known_alpha(path, spec, alpha, kappa, level, hypothesis);
        }
        AlphaMethod::Cof { p0 } => {
            if !(p0 == 2.0 || p0 >= 4.0) {
                warnings.push(format!(
                    "p0 = {p0} is outside {{2}} ∪ [4, ∞); the confidence interval is not backed \
                     by the central limit theorem"
                ));
            }
            let est = estimate_alpha_cof(path, p0, level, None)?;
            if est.report.degenerate {
                return Ok(all_degenerate(path, level, est, warnings));
            }
            let clipped = est.report.estimate.clamp(ALPHA_CLIP.0, ALPHA_CLIP.1);
            let c0 = c0_constants(p0, clipped, &trunc)?.c0;
            let gtop = (2f64).powf(p0) * gamma_fn(0.5 * (2.0 * p0 + 1.0));
            let ratio_sum = match cof_ratio_sum(path, p0)? {
                Some(s) => s,
                None => return Ok(all_degenerate(path, level, est, warnings)),
            };
            let b = (gtop / (std::f64::consts::PI.sqrt() * c0)).sqrt() / ratio_sum.sqrt();
            (est, b)
        }
        AlphaMethod::Corr => {
            let est = estimate_alpha_corr(path, level, None)?;
            if est.report.degenerate {
                return Ok(all_degenerate(path, level, est, warnings));
            }
            let clipped = est.report.estimate.clamp(ALPHA_CLIP.0, ALPHA_CLIP.1);
            let tilde_c0 = c0_tilde_constants(clipped, &trunc)?.tilde_c0;
            let ratio_sum = match corr_ratio_sum(path)? {
                Some(s) => s,
                None => return Ok(all_degenerate(path, level, est, warnings)),
            };
            let b = (3.0 / tilde_c0).sqrt() / ratio_sum.sqrt();
            (est, b)
        }
    };

    let alpha_n = alpha_est.report.estimate;
    let clipped = alpha_n.clamp(ALPHA_CLIP.0, ALPHA_CLIP.1);
    let tau_hat = tau_sq_plugin(clipped, kappa, 1, delta)?.sqrt();
    let mu = mu_multipower(spec, clipped)?;
    let v_hat = variation(path, spec, tau_hat, false)?.per_site;
    let log_factor = delta.ln().abs();

    let mut per_site = Vec::with_capacity(path.n_sites());
    for m in 0..path.n_sites() {
        if mu[m] == 0.0 {
            return Err(EstimatorError::UnsupportedSpec(
                "limit mean is zero (odd signed weights); the point estimate is undefined".into(),
            ));
        }
        let estimate = v_hat[m] / mu[m];
        let w_m = spec.row_weight(m);
        // statistic: (Δ^{-1/2}/|logΔ|) (4N/(w_m V̂_m)) B (V̂_m - μ ∫|σ|^w)
        if !(v_hat[m] > 0.0) || !(b_factor > 0.0) || !b_factor.is_finite() {
            per_site.push(EstimateReport::degenerate(estimate, level));
            continue;
        }
        let se = delta.sqrt() * log_factor * w_m * v_hat[m] / (4.0 * n_sites * mu[m] * b_factor);
        per_site.push(site_report(
            estimate,
            se,
            level,
            hypothesis.map(|h| h[m]),
        )?);
    }
    Ok(VolatilityEstimate {
        per_site,
        alpha_mode: AlphaMode::Estimated(Box::new(alpha_est)),
        rate_tag: RateTag::RootLog,
        warnings,
    })
}

fn vol_spec_warnings(spec: &MultipowerSpec) -> Result<Vec<String>, EstimatorError> {
    match spec.kind() {
        MultipowerKind::AbsolutePower => {
            let ok = spec
                .weights()
                .iter()
                .all(|&w| w == 0.0 || w == 2.0 || w >= 4.0);
            Ok(if ok {
                Vec::new()
            } else {
                vec![
                    "absolute-power weights outside {0, 2} ∪ [4, ∞): the confidence interval is \
                     not backed by the central limit theorem"
                        .to_string(),
                ]
            })
        }
        MultipowerKind::SignedPower => {
            let ok = (0..spec.n_sites()).all(|m| spec.row_weight(m) as u64 % 2 == 0);
            Ok(if ok {
                Vec::new()
            } else {
                vec!["signed multipower with odd total weight has a vanishing limit".to_string()]
            })
        }
        other => Err(EstimatorError::UnsupportedSpec(format!(
            "volatility estimation expects absolute or signed multipowers, got {other:?}"
        ))),
    }
}

fn all_degenerate(
    path: &ObservedPath,
    level: f64,
    alpha_est: AlphaEstimate,
    warnings: Vec<String>,
) -> VolatilityEstimate {
    VolatilityEstimate {
        per_site: (0..path.n_sites())
            .map(|_| EstimateReport::degenerate(f64::NAN, level))
            .collect(),
        alpha_mode: AlphaMode::Estimated(Box::new(alpha_est)),
        rate_tag: RateTag::RootLog,
        warnings,
    }
}

fn degenerate_alpha(
    method: AlphaMethodKind,
    n_sites: usize,
    level: f64,
    warnings: Vec<String>,
) -> AlphaEstimate {
    AlphaEstimate {
        report: EstimateReport::degenerate(f64::NAN, level),
        method,
        per_site: vec![f64::NAN; n_sites],
        warnings,
    }
}

fn report_from(
    estimate: f64,
    se: f64,
    level: f64,
    hypothesis: Option<f64>,
) -> Result<EstimateReport, EstimatorError> {
    site_report(estimate, se, level, hypothesis)
}

fn site_report(
    estimate: f64,
    se: f64,
    level: f64,
    hypothesis: Option<f64>,
) -> Result<EstimateReport, EstimatorError> {
    if !(se > 0.0) || !se.is_finite() {
        return Ok(EstimateReport::degenerate(estimate, level));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    Ok(EstimateReport {
        estimate,
        variance_hat: se * se,
        ci_lower: estimate - z * se,
        ci_upper: estimate + z * se,
        level,
        studentized: hypothesis.map(|h| (estimate - h) / se),
        degenerate: false,
    })
}

fn domain(e: crate::model::ModelError) -> EstimatorError {
    EstimatorError::Domain(e.to_string())
}

/// JSON shape shared by the CLI and the Monte Carlo reports.
pub fn alpha_report_json(est: &AlphaEstimate) -> serde_json::Value {
    let method = match est.method {
        AlphaMethodKind::ChangeOfFrequency { .. } => "change_of_frequency",
        AlphaMethodKind::CorrelationRatio => "correlation_ratio",
    };
    serde_json::json!({
        "method": method,
        "estimate": est.report.estimate,
        "per_site": est.per_site,
        "variance_hat": est.report.variance_hat,
        "ci": [est.report.ci_lower, est.report.ci_upper],
        "level": est.report.level,
        "studentized": est.report.studentized,
        "degenerate": est.report.degenerate,
        "warnings": est.warnings,
    })
}

pub fn vol_report_json(est: &VolatilityEstimate) -> serde_json::Value {
    let method = match est.rate_tag {
        RateTag::Root => "vol_known_alpha",
        RateTag::RootLog => "vol_unknown_alpha",
    };
    let alpha = match &est.alpha_mode {
        AlphaMode::Known(a) => serde_json::json!({"mode": "known", "alpha": a}),
        AlphaMode::Estimated(a) => serde_json::json!({
            "mode": "estimated",
            "alpha": a.report.estimate,
            "alpha_report": alpha_report_json(a),
        }),
    };
    let first = &est.per_site[0];
    serde_json::json!({
        "method": method,
        "estimate": est.pooled_estimate(),
        "per_site": est.per_site.iter().map(|r| r.estimate).collect::<Vec<_>>(),
        "variance_hat": first.variance_hat,
        "ci": [first.ci_lower, first.ci_upper],
        "level": first.level,
        "studentized": first.studentized,
        "degenerate": est.per_site.iter().any(|r| r.degenerate),
        "alpha_mode": alpha,
        "warnings": est.warnings,
    })
}
