//! Shared domain types: model parameters, sampling schemes, observed paths,
//! multipower specifications and estimate reports.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
}

fn constraint(msg: impl Into<String>) -> ModelError {
    ModelError::ConstraintViolation(msg.into())
}

/// Spatial covariance structure of the driving noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Space-time white noise; only admissible in dimension 1 and pinned to
    /// correlation index alpha = 1 by convention.
    WhiteNoise,
    /// Riesz-kernel colored noise with index alpha in (0, 2) ∩ (0, d].
    RieszKernel,
}

/// Coefficients of the damped stochastic heat equation together with the
/// spatial correlation index of its driving noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub dim: u32,
    pub noise_kind: NoiseKind,
}

impl ModelParams {
    pub fn new(
        kappa: f64,
        lambda: f64,
        alpha: f64,
        dim: u32,
        noise_kind: NoiseKind,
    ) -> Result<Self, ModelError> {
        validate_params(ModelParams {
            kappa,
            lambda,
            alpha,
            dim,
            noise_kind,
        })
    }

    /// White noise in dimension 1 with the conventional alpha = 1.
    pub fn white_noise(kappa: f64, lambda: f64) -> Result<Self, ModelError> {
        Self::new(kappa, lambda, 1.0, 1, NoiseKind::WhiteNoise)
    }
}

/// Checks every invariant of [`ModelParams`] and returns the value unchanged
/// when all of them hold. Idempotent.
pub fn validate_params(p: ModelParams) -> Result<ModelParams, ModelError> {
    if !(p.kappa.is_finite() && p.kappa > 0.0) {
        return Err(constraint(format!("kappa must be > 0, got {}", p.kappa)));
    }
    if !(p.lambda.is_finite() && p.lambda > 0.0) {
        return Err(constraint(format!("lambda must be > 0, got {}", p.lambda)));
    }
    if !(p.alpha.is_finite() && p.alpha > 0.0 && p.alpha < 2.0) {
        return Err(constraint(format!(
            "alpha must lie in (0, 2), got {}",
            p.alpha
        )));
    }
    if p.dim == 0 {
        return Err(constraint("dimension must be a positive integer"));
    }
    if p.alpha > p.dim as f64 {
        return Err(constraint(format!(
            "alpha must satisfy alpha <= d, got alpha = {} with d = {}",
            p.alpha, p.dim
        )));
    }
    if p.noise_kind == NoiseKind::WhiteNoise && (p.dim != 1 || p.alpha != 1.0) {
        return Err(constraint(
            "white noise requires d = 1 and fixes alpha = 1".to_string(),
        ));
    }
    Ok(p)
}

/// Regular observation grid: time step, horizon and ordered spatial sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeRaw")]
pub struct SamplingScheme {
    delta: f64,
    horizon: f64,
    sites: Vec<f64>,
}

#[derive(Deserialize)]
struct SchemeRaw {
    delta: f64,
    horizon: f64,
    sites: Vec<f64>,
}

impl TryFrom<SchemeRaw> for SamplingScheme {
    type Error = ModelError;

    fn try_from(raw: SchemeRaw) -> Result<Self, ModelError> {
        SamplingScheme::new(raw.delta, raw.horizon, raw.sites)
    }
}

impl SamplingScheme {
    /// Sites are stored sorted ascending; duplicates are rejected.
    pub fn new(delta: f64, horizon: f64, sites: Vec<f64>) -> Result<Self, ModelError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(constraint(format!("delta must be > 0, got {delta}")));
        }
        if !(horizon.is_finite() && horizon >= delta) {
            return Err(constraint(format!(
                "horizon must be >= delta, got horizon = {horizon}, delta = {delta}"
            )));
        }
        if sites.is_empty() {
            return Err(constraint("at least one observation site is required"));
        }
        if sites.iter().any(|x| !x.is_finite()) {
            return Err(constraint("sites must be finite"));
        }
        let mut sites = sites;
        sites.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(constraint("sites must be pairwise distinct"));
        }
        let scheme = SamplingScheme {
            delta,
            horizon,
            sites,
        };
        if scheme.n_increments() < 2 {
            return Err(constraint(format!(
                "floor(horizon/delta) must be >= 2, got {}",
                scheme.n_increments()
            )));
        }
        Ok(scheme)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Number of observed increments, floor(horizon / delta). A tiny relative
    /// guard absorbs the floating-point case where horizon/delta sits one ulp
    /// below an integer.
    pub fn n_increments(&self) -> usize {
        let ratio = self.horizon / self.delta;
        let rounded = ratio.round();
        if (ratio - rounded).abs() < 1e-9 * rounded.max(1.0) {
            rounded as usize
        } else {
            ratio.floor() as usize
        }
    }

    /// Number of observation rows including time zero.
    pub fn n_times(&self) -> usize {
        self.n_increments() + 1
    }
}

/// Levels of the solution on the observation grid: one row per observation
/// time 0, Δ, 2Δ, ..., one column per site.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPath {
    scheme: SamplingScheme,
    levels: Array2<f64>,
}

impl ObservedPath {
    pub fn new(scheme: SamplingScheme, levels: Array2<f64>) -> Result<Self, ModelError> {
        if levels.nrows() != scheme.n_times() {
            return Err(constraint(format!(
                "levels must have {} rows (horizon/delta + 1), got {}",
                scheme.n_times(),
                levels.nrows()
            )));
        }
        if levels.ncols() != scheme.n_sites() {
            return Err(constraint(format!(
                "levels must have {} columns (one per site), got {}",
                scheme.n_sites(),
                levels.ncols()
            )));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(constraint("levels must be finite"));
        }
        Ok(ObservedPath { scheme, levels })
    }

    pub fn scheme(&self) -> &SamplingScheme {
        &self.scheme
    }

    pub fn levels(&self) -> &Array2<f64> {
        &self.levels
    }

    pub fn n_sites(&self) -> usize {
        self.scheme.n_sites()
    }

    pub fn n_increments(&self) -> usize {
        self.levels.nrows() - 1
    }

    /// Multiplies every level by `c`; increments scale accordingly.
    pub fn scaled(&self, c: f64) -> ObservedPath {
        ObservedPath {
            scheme: self.scheme.clone(),
            levels: self.levels.mapv(|v| c * v),
        }
    }
}

/// Functional family applied to consecutive normalized increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultipowerKind {
    /// Product of absolute powers of L consecutive increments.
    AbsolutePower,
    /// Product of signed integer powers.
    SignedPower,
    /// Absolute power of the sum of two adjacent increments.
    SecondOrder,
    /// z1*z2 + z1^2, the denominator functional of the correlation estimator.
    CorrSum,
}

/// Weight matrix plus functional kind. Rows index observation sites, columns
/// index the lag window.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipowerSpec {
    weights: Array2<f64>,
    kind: MultipowerKind,
}

impl MultipowerSpec {
    pub fn new(weights: Array2<f64>, kind: MultipowerKind) -> Result<Self, ModelError> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(constraint("weight matrix must be nonempty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(constraint("weights must be finite and nonnegative"));
        }
        match kind {
            MultipowerKind::AbsolutePower => {}
            MultipowerKind::SignedPower => {
                if weights.iter().any(|w| w.fract() != 0.0) {
                    return Err(constraint(
                        "signed multipower weights must be nonnegative integers",
                    ));
                }
            }
            MultipowerKind::SecondOrder => {
                if weights.ncols() != 2 {
                    return Err(constraint("second-order functionals fix the lag width to 2"));
                }
                for row in weights.rows() {
                    if row[0] != row[1] {
                        return Err(constraint(
                            "second-order weights must split the exponent evenly, w_m1 = w_m2",
                        ));
                    }
                }
            }
            MultipowerKind::CorrSum => {
                if weights.ncols() != 2 {
                    return Err(constraint("corr-sum functionals fix the lag width to 2"));
                }
                if weights.iter().any(|w| *w != 1.0) {
                    return Err(constraint("corr-sum weights are fixed to (1, 1)"));
                }
            }
        }
        Ok(MultipowerSpec { weights, kind })
    }

    /// Plain power variation |z|^p at every site.
    pub fn absolute(p: f64, n_sites: usize) -> Result<Self, ModelError> {
        Self::new(
            Array2::from_elem((n_sites, 1), p),
            MultipowerKind::AbsolutePower,
        )
    }

    /// Signed pair z1 * z2 at every site.
    pub fn signed_pair(n_sites: usize) -> Result<Self, ModelError> {
        Self::new(
            Array2::from_elem((n_sites, 2), 1.0),
            MultipowerKind::SignedPower,
        )
    }

    /// |z1 + z2|^p at every site, stored with the exponent split evenly so
    /// the row sum w_m equals p.
    pub fn second_order(p: f64, n_sites: usize) -> Result<Self, ModelError> {
        Self::new(
            Array2::from_elem((n_sites, 2), p / 2.0),
            MultipowerKind::SecondOrder,
        )
    }

    /// z1*z2 + z1^2 at every site.
    pub fn corr_sum(n_sites: usize) -> Result<Self, ModelError> {
        Self::new(Array2::from_elem((n_sites, 2), 1.0), MultipowerKind::CorrSum)
    }

    pub fn kind(&self) -> MultipowerKind {
        self.kind
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn n_sites(&self) -> usize {
        self.weights.nrows()
    }

    pub fn lag_width(&self) -> usize {
        self.weights.ncols()
    }

    /// Total weight w_m of site row m; the estimators target ∫|σ|^{w_m}.
    pub fn row_weight(&self, m: usize) -> f64 {
        self.weights.row(m).sum()
    }

    /// Same kind with every weight doubled (used by studentizations).
    pub fn doubled(&self) -> MultipowerSpec {
        MultipowerSpec {
            weights: self.weights.mapv(|w| 2.0 * w),
            kind: self.kind,
        }
    }
}

/// Point estimate with asymptotic confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub variance_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    /// Studentized statistic at a caller-supplied hypothesis, when one was
    /// given; the pivot is linear in the hypothesis for every estimator.
    pub studentized: Option<f64>,
    /// True when a studentization denominator vanished.
    pub degenerate: bool,
}

impl EstimateReport {
    /// Degenerate report carrying only a point value (possibly NaN).
    pub fn degenerate(estimate: f64, level: f64) -> Self {
        EstimateReport {
            estimate,
            variance_hat: f64::NAN,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
            level,
            studentized: None,
            degenerate: true,
        }
    }

    /// Pivot evaluated at hypothesis `x`: (estimate - x) / sqrt(variance_hat).
    pub fn studentized_at(&self, x: f64) -> Option<f64> {
        if self.degenerate || !(self.variance_hat > 0.0) {
            None
        } else {
            Some((self.estimate - x) / self.variance_hat.sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn canonical_white_noise_params_validate() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1, NoiseKind::WhiteNoise).unwrap();
        assert_eq!(p.alpha, 1.0);
    }

    #[test]
    fn alpha_at_least_two_is_rejected() {
        let err = ModelParams::new(1.0, 1.0, 2.5, 3, NoiseKind::RieszKernel).unwrap_err();
        let ModelError::ConstraintViolation(msg) = err;
        assert!(msg.contains("alpha"), "unexpected message: {msg}");
    }

    #[test]
    fn alpha_above_dimension_is_rejected() {
        let err = ModelParams::new(1.0, 1.0, 1.5, 1, NoiseKind::RieszKernel).unwrap_err();
        let ModelError::ConstraintViolation(msg) = err;
        assert!(msg.contains("alpha <= d") || msg.contains("d ="));
    }

    #[test]
    fn validate_params_is_idempotent() {
        let p = ModelParams::new(2.0, 0.5, 1.3, 2, NoiseKind::RieszKernel).unwrap();
        let once = validate_params(p).unwrap();
        let twice = validate_params(once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn scheme_sorts_sites_and_rejects_duplicates() {
        let s = SamplingScheme::new(0.1, 1.0, vec![2.0, -1.0, 0.5]).unwrap();
        assert_eq!(s.sites(), &[-1.0, 0.5, 2.0]);
        assert!(SamplingScheme::new(0.1, 1.0, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn scheme_requires_two_increments() {
        assert!(SamplingScheme::new(1.0, 1.5, vec![0.0]).is_err());
        assert!(SamplingScheme::new(0.5, 1.0, vec![0.0]).is_ok());
    }

    #[test]
    fn observed_path_rejects_non_finite_levels() {
        let scheme = SamplingScheme::new(0.5, 1.0, vec![0.0]).unwrap();
        let bad = array![[0.0], [f64::NAN], [1.0]];
        assert!(ObservedPath::new(scheme.clone(), bad).is_err());
        let good = array![[0.0], [1.0], [3.0]];
        assert!(ObservedPath::new(scheme, good).is_ok());
    }

    #[test]
    fn observed_path_checks_row_count() {
        let scheme = SamplingScheme::new(0.5, 1.0, vec![0.0]).unwrap();
        let short = array![[0.0], [1.0]];
        assert!(ObservedPath::new(scheme, short).is_err());
    }

    #[test]
    fn multipower_spec_constraints() {
        assert!(MultipowerSpec::absolute(2.0, 1).is_ok());
        // signed weights must be integers
        let w = array![[1.5, 1.0]];
        assert!(MultipowerSpec::new(w, MultipowerKind::SignedPower).is_err());
        // second order fixes L = 2
        let w = array![[2.0]];
        assert!(MultipowerSpec::new(w, MultipowerKind::SecondOrder).is_err());
        let spec = MultipowerSpec::second_order(2.0, 1).unwrap();
        assert_eq!(spec.row_weight(0), 2.0);
        assert_eq!(spec.lag_width(), 2);
    }

    #[test]
    fn report_pivot_inverts_at_endpoints() {
        let rep = EstimateReport {
            estimate: 1.0,
            variance_hat: 0.04,
            ci_lower: 1.0 - 1.96 * 0.2,
            ci_upper: 1.0 + 1.96 * 0.2,
            level: 0.95,
            studentized: None,
            degenerate: false,
        };
        let s = rep.studentized_at(rep.ci_upper).unwrap();
        assert!((s + 1.96).abs() < 1e-12);
    }
}
