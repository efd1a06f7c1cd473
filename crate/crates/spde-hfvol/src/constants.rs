//! Closed-form and series constants of the model: increment normalizers,
//! correlation weights, multipower limit means and asymptotic variance
//! constants for the studentized estimators.

use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelParams, MultipowerKind, MultipowerSpec};
use crate::special::{
    bivariate_abs_power_cov, gamma_fn, gauss_hermite, gaussian_abs_moment, lower_incomplete_gamma,
    SpecialError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("series did not converge within {max_terms} terms (last |term| = {last_term:.3e})")]
    TruncationNotConverged { max_terms: u64, last_term: f64 },
    #[error("unsupported multipower spec: {0}")]
    UnsupportedSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Stopping rule for the infinite lag series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesTruncation {
    pub abs_tol: f64,
    pub max_terms: u64,
}

impl Default for SeriesTruncation {
    /// abs_tol 1e-12 with a generous cap; the lag weights satisfy
    /// Γ_r^2 = O(r^{-2-α}) so the series converge comfortably within it.
    fn default() -> Self {
        SeriesTruncation {
            abs_tol: 1e-12,
            max_terms: 1_000_000,
        }
    }
}

impl SeriesTruncation {
    pub fn validate(&self) -> Result<(), ConstantsError> {
        if !(self.abs_tol > 0.0) {
            return Err(ConstantsError::Domain("abs_tol must be > 0".into()));
        }
        if self.max_terms < 10 {
            return Err(ConstantsError::Domain("max_terms must be >= 10".into()));
        }
        Ok(())
    }
}

/// Entries of the asymptotic variance constants for the two alpha
/// estimators; the tilde family does not depend on the power p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceConstants {
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
    pub c0: f64,
    pub tilde_c11: f64,
    pub tilde_c12: f64,
    pub tilde_c22: f64,
    pub tilde_c0: f64,
}

/// The lag weights and variance constants exist only for α in (0, 2).
pub fn check_alpha(alpha: f64) -> Result<(), ConstantsError> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(ConstantsError::Domain(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )));
    }
    Ok(())
}

/// Limiting lag-r autocorrelation of normalized increments:
/// Γ_0 = 1, Γ_r = ((r+1)^{1-α/2} - 2 r^{1-α/2} + (r-1)^{1-α/2}) / 2.
pub fn gamma_weight(alpha: f64, r: u64) -> Result<f64, ConstantsError> {
    check_alpha(alpha)?;
    Ok(gamma_weight_unchecked(1.0 - 0.5 * alpha, r))
}

#[inline]
fn gamma_weight_unchecked(b: f64, r: u64) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let r = r as f64;
    0.5 * ((r + 1.0).powf(b) - 2.0 * r.powf(b) + (r - 1.0).powf(b))
}

/// Exact finite-Δ lag-r autocorrelation Γ_r^n, a second difference of the
/// lower incomplete gamma function; |Γ_r^n - Γ_r| = O(Δ).
pub fn gamma_weight_n(alpha: f64, lambda: f64, delta: f64, r: u64) -> Result<f64, ConstantsError> {
    check_alpha(alpha)?;
    if !(lambda > 0.0) || !(delta > 0.0) {
        return Err(ConstantsError::Domain(
            "lambda and delta must be > 0".into(),
        ));
    }
    if r == 0 {
        return Ok(1.0);
    }
    let a = 1.0 - 0.5 * alpha;
    let g = |x: f64| lower_incomplete_gamma(a, x);
    let rf = r as f64;
    let num = g(lambda * (rf + 1.0) * delta)? - 2.0 * g(lambda * rf * delta)?
        + g(lambda * (rf - 1.0) * delta)?;
    Ok(num / (2.0 * g(lambda * delta)?))
}

fn tau_prefactor(p: &ModelParams) -> f64 {
    let d = p.dim as f64;
    std::f64::consts::PI.powf(0.5 * d - p.alpha) * gamma_fn(0.5 * p.alpha)
        / ((2.0 * p.kappa).powf(0.5 * p.alpha) * gamma_fn(0.5 * d))
}

/// Exact increment variance τ_n² of the unit-volatility stationary solution.
pub fn tau_sq_exact(p: &ModelParams, delta: f64) -> Result<f64, ConstantsError> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(ConstantsError::Domain(format!(
            "delta must be >= 0, got {delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let a = 1.0 - 0.5 * p.alpha;
    let g = lower_incomplete_gamma(a, p.lambda * delta)?;
    Ok(tau_prefactor(p) / p.lambda.powf(a) * g)
}

/// Leading-order normalizer τ̃_n², free of the damping rate λ.
pub fn tau_sq_leading(p: &ModelParams, delta: f64) -> Result<f64, ConstantsError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ConstantsError::Domain(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    let a = 1.0 - 0.5 * p.alpha;
    Ok(tau_prefactor(p) / a * delta.powf(a))
}

/// Same as [`tau_sq_leading`] with a plug-in correlation index, used when α
/// is estimated from data.
pub fn tau_sq_plugin(alpha: f64, kappa: f64, dim: u32, delta: f64) -> Result<f64, ConstantsError> {
    check_alpha(alpha)?;
    if !(kappa > 0.0) {
        return Err(ConstantsError::Domain("kappa must be > 0".into()));
    }
    let d = dim as f64;
    let a = 1.0 - 0.5 * alpha;
    let pref = std::f64::consts::PI.powf(0.5 * d - alpha) * gamma_fn(0.5 * alpha)
        / ((2.0 * kappa).powf(0.5 * alpha) * gamma_fn(0.5 * d));
    Ok(pref / a * delta.powf(a))
}

const SERIES_MIN_TERMS: u64 = 16;

/// Sums Σ_{r>=1} t_r where |t_r| eventually decays like a power law.
///
/// Stops once |t_r| < abs_tol, then adds an Euler–Maclaurin tail estimate
/// from a local power-law fit so the truncation error is O(abs_tol) rather
/// than O(abs_tol · r); this is what makes identities between differently
/// arranged series hold to ~1e-10.
fn series_sum<E>(
    trunc: &SeriesTruncation,
    mut term: impl FnMut(u64) -> Result<f64, E>,
) -> Result<f64, ConstantsError>
where
    ConstantsError: From<E>,
{
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut add = |sum: &mut f64, x: f64| {
        let y = x - comp;
        let t = *sum + y;
        comp = (t - *sum) - y;
        *sum = t;
    };
    let mut r = 1u64;
    loop {
        let t = term(r)?;
        add(&mut sum, t);
        if r >= SERIES_MIN_TERMS && t.abs() < trunc.abs_tol {
            // local power-law tail: t_x ~ c x^{-q} fitted on (r/2, r)
            let t_half = term(r / 2)?;
            if t != 0.0 && t_half * t > 0.0 && t_half.abs() > t.abs() {
                let q = (t_half.abs() / t.abs()).ln() / (r as f64 / (r / 2) as f64).ln();
                if q > 1.05 {
                    add(&mut sum, t * (r as f64 / (q - 1.0) - 0.5));
                }
            }
            return Ok(sum);
        }
        if r >= trunc.max_terms {
            return Err(ConstantsError::TruncationNotConverged {
                max_terms: trunc.max_terms,
                last_term: t.abs(),
            });
        }
        r += 1;
    }
}

/// Growable cache of Γ_r values for one α, shared by the series closures.
struct GammaTable {
    b: f64,
    values: Vec<f64>,
}

impl GammaTable {
    fn new(alpha: f64) -> Self {
        GammaTable {
            b: 1.0 - 0.5 * alpha,
            values: vec![1.0],
        }
    }

    fn get(&mut self, r: u64) -> f64 {
        let r = r as usize;
        while self.values.len() <= r {
            let next = self.values.len() as u64;
            self.values.push(gamma_weight_unchecked(self.b, next));
        }
        self.values[r]
    }
}

/// Skip quadrature for negligible correlations; ρ_p(x) = O(x^2) near zero.
const RHO_ARG_SKIP: f64 = 1e-13;

fn rho_p(p: f64, x: f64) -> Result<f64, SpecialError> {
    if x.abs() < RHO_ARG_SKIP {
        return Ok(0.0);
    }
    bivariate_abs_power_cov(p, x)
}

/// Asymptotic variance constant R_p = ρ_p(1) + 2 Σ_{r>=1} ρ_p(Γ_r) of the
/// normalized power variation.
pub fn big_r(p: f64, alpha: f64, trunc: &SeriesTruncation) -> Result<f64, ConstantsError> {
    check_alpha(alpha)?;
    trunc.validate()?;
    let mut gamma = GammaTable::new(alpha);
    let series = series_sum(trunc, |r| rho_p(p, gamma.get(r)))?;
    Ok(bivariate_abs_power_cov(p, 1.0)? + 2.0 * series)
}

/// Variance constants for the change-of-frequency estimator at power p,
/// together with the p-independent tilde family of the correlation
/// estimator.
pub fn c0_constants(
    p: f64,
    alpha: f64,
    trunc: &SeriesTruncation,
) -> Result<VarianceConstants, ConstantsError> {
    if !(p > 0.0) {
        return Err(ConstantsError::Domain(format!("p must be > 0, got {p}")));
    }
    check_alpha(alpha)?;
    trunc.validate()?;
    let ln2 = std::f64::consts::LN_2;
    let mut gamma = GammaTable::new(alpha);
    let g1 = gamma.get(1);
    let s = 2.0 + 2.0 * g1; // Var(Z_i + Z_{i+1})
    let sqrt_s = s.sqrt();

    let rho_p1 = bivariate_abs_power_cov(p, 1.0)?;
    let c11 = rho_p1 + 2.0 * series_sum(trunc, |r| rho_p(p, gamma.get(r)))?;
    let c22 = s.powf(p)
        * (rho_p1
            + 2.0
                * series_sum(trunc, |r| {
                    let arg = (2.0 * gamma.get(r) + gamma.get(r - 1) + gamma.get(r + 1)) / s;
                    rho_p(p, arg)
                })?);
    let c12 = s.powf(0.5 * p)
        * (rho_p(p, ((1.0 + g1) / 2.0).sqrt())?
            + series_sum(trunc, |r| {
                rho_p(p, (gamma.get(r) + gamma.get(r - 1)) / sqrt_s)
            })?
            + series_sum(trunc, |r| {
                rho_p(p, (gamma.get(r) + gamma.get(r + 1)) / sqrt_s)
            })?);
    let c0 = (4.0 / (p * ln2)).powi(2)
        * (c11 - 2.0 * c12 / s.powf(0.5 * p) + c22 / s.powf(p));

    let tilde_c11 = 1.0
        + g1 * g1
        + 2.0
            * series_sum(trunc, |r| {
                Ok::<_, ConstantsError>(
                    gamma.get(r) * gamma.get(r) + gamma.get(r + 1) * gamma.get(r - 1),
                )
            })?;
    let tilde_c22 = 2.0
        + 4.0
            * series_sum(trunc, |r| {
                Ok::<_, ConstantsError>(gamma.get(r) * gamma.get(r))
            })?;
    let tilde_c12 = 2.0 * g1
        + 2.0
            * series_sum(trunc, |r| {
                Ok::<_, ConstantsError>(gamma.get(r) * (gamma.get(r + 1) + gamma.get(r - 1)))
            })?;
    let tilde_c0 =
        (2.0 / ln2).powi(2) * (tilde_c11 - 2.0 * tilde_c12 * g1 + tilde_c22 * g1 * g1);

    Ok(VarianceConstants {
        c11,
        c12,
        c22,
        c0,
        tilde_c11,
        tilde_c12,
        tilde_c22,
        tilde_c0,
    })
}

/// Variance constants of the correlation estimator; the returned record also
/// carries the change-of-frequency family at p = 2, whose c0 coincides with
/// tilde_c0 / (1 + Γ_1)^2.
pub fn c0_tilde_constants(
    alpha: f64,
    trunc: &SeriesTruncation,
) -> Result<VarianceConstants, ConstantsError> {
    c0_constants(2.0, alpha, trunc)
}

/// Limit mean μ_f(1, ..., 1) of a multipower functional under unit
/// volatility, one value per site row.
pub fn mu_multipower(spec: &MultipowerSpec, alpha: f64) -> Result<Vec<f64>, ConstantsError> {
    check_alpha(alpha)?;
    let g1 = gamma_weight(alpha, 1)?;
    let n = spec.n_sites();
    let l = spec.lag_width();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let w_m = spec.row_weight(m);
        let value = match spec.kind() {
            MultipowerKind::SecondOrder => {
                gaussian_abs_moment(w_m)? * (2.0 + 2.0 * g1).powf(0.5 * w_m)
            }
            MultipowerKind::CorrSum => 1.0 + g1,
            MultipowerKind::AbsolutePower if l == 1 => {
                gaussian_abs_moment(spec.weights()[(m, 0)])?
            }
            MultipowerKind::SignedPower if l == 1 => {
                let w = spec.weights()[(m, 0)];
                if (w as u64) % 2 == 1 {
                    0.0
                } else {
                    gaussian_abs_moment(w)?
                }
            }
            MultipowerKind::SignedPower if w_m as u64 % 2 == 1 => 0.0,
            MultipowerKind::AbsolutePower | MultipowerKind::SignedPower if l <= 3 => {
                let row: Vec<f64> = spec.weights().row(m).iter().copied().collect();
                mu_by_quadrature(&row, alpha, spec.kind())?
            }
            _ => {
                return Err(ConstantsError::UnsupportedSpec(format!(
                    "no closed form or quadrature path for kind {:?} with lag width {l}",
                    spec.kind()
                )))
            }
        };
        out.push(value);
    }
    Ok(out)
}

/// Tensor Gauss–Hermite evaluation of E[f(Z_1, ..., Z_L)] for the correlated
/// lag window; exact for integer weights, spectral-accuracy otherwise.
fn mu_by_quadrature(
    weights: &[f64],
    alpha: f64,
    kind: MultipowerKind,
) -> Result<f64, ConstantsError> {
    let l = weights.len();
    let all_integral = weights.iter().all(|w| w.fract() == 0.0);
    let order = if all_integral {
        (weights.iter().sum::<f64>() as usize) + 2
    } else {
        200
    };
    let rule = gauss_hermite(order)?;
    let mut cov = Array2::zeros((l, l));
    for i in 0..l {
        for j in 0..l {
            cov[(i, j)] = gamma_weight(alpha, (i as i64 - j as i64).unsigned_abs())?;
        }
    }
    let chol = cholesky(&cov)
        .ok_or_else(|| ConstantsError::Domain("lag covariance not positive definite".into()))?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let norm = crate::special::QuadratureRule {
        nodes: rule.nodes.clone(),
        weights: rule.weights.clone(),
        order,
    };
    let mut total = 0.0;
    let mut idx = vec![0usize; l];
    let pi_pow = std::f64::consts::PI.powf(0.5 * l as f64);
    loop {
        let mut wq = 1.0;
        let mut u = vec![0.0; l];
        for (d, &i) in idx.iter().enumerate() {
            wq *= norm.weights[i];
            u[d] = sqrt2 * norm.nodes[i];
        }
        // z = chol * u
        let mut f = 1.0;
        for (i, &w) in weights.iter().enumerate() {
            let mut z = 0.0;
            for (j, &uj) in u.iter().enumerate().take(i + 1) {
                z += chol[(i, j)] * uj;
            }
            f *= match kind {
                MultipowerKind::AbsolutePower => z.abs().powf(w),
                MultipowerKind::SignedPower => z.powi(w as i32),
                _ => unreachable!(),
            };
        }
        total += wq * f;
        // advance the tensor index
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == l {
                return Ok(total / pi_pow);
            }
        }
    }
}

/// Cholesky factor tolerating exact rank deficiency: lag windows less than
/// L apart share increments, which makes the joint covariance PSD-singular.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s < -1e-10 {
                    return None;
                }
                l[(i, j)] = s.max(0.0).sqrt();
            } else if l[(j, j)] == 0.0 {
                l[(i, j)] = 0.0;
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Lag-r cross-covariance ρ_{f_a, f_b}(r; 1, ..., 1) between two multipower
/// functionals evaluated on windows r increments apart, per site row.
///
/// Closed forms cover the estimator family; other pairs with lag width <= 2
/// fall back to a seeded Monte Carlo evaluation.
pub fn rho_multipower(
    spec_a: &MultipowerSpec,
    spec_b: &MultipowerSpec,
    r: u64,
    alpha: f64,
    trunc: &SeriesTruncation,
) -> Result<Vec<f64>, ConstantsError> {
    check_alpha(alpha)?;
    trunc.validate()?;
    if spec_a.n_sites() != spec_b.n_sites() {
        return Err(ConstantsError::UnsupportedSpec(
            "site counts of the two specs differ".into(),
        ));
    }
    let mut gamma = GammaTable::new(alpha);
    let n = spec_a.n_sites();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        out.push(rho_pair_site(spec_a, spec_b, m, r, &mut gamma, alpha)?);
    }
    Ok(out)
}

fn rho_pair_site(
    spec_a: &MultipowerSpec,
    spec_b: &MultipowerSpec,
    m: usize,
    r: u64,
    gamma: &mut GammaTable,
    alpha: f64,
) -> Result<f64, ConstantsError> {
    use MultipowerKind::*;
    let g = |gamma: &mut GammaTable, k: i64| gamma.get(k.unsigned_abs());
    let g1 = gamma.get(1);
    let s = 2.0 + 2.0 * g1;
    let ri = r as i64;

    // signed L=1 routes through the absolute family when even
    let eff_kind = |spec: &MultipowerSpec| -> MultipowerKind {
        if spec.kind() == SignedPower
            && spec.lag_width() == 1
            && (spec.weights()[(m, 0)] as u64) % 2 == 0
        {
            AbsolutePower
        } else {
            spec.kind()
        }
    };
    let ka = eff_kind(spec_a);
    let kb = eff_kind(spec_b);
    let la = spec_a.lag_width();
    let lb = spec_b.lag_width();

    let value = match (ka, la, kb, lb) {
        (AbsolutePower, 1, AbsolutePower, 1) => {
            let a = spec_a.weights()[(m, 0)];
            let b = spec_b.weights()[(m, 0)];
            abs_cross_cov(a, b, g(gamma, ri))?
        }
        (SecondOrder, _, SecondOrder, _) => {
            let p = spec_a.row_weight(m);
            if p != spec_b.row_weight(m) {
                return rho_by_mc(spec_a, spec_b, m, r, alpha);
            }
            let arg = if r == 0 {
                1.0
            } else {
                (2.0 * g(gamma, ri) + g(gamma, ri - 1) + g(gamma, ri + 1)) / s
            };
            s.powf(p) * bivariate_abs_power_cov(p, arg)?
        }
        (AbsolutePower, 1, SecondOrder, _) => {
            let a = spec_a.weights()[(m, 0)];
            let b = spec_b.row_weight(m);
            let corr = (g(gamma, ri) + g(gamma, ri + 1)) / s.sqrt();
            s.powf(0.5 * b) * abs_cross_cov(a, b, corr)?
        }
        (SecondOrder, _, AbsolutePower, 1) => {
            let a = spec_a.row_weight(m);
            let b = spec_b.weights()[(m, 0)];
            let corr = (g(gamma, ri) + g(gamma, ri - 1)) / s.sqrt();
            s.powf(0.5 * a) * abs_cross_cov(b, a, corr)?
        }
        (SignedPower, _, SignedPower, _) if is_signed_pair(spec_a, m) && is_signed_pair(spec_b, m) => {
            // Isserlis: Cov(Z_i Z_{i+1}, Z_{i+r} Z_{i+r+1})
            g(gamma, ri).powi(2) + g(gamma, ri + 1) * g(gamma, ri - 1)
        }
        (SignedPower, 1, SignedPower, 1) => {
            let a = spec_a.weights()[(m, 0)] as u64;
            let b = spec_b.weights()[(m, 0)] as u64;
            if a == 1 && b == 1 {
                g(gamma, ri)
            } else {
                return rho_by_mc(spec_a, spec_b, m, r, alpha);
            }
        }
        (SignedPower, _, AbsolutePower, 1) if is_signed_pair(spec_a, m) => {
            let b = spec_b.weights()[(m, 0)];
            if b == 2.0 {
                2.0 * g(gamma, ri) * g(gamma, ri - 1)
            } else {
                return rho_by_mc(spec_a, spec_b, m, r, alpha);
            }
        }
        (AbsolutePower, 1, SignedPower, _) if is_signed_pair(spec_b, m) => {
            let a = spec_a.weights()[(m, 0)];
            if a == 2.0 {
                2.0 * g(gamma, ri) * g(gamma, ri + 1)
            } else {
                return rho_by_mc(spec_a, spec_b, m, r, alpha);
            }
        }
        (CorrSum, _, CorrSum, _) => {
            if r == 0 {
                3.0 + 4.0 * g1 + g1 * g1
            } else {
                let psi_psi = g(gamma, ri).powi(2) + g(gamma, ri + 1) * g(gamma, ri - 1);
                let psi_phi = 2.0 * g(gamma, ri) * g(gamma, ri - 1);
                let phi_psi = 2.0 * g(gamma, ri) * g(gamma, ri + 1);
                let phi_phi = 2.0 * g(gamma, ri).powi(2);
                psi_psi + psi_phi + phi_psi + phi_phi
            }
        }
        _ if la <= 2 && lb <= 2 => return rho_by_mc(spec_a, spec_b, m, r, alpha),
        _ => {
            return Err(ConstantsError::UnsupportedSpec(format!(
                "no covariance path for kinds {:?}/{:?} with lag widths {la}/{lb}",
                spec_a.kind(),
                spec_b.kind()
            )))
        }
    };
    Ok(value)
}

fn is_signed_pair(spec: &MultipowerSpec, m: usize) -> bool {
    spec.kind() == MultipowerKind::SignedPower
        && spec.lag_width() == 2
        && spec.weights()[(m, 0)] == 1.0
        && spec.weights()[(m, 1)] == 1.0
}

/// Cov(|X|^a, |Y|^b) for standard normals with correlation rho.
fn abs_cross_cov(a: f64, b: f64, rho: f64) -> Result<f64, SpecialError> {
    if rho.abs() < RHO_ARG_SKIP {
        return Ok(0.0);
    }
    if a == b {
        return bivariate_abs_power_cov(a, rho);
    }
    let mu_a = gaussian_abs_moment(a)?;
    let mu_b = gaussian_abs_moment(b)?;
    let rho = rho.clamp(-1.0, 1.0);
    let f = crate::special::hyp2f1(-0.5 * a, -0.5 * b, 0.5, rho * rho)?;
    Ok(mu_a * mu_b * (f - 1.0))
}

/// Seeded Monte Carlo fallback over the joint 2L-dimensional Gaussian
/// window; deterministic, accuracy ~1e-3 of the functional scale.
fn rho_by_mc(
    spec_a: &MultipowerSpec,
    spec_b: &MultipowerSpec,
    m: usize,
    r: u64,
    alpha: f64,
) -> Result<f64, ConstantsError> {
    let la = spec_a.lag_width();
    let lb = spec_b.lag_width();
    let dim = la + lb;
    let mut cov = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            // coordinates 0..la are the first window, the rest sit r lags later
            let pos_i = if i < la { i as i64 } else { (i - la) as i64 + r as i64 };
            let pos_j = if j < la { j as i64 } else { (j - la) as i64 + r as i64 };
            cov[(i, j)] = gamma_weight(alpha, (pos_i - pos_j).unsigned_abs())?;
        }
    }
    let chol = cholesky(&cov)
        .ok_or_else(|| ConstantsError::Domain("window covariance not positive definite".into()))?;
    let eval = |spec: &MultipowerSpec, z: &[f64]| -> f64 {
        let mut f = 1.0;
        for (k, zk) in z.iter().enumerate() {
            let w = spec.weights()[(m, k)];
            f *= match spec.kind() {
                MultipowerKind::AbsolutePower => zk.abs().powf(w),
                MultipowerKind::SignedPower => zk.powi(w as i32),
                MultipowerKind::SecondOrder | MultipowerKind::CorrSum => {
                    unreachable!("handled in closed form")
                }
            };
        }
        f
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_c0fF_ee00_0000 ^ r);
    let n_samples = 1 << 21;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut sum_ab = 0.0;
    let mut u = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    for _ in 0..n_samples {
        for ui in u.iter_mut() {
            *ui = StandardNormal.sample(&mut rng);
        }
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += chol[(i, j)] * u[j];
            }
            z[i] = acc;
        }
        let fa = eval(spec_a, &z[..la]);
        let fb = eval(spec_b, &z[la..]);
        sum_a += fa;
        sum_b += fb;
        sum_ab += fa * fb;
    }
    let n = n_samples as f64;
    Ok(sum_ab / n - (sum_a / n) * (sum_b / n))
}

/// Assembled CLT constant ρ_f = ρ_{f,f}(0) + 2 Σ_{r>=1} ρ_{f,f}(r) per site.
pub fn rho_f(
    spec: &MultipowerSpec,
    alpha: f64,
    trunc: &SeriesTruncation,
) -> Result<Vec<f64>, ConstantsError> {
    check_alpha(alpha)?;
    trunc.validate()?;
    let mut gamma = GammaTable::new(alpha);
    let n = spec.n_sites();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let at0 = rho_pair_site(spec, spec, m, 0, &mut gamma, alpha)?;
        let series = series_sum(trunc, |r| rho_pair_site(spec, spec, m, r, &mut gamma, alpha))?;
        out.push(at0 + 2.0 * series);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseKind;
    use approx::assert_abs_diff_eq;

    fn white() -> ModelParams {
        ModelParams::white_noise(1.0, 1.0).unwrap()
    }

    #[test]
    fn gamma_weight_anchor_values() {
        for alpha in [0.3, 1.0, 1.7] {
            assert_eq!(gamma_weight(alpha, 0).unwrap(), 1.0);
        }
        let g1 = gamma_weight(1.0, 1).unwrap();
        assert_abs_diff_eq!(g1, (std::f64::consts::SQRT_2 - 2.0) / 2.0, epsilon = 1e-15);
        assert!(gamma_weight(2.0, 1).is_err());
    }

    #[test]
    fn gamma_weight_partial_sums_telescope() {
        for alpha in [0.25, 0.5, 1.0, 1.5, 1.9] {
            let b = 1.0 - alpha / 2.0;
            for cap in [10u64, 100, 10_000] {
                let mut sum = 1.0f64;
                let mut comp = 0.0f64;
                for r in 1..=cap {
                    let t = 2.0 * gamma_weight(alpha, r).unwrap();
                    let y = t - comp;
                    let s = sum + y;
                    comp = (s - sum) - y;
                    sum = s;
                }
                let closed = ((cap + 1) as f64).powf(b) - (cap as f64).powf(b);
                assert!(
                    (sum - closed).abs() < 1e-12,
                    "alpha = {alpha}, cap = {cap}: {sum} vs {closed}"
                );
            }
        }
        // spec anchor: alpha = 1, R = 100
        let mut sum = 1.0;
        for r in 1..=100u64 {
            sum += 2.0 * gamma_weight(1.0, r).unwrap();
        }
        assert_abs_diff_eq!(sum, 101f64.sqrt() - 10.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_weight_n_matches_the_limit() {
        for (alpha, lambda, delta) in [(1.0, 1.0, 1e-3), (0.7, 2.0, 1e-3)] {
            assert_eq!(gamma_weight_n(alpha, lambda, delta, 0).unwrap(), 1.0);
        }
        let g1n = gamma_weight_n(1.0, 1.0, 1e-4, 1).unwrap();
        assert!((g1n - (-0.292_893_2)).abs() < 5e-4, "got {g1n}");
        // O(delta) rate: halving delta should roughly halve the error
        let g2 = gamma_weight(1.0, 2).unwrap();
        let err_coarse = (gamma_weight_n(1.0, 1.0, 0.1, 2).unwrap() - g2).abs();
        let err_fine = (gamma_weight_n(1.0, 1.0, 0.05, 2).unwrap() - g2).abs();
        let ratio = err_coarse / err_fine;
        assert!((0.6..=6.0).contains(&ratio), "rate ratio {ratio}");
    }

    /// Spectral-representation oracle for the increment variance: integrate
    /// (1 - e^{-(λ + 2π²κ|ξ|²)Δ}) / (λ + 2π²κ|ξ|²) against the spectral
    /// measure |ξ|^{α-d} dξ in polar form, with a two-term analytic tail.
    fn tau_sq_by_spectral_integral(p: &ModelParams, delta: f64) -> f64 {
        let d = p.dim as f64;
        let surface = 2.0 * std::f64::consts::PI.powf(0.5 * d) / gamma_fn(0.5 * d);
        let theta = |z: f64| p.lambda + 2.0 * std::f64::consts::PI.powi(2) * p.kappa * z * z;
        let f = |z: f64| {
            let th = theta(z);
            z.powf(p.alpha - 1.0) * (1.0 - (-th * delta).exp()) / th
        };
        // Simpson on (0, cut]; integrand ~ z^{alpha-1} at 0 is integrable but
        // unbounded for alpha < 1, so substitute z = v^{1/alpha} there, under
        // which z^{alpha-1} dz = dv/alpha and the integrand becomes smooth.
        let cut = 300.0;
        let n = 400_000;
        let h = (cut - 1.0) / n as f64;
        let mut s = 0.0;
        let m = 20_000;
        let hv = 1.0 / m as f64;
        let fv = |v: f64| {
            let z = v.powf(1.0 / p.alpha);
            let th = theta(z);
            (1.0 - (-th * delta).exp()) / th / p.alpha
        };
        let mut s0 = fv(0.0) + fv(1.0);
        for i in 1..m {
            s0 += if i % 2 == 0 { 2.0 } else { 4.0 } * fv(i as f64 * hv);
        }
        s += s0 * hv / 3.0;
        let mut s1 = f(1.0) + f(cut);
        for i in 1..n {
            let z = 1.0 + i as f64 * h;
            s1 += if i % 2 == 0 { 2.0 } else { 4.0 } * f(z);
        }
        s += s1 * h / 3.0;
        // tail beyond cut: e^{-θΔ} negligible, two-term expansion of 1/θ
        let c = 2.0 * std::f64::consts::PI.powi(2) * p.kappa;
        let tail = cut.powf(p.alpha - 2.0) / (c * (2.0 - p.alpha))
            - p.lambda * cut.powf(p.alpha - 4.0) / (c * c * (4.0 - p.alpha));
        surface * (s + tail)
    }

    #[test]
    fn tau_sq_exact_reference_values() {
        let p = white();
        let v = tau_sq_exact(&p, 0.01).unwrap();
        let closed = crate::special::erf(0.1) / std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(v, closed, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.079_523_290_548_542_6, epsilon = 1e-12);
        assert_abs_diff_eq!(v, tau_sq_by_spectral_integral(&p, 0.01), epsilon = 1e-8);
        assert_eq!(tau_sq_exact(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tau_sq_exact_colored_noise_matches_spectral_oracle() {
        let p = ModelParams::new(0.7, 1.3, 1.5, 3, NoiseKind::RieszKernel).unwrap();
        let v = tau_sq_exact(&p, 0.02).unwrap();
        let oracle = tau_sq_by_spectral_integral(&p, 0.02);
        assert!((v - oracle).abs() < 1e-7 * v, "{v} vs {oracle}");
    }

    #[test]
    fn tau_sq_leading_properties() {
        let p = white();
        let v = tau_sq_leading(&p, 0.01).unwrap();
        assert_abs_diff_eq!(v, (2.0 * 0.01 / std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        // independent of lambda
        let mut p2 = p;
        p2.lambda = 17.0;
        assert_eq!(v, tau_sq_leading(&p2, 0.01).unwrap());
        // Δ -> 4Δ scales by 2 when alpha = 1
        assert_abs_diff_eq!(tau_sq_leading(&p, 0.04).unwrap(), 2.0 * v, epsilon = 1e-15);
    }

    #[test]
    fn tau_ratio_increases_to_one() {
        let p = ModelParams::new(0.8, 1.7, 1.2, 2, NoiseKind::RieszKernel).unwrap();
        let mut prev = 0.0;
        for k in 6..=20 {
            let delta = 2f64.powi(-k);
            let ratio = tau_sq_exact(&p, delta).unwrap() / tau_sq_leading(&p, delta).unwrap();
            assert!(ratio > prev && ratio < 1.0, "k = {k}: ratio {ratio}");
            prev = ratio;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn big_r_reference_values() {
        let trunc = SeriesTruncation::default();
        let r2 = big_r(2.0, 1.0, &trunc).unwrap();
        assert!((r2 - 2.357_487).abs() < 1e-5, "R_2 = {r2}");
        let r4 = big_r(4.0, 1.0, &trunc).unwrap();
        assert!((r4 - 109.223_069).abs() < 1e-4, "R_4 = {r4}");
    }

    /// Independent assembly via the Hermite expansion R_2 = 2 + 4 Σ Γ_r².
    fn big_r2_by_hermite(alpha: f64) -> f64 {
        let mut s = 0.0;
        for r in 1..=2_000_000u64 {
            let g = gamma_weight(alpha, r).unwrap();
            let t = g * g;
            s += t;
            if t < 1e-16 && r > 16 {
                // same power-law tail correction as the production series
                let t_half = gamma_weight(alpha, r / 2).unwrap().powi(2);
                let q = (t_half / t).ln() / (r as f64 / (r / 2) as f64).ln();
                s += t * (r as f64 / (q - 1.0) - 0.5);
                break;
            }
        }
        2.0 + 4.0 * s
    }

    #[test]
    fn big_r2_two_routes_agree() {
        let trunc = SeriesTruncation::default();
        for alpha in [0.5, 1.0, 1.5] {
            let generic = big_r(2.0, alpha, &trunc).unwrap();
            let hermite = big_r2_by_hermite(alpha);
            assert!(
                (generic - hermite).abs() < 1e-8,
                "alpha = {alpha}: {generic} vs {hermite}"
            );
        }
    }

    #[test]
    fn big_r_stable_under_truncation_doubling() {
        let base = SeriesTruncation::default();
        let doubled = SeriesTruncation {
            abs_tol: base.abs_tol,
            max_terms: base.max_terms * 2,
        };
        for (p, alpha) in [(2.0, 0.5), (4.0, 1.0), (2.0, 1.9)] {
            let a = big_r(p, alpha, &base).unwrap();
            let b = big_r(p, alpha, &doubled).unwrap();
            assert!((a - b).abs() <= 10.0 * base.abs_tol);
        }
    }

    #[test]
    fn gamma_tail_terms_are_negligible_beyond_ten_thousand() {
        // Γ_r = O(r^{-1-α/2}), so individual series terms past r = 10^4 sit
        // far below the default tolerance for α >= 0.5
        for alpha in [0.5, 1.0, 1.5] {
            for r in [10_001u64, 20_000, 100_000] {
                let term =
                    bivariate_abs_power_cov(2.0, gamma_weight(alpha, r).unwrap()).unwrap();
                assert!(term < 1e-10, "alpha = {alpha}, r = {r}: term {term}");
            }
        }
    }

    #[test]
    fn mu_multipower_closed_forms() {
        let phi2 = MultipowerSpec::absolute(2.0, 1).unwrap();
        assert_abs_diff_eq!(mu_multipower(&phi2, 1.0).unwrap()[0], 1.0, epsilon = 1e-14);
        let psi = MultipowerSpec::signed_pair(1).unwrap();
        let g1 = gamma_weight(1.0, 1).unwrap();
        assert_abs_diff_eq!(mu_multipower(&psi, 1.0).unwrap()[0], g1, epsilon = 1e-14);
        let so = MultipowerSpec::second_order(2.0, 1).unwrap();
        assert_abs_diff_eq!(
            mu_multipower(&so, 1.0).unwrap()[0],
            std::f64::consts::SQRT_2,
            epsilon = 1e-13
        );
        let cs = MultipowerSpec::corr_sum(1).unwrap();
        assert_abs_diff_eq!(mu_multipower(&cs, 1.0).unwrap()[0], 1.0 + g1, epsilon = 1e-14);
        // odd signed power has zero mean
        let psi3 = MultipowerSpec::new(
            ndarray::Array2::from_elem((1, 1), 3.0),
            MultipowerKind::SignedPower,
        )
        .unwrap();
        assert_eq!(mu_multipower(&psi3, 1.0).unwrap()[0], 0.0);
    }

    #[test]
    fn mu_multipower_quadrature_path_matches_isserlis() {
        // bipower E[Z_1^2 Z_2^2] = 1 + 2 Γ_1^2
        let bi = MultipowerSpec::new(
            ndarray::Array2::from_elem((1, 2), 2.0),
            MultipowerKind::SignedPower,
        )
        .unwrap();
        let g1 = gamma_weight(1.0, 1).unwrap();
        assert_abs_diff_eq!(
            mu_multipower(&bi, 1.0).unwrap()[0],
            1.0 + 2.0 * g1 * g1,
            epsilon = 1e-10
        );
    }

    #[test]
    fn rho_multipower_reference_values() {
        let trunc = SeriesTruncation::default();
        let phi2 = MultipowerSpec::absolute(2.0, 1).unwrap();
        // plain power variation reduces to rho_p(Gamma_r)
        for r in [0u64, 1, 3] {
            let v = rho_multipower(&phi2, &phi2, r, 1.0, &trunc).unwrap()[0];
            let g = gamma_weight(1.0, r).unwrap();
            assert_abs_diff_eq!(v, bivariate_abs_power_cov(2.0, g).unwrap(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            rho_multipower(&phi2, &phi2, 0, 1.0, &trunc).unwrap()[0],
            2.0,
            epsilon = 1e-12
        );
        // signed pair at lag 1: Isserlis gives Γ_1² + Γ_0 Γ_2
        let psi = MultipowerSpec::signed_pair(1).unwrap();
        let expected = gamma_weight(1.0, 1).unwrap().powi(2) + gamma_weight(1.0, 2).unwrap();
        let v = rho_multipower(&psi, &psi, 1, 1.0, &trunc).unwrap()[0];
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
    }

    #[test]
    fn rho_signed_pair_matches_mc_oracle() {
        // brute-force 4D Gaussian Monte Carlo with a fixed seed as oracle
        let psi = MultipowerSpec::signed_pair(1).unwrap();
        let mc = rho_by_mc(&psi, &psi, 0, 1, 1.0).unwrap();
        let exact = gamma_weight(1.0, 1).unwrap().powi(2) + gamma_weight(1.0, 2).unwrap();
        // 3 standard errors of 2^21 samples of a product of four normals
        assert!((mc - exact).abs() < 3.0 * 2.0 / (2f64.powi(21)).sqrt(), "{mc} vs {exact}");
    }

    #[test]
    fn c0_family_identities() {
        let trunc = SeriesTruncation::default();
        let c = c0_constants(2.0, 1.0, &trunc).unwrap();
        // C_11 coincides with R_2 term by term
        assert!((c.c11 - 2.357_487).abs() < 1e-5);
        let g1 = gamma_weight(1.0, 1).unwrap();
        assert!(
            (c.c0 - c.tilde_c0 / (1.0 + g1).powi(2)).abs() < 1e-8,
            "C0 = {}, tilde route = {}",
            c.c0,
            c.tilde_c0 / (1.0 + g1).powi(2)
        );
        // tilde_c22 equals R_2 via the Hermite expansion
        assert!((c.tilde_c22 - 2.357_487).abs() < 1e-5);
        assert!(c.c0 >= 0.0 && c.tilde_c0 >= 0.0);
        let t = c0_tilde_constants(1.0, &trunc).unwrap();
        assert_eq!(t, c);
    }

    #[test]
    fn c0_equivalence_on_alpha_grid() {
        let trunc = SeriesTruncation::default();
        for i in 0..20 {
            let alpha = 0.1 + 1.8 * i as f64 / 19.0;
            let c = c0_constants(2.0, alpha, &trunc).unwrap();
            let g1 = gamma_weight(alpha, 1).unwrap();
            let diff = (c.c0 - c.tilde_c0 / (1.0 + g1).powi(2)).abs();
            assert!(diff < 1e-8, "alpha = {alpha}: diff {diff:.3e}");
        }
    }

    #[test]
    fn rho_f_matches_tilde_constants() {
        let trunc = SeriesTruncation::default();
        let c = c0_constants(2.0, 1.0, &trunc).unwrap();
        let phi2 = MultipowerSpec::absolute(2.0, 1).unwrap();
        assert!((rho_f(&phi2, 1.0, &trunc).unwrap()[0] - c.tilde_c22).abs() < 1e-10);
        let psi = MultipowerSpec::signed_pair(1).unwrap();
        assert!((rho_f(&psi, 1.0, &trunc).unwrap()[0] - c.tilde_c11).abs() < 1e-10);
    }

    #[test]
    fn studentization_constants_coincide_with_gaussian_moments() {
        // the printed interval constant 2^p Γ((2p+1)/2)/√π numerically equals
        // E|Z|^{2p}; recorded as a coincidence check, the estimators evaluate
        // the printed expression itself
        for p in [1.0f64, 2.0, 3.0, 4.0, 5.5] {
            let printed = 2f64.powf(p) * gamma_fn(0.5 * (2.0 * p + 1.0))
                / std::f64::consts::PI.sqrt();
            let mu_2p = crate::special::gaussian_abs_moment(2.0 * p).unwrap();
            assert!(
                ((printed - mu_2p) / mu_2p).abs() < 1e-13,
                "p = {p}: {printed} vs {mu_2p}"
            );
        }
        // likewise the constant 3 in the correlation-estimator statistic is μ_4
        assert!((crate::special::gaussian_abs_moment(4.0).unwrap() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn truncation_cap_is_reported() {
        let trunc = SeriesTruncation {
            abs_tol: 1e-30,
            max_terms: 50,
        };
        match big_r(2.0, 1.0, &trunc) {
            Err(ConstantsError::TruncationNotConverged { max_terms, .. }) => {
                assert_eq!(max_terms, 50)
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }
}
