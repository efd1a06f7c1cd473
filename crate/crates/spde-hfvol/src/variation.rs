//! Normalized variation functionals of an observed path:
//! V_f(t)_m = Δ Σ_i f_m(Δ_i Y / τ, ..., Δ_{i+L-1} Y / τ).

use ndarray::Array2;
use thiserror::Error;

use crate::model::{MultipowerKind, MultipowerSpec, ObservedPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationError {
    #[error("spec has {spec_sites} site rows but the path observes {path_sites} sites")]
    SpecMismatch { spec_sites: usize, path_sites: usize },
    #[error("need at least {needed} increments, path has {got}")]
    TooFewIncrements { needed: usize, got: usize },
    #[error("degenerate denominator at site {site}")]
    DegenerateDenominator { site: usize },
    #[error("normalizer must be positive and finite, got {0}")]
    BadNormalizer(f64),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Per-site variation values at the horizon, with optional running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationResult {
    pub per_site: Vec<f64>,
    /// Row i holds the running value at time (i+1)Δ; the last row equals
    /// `per_site`.
    pub partial: Option<Array2<f64>>,
    pub normalizer_used: f64,
    pub spec: MultipowerSpec,
}

/// Row i = Y((i+1)Δ, ·) - Y(iΔ, ·).
pub fn increments(path: &ObservedPath) -> Array2<f64> {
    let lv = path.levels();
    Array2::from_shape_fn((lv.nrows() - 1, lv.ncols()), |(i, j)| {
        lv[(i + 1, j)] - lv[(i, j)]
    })
}

/// Compensated accumulator; the CLT checks resolve √Δ-size fluctuations of
/// sums with up to 2^20 similar-magnitude terms.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum
    }
}

#[inline]
fn abs_pow(x: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 1.0;
    }
    let a = x.abs();
    if w == 2.0 {
        a * a
    } else if w == 1.0 {
        a
    } else if w == 4.0 {
        let s = a * a;
        s * s
    } else if w == 3.0 {
        a * a * a
    } else {
        // |0|^w = 0 for any w > 0, the continuous extension for w < 1
        a.powf(w)
    }
}

#[inline]
fn window_term(kind: MultipowerKind, weights: &[f64], window: &[f64]) -> f64 {
    match kind {
        MultipowerKind::AbsolutePower => {
            let mut f = 1.0;
            for (z, &w) in window.iter().zip(weights) {
                f *= abs_pow(*z, w);
            }
            f
        }
        MultipowerKind::SignedPower => {
            let mut f = 1.0;
            for (z, &w) in window.iter().zip(weights) {
                f *= z.powi(w as i32);
            }
            f
        }
        MultipowerKind::SecondOrder => abs_pow(window[0] + window[1], weights[0] + weights[1]),
        MultipowerKind::CorrSum => window[0] * window[1] + window[0] * window[0],
    }
}

/// Evaluates the variation functional with normalizer τ. Internally the sum
/// runs over raw increments and the w_m-homogeneous scale Δ/τ^{w_m} is
/// applied once, so `variation(path, spec, τ)` equals
/// `variation(path, spec, 1) / τ^{w_m}` exactly.
pub fn variation(
    path: &ObservedPath,
    spec: &MultipowerSpec,
    normalizer: f64,
    with_partial: bool,
) -> Result<VariationResult, VariationError> {
    if spec.n_sites() != path.n_sites() {
        return Err(VariationError::SpecMismatch {
            spec_sites: spec.n_sites(),
            path_sites: path.n_sites(),
        });
    }
    if !(normalizer > 0.0) || !normalizer.is_finite() {
        return Err(VariationError::BadNormalizer(normalizer));
    }
    let lag = spec.lag_width();
    let incr = increments(path);
    let n = incr.nrows();
    if n < lag {
        return Err(VariationError::TooFewIncrements { needed: lag, got: n });
    }
    let delta = path.scheme().delta();
    let n_sites = path.n_sites();
    let mut per_site = vec![0.0; n_sites];
    let mut partial = with_partial.then(|| Array2::zeros((n, n_sites)));

    let mut window = vec![0.0; lag];
    for m in 0..n_sites {
        let weights: Vec<f64> = spec.weights().row(m).iter().copied().collect();
        // (accΔ)/τ^w with this exact operation order, so a unit-normalizer
        // run divided by τ^w reproduces the normalized value bit for bit
        let tau_pow = normalizer.powf(spec.row_weight(m));
        let col = incr.column(m);
        let mut acc = KahanSum::default();
        for i in 0..n {
            if i + lag <= n {
                for (k, w) in window.iter_mut().enumerate() {
                    *w = col[i + k];
                }
                acc.add(window_term(spec.kind(), &weights, &window));
            }
            if let Some(p) = partial.as_mut() {
                p[(i, m)] = acc.value() * delta / tau_pow;
            }
        }
        per_site[m] = acc.value() * delta / tau_pow;
    }
    Ok(VariationResult {
        per_site,
        partial,
        normalizer_used: normalizer,
        spec: spec.clone(),
    })
}

/// Per-site ratio Σ|Δ_i Y + Δ_{i+1} Y|^p / Σ|Δ_i Y|^p of raw sums; the
/// normalizer cancels, which is what makes the frequency-ratio estimator
/// free of κ and λ.
pub fn variation_ratio_cof(path: &ObservedPath, p: f64) -> Result<Vec<f64>, VariationError> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(VariationError::Domain(format!("need p > 0, got {p}")));
    }
    let incr = increments(path);
    let n = incr.nrows();
    if n < 2 {
        return Err(VariationError::TooFewIncrements { needed: 2, got: n });
    }
    let mut out = Vec::with_capacity(path.n_sites());
    for m in 0..path.n_sites() {
        let col = incr.column(m);
        let mut num = KahanSum::default();
        let mut den = KahanSum::default();
        for i in 0..n {
            if i + 1 < n {
                num.add(abs_pow(col[i] + col[i + 1], p));
            }
            den.add(abs_pow(col[i], p));
        }
        if den.value() == 0.0 {
            return Err(VariationError::DegenerateDenominator { site: m });
        }
        out.push(num.value() / den.value());
    }
    Ok(out)
}
