//! Exact sampling of the stationary Gaussian increment sequence via
//! circulant embedding (Davies–Harte / Wood–Chan), with a Durbin–Levinson
//! fallback when the embedding spectrum fails to be positive semidefinite.

use std::sync::Arc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::seed::{derive_stream, SeedSpec};
use super::SimError;
use crate::constants::{gamma_weight_n, tau_sq_exact};
use crate::model::{validate_params, ModelParams, ObservedPath, SamplingScheme};

/// Negative spectrum entries above this threshold are floating-point noise
/// and get clamped to zero; anything below triggers the Toeplitz fallback.
const SPECTRUM_CLAMP: f64 = -1e-10;
const FALLBACK_MAX_N: usize = 1 << 15;

enum Method {
    Circulant {
        spectrum: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    DurbinLevinson {
        autocorr: Vec<f64>,
    },
}

/// Reusable sampler for one (model, scheme, sigma) configuration: the
/// embedding spectrum is computed once and shared across replications.
pub struct ExactSampler {
    scheme: SamplingScheme,
    scale: f64, // sigma * tau_n
    method: Method,
}

impl ExactSampler {
    pub fn new(
        params: &ModelParams,
        scheme: &SamplingScheme,
        sigma: f64,
    ) -> Result<Self, SimError> {
        validate_params(*params)?;
        if scheme.n_sites() != 1 {
            return Err(SimError::Unsupported(
                "the exact stationary simulator observes a single site".into(),
            ));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SimError::Unsupported(format!(
                "constant volatility must be > 0, got {sigma}"
            )));
        }
        let n = scheme.n_increments();
        let delta = scheme.delta();
        let tau = tau_sq_exact(params, delta)?.sqrt();
        // lag-r autocorrelation of increments at this step size
        let mut autocorr = Vec::with_capacity(n + 1);
        for r in 0..=n as u64 {
            autocorr.push(gamma_weight_n(params.alpha, params.lambda, delta, r)?);
        }
        // minimal even extension over 2n lags
        let m = 2 * n;
        let mut ext: Vec<Complex<f64>> = Vec::with_capacity(m);
        ext.extend(autocorr.iter().map(|&c| Complex::new(c, 0.0)));
        ext.extend(autocorr[1..n].iter().rev().map(|&c| Complex::new(c, 0.0)));
        debug_assert_eq!(ext.len(), m);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut ext);
        let mut spectrum: Vec<f64> = ext.iter().map(|c| c.re).collect();
        let min_eig = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
        let method = if min_eig >= SPECTRUM_CLAMP {
            for s in spectrum.iter_mut() {
                if *s < 0.0 {
                    *s = 0.0;
                }
            }
            Method::Circulant { spectrum, fft }
        } else if n <= FALLBACK_MAX_N {
            Method::DurbinLevinson { autocorr }
        } else {
            return Err(SimError::EmbeddingNotPsd { min_eig, n });
        };
        Ok(ExactSampler {
            scheme: scheme.clone(),
            scale: sigma * tau,
            method,
        })
    }

    /// Draws one increment sequence of length n with variance scale² and the
    /// model's lag correlation structure.
    pub fn sample_increments(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.scheme.n_increments();
        match &self.method {
            Method::Circulant { spectrum, fft } => {
                let m = 2 * n;
                let mf = m as f64;
                let mut buf = vec![Complex::new(0.0, 0.0); m];
                let g0: f64 = StandardNormal.sample(rng);
                let gn: f64 = StandardNormal.sample(rng);
                buf[0] = Complex::new((spectrum[0] / mf).sqrt() * g0, 0.0);
                buf[n] = Complex::new((spectrum[n] / mf).sqrt() * gn, 0.0);
                for k in 1..n {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    let amp = (spectrum[k] / (2.0 * mf)).sqrt();
                    buf[k] = Complex::new(amp * re, amp * im);
                    buf[m - k] = buf[k].conj();
                }
                fft.process(&mut buf);
                buf[..n].iter().map(|c| self.scale * c.re).collect()
            }
            Method::DurbinLevinson { autocorr } => {
                durbin_levinson_sample(autocorr, n, rng)
                    .into_iter()
                    .map(|z| self.scale * z)
                    .collect()
            }
        }
    }

    /// Levels reconstructed by cumulative summation from Y(0) = 0.
    pub fn sample_path(&self, rng: &mut ChaCha8Rng) -> Result<ObservedPath, SimError> {
        let z = self.sample_increments(rng);
        let mut levels = Array2::zeros((z.len() + 1, 1));
        let mut acc = 0.0;
        for (i, zi) in z.iter().enumerate() {
            acc += zi;
            levels[(i + 1, 0)] = acc;
        }
        Ok(ObservedPath::new(self.scheme.clone(), levels)?)
    }
}

/// One-shot convenience wrapper around [`ExactSampler`].
pub fn simulate_exact_stationary(
    params: &ModelParams,
    scheme: &SamplingScheme,
    sigma: f64,
    seed: &SeedSpec,
) -> Result<ObservedPath, SimError> {
    let sampler = ExactSampler::new(params, scheme, sigma)?;
    let mut rng = derive_stream(seed);
    sampler.sample_path(&mut rng)
}

/// Conditional sampling through the Durbin–Levinson recursion: O(n²) time,
/// O(n) memory, exact for any valid autocorrelation sequence.
fn durbin_levinson_sample(autocorr: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; n];
    if n == 0 {
        return x;
    }
    x[0] = StandardNormal.sample(rng);
    let mut phi = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut v = 1.0; // innovation variance on the correlation scale
    for t in 1..n {
        let mut kappa = autocorr[t];
        for j in 1..t {
            kappa -= prev[j - 1] * autocorr[t - j];
        }
        let k = kappa / v;
        for j in 0..t - 1 {
            phi[j] = prev[j] - k * prev[t - 2 - j];
        }
        phi[t - 1] = k;
        v *= 1.0 - k * k;
        let mut mean = 0.0;
        for j in 0..t {
            mean += phi[j] * x[t - 1 - j];
        }
        let g: f64 = StandardNormal.sample(rng);
        x[t] = mean + v.max(0.0).sqrt() * g;
        prev[..t].copy_from_slice(&phi[..t]);
    }
    x
}
