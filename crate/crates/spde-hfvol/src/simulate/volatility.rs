use serde::{Deserialize, Serialize};

use super::SimError;

/// Volatility field driving the finite-difference simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolatilityModel {
    /// σ ≡ value. Zero is admitted so a noiseless run can exercise the
    /// deterministic part of the scheme.
    Constant { value: f64 },
    /// σ(t) = base + amplitude · sin(2π · frequency · t).
    DeterministicTime {
        base: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Log-normal field: σ(t, x) = mean · exp(Z(t, x) - η²/(4θ)) where Z is a
    /// per-node Ornstein–Uhlenbeck process in time, smoothed in space by a
    /// Gaussian kernel of width `length_scale`. Smoothing weights are
    /// normalized in L² so the marginal variance of Z stays η²/(2θ) and the
    /// correction term keeps the expected volatility equal to `mean`.
    OuField {
        theta: f64,
        eta: f64,
        mean: f64,
        length_scale: f64,
    },
    /// σ(y) = base + amplitude · tanh(y): bounded and Lipschitz in the level.
    BoundedOfY { base: f64, amplitude: f64 },
}

impl VolatilityModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Unsupported(msg));
        match *self {
            VolatilityModel::Constant { value } => {
                if !(value >= 0.0) || !value.is_finite() {
                    return bad(format!("constant volatility must be >= 0, got {value}"));
                }
            }
            VolatilityModel::DeterministicTime {
                base,
                amplitude,
                frequency,
            } => {
                if !(base > 0.0) || !(amplitude.abs() < base) || !frequency.is_finite() {
                    return bad(format!(
                        "deterministic volatility needs base > |amplitude| >= 0, got \
                         base = {base}, amplitude = {amplitude}"
                    ));
                }
            }
            VolatilityModel::OuField {
                theta,
                eta,
                mean,
                length_scale,
            } => {
                if !(theta > 0.0) || !(eta >= 0.0) || !(mean > 0.0) || !(length_scale > 0.0) {
                    return bad(format!(
                        "OU field needs theta > 0, eta >= 0, mean > 0, length_scale > 0; got \
                         theta = {theta}, eta = {eta}, mean = {mean}, length_scale = {length_scale}"
                    ));
                }
            }
            VolatilityModel::BoundedOfY { base, amplitude } => {
                if !(base > 0.0) || !(amplitude.abs() < base) {
                    return bad(format!(
                        "bounded volatility needs 0 <= |amplitude| < base, got \
                         base = {base}, amplitude = {amplitude}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            VolatilityModel::OuField { .. } | VolatilityModel::BoundedOfY { .. }
        )
    }

    /// ∫_0^T σ(t)^w dt when σ is deterministic; closed form for the constant
    /// model and for the sine profile at w = 2, composite Simpson otherwise.
    pub fn integrated_power(&self, w: f64, t_end: f64) -> Option<f64> {
        match *self {
            VolatilityModel::Constant { value } => Some(value.powf(w) * t_end),
            VolatilityModel::DeterministicTime {
                base,
                amplitude,
                frequency,
            } => {
                if w == 2.0 && frequency != 0.0 {
                    let om = 2.0 * std::f64::consts::PI * frequency;
                    Some(
                        base * base * t_end + 0.5 * amplitude * amplitude * t_end
                            - amplitude * amplitude * (2.0 * om * t_end).sin() / (4.0 * om)
                            + 2.0 * base * amplitude * (1.0 - (om * t_end).cos()) / om,
                    )
                } else {
                    let f = |t: f64| {
                        (base + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin())
                            .powf(w)
                    };
                    let n = 100_000;
                    let h = t_end / n as f64;
                    let mut s = f(0.0) + f(t_end);
                    for i in 1..n {
                        s += if i % 2 == 0 { 2.0 } else { 4.0 } * f(i as f64 * h);
                    }
                    Some(s * h / 3.0)
                }
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn validation_boundaries() {
        assert!(VolatilityModel::Constant { value: 0.0 }.validate().is_ok());
        assert!(VolatilityModel::Constant { value: -1.0 }.validate().is_err());
        assert!(VolatilityModel::DeterministicTime {
            base: 1.0,
            amplitude: 1.0,
            frequency: 1.0
        }
        .validate()
        .is_err());
        assert!(VolatilityModel::OuField {
            theta: 0.0,
            eta: 0.5,
            mean: 1.0,
            length_scale: 0.1
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sine_integrated_square_closed_form() {
        let vol = VolatilityModel::DeterministicTime {
            base: 1.0,
            amplitude: 0.5,
            frequency: 1.0,
        };
        // ∫_0^1 (1 + 0.5 sin(2πt))^2 dt = 1 + 0.125
        assert_abs_diff_eq!(vol.integrated_power(2.0, 1.0).unwrap(), 1.125, epsilon = 1e-12);
        // Simpson path: ∫ (1 + a sin)^4 over a full period is 1 + 3a² + 3a⁴/8
        let quad = vol.integrated_power(4.0, 1.0).unwrap();
        let a: f64 = 0.5;
        let exact = 1.0 + 3.0 * a.powi(2) + 3.0 * a.powi(4) / 8.0;
        assert_abs_diff_eq!(quad, exact, epsilon = 1e-8);
    }

    #[test]
    fn constant_integrated_power() {
        let vol = VolatilityModel::Constant { value: 2.0 };
        assert_abs_diff_eq!(vol.integrated_power(2.0, 1.0).unwrap(), 4.0, epsilon = 1e-15);
        assert!(VolatilityModel::OuField {
            theta: 1.0,
            eta: 0.5,
            mean: 1.0,
            length_scale: 0.1
        }
        .integrated_power(2.0, 1.0)
        .is_none());
    }
}
