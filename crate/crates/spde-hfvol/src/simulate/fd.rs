//! Explicit finite-difference scheme for the damped stochastic heat equation
//! on a 1-d grid with space-time white noise and stochastic volatility:
//!
//!   Y_{k+1,j} = Y_{k,j} + dt (κ/2)(Y_{k,j+1} - 2 Y_{k,j} + Y_{k,j-1})/dx²
//!               - dt λ Y_{k,j} + σ(t_k, x_j, Y_{k,j}) ξ_{k,j} √(dt/dx)
//!
//! with i.i.d. standard normal ξ. A burn-in window is simulated and
//! discarded so observations start near stationarity.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::seed::{derive_stream, SeedSpec};
use super::volatility::VolatilityModel;
use super::SimError;
use crate::model::{ModelParams, NoiseKind, ObservedPath, SamplingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

fn default_ic() -> InitialCondition {
    InitialCondition::Zero
}

fn default_stride() -> u64 {
    1
}

/// Discretization of the simulator; `vol_update_stride` lets slowly varying
/// volatility fields advance every few fine steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdGridConfig {
    pub dt: f64,
    pub dx: f64,
    pub domain_length: f64,
    pub boundary: BoundaryKind,
    #[serde(default = "default_ic")]
    pub initial_condition: InitialCondition,
    pub burn_in: f64,
    #[serde(default = "default_stride")]
    pub vol_update_stride: u64,
}

impl FdGridConfig {
    /// Conservative defaults: dt = Δ/16, dx balancing the explicit-Euler and
    /// lattice biases, Dirichlet domain of length 20 √(κ (T + burn_in)) and
    /// burn-in 5/λ.
    pub fn conservative(kappa: f64, lambda: f64, scheme: &SamplingScheme) -> FdGridConfig {
        let delta = scheme.delta();
        let burn_in = if lambda > 0.0 { 5.0 / lambda } else { 5.0 };
        FdGridConfig {
            dt: delta / 16.0,
            dx: 0.64 * (kappa * delta).sqrt(),
            domain_length: 20.0 * (kappa * (scheme.horizon() + burn_in)).sqrt(),
            boundary: BoundaryKind::Dirichlet,
            initial_condition: InitialCondition::Zero,
            burn_in,
            vol_update_stride: 4,
        }
    }

    pub fn validate(&self, kappa: f64, scheme: &SamplingScheme) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::StabilityViolation(msg));
        if !(self.dt > 0.0 && self.dx > 0.0 && self.domain_length > 0.0 && self.burn_in >= 0.0) {
            return fail("dt, dx, domain_length must be > 0 and burn_in >= 0".into());
        }
        if self.vol_update_stride == 0 {
            return fail("vol_update_stride must be >= 1".into());
        }
        let delta = scheme.delta();
        let ratio = delta / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return fail(format!(
                "delta/dt must be an integer, got {delta}/{} = {ratio}",
                self.dt
            ));
        }
        if ratio.round() < 8.0 {
            return fail(format!("dt <= delta/8 is required, got delta/dt = {ratio}"));
        }
        let cfl = kappa * self.dt / (self.dx * self.dx);
        if cfl > 0.5 + 1e-12 {
            return fail(format!(
                "explicit scheme needs kappa*dt/dx^2 <= 1/2, got {cfl:.6}"
            ));
        }
        for &site in scheme.sites() {
            let j = site / self.dx;
            if (j - j.round()).abs() > 1e-9 * j.abs().max(1.0) {
                return fail(format!("site {site} does not lie on the dx = {} grid", self.dx));
            }
            if site <= 0.0 || site >= self.domain_length {
                return fail(format!("site {site} lies outside the domain"));
            }
            if self.boundary == BoundaryKind::Dirichlet {
                let dist = site.min(self.domain_length - site);
                if dist < self.domain_length / 8.0 - 1e-9 {
                    return fail(format!(
                        "site {site} is {dist:.4} from a Dirichlet boundary; \
                         need at least domain_length/8 = {:.4}",
                        self.domain_length / 8.0
                    ));
                }
            }
        }
        Ok(())
    }

    fn n_nodes(&self) -> usize {
        let j = (self.domain_length / self.dx).round() as usize;
        match self.boundary {
            BoundaryKind::Dirichlet => j + 1,
            BoundaryKind::Periodic => j,
        }
    }
}

/// Realized integrals ∫_0^T |σ(s, x_m)|^w ds accumulated on the fine grid,
/// one row per requested power, one column per site.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedVolatility {
    pub powers: Vec<f64>,
    pub integrals: Array2<f64>,
}

impl RealizedVolatility {
    pub fn integral(&self, power: f64, site: usize) -> Option<f64> {
        self.powers
            .iter()
            .position(|&p| p == power)
            .map(|i| self.integrals[(i, site)])
    }
}

#[derive(Debug)]
pub struct FdOutput {
    pub path: ObservedPath,
    pub realized: RealizedVolatility,
}

/// Finite-difference simulation for white-noise models; see
/// [`simulate_fd_with_rates`] for the λ = 0 relaxation.
pub fn simulate_fd(
    model: &ModelParams,
    scheme: &SamplingScheme,
    vol: &VolatilityModel,
    grid: &FdGridConfig,
    seed: &SeedSpec,
    realized_powers: &[f64],
) -> Result<FdOutput, SimError> {
    if model.noise_kind != NoiseKind::WhiteNoise {
        return Err(SimError::Unsupported(
            "the finite-difference simulator drives d = 1 space-time white noise only".into(),
        ));
    }
    simulate_fd_with_rates(model.kappa, model.lambda, scheme, vol, grid, seed, realized_powers)
}

/// Volatility state advanced on the fine grid.
enum VolState {
    Constant(f64),
    Time {
        base: f64,
        amplitude: f64,
        omega: f64,
    },
    Ou {
        raw: Vec<f64>,
        smooth: Vec<f64>,
        kernel: Vec<f64>,
        norm: Vec<f64>,
        decay: f64,
        innov_sd: f64,
        mean: f64,
        correction: f64,
        periodic: bool,
    },
    OfY {
        base: f64,
        amplitude: f64,
    },
}

/// Accepts λ = 0: without damping the stationary solution does not exist,
/// but the initial-value problem on [0, T] is still well posed.
#[allow(clippy::too_many_arguments)]
pub fn simulate_fd_with_rates(
    kappa: f64,
    lambda: f64,
    scheme: &SamplingScheme,
    vol: &VolatilityModel,
    grid: &FdGridConfig,
    seed: &SeedSpec,
    realized_powers: &[f64],
) -> Result<FdOutput, SimError> {
    if !(kappa > 0.0) || !(lambda >= 0.0) {
        return Err(SimError::Unsupported(format!(
            "need kappa > 0 and lambda >= 0, got kappa = {kappa}, lambda = {lambda}"
        )));
    }
    vol.validate()?;
    grid.validate(kappa, scheme)?;

    let n_nodes = grid.n_nodes();
    let dt = grid.dt;
    let dx = grid.dx;
    let periodic = grid.boundary == BoundaryKind::Periodic;
    let stride = (scheme.delta() / dt).round() as usize;
    let n_incr = scheme.n_increments();
    let burn_steps = (grid.burn_in / dt).round() as usize;
    let total_steps = burn_steps + n_incr * stride;
    let t_end = n_incr as f64 * scheme.delta();

    let site_idx: Vec<usize> = scheme
        .sites()
        .iter()
        .map(|&s| (s / dx).round() as usize)
        .collect();

    let mut rng = derive_stream(seed);
    let mut y = initial_state(grid, n_nodes);
    let mut y_next = vec![0.0; n_nodes];
    let mut vol_state = init_vol_state(vol, grid, n_nodes, periodic, &mut rng);
    let mut sigma_buf = vec![0.0; n_nodes];

    let c_lap = 0.5 * kappa * dt / (dx * dx);
    let c_damp = lambda * dt;
    let noise_scale = (dt / dx).sqrt();

    let mut levels = Array2::zeros((n_incr + 1, scheme.n_sites()));
    let mut realized = Array2::zeros((realized_powers.len(), scheme.n_sites()));
    let vol_stride = grid.vol_update_stride as usize;

    for step in 0..=total_steps {
        // record before advancing; observation k sits at step burn + k*stride
        if step >= burn_steps && (step - burn_steps) % stride == 0 {
            let k = (step - burn_steps) / stride;
            for (col, &j) in site_idx.iter().enumerate() {
                let v = y[j];
                if !v.is_finite() {
                    return Err(SimError::NonFiniteState {
                        time: (step as f64 - burn_steps as f64) * dt,
                    });
                }
                levels[(k, col)] = v;
            }
        }
        if step == total_steps {
            break;
        }

        if step % vol_stride == 0 {
            advance_vol(&mut vol_state, step, vol_stride, dt, &mut rng);
        }
        let t = (step as f64 - burn_steps as f64) * dt;
        eval_sigma(&vol_state, t, &y, &mut sigma_buf);

        // left-point accumulation of the realized volatility integrals
        if t >= 0.0 && t < t_end - 0.5 * dt {
            for (pi, &p) in realized_powers.iter().enumerate() {
                for (col, &j) in site_idx.iter().enumerate() {
                    realized[(pi, col)] += sigma_buf[j].powf(p) * dt;
                }
            }
        }

        if periodic {
            for j in 0..n_nodes {
                let left = y[(j + n_nodes - 1) % n_nodes];
                let right = y[(j + 1) % n_nodes];
                let xi: f64 = StandardNormal.sample(&mut rng);
                y_next[j] = y[j] + c_lap * (right - 2.0 * y[j] + left) - c_damp * y[j]
                    + sigma_buf[j] * noise_scale * xi;
            }
        } else {
            y_next[0] = 0.0;
            y_next[n_nodes - 1] = 0.0;
            for j in 1..n_nodes - 1 {
                let xi: f64 = StandardNormal.sample(&mut rng);
                y_next[j] = y[j] + c_lap * (y[j + 1] - 2.0 * y[j] + y[j - 1]) - c_damp * y[j]
                    + sigma_buf[j] * noise_scale * xi;
            }
        }
        std::mem::swap(&mut y, &mut y_next);
    }

    let path = ObservedPath::new(scheme.clone(), levels)?;
    Ok(FdOutput {
        path,
        realized: RealizedVolatility {
            powers: realized_powers.to_vec(),
            integrals: realized,
        },
    })
}

fn initial_state(grid: &FdGridConfig, n_nodes: usize) -> Vec<f64> {
    match grid.initial_condition {
        InitialCondition::Zero => vec![0.0; n_nodes],
        InitialCondition::GaussianBump {
            amplitude,
            center,
            width,
        } => (0..n_nodes)
            .map(|j| {
                let x = j as f64 * grid.dx;
                amplitude * (-0.5 * ((x - center) / width).powi(2)).exp()
            })
            .collect(),
    }
}

fn init_vol_state(
    vol: &VolatilityModel,
    grid: &FdGridConfig,
    n_nodes: usize,
    periodic: bool,
    rng: &mut ChaCha8Rng,
) -> VolState {
    match *vol {
        VolatilityModel::Constant { value } => VolState::Constant(value),
        VolatilityModel::DeterministicTime {
            base,
            amplitude,
            frequency,
        } => VolState::Time {
            base,
            amplitude,
            omega: 2.0 * std::f64::consts::PI * frequency,
        },
        VolatilityModel::BoundedOfY { base, amplitude } => VolState::OfY { base, amplitude },
        VolatilityModel::OuField {
            theta,
            eta,
            mean,
            length_scale,
        } => {
            // stationary initialization of the per-node OU states
            let sd = if theta > 0.0 {
                (eta * eta / (2.0 * theta)).sqrt()
            } else {
                0.0
            };
            let raw: Vec<f64> = (0..n_nodes)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(rng);
                    sd * g
                })
                .collect();
            let half_width = ((4.0 * length_scale / grid.dx).ceil() as usize).max(1);
            let kernel: Vec<f64> = (0..=half_width)
                .map(|k| (-0.5 * (k as f64 * grid.dx / length_scale).powi(2)).exp())
                .collect();
            // per-node L2 normalization keeps Var(smooth) equal to Var(raw)
            let norm: Vec<f64> = (0..n_nodes)
                .map(|j| {
                    let mut s = 0.0;
                    for k in -(half_width as i64)..=half_width as i64 {
                        let idx = j as i64 + k;
                        let valid = periodic || (0..n_nodes as i64).contains(&idx);
                        if valid {
                            s += kernel[k.unsigned_abs() as usize].powi(2);
                        }
                    }
                    s.sqrt()
                })
                .collect();
            let mut state = VolState::Ou {
                raw,
                smooth: vec![0.0; n_nodes],
                kernel,
                norm,
                decay: theta,
                innov_sd: eta,
                mean,
                correction: eta * eta / (4.0 * theta),
                periodic,
            };
            smooth_field(&mut state);
            state
        }
    }
}

fn advance_vol(state: &mut VolState, step: usize, vol_stride: usize, dt: f64, rng: &mut ChaCha8Rng) {
    if let VolState::Ou {
        raw,
        decay,
        innov_sd,
        ..
    } = state
    {
        if step > 0 {
            // exact OU transition over vol_stride fine steps
            let theta = *decay;
            let eta = *innov_sd;
            let h = vol_stride as f64 * dt;
            let a = (-theta * h).exp();
            let sd = if theta > 0.0 {
                (eta * eta / (2.0 * theta) * (1.0 - a * a)).sqrt()
            } else {
                eta * h.sqrt()
            };
            for w in raw.iter_mut() {
                let g: f64 = StandardNormal.sample(rng);
                *w = a * *w + sd * g;
            }
        }
        smooth_field(state);
    }
}

fn smooth_field(state: &mut VolState) {
    if let VolState::Ou {
        raw,
        smooth,
        kernel,
        norm,
        periodic,
        ..
    } = state
    {
        let n = raw.len();
        let half = kernel.len() as i64 - 1;
        for j in 0..n {
            let mut acc = 0.0;
            for k in -half..=half {
                let idx = j as i64 + k;
                let idx = if *periodic {
                    Some(idx.rem_euclid(n as i64) as usize)
                } else if (0..n as i64).contains(&idx) {
                    Some(idx as usize)
                } else {
                    None
                };
                if let Some(i) = idx {
                    acc += kernel[k.unsigned_abs() as usize] * raw[i];
                }
            }
            smooth[j] = acc / norm[j];
        }
    }
}

fn eval_sigma(state: &VolState, t: f64, y: &[f64], out: &mut [f64]) {
    match state {
        VolState::Constant(c) => out.fill(*c),
        VolState::Time {
            base,
            amplitude,
            omega,
        } => out.fill(base + amplitude * (omega * t).sin()),
        VolState::OfY { base, amplitude } => {
            for (o, &yj) in out.iter_mut().zip(y) {
                *o = base + amplitude * yj.tanh();
            }
        }
        VolState::Ou {
            smooth,
            mean,
            correction,
            ..
        } => {
            for (o, &z) in out.iter_mut().zip(smooth) {
                *o = mean * (z - correction).exp();
            }
        }
    }
}
