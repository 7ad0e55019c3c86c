//! The exponentially tilted Gaussian `e^{τ‖z‖} N(0, I) / Z_τ`.
//!
//! Under a unit-covariance Gaussian encoder the KL divergence to this prior
//! depends on the encoder mean only through its norm, so most functions here
//! take `mu_norm` rather than a vector.

use std::f64::consts::LN_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfn::{log_gamma_ratio, log_kummer_m, noncentral_chi_mean, LogScaled};

/// Margin below which an (exact − quadratic) difference counts as a violation.
pub const BOUND_TOLERANCE: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Settings for the central-difference gradient descent that locates γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSolverConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub fd_step: f64,
}

impl Default for GammaSolverConfig {
    fn default() -> Self {
        GammaSolverConfig {
            learning_rate: 0.1,
            steps: 10_000,
            fd_step: 1e-3,
        }
    }
}

impl GammaSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("solver learning_rate must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::domain("solver steps must be >= 1"));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::domain("solver fd_step must be positive"));
        }
        Ok(())
    }
}

/// Stop early once the central-difference slope is this small.
const EARLY_STOP_SLOPE: f64 = 1e-8;
/// Stationarity required of the returned γ.
const STATIONARY_SLOPE: f64 = 1e-5;
const MIN_CHECK_OFFSET: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedPrior {
    tau: f64,
    d_z: usize,
    log_z_tau: f64,
    gamma: f64,
    committed_rate: f64,
}

impl TiltedPrior {
    /// Builds the prior and solves for γ with the default solver settings.
    pub fn new(tau: f64, d_z: usize) -> Result<Self> {
        Self::with_solver(tau, d_z, &GammaSolverConfig::default())
    }

    pub fn with_solver(tau: f64, d_z: usize, config: &GammaSolverConfig) -> Result<Self> {
        let log_z_tau = log_normalizer(tau, d_z)?;
        let gamma = solve_gamma(tau, d_z, config)?;
        let committed_rate = kld_from_parts(tau, d_z, log_z_tau, gamma)?;
        Ok(TiltedPrior {
            tau,
            d_z,
            log_z_tau,
            gamma,
            committed_rate,
        })
    }

    /// Rebuilds a prior from a stored γ and committed rate (e.g. a checkpoint).
    pub fn from_parts(tau: f64, d_z: usize, gamma: f64, committed_rate: f64) -> Result<Self> {
        if !(gamma >= 0.0 && committed_rate >= 0.0) {
            return Err(Error::domain("gamma and committed_rate must be non-negative"));
        }
        Ok(TiltedPrior {
            tau,
            d_z,
            log_z_tau: log_normalizer(tau, d_z)?,
            gamma,
            committed_rate,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn log_z_tau(&self) -> f64 {
        self.log_z_tau
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The minimum KL divergence δ any unit-covariance Gaussian can reach.
    pub fn committed_rate(&self) -> f64 {
        self.committed_rate
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        log_density(self, z)
    }

    pub fn exact_kld(&self, mu_norm: f64) -> Result<f64> {
        exact_kld(self, mu_norm)
    }

    pub fn quadratic_kld(&self, mu_norm: f64) -> f64 {
        quadratic_kld(self, mu_norm)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

/// `ln ρ_τ(z) = τ‖z‖ − ½‖z‖² − (d/2) ln 2π − ln Z_τ`.
pub fn log_density(prior: &TiltedPrior, z: &[f64]) -> Result<f64> {
    if z.len() != prior.d_z {
        return Err(Error::DimensionMismatch {
            expected: prior.d_z,
            got: z.len(),
        });
    }
    let sq: f64 = z.iter().map(|v| v * v).sum();
    let r = sq.sqrt();
    Ok(prior.tau * r - 0.5 * sq - 0.5 * prior.d_z as f64 * LN_2PI - prior.log_z_tau)
}

/// `ln Z_τ` with `Z_τ = M(d/2, 1/2, τ²/2) + τ √2 Γ((d+1)/2)/Γ(d/2) M((d+1)/2, 3/2, τ²/2)`.
pub fn log_normalizer(tau: f64, d_z: usize) -> Result<f64> {
    check_tau(tau)?;
    if d_z == 0 {
        return Err(Error::domain("d_z must be >= 1"));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let d = d_z as f64;
    let x = 0.5 * tau * tau;
    let even = log_kummer_m(0.5 * d, 0.5, x)?;
    let odd = log_kummer_m(0.5 * (d + 1.0), 1.5, x)?.scale_exp(
        tau.ln() + 0.5 * LN_2 + log_gamma_ratio(0.5 * (d + 1.0), 0.5 * d)?,
    );
    let total: LogScaled = even.add(odd);
    Ok(total.log_mag())
}

fn kld_from_parts(tau: f64, d_z: usize, log_z_tau: f64, mu_norm: f64) -> Result<f64> {
    if !(mu_norm >= 0.0 && mu_norm.is_finite()) {
        return Err(Error::domain(format!("mu_norm must be finite and >= 0, got {mu_norm}")));
    }
    let half_sq = 0.5 * mu_norm * mu_norm;
    if tau == 0.0 {
        return Ok(half_sq);
    }
    let mean_norm = noncentral_chi_mean(d_z, mu_norm)?;
    Ok((log_z_tau - tau * mean_norm + half_sq).max(0.0))
}

/// KL divergence between `N(μ, I)` with `‖μ‖ = mu_norm` and the tilted prior:
/// `ln Z_τ − τ √(π/2) L_{1/2}^{(d/2−1)}(−‖μ‖²/2) + ½‖μ‖²`.
pub fn exact_kld(prior: &TiltedPrior, mu_norm: f64) -> Result<f64> {
    kld_from_parts(prior.tau, prior.d_z, prior.log_z_tau, mu_norm)
}

/// `½(‖μ‖ − γ)² + δ`, the training surrogate for [`exact_kld`].
///
/// It touches the exact divergence at `‖μ‖ = γ` and lies on or above it
/// everywhere else.
pub fn quadratic_kld(prior: &TiltedPrior, mu_norm: f64) -> f64 {
    let gap = mu_norm - prior.gamma;
    0.5 * gap * gap + prior.committed_rate
}

/// Locates `γ = argmin_{‖μ‖} KL` by gradient descent on central differences,
/// starting from `sqrt(max(τ² − d, 0))`.
pub fn solve_gamma(tau: f64, d_z: usize, config: &GammaSolverConfig) -> Result<f64> {
    check_tau(tau)?;
    config.validate()?;
    let log_z = log_normalizer(tau, d_z)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    // The divergence is even in the signed radius, so iterates may cross zero.
    let f = |x: f64| kld_from_parts(tau, d_z, log_z, x.abs());
    let dx = config.fd_step;
    let slope = |x: f64| -> Result<f64> { Ok((f(x + dx)? - f(x - dx)?) / (2.0 * dx)) };

    let mut x = (tau * tau - d_z as f64).max(0.0).sqrt();
    for _ in 1..config.steps {
        let grad = slope(x)?;
        if grad.abs() < EARLY_STOP_SLOPE {
            break;
        }
        x -= config.learning_rate * grad;
    }

    let gamma = x.abs();
    let final_slope = slope(gamma)?;
    let at = f(gamma)?;
    let tol = 1e-12 * at.abs().max(1.0);
    let lower = f(gamma - MIN_CHECK_OFFSET)?;
    let upper = f(gamma + MIN_CHECK_OFFSET)?;
    if final_slope.abs() >= STATIONARY_SLOPE || lower < at - tol || upper < at - tol {
        return Err(Error::SolverNotConverged {
            iterate: gamma,
            slope: final_slope,
        });
    }
    Ok(gamma)
}

/// Result of checking `exact − quadratic` on a μ grid for one (d_z, w) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub d_z: usize,
    pub w: i32,
    pub tau: f64,
    pub min_margin: f64,
    pub argmin_mu: f64,
    /// Largest `quadratic − exact` seen, i.e. how far the surrogate sits above.
    pub max_excess: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CellStatus {
    Ok,
    Violation,
    Failed(String),
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::Violation => f.write_str("violation"),
            CellStatus::Failed(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn violations(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.status == CellStatus::Violation)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Failed(_)))
    }

    pub fn is_clean(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Ok)
    }

    /// CSV with columns `d_z,w,tau,min_margin,argmin_mu,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["d_z", "w", "tau", "min_margin", "argmin_mu", "status"])?;
        for c in &self.cells {
            wtr.write_record([
                c.d_z.to_string(),
                c.w.to_string(),
                format!("{:e}", c.tau),
                format!("{:e}", c.min_margin),
                format!("{:e}", c.argmin_mu),
                c.status.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evenly spaced points `0, …, mu_max` (inclusive).
pub fn mu_grid(points: usize, mu_max: f64) -> Vec<f64> {
    let step = mu_max / (points - 1) as f64;
    (0..points).map(|i| i as f64 * step).collect()
}

fn sweep_cell(d_z: usize, w: i32, grid: &[f64], solver: &GammaSolverConfig) -> SweepCell {
    let tau = 1.2f64.powi(w);
    let mut cell = SweepCell {
        d_z,
        w,
        tau,
        min_margin: f64::NAN,
        argmin_mu: f64::NAN,
        max_excess: f64::NAN,
        status: CellStatus::Ok,
    };
    let prior = match TiltedPrior::with_solver(tau, d_z, solver) {
        Ok(p) => p,
        Err(e) => {
            cell.status = CellStatus::Failed(e.to_string());
            return cell;
        }
    };
    let mut min_margin = f64::INFINITY;
    let mut argmin = 0.0;
    for &m in grid {
        match exact_kld(&prior, m) {
            Ok(exact) => {
                let margin = exact - quadratic_kld(&prior, m);
                if margin < min_margin {
                    min_margin = margin;
                    argmin = m;
                }
            }
            Err(e) => {
                cell.status = CellStatus::Failed(e.to_string());
                return cell;
            }
        }
    }
    cell.min_margin = min_margin;
    cell.argmin_mu = argmin;
    cell.max_excess = -min_margin;
    if min_margin < -BOUND_TOLERANCE {
        cell.status = CellStatus::Violation;
    }
    cell
}

/// Evaluates `exact_kld − quadratic_kld` over every `(d_z, τ = 1.2^w)` cell on
/// `mu_points` evenly spaced norms in `[0, mu_max]`. Cells run in parallel and
/// are reported in grid order (d-major).
pub fn verify_bound_sweep(
    d_grid: &[usize],
    w_grid: &[i32],
    mu_points: usize,
    mu_max: f64,
) -> Result<SweepReport> {
    verify_bound_sweep_with(d_grid, w_grid, mu_points, mu_max, &GammaSolverConfig::default())
}

pub fn verify_bound_sweep_with(
    d_grid: &[usize],
    w_grid: &[i32],
    mu_points: usize,
    mu_max: f64,
    solver: &GammaSolverConfig,
) -> Result<SweepReport> {
    if d_grid.is_empty() || w_grid.is_empty() {
        return Err(Error::domain("sweep grids must be non-empty"));
    }
    if mu_points < 2 {
        return Err(Error::domain("sweep needs at least two mu points"));
    }
    if !(mu_max > 0.0 && mu_max.is_finite()) {
        return Err(Error::domain("sweep mu_max must be positive"));
    }
    let grid = mu_grid(mu_points, mu_max);
    let pairs: Vec<(usize, i32)> = d_grid
        .iter()
        .flat_map(|&d| w_grid.iter().map(move |&w| (d, w)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(d, w)| sweep_cell(d, w, &grid, solver))
        .collect();
    Ok(SweepReport { cells })
}
