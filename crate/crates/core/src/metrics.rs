//! Convergence diagnostics: residual, consensus and tracking errors, the
//! optimality gap `Ξ_k`, the Lyapunov function `Ψ_k`, theoretical rate
//! constants and empirical rate fits.
//!
//! Norm conventions differ on purpose: `consensus_error` is the unsquared
//! `(1/n)‖z_k − 1z̄_k‖` used for plotting, while every Lyapunov term is a
//! squared Frobenius norm.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algorithms::AlgoState;
use crate::problem::column_mean;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("the saddle point is unknown for this problem")]
    MissingSaddlePoint,
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("rate fit needs at least {needed} points in the window, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("rate fit needs strictly positive values; got {value} at iteration {iteration}")]
    NonPositive { iteration: usize, value: f64 },
}

/// Constants needed to evaluate `Ψ_k` along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricContext {
    pub gamma: f64,
    pub smoothness: f64,
    /// `ρ_W` for single-round methods, `ρ_M` for accelerated ones.
    pub rho: f64,
    pub z_star: Option<DVector<f64>>,
}

/// One recorded iteration. Fields depending on `z*` are `None` when the
/// saddle point is unknown; `lyapunov` is also `None` when `ρ ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub iteration: usize,
    pub comm_rounds: usize,
    /// `(1/n)‖z_k − 1z*‖²`.
    pub residual: Option<f64>,
    /// `(1/n)‖z_k − 1z̄_k‖`, unsquared.
    pub consensus_error: f64,
    /// `‖r_k − 1r̄_k‖²`.
    pub tracking_error: f64,
    /// `‖Ξ_k‖²`.
    pub xi_norm_sq: Option<f64>,
    /// `Ψ_k`.
    pub lyapunov: Option<f64>,
}

pub(crate) fn sq(m: &DMatrix<f64>) -> f64 {
    m.norm_squared()
}

/// `‖m − 1 m̄‖²`: squared deviation of the rows from their mean.
pub fn deviation_sq(m: &DMatrix<f64>) -> f64 {
    let mean = column_mean(m);
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            acc += (m[(i, j)] - mean[j]).powi(2);
        }
    }
    acc
}

/// `(1/n)‖z − 1z*‖²`.
pub fn residual(z: &DMatrix<f64>, z_star: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            acc += (z[(i, j)] - z_star[j]).powi(2);
        }
    }
    acc / z.nrows() as f64
}

pub(crate) fn residual_of(state: &AlgoState, z_star: Option<&DVector<f64>>) -> Option<f64> {
    z_star.map(|zs| residual(&state.z_curr, zs))
}

/// `(1/n)‖z − 1z̄‖`.
pub fn consensus_error(z: &DMatrix<f64>) -> f64 {
    deviation_sq(z).sqrt() / z.nrows() as f64
}

/// `Ξ_k = z̄_k − γ(1/n)1ᵀ(∇F_k − ∇F_{k−1}) − z*`.
pub fn optimality_gap_xi(state: &AlgoState, gamma: f64, z_star: Option<&DVector<f64>>) -> Result<DVector<f64>, MetricsError> {
    let z_star = z_star.ok_or(MetricsError::MissingSaddlePoint)?;
    let drift = column_mean(&(&state.grad_curr - &state.grad_prev));
    Ok(column_mean(&state.z_curr) - drift * gamma - z_star)
}

/// Lyapunov weights `(c₁, c₂)` on the consensus and tracking errors.
pub fn lyapunov_weights(gamma: f64, smoothness: f64, rho: f64, n: usize) -> Result<(f64, f64), MetricsError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(MetricsError::Domain(format!("rho = {rho} outside [0, 1)")));
    }
    let n = n as f64;
    let gap = 1.0 - rho;
    let c1 = 72.0 * gamma * smoothness / (n * gap);
    let c2 = 4608.0 * gamma.powi(3) * smoothness / (n * gap.powi(3));
    Ok((c1, c2))
}

/// `Ψ_k = ‖Ξ_k‖² + (γL/n)‖z_k − z_{k−1}‖² + c₁‖z_k − 1z̄_k‖² + c₂‖r_k − 1r̄_k‖²`.
pub fn lyapunov(
    state: &AlgoState,
    gamma: f64,
    smoothness: f64,
    rho: f64,
    z_star: Option<&DVector<f64>>,
) -> Result<f64, MetricsError> {
    let n = state.nodes();
    let (c1, c2) = lyapunov_weights(gamma, smoothness, rho, n)?;
    let xi = optimality_gap_xi(state, gamma, z_star)?;
    Ok(xi.norm_squared()
        + gamma * smoothness / n as f64 * sq(&(&state.z_curr - &state.z_prev))
        + c1 * deviation_sq(&state.z_curr)
        + c2 * deviation_sq(&state.tracker))
}

/// Evaluates every metric for `state`.
pub fn record(state: &AlgoState, ctx: &MetricContext) -> MetricRecord {
    let z_star = ctx.z_star.as_ref();
    let xi = optimality_gap_xi(state, ctx.gamma, z_star).ok();
    MetricRecord {
        iteration: state.iteration,
        comm_rounds: state.comm_rounds,
        residual: residual_of(state, z_star),
        consensus_error: consensus_error(&state.z_curr),
        tracking_error: deviation_sq(&state.tracker),
        xi_norm_sq: xi.map(|v| v.norm_squared()),
        lyapunov: lyapunov(state, ctx.gamma, ctx.smoothness, ctx.rho, z_star).ok(),
    }
}

fn check_rho(rho: f64) -> Result<(), MetricsError> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(MetricsError::Domain(format!("rho = {rho} outside [0, 1)")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), MetricsError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(MetricsError::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Per-iteration Lyapunov contraction factor `1 − min{3γμ/4, (1−ρ)/8}`.
pub fn theoretical_contraction(gamma: f64, mu: f64, rho: f64) -> Result<f64, MetricsError> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    check_rho(rho)?;
    let factor = 1.0 - (0.75 * gamma * mu).min((1.0 - rho) / 8.0);
    if factor > 0.0 && factor < 1.0 {
        Ok(factor)
    } else {
        Err(MetricsError::Domain(format!("contraction factor {factor} outside (0, 1)")))
    }
}

/// Largest stepsize covered by the linear-convergence guarantee,
/// `min{1/(64L), (1−ρ)²/(144L√ρ)}`.
pub fn max_stepsize(smoothness: f64, rho: f64) -> Result<f64, MetricsError> {
    check_positive("L", smoothness)?;
    check_rho(rho)?;
    let base = 1.0 / (64.0 * smoothness);
    if rho == 0.0 {
        return Ok(base);
    }
    Ok(base.min((1.0 - rho).powi(2) / (144.0 * smoothness * rho.sqrt())))
}

/// Iterations per `log(1/ε)`: `κ(1 + √ρ/(1−ρ)²) + 1/(1−ρ)`.
pub fn iteration_complexity(kappa: f64, rho: f64) -> Result<f64, MetricsError> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(MetricsError::Domain(format!("kappa must be at least 1, got {kappa}")));
    }
    check_rho(rho)?;
    let gap = 1.0 - rho;
    Ok(kappa * (1.0 + rho.sqrt() / (gap * gap)) + 1.0 / gap)
}

/// Result of a log-linear fit `log v_k ≈ a + k log(rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub fitted_rate: f64,
    pub theoretical_rate: Option<f64>,
    /// Inclusive iteration range used for the fit.
    pub window: (usize, usize),
    pub r_squared: f64,
}

pub const DEFAULT_SKIP_FRACTION: f64 = 0.1;
const MIN_FIT_POINTS: usize = 10;

/// [`fit_linear_rate_with`] skipping the first 10% of iterations.
pub fn fit_linear_rate(series: &[(usize, f64)]) -> Result<RateReport, MetricsError> {
    fit_linear_rate_with(series, DEFAULT_SKIP_FRACTION)
}

/// Least-squares fit of `log(value)` against iteration, ignoring points in
/// the first `skip_fraction` of the iteration span.
pub fn fit_linear_rate_with(series: &[(usize, f64)], skip_fraction: f64) -> Result<RateReport, MetricsError> {
    if !(0.0..1.0).contains(&skip_fraction) {
        return Err(MetricsError::Domain(format!("skip fraction {skip_fraction} outside [0, 1)")));
    }
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(MetricsError::InsufficientData { needed: MIN_FIT_POINTS, got: 0 });
    };
    let start = first.0 as f64 + skip_fraction * (last.0 - first.0) as f64;
    let window: Vec<(usize, f64)> = series.iter().copied().filter(|&(k, _)| k as f64 >= start).collect();
    if window.len() < MIN_FIT_POINTS {
        return Err(MetricsError::InsufficientData { needed: MIN_FIT_POINTS, got: window.len() });
    }
    if let Some(&(iteration, value)) = window.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(MetricsError::NonPositive { iteration, value });
    }
    let m = window.len() as f64;
    let mean_k = window.iter().map(|&(k, _)| k as f64).sum::<f64>() / m;
    let mean_y = window.iter().map(|&(_, v)| v.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(k, v) in &window {
        let dk = k as f64 - mean_k;
        let dy = v.ln() - mean_y;
        sxy += dk * dy;
        sxx += dk * dk;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy <= f64::EPSILON * m * mean_y.abs().max(1.0) { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateReport {
        fitted_rate: slope.exp(),
        theoretical_rate: None,
        window: (window[0].0, window[window.len() - 1].0),
        r_squared,
    })
}
