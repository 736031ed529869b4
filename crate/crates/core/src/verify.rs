//! Numerical checks of the convergence inequalities along recorded
//! trajectories, and a central finite-difference gradient oracle.
//!
//! Each lemma checker evaluates both sides of its inequality at every pair of
//! consecutive stored states `(k, k+1)` and records the margin `rhs − lhs`.
//! A step holds when `rhs − lhs ≥ −1e-9 · max(|lhs|, |rhs|)`.
//!
//! Notation: `c_k = ‖z_k − 1z̄_k‖²`, `t_k = ‖r_k − 1r̄_k‖²`,
//! `d_k = ‖z_k − z_{k−1}‖²`, `∇f(z̄_k)` is the network-average field at the
//! average point and `∇F(1z̄_k)` the stacked per-node fields there.

use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::AlgoState;
use crate::graph::{accelerated_matrix, recommended_rounds, GraphError, MixingMatrix};
use crate::metrics::{self, deviation_sq, sq, MetricsError};
use crate::problem::{column_mean, field_at, node_field, ProblemError, SaddleProblem};

/// Relative slack allowed on each inequality.
pub const MARGIN_TOL: f64 = 1e-9;

const ROUNDOFF_FACTOR: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("lemma checks need at least two consecutive stored states")]
    MissingStates,
    #[error("stored states are not consecutive: iteration {found} follows {previous}")]
    NonConsecutive { previous: usize, found: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaId {
    L1IterateGap,
    L2Consensus,
    L3Tracking,
    L4OptimalityGap,
    T1Contraction,
    T2RhoM,
}

impl LemmaId {
    pub const TRAJECTORY: [LemmaId; 5] =
        [LemmaId::L1IterateGap, LemmaId::L2Consensus, LemmaId::L3Tracking, LemmaId::L4OptimalityGap, LemmaId::T1Contraction];

    pub fn as_str(&self) -> &'static str {
        match self {
            LemmaId::L1IterateGap => "L1_iterate_gap",
            LemmaId::L2Consensus => "L2_consensus",
            LemmaId::L3Tracking => "L3_tracking",
            LemmaId::L4OptimalityGap => "L4_optimality_gap",
            LemmaId::T1Contraction => "T1_contraction",
            LemmaId::T2RhoM => "T2_rho_M",
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Both sides of one inequality instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Margin {
    /// Iteration `k` for trajectory checks; the round count `T` for `T2_rho_M`.
    pub iteration: usize,
    pub label: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Magnitude the tolerance is relative to.
    pub scale: f64,
    /// Absolute slack for quantities that cancel to round-off.
    pub floor: f64,
}

impl Margin {
    fn step(iteration: usize, lhs: f64, rhs: f64) -> Self {
        Margin { iteration, label: "step", lhs, rhs, scale: lhs.abs().max(rhs.abs()), floor: 0.0 }
    }

    /// Step margin whose lhs is a squared deviation of `m`; those cannot be
    /// resolved below about `ε²‖m‖²`.
    fn deviation_step(iteration: usize, lhs: f64, rhs: f64, m: &DMatrix<f64>) -> Self {
        Margin { floor: ROUNDOFF_FACTOR * f64::EPSILON * f64::EPSILON * sq(m), ..Margin::step(iteration, lhs, rhs) }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.margin() >= -(MARGIN_TOL * self.scale + self.floor)
    }
}

/// Stepsize condition attached to a lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct Precondition {
    pub gamma: f64,
    /// `None` when the lemma has no stepsize requirement.
    pub bound: Option<f64>,
}

impl Precondition {
    pub fn satisfied(&self) -> bool {
        self.bound.is_none_or(|b| self.gamma <= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Passed,
    Failed,
    PreconditionViolated,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Passed => "passed",
            CheckStatus::Failed => "failed",
            CheckStatus::PreconditionViolated => "precondition_violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheckReport {
    pub lemma: LemmaId,
    pub margins: Vec<Margin>,
    pub precondition: Precondition,
    /// Discrepancies worth flagging that do not affect the status.
    pub notes: Vec<String>,
}

impl LemmaCheckReport {
    /// Smallest raw margin `rhs − lhs`.
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(Margin::margin).fold(f64::INFINITY, f64::min)
    }

    /// Every margin within tolerance, ignoring the precondition.
    pub fn inequality_holds(&self) -> bool {
        self.margins.iter().all(Margin::holds)
    }

    pub fn status(&self) -> CheckStatus {
        if !self.precondition.satisfied() {
            CheckStatus::PreconditionViolated
        } else if self.inequality_holds() {
            CheckStatus::Passed
        } else {
            CheckStatus::Failed
        }
    }

    pub fn passed(&self) -> bool {
        self.status() == CheckStatus::Passed
    }

    /// First margin that breaks the inequality.
    pub fn first_violation(&self) -> Option<&Margin> {
        self.margins.iter().find(|m| !m.holds())
    }

    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "{:<18} {:<22} checked={:<5} min_margin={:+.6e}",
            self.lemma.as_str(),
            self.status().as_str(),
            self.margins.len(),
            self.min_margin()
        );
        if let Some(b) = self.precondition.bound {
            let _ = write!(line, " gamma={:.6e} bound={:.6e}", self.precondition.gamma, b);
        }
        if let Some(m) = self.first_violation() {
            let _ = write!(line, " first_violation={}@{} lhs={:.6e} rhs={:.6e}", m.label, m.iteration, m.lhs, m.rhs);
        }
        for note in &self.notes {
            let _ = write!(line, "\n    note: {note}");
        }
        line
    }
}

/// Constants the inequalities are stated in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConstants {
    pub gamma: f64,
    pub smoothness: f64,
    pub mu: f64,
    /// `ρ_W`, or `ρ_M` for accelerated runs.
    pub rho: f64,
    pub n: usize,
}

/// Largest stepsize each lemma allows.
pub fn stepsize_bound(lemma: LemmaId, c: &LemmaConstants) -> Result<Option<f64>, MetricsError> {
    let (l, rho) = (c.smoothness, c.rho);
    if !(0.0..1.0).contains(&rho) {
        return Err(MetricsError::Domain(format!("rho = {rho} outside [0, 1)")));
    }
    let graph_term = |v: f64| if rho == 0.0 { f64::INFINITY } else { v };
    Ok(match lemma {
        LemmaId::L1IterateGap | LemmaId::T2RhoM => None,
        LemmaId::L2Consensus => Some(1.0 / (4.0 * l)),
        LemmaId::L3Tracking => Some((1.0 / (4.0 * l)).min(graph_term((1.0 - rho) / (8.0 * l * rho.sqrt())))),
        LemmaId::L4OptimalityGap => Some((1.0 / (8.0 * l)).min(graph_term((1.0 - rho) / (8.0 * l * rho)))),
        LemmaId::T1Contraction => Some(metrics::max_stepsize(l, rho)?),
    })
}

/// Quantities at step `k` shared by all trajectory lemmas.
struct StepTerms {
    consensus: f64,
    tracking: f64,
    iterate_gap: f64,
    /// `‖∇f(z̄_k)‖²`.
    avg_field_sq: f64,
    /// `‖∇F(1z̄_k)‖²`.
    stacked_field_sq: f64,
}

impl StepTerms {
    fn at(state: &AlgoState, problem: &dyn SaddleProblem) -> Result<Self, ProblemError> {
        let n = state.nodes();
        let mean = column_mean(&state.z_curr);
        let at_mean = DMatrix::from_fn(n, mean.len(), |_, j| mean[j]);
        let fields = field_at(problem, &at_mean)?;
        Ok(StepTerms {
            consensus: deviation_sq(&state.z_curr),
            tracking: deviation_sq(&state.tracker),
            iterate_gap: sq(&(&state.z_curr - &state.z_prev)),
            avg_field_sq: column_mean(&fields).norm_squared(),
            stacked_field_sq: sq(&fields),
        })
    }
}

/// Evaluates one lemma along consecutive stored states.
pub fn check_lemma(
    states: &[AlgoState],
    lemma: LemmaId,
    constants: &LemmaConstants,
    problem: &dyn SaddleProblem,
    z_star: Option<&DVector<f64>>,
) -> Result<LemmaCheckReport, VerifyError> {
    if states.len() < 2 {
        return Err(VerifyError::MissingStates);
    }
    for pair in states.windows(2) {
        if pair[1].iteration != pair[0].iteration + 1 {
            return Err(VerifyError::NonConsecutive { previous: pair[0].iteration, found: pair[1].iteration });
        }
    }
    let c = *constants;
    let precondition = Precondition { gamma: c.gamma, bound: stepsize_bound(lemma, &c)? };
    let (g, l, rho) = (c.gamma, c.smoothness, c.rho);
    let n = c.n as f64;
    let gap = 1.0 - rho;
    let mut margins = Vec::with_capacity(states.len() - 1);
    let mut notes = Vec::new();
    let mut theorem_display_disagrees = 0usize;
    let contraction = match lemma {
        LemmaId::T1Contraction => Some(metrics::theoretical_contraction(g, c.mu, rho)?),
        _ => None,
    };

    for pair in states.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        let k = now.iteration;
        let t = StepTerms::at(now, problem)?;
        let margin = match lemma {
            LemmaId::L1IterateGap => {
                let lhs = sq(&(&next.z_curr - &now.z_curr));
                let rhs = 4.0 * g * g * l * l * t.iterate_gap
                    + (4.0 + 8.0 * g * g * l * l) * t.consensus
                    + 8.0 * g * g * t.tracking
                    + 8.0 * n * g * g * t.avg_field_sq;
                Margin::step(k, lhs, rhs)
            }
            LemmaId::L2Consensus => {
                let lhs = deviation_sq(&next.z_curr);
                let coupling = 2.0 * g * g * (1.0 + rho) * rho / gap;
                let rhs = (1.0 + rho) / 2.0 * t.consensus + coupling * t.tracking + coupling * l * l * t.iterate_gap;
                Margin::deviation_step(k, lhs, rhs, &next.z_curr)
            }
            LemmaId::L3Tracking => {
                let lhs = deviation_sq(&next.tracker);
                let rhs = (3.0 + rho) / 4.0 * t.tracking
                    + 8.0 * g * g * l.powi(4) * rho / gap * t.iterate_gap
                    + 9.0 * l * l * rho / gap * t.consensus
                    + 16.0 * n * g * g * l * l * rho / gap * t.avg_field_sq;
                Margin::deviation_step(k, lhs, rhs, &next.tracker)
            }
            LemmaId::L4OptimalityGap => {
                let xi_now = metrics::optimality_gap_xi(now, g, z_star)?.norm_squared();
                let lhs = metrics::optimality_gap_xi(next, g, z_star)?.norm_squared();
                let common = (1.0 - 0.75 * g * c.mu) * xi_now + 5.0 * g * g * l * l / (4.0 * n) * t.iterate_gap
                    + 4.0 * g * l / n * t.consensus
                    - g * g / (4.0 * n) * t.stacked_field_sq;
                let lemma_rhs = common + 9.0 * g.powi(3) * l * rho / (n * gap) * t.tracking;
                let theorem_rhs = common + 9.0 * g.powi(3) * l / (n * gap) * t.tracking;
                let lemma_margin = Margin::step(k, lhs, lemma_rhs);
                if lemma_margin.holds() != Margin::step(k, lhs, theorem_rhs).holds() {
                    theorem_display_disagrees += 1;
                }
                lemma_margin
            }
            LemmaId::T1Contraction => {
                let psi_now = metrics::lyapunov(now, g, l, rho, z_star)?;
                let psi_next = metrics::lyapunov(next, g, l, rho, z_star)?;
                Margin::step(k, psi_next, contraction.unwrap_or(1.0) * psi_now)
            }
            LemmaId::T2RhoM => return Err(VerifyError::MissingStates),
        };
        margins.push(margin);
    }
    if theorem_display_disagrees > 0 {
        notes.push(format!(
            "{theorem_display_disagrees} step(s) fail with the tracking coefficient 9γ³Lρ/(n(1−ρ)) but hold with 9γ³L/(n(1−ρ))"
        ));
    }
    Ok(LemmaCheckReport { lemma, margins, precondition, notes })
}

/// Every trajectory lemma in order L1, L2, L3, L4, T1.
pub fn check_trajectory(
    states: &[AlgoState],
    constants: &LemmaConstants,
    problem: &dyn SaddleProblem,
    z_star: Option<&DVector<f64>>,
) -> Result<Vec<LemmaCheckReport>, VerifyError> {
    LemmaId::TRAJECTORY.iter().map(|&id| check_lemma(states, id, constants, problem, z_star)).collect()
}

/// Outcome of the accelerated-consensus checks for one `(W, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoMCheck {
    pub rounds: usize,
    pub rho_w: f64,
    pub rho_m: f64,
    /// `2(1 − √(1 − √ρ_W))^{2T}`.
    pub analytic_bound: f64,
    pub recommended_rounds: usize,
    pub report: LemmaCheckReport,
}

impl RhoMCheck {
    pub fn bound_vacuous(&self) -> bool {
        self.analytic_bound >= 1.0
    }
}

/// Computes `ρ_M` of `M_T` and checks it against the analytic bound (when
/// that bound is below one) and, for the recommended `T`, against
/// `1 − ρ_M ≥ 1/2`. Both checks are margins of the same report.
pub fn check_rho_m(w: &MixingMatrix, rounds: usize) -> Result<RhoMCheck, VerifyError> {
    let m = accelerated_matrix(w, rounds)?;
    let rho_w = w.rho();
    let rho_m = m.rho();
    let analytic_bound = 2.0 * (1.0 - (1.0 - rho_w.sqrt()).sqrt()).powi(2 * rounds as i32);
    let recommended = recommended_rounds(rho_w)?;
    let mut margins = Vec::new();
    let mut notes = Vec::new();
    let unit = |label, lhs: f64, rhs: f64| Margin { iteration: rounds, label, lhs, rhs, scale: 1.0, floor: 0.0 };
    if analytic_bound < 1.0 {
        margins.push(unit("analytic_bound", rho_m, analytic_bound));
    } else {
        notes.push(format!("analytic bound {analytic_bound:.6} is vacuous (>= 1); rho_M = {rho_m:.6}"));
    }
    if rounds == recommended {
        margins.push(unit("half_gap", rho_m, 0.5));
    }
    let report = LemmaCheckReport {
        lemma: LemmaId::T2RhoM,
        margins,
        precondition: Precondition { gamma: 0.0, bound: None },
        notes,
    };
    Ok(RhoMCheck { rounds, rho_w, rho_m, analytic_bound, recommended_rounds: recommended, report })
}

/// Central differences of `f_i` around `z = [x, y]`, with the dual block
/// negated to match the stacked field `[∇_x f_i, −∇_y f_i]`.
pub fn finite_difference_gradient(problem: &dyn SaddleProblem, node: usize, z: &[f64], h: f64) -> Result<Vec<f64>, ProblemError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ProblemError::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    let p = problem.primal_dim();
    if z.len() != problem.dim() {
        return Err(ProblemError::Dimension { expected: problem.dim(), actual: z.len() });
    }
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for j in 0..z.len() {
        probe[j] = z[j] + h;
        let up = problem.local_value(node, &probe[..p], &probe[p..])?;
        probe[j] = z[j] - h;
        let down = problem.local_value(node, &probe[..p], &probe[p..])?;
        probe[j] = z[j];
        let d = (up - down) / (2.0 * h);
        out.push(if j < p { d } else { -d });
    }
    Ok(out)
}

/// `‖fd − g‖ / max(‖g‖, 1)` between the finite-difference and analytic
/// stacked fields at one point.
pub fn gradient_relative_error(problem: &dyn SaddleProblem, node: usize, z: &[f64], h: f64) -> Result<f64, ProblemError> {
    let fd = finite_difference_gradient(problem, node, z, h)?;
    let exact = node_field(problem, node, z)?;
    let diff = fd.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(diff / norm.max(1.0))
}

/// Human-readable summary, one line per report.
pub fn render_summary(reports: &[LemmaCheckReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "{}", r.summary_line());
    }
    out
}

/// `lemma_id,iteration,margin` rows for every report.
pub fn render_margins_csv(reports: &[LemmaCheckReport]) -> String {
    let mut out = String::from("lemma_id,iteration,margin\n");
    for r in reports {
        for m in &r.margins {
            let _ = writeln!(out, "{},{},{:.16e}", r.lemma, m.iteration, m.margin());
        }
    }
    out
}
