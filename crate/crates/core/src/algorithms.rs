//! Synchronous iteration state machines over a mixing matrix.
//!
//! All four methods share the stacked-field convention of
//! [`stacked_gradient_field`](crate::problem::stacked_gradient_field): with
//! `∇F_k = [∇_x F_k, −∇_y F_k]`, primal descent and dual ascent are a single
//! subtraction.
//!
//! | method  | update |
//! |---------|--------|
//! | DGDA    | `z⁺ = W(z − γ∇F_k)` |
//! | D-OGDA  | `z⁺ = W(z − γ(2∇F_k − ∇F_{k−1}))` |
//! | DOGT    | `z⁺ = W(z − γ(r + ∇F_k − ∇F_{k−1}))`, `r⁺ = W(r + ∇F_{k+1} − ∇F_k)` |
//! | ADOGT   | DOGT with each `W` replaced by `T` accelerated gossip rounds |

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{accelerated_matrix, accelerated_mix, acceleration_momentum, GraphError, MixingMatrix};
use crate::metrics::{self, MetricContext, MetricRecord};
use crate::problem::{field_at, ProblemError, SaddleProblem, StackedIterate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgoError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("iterates diverged (non-finite value) at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid run parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    Dgda,
    Dogda,
    Dogt,
    /// Accelerated DOGT with `rounds` gossip steps per iteration.
    Adogt { rounds: usize },
}

impl AlgoKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgoKind::Dgda => "dgda",
            AlgoKind::Dogda => "dogda",
            AlgoKind::Dogt => "dogt",
            AlgoKind::Adogt { .. } => "adogt",
        }
    }

    pub fn tracks_gradient(&self) -> bool {
        matches!(self, AlgoKind::Dogt | AlgoKind::Adogt { .. })
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgoKind::Adogt { rounds } => write!(f, "adogt(T={rounds})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Everything one synchronous iteration needs to carry forward.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoState {
    pub z_curr: DMatrix<f64>,
    pub z_prev: DMatrix<f64>,
    /// `∇F_k`, dual block sign-flipped.
    pub grad_curr: DMatrix<f64>,
    /// `∇F_{k−1}`.
    pub grad_prev: DMatrix<f64>,
    /// `r_k = [p_k, −q_k]`; all zeros for the non-tracking baselines.
    pub tracker: DMatrix<f64>,
    pub primal_dim: usize,
    pub iteration: usize,
    pub comm_rounds: usize,
}

impl AlgoState {
    pub fn iterate(&self) -> StackedIterate {
        StackedIterate::new(self.z_curr.clone(), self.primal_dim).expect("state keeps a valid primal split")
    }

    pub fn nodes(&self) -> usize {
        self.z_curr.nrows()
    }

    fn is_finite(&self) -> bool {
        self.z_curr.iter().chain(self.tracker.iter()).chain(self.grad_curr.iter()).all(|v| v.is_finite())
    }
}

/// Gradients and tracker start at `∇F(z0)`; the previous gradient equals the
/// current one so the first optimistic correction vanishes.
pub fn init_state(problem: &dyn SaddleProblem, z0: &StackedIterate) -> Result<AlgoState, AlgoError> {
    z0.check_shape(problem)?;
    let grad = field_at(problem, z0.matrix())?;
    Ok(AlgoState {
        z_curr: z0.matrix().clone(),
        z_prev: z0.matrix().clone(),
        grad_prev: grad.clone(),
        tracker: grad.clone(),
        grad_curr: grad,
        primal_dim: z0.primal_dim(),
        iteration: 0,
        comm_rounds: 0,
    })
}

/// [`init_state`], with the tracker zeroed for methods that do not use it.
pub fn init_state_for(kind: AlgoKind, problem: &dyn SaddleProblem, z0: &StackedIterate) -> Result<AlgoState, AlgoError> {
    let mut s = init_state(problem, z0)?;
    if !kind.tracks_gradient() {
        s.tracker.fill(0.0);
    }
    Ok(s)
}

fn check_gamma(gamma: f64) -> Result<(), AlgoError> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(AlgoError::InvalidParameter(format!("stepsize must be positive, got {gamma}")))
    }
}

fn check_shapes(state: &AlgoState, w: &MixingMatrix, problem: &dyn SaddleProblem) -> Result<(), AlgoError> {
    let expect = (problem.nodes(), problem.dim());
    for m in [&state.z_curr, &state.z_prev, &state.grad_curr, &state.grad_prev, &state.tracker] {
        if m.shape() != expect {
            return Err(ProblemError::Dimension { expected: expect.0 * expect.1, actual: m.len() }.into());
        }
    }
    if w.len() != problem.nodes() {
        return Err(ProblemError::Dimension { expected: problem.nodes(), actual: w.len() }.into());
    }
    Ok(())
}

/// Gossip operator used by a single step: one `W` multiply, or `T`
/// accelerated rounds.
enum Gossip<'a> {
    Plain(&'a MixingMatrix),
    Accelerated { w: &'a MixingMatrix, eta: f64, rounds: usize },
}

impl Gossip<'_> {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Gossip::Plain(w) => w.mix(x),
            Gossip::Accelerated { w, eta, rounds } => accelerated_mix(w, *eta, *rounds, x),
        }
    }

    fn rounds(&self) -> usize {
        match self {
            Gossip::Plain(_) => 1,
            Gossip::Accelerated { rounds, .. } => *rounds,
        }
    }
}

fn tracking_step(
    state: &AlgoState,
    gossip: Gossip<'_>,
    gamma: f64,
    problem: &dyn SaddleProblem,
) -> Result<AlgoState, AlgoError> {
    let direction = &state.tracker + &state.grad_curr - &state.grad_prev;
    let z_next = gossip.apply(&(&state.z_curr - direction * gamma));
    let grad_next = field_at(problem, &z_next)?;
    let tracker_next = gossip.apply(&(&state.tracker + &grad_next - &state.grad_curr));
    finish(state, z_next, grad_next, tracker_next, gossip.rounds())
}

fn finish(
    state: &AlgoState,
    z_next: DMatrix<f64>,
    grad_next: DMatrix<f64>,
    tracker_next: DMatrix<f64>,
    rounds: usize,
) -> Result<AlgoState, AlgoError> {
    let next = AlgoState {
        z_prev: state.z_curr.clone(),
        z_curr: z_next,
        grad_prev: state.grad_curr.clone(),
        grad_curr: grad_next,
        tracker: tracker_next,
        primal_dim: state.primal_dim,
        iteration: state.iteration + 1,
        comm_rounds: state.comm_rounds + rounds,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(AlgoError::Diverged { iteration: next.iteration })
    }
}

/// One DOGT iteration: optimistic descent-ascent along the tracked gradient,
/// then a tracker update, each followed by one gossip round.
pub fn dogt_step(state: &AlgoState, w: &MixingMatrix, gamma: f64, problem: &dyn SaddleProblem) -> Result<AlgoState, AlgoError> {
    check_gamma(gamma)?;
    check_shapes(state, w, problem)?;
    tracking_step(state, Gossip::Plain(w), gamma, problem)
}

/// One ADOGT iteration: as [`dogt_step`] but each gossip round is replaced by
/// `rounds` steps of `θ ← (1+η) Wθ − ηθ_prev`.
pub fn adogt_step(
    state: &AlgoState,
    w: &MixingMatrix,
    eta: f64,
    rounds: usize,
    gamma: f64,
    problem: &dyn SaddleProblem,
) -> Result<AlgoState, AlgoError> {
    check_gamma(gamma)?;
    check_shapes(state, w, problem)?;
    if rounds == 0 {
        return Err(AlgoError::InvalidParameter("ADOGT needs at least one gossip round".into()));
    }
    tracking_step(state, Gossip::Accelerated { w, eta, rounds }, gamma, problem)
}

/// Distributed gradient descent-ascent, adapt-then-combine.
pub fn dgda_step(state: &AlgoState, w: &MixingMatrix, gamma: f64, problem: &dyn SaddleProblem) -> Result<AlgoState, AlgoError> {
    check_gamma(gamma)?;
    check_shapes(state, w, problem)?;
    let z_next = w.mix(&(&state.z_curr - &state.grad_curr * gamma));
    let grad_next = field_at(problem, &z_next)?;
    let zeros = DMatrix::zeros(z_next.nrows(), z_next.ncols());
    finish(state, z_next, grad_next, zeros, 1)
}

/// Distributed optimistic gradient descent-ascent without tracking.
pub fn dogda_step(state: &AlgoState, w: &MixingMatrix, gamma: f64, problem: &dyn SaddleProblem) -> Result<AlgoState, AlgoError> {
    check_gamma(gamma)?;
    check_shapes(state, w, problem)?;
    let direction = &state.grad_curr * 2.0 - &state.grad_prev;
    let z_next = w.mix(&(&state.z_curr - direction * gamma));
    let grad_next = field_at(problem, &z_next)?;
    let zeros = DMatrix::zeros(z_next.nrows(), z_next.ncols());
    finish(state, z_next, grad_next, zeros, 1)
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iters",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Stop once the residual is at or below this value.
    pub tol: f64,
    pub record_every: usize,
    /// Keep a full [`AlgoState`] for every recorded iteration.
    pub record_states: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { max_iters: 10_000, tol: 0.0, record_every: 1, record_states: false }
    }
}

/// Recorded metrics (and optionally states) of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: AlgoKind,
    pub gamma: f64,
    /// Spectral gap of the effective per-iteration matrix (`ρ_W` or `ρ_M`).
    pub rho_effective: f64,
    pub records: Vec<MetricRecord>,
    pub states: Option<Vec<AlgoState>>,
    pub termination: Termination,
    pub iterations: usize,
    pub comm_rounds: usize,
}

impl Trace {
    pub fn last(&self) -> &MetricRecord {
        self.records.last().expect("a trace always records the initial state")
    }

    /// First recorded iteration whose residual is at or below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.residual.is_some_and(|v| v <= tol)).map(|r| r.iteration)
    }
}

/// A prepared algorithm: kind, mixing operator and stepsize.
pub struct Stepper<'a> {
    kind: AlgoKind,
    w: &'a MixingMatrix,
    eta: f64,
    gamma: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(kind: AlgoKind, w: &'a MixingMatrix, gamma: f64) -> Result<Self, AlgoError> {
        check_gamma(gamma)?;
        let eta = match kind {
            AlgoKind::Adogt { rounds: 0 } => {
                return Err(AlgoError::InvalidParameter("ADOGT needs at least one gossip round".into()))
            }
            AlgoKind::Adogt { .. } => acceleration_momentum(w.rho())?,
            _ => 0.0,
        };
        Ok(Stepper { kind, w, eta, gamma })
    }

    pub fn step(&self, state: &AlgoState, problem: &dyn SaddleProblem) -> Result<AlgoState, AlgoError> {
        match self.kind {
            AlgoKind::Dgda => dgda_step(state, self.w, self.gamma, problem),
            AlgoKind::Dogda => dogda_step(state, self.w, self.gamma, problem),
            AlgoKind::Dogt => dogt_step(state, self.w, self.gamma, problem),
            AlgoKind::Adogt { rounds } => adogt_step(state, self.w, self.eta, rounds, self.gamma, problem),
        }
    }

    /// `ρ` of the matrix one iteration effectively applies.
    pub fn effective_rho(&self) -> Result<f64, AlgoError> {
        match self.kind {
            AlgoKind::Adogt { rounds } => Ok(accelerated_matrix(self.w, rounds)?.rho()),
            _ => Ok(self.w.rho()),
        }
    }
}

/// Iterates until the residual reaches `tol` or `max_iters` steps are taken.
///
/// The initial state, every `record_every`-th iterate and the final iterate
/// are recorded.
pub fn run(
    kind: AlgoKind,
    problem: &dyn SaddleProblem,
    w: &MixingMatrix,
    gamma: f64,
    z0: &StackedIterate,
    opts: &RunOptions,
) -> Result<Trace, AlgoError> {
    if opts.record_every == 0 {
        return Err(AlgoError::InvalidParameter("record_every must be positive".into()));
    }
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(AlgoError::InvalidParameter(format!("tol must be non-negative, got {}", opts.tol)));
    }
    let stepper = Stepper::new(kind, w, gamma)?;
    let rho_effective = stepper.effective_rho()?;
    let ctx = MetricContext {
        gamma,
        smoothness: problem.smoothness().value,
        rho: rho_effective,
        z_star: problem.saddle_point(),
    };
    let mut state = init_state_for(kind, problem, z0)?;
    let mut records = Vec::new();
    let mut states = opts.record_states.then(Vec::new);
    let record = |s: &AlgoState, records: &mut Vec<MetricRecord>, states: &mut Option<Vec<AlgoState>>| {
        records.push(metrics::record(s, &ctx));
        if let Some(v) = states.as_mut() {
            v.push(s.clone());
        }
    };
    let reached = |s: &AlgoState| {
        opts.tol == f64::INFINITY || metrics::residual_of(s, ctx.z_star.as_ref()).is_some_and(|r| r <= opts.tol)
    };

    record(&state, &mut records, &mut states);
    let mut termination = Termination::MaxIterations;
    if reached(&state) {
        termination = Termination::Converged;
    } else {
        while state.iteration < opts.max_iters {
            state = stepper.step(&state, problem)?;
            let done = reached(&state);
            if done || state.iteration % opts.record_every == 0 || state.iteration == opts.max_iters {
                record(&state, &mut records, &mut states);
            }
            if done {
                termination = Termination::Converged;
                break;
            }
        }
    }
    Ok(Trace {
        kind,
        gamma,
        rho_effective,
        records,
        states,
        termination,
        iterations: state.iteration,
        comm_rounds: state.comm_rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, metropolis_weights, TopologyKind};
    use crate::problem::{column_mean, make_bilinear_quadratic, BilinearQuadratic};

    fn ring16() -> (BilinearQuadratic, MixingMatrix) {
        let p = make_bilinear_quadratic(16, 2, 2, 0.1, 7, true).unwrap();
        let w = metropolis_weights(&build_topology(TopologyKind::Ring, 16).unwrap()).unwrap();
        (p, w)
    }

    fn homogeneous() -> (BilinearQuadratic, MixingMatrix) {
        let p = BilinearQuadratic::from_centers(DMatrix::zeros(6, 2), DMatrix::zeros(6, 2), 0.1).unwrap();
        let w = metropolis_weights(&build_topology(TopologyKind::Ring, 6).unwrap()).unwrap();
        (p, w)
    }

    #[test]
    fn init_copies_gradients_into_tracker() {
        let (p, _) = ring16();
        let z0 = StackedIterate::gaussian(&p, 3);
        let s = init_state(&p, &z0).unwrap();
        assert_eq!(s.tracker, s.grad_curr);
        assert_eq!(s.grad_prev, s.grad_curr);
        assert_eq!(s.z_prev, s.z_curr);
        assert_eq!((s.iteration, s.comm_rounds), (0, 0));
        assert_eq!(column_mean(&s.tracker), column_mean(&s.grad_curr));
    }

    #[test]
    fn init_from_origin_on_ring() {
        let (p, _) = ring16();
        let s = init_state(&p, &StackedIterate::zeros(&p)).unwrap();
        for i in 0..16 {
            assert_eq!(s.tracker[(i, 0)], -0.1 * p.centers_a()[(i, 0)]);
            assert_eq!(s.tracker[(i, 3)], -0.1 * p.centers_b()[(i, 1)]);
        }
    }

    #[test]
    fn homogeneous_fixed_point_for_every_method() {
        let (p, w) = homogeneous();
        let z0 = StackedIterate::zeros(&p);
        for kind in [AlgoKind::Dgda, AlgoKind::Dogda, AlgoKind::Dogt, AlgoKind::Adogt { rounds: 3 }] {
            let s0 = init_state_for(kind, &p, &z0).unwrap();
            assert!(s0.tracker.iter().all(|&v| v == 0.0));
            let s1 = Stepper::new(kind, &w, 0.1).unwrap().step(&s0, &p).unwrap();
            assert_eq!(s1.z_curr, s0.z_curr, "{kind}");
            assert_eq!(s1.tracker, s0.tracker, "{kind}");
        }
    }

    #[test]
    fn comm_round_accounting() {
        let (p, w) = ring16();
        let z0 = StackedIterate::gaussian(&p, 1);
        let s0 = init_state(&p, &z0).unwrap();
        let s1 = dogt_step(&s0, &w, 0.1, &p).unwrap();
        assert_eq!((s1.iteration, s1.comm_rounds), (1, 1));
        let eta = acceleration_momentum(w.rho()).unwrap();
        let s2 = adogt_step(&s1, &w, eta, 4, 0.1, &p).unwrap();
        assert_eq!((s2.iteration, s2.comm_rounds), (2, 5));
    }

    #[test]
    fn zero_momentum_single_round_matches_dogt() {
        let (p, w) = ring16();
        let s0 = init_state(&p, &StackedIterate::gaussian(&p, 2)).unwrap();
        let a = adogt_step(&s0, &w, 0.0, 1, 0.1, &p).unwrap();
        let b = dogt_step(&s0, &w, 0.1, &p).unwrap();
        assert!((a.z_curr - b.z_curr).amax() < 1e-15);
        assert!((a.tracker - b.tracker).amax() < 1e-15);
    }

    #[test]
    fn zero_momentum_three_rounds_matches_cubed_matrix() {
        let (p, w) = ring16();
        let cube = MixingMatrix::new(w.weights() * w.weights() * w.weights()).unwrap();
        let mut a = init_state(&p, &StackedIterate::gaussian(&p, 2)).unwrap();
        let mut b = a.clone();
        for _ in 0..5 {
            a = adogt_step(&a, &w, 0.0, 3, 0.1, &p).unwrap();
            b = dogt_step(&b, &cube, 0.1, &p).unwrap();
        }
        assert!((a.z_curr - b.z_curr).amax() < 1e-13);
        assert!((a.tracker - b.tracker).amax() < 1e-13);
    }

    #[test]
    fn rejects_bad_parameters() {
        let (p, w) = ring16();
        let s0 = init_state(&p, &StackedIterate::zeros(&p)).unwrap();
        assert!(matches!(dogt_step(&s0, &w, 0.0, &p), Err(AlgoError::InvalidParameter(_))));
        assert!(matches!(adogt_step(&s0, &w, 0.1, 0, 0.1, &p), Err(AlgoError::InvalidParameter(_))));
        let small = metropolis_weights(&build_topology(TopologyKind::Ring, 4).unwrap()).unwrap();
        assert!(matches!(dogt_step(&s0, &small, 0.1, &p), Err(AlgoError::Problem(_))));
        let opts = RunOptions { record_every: 0, ..RunOptions::default() };
        assert!(run(AlgoKind::Dogt, &p, &w, 0.1, &StackedIterate::zeros(&p), &opts).is_err());
    }

    #[test]
    fn divergence_is_reported_with_iteration() {
        let (p, w) = ring16();
        let z0 = StackedIterate::gaussian(&p, 5);
        let opts = RunOptions { max_iters: 100_000, ..RunOptions::default() };
        match run(AlgoKind::Dgda, &p, &w, 50.0, &z0, &opts) {
            Err(AlgoError::Diverged { iteration }) => assert!(iteration > 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn infinite_tolerance_records_only_initial_state() {
        let (p, w) = ring16();
        let opts = RunOptions { tol: f64::INFINITY, ..RunOptions::default() };
        let t = run(AlgoKind::Dogt, &p, &w, 0.1, &StackedIterate::gaussian(&p, 1), &opts).unwrap();
        assert_eq!(t.iterations, 0);
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.termination, Termination::Converged);
    }

    #[test]
    fn records_every_kth_plus_final() {
        let (p, w) = ring16();
        let opts = RunOptions { max_iters: 25, record_every: 10, record_states: true, ..RunOptions::default() };
        let t = run(AlgoKind::Dogt, &p, &w, 0.1, &StackedIterate::gaussian(&p, 1), &opts).unwrap();
        let iters: Vec<usize> = t.records.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![0, 10, 20, 25]);
        assert_eq!(t.states.as_ref().unwrap().len(), 4);
        assert_eq!(t.termination, Termination::MaxIterations);
    }

    #[test]
    fn dogt_reaches_tolerance() {
        let (p, w) = ring16();
        let opts = RunOptions { max_iters: 10_000, tol: 1e-10, record_every: 100, record_states: false };
        let t = run(AlgoKind::Dogt, &p, &w, 0.1, &StackedIterate::gaussian(&p, 11), &opts).unwrap();
        assert_eq!(t.termination, Termination::Converged);
        assert!(t.last().residual.unwrap() <= 1e-10);
        assert_eq!(t.comm_rounds, t.iterations);
    }
}
