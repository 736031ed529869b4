//! Decentralized strongly-convex/strongly-concave saddle-point optimization
//! over gossip networks.
//!
//! Each node `i` holds a local objective `f_i(x, y)`; the network solves
//! `min_x max_y (1/n) Σ f_i(x, y)` by exchanging iterates with neighbours
//! through a doubly-stochastic mixing matrix. The crate provides
//!
//! * [`graph`]: topologies, mixing matrices, spectral gaps and accelerated
//!   (momentum) gossip,
//! * [`problem`]: the per-node oracle trait and a bilinear-quadratic test
//!   family with a closed-form saddle point,
//! * [`algorithms`]: DGDA, D-OGDA, DOGT (optimistic gradient tracking) and
//!   its accelerated variant ADOGT,
//! * [`metrics`]: residual, consensus error, Lyapunov function and rate
//!   constants,
//! * [`verify`]: step-by-step checks of the convergence inequalities,
//! * [`cli`]: TOML-configured experiments writing CSV traces.

pub mod algorithms;
pub mod cli;
pub mod graph;
pub mod metrics;
pub mod problem;
pub mod verify;

pub use algorithms::{run, AlgoError, AlgoKind, AlgoState, RunOptions, Stepper, Termination, Trace};
pub use graph::{build_topology, mixing_matrix, spectral_gap, GraphError, MixingMatrix, Topology, TopologyKind, WeightScheme};
pub use metrics::{MetricRecord, MetricsError, RateReport};
pub use problem::{make_bilinear_quadratic, BilinearQuadratic, ProblemError, SaddleProblem, StackedIterate};
pub use verify::{check_lemma, check_trajectory, LemmaCheckReport, LemmaId, VerifyError};
