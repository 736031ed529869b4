//! Network topologies, doubly-stochastic mixing matrices and their spectral
//! gaps, plus the accelerated-consensus weight matrix `M_T`.
//!
//! Throughout, `J` is the averaging matrix `11ᵀ/n` and the spectral gap of a
//! mixing matrix `W` is the *squared* spectral norm `ρ = ‖W − J‖₂²`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row/column sum tolerance enforced on every [`MixingMatrix`].
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Largest `n` for which the spectral gap uses a dense eigendecomposition.
pub const DENSE_SPECTRAL_LIMIT: usize = 256;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;
const RANDOM_GRAPH_RETRIES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph parameter: {0}")]
    InvalidParameter(String),
    #[error("random graph on {n} nodes stayed disconnected after {attempts} attempts")]
    Disconnected { n: usize, attempts: usize },
    #[error("matrix is not a valid mixing matrix: {0}")]
    NotDoublyStochastic(String),
    #[error("spectral-gap power iteration did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("spectral gap {0} outside [0, 1)")]
    Domain(f64),
}

/// Shape of the communication graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TopologyKind {
    Ring,
    Path,
    /// Node 0 is the hub.
    Star,
    Complete,
    /// Erdős–Rényi graph, resampled until connected.
    Random { edge_probability: f64, seed: u64 },
}

/// Undirected connected graph. Self-loops are implied and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    adjacency: Vec<Vec<bool>>,
}

impl Topology {
    /// Builds from an explicit adjacency relation, checking symmetry and
    /// connectivity. Diagonal entries are ignored.
    pub fn from_adjacency(kind: TopologyKind, adjacency: Vec<Vec<bool>>) -> Result<Self, GraphError> {
        let n = adjacency.len();
        if n == 0 {
            return Err(GraphError::InvalidParameter("graph needs at least one node".into()));
        }
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::InvalidParameter(format!("adjacency row {i} has length {}", row.len())));
            }
            for j in 0..n {
                if row[j] != adjacency[j][i] {
                    return Err(GraphError::InvalidParameter(format!("adjacency not symmetric at ({i}, {j})")));
                }
            }
        }
        let mut adjacency = adjacency;
        for (i, row) in adjacency.iter_mut().enumerate() {
            row[i] = false;
        }
        let topology = Topology { kind, adjacency };
        if !topology.is_connected() {
            return Err(GraphError::Disconnected { n, attempts: 1 });
        }
        Ok(topology)
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j)
    }

    /// Number of neighbours, excluding the node itself.
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].iter().filter(|&&e| e).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.len()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    fn is_connected(&self) -> bool {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == n
    }
}

/// Builds a connected topology on `n` nodes.
///
/// A ring on two nodes collapses to a single edge; a ring or path on one
/// node is the trivial graph.
pub fn build_topology(kind: TopologyKind, n: usize) -> Result<Topology, GraphError> {
    if n == 0 {
        return Err(GraphError::InvalidParameter("n must be at least 1".into()));
    }
    let mut adj = vec![vec![false; n]; n];
    let link = |adj: &mut Vec<Vec<bool>>, i: usize, j: usize| {
        if i != j {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    };
    match kind {
        TopologyKind::Ring => {
            for i in 0..n {
                link(&mut adj, i, (i + 1) % n);
            }
        }
        TopologyKind::Path => {
            for i in 1..n {
                link(&mut adj, i - 1, i);
            }
        }
        TopologyKind::Star => {
            for i in 1..n {
                link(&mut adj, 0, i);
            }
        }
        TopologyKind::Complete => {
            for i in 0..n {
                for j in (i + 1)..n {
                    link(&mut adj, i, j);
                }
            }
        }
        TopologyKind::Random { edge_probability, seed } => {
            if !(edge_probability > 0.0 && edge_probability <= 1.0) {
                return Err(GraphError::InvalidParameter(format!(
                    "edge probability {edge_probability} outside (0, 1]"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..RANDOM_GRAPH_RETRIES {
                let mut candidate = vec![vec![false; n]; n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        if rng.random::<f64>() < edge_probability {
                            link(&mut candidate, i, j);
                        }
                    }
                }
                if let Ok(t) = Topology::from_adjacency(kind, candidate) {
                    return Ok(t);
                }
            }
            return Err(GraphError::Disconnected { n, attempts: RANDOM_GRAPH_RETRIES });
        }
    }
    Topology::from_adjacency(kind, adj)
}

/// How edge weights are derived from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    Metropolis,
    LazyMaxDegree,
}

/// Symmetric doubly-stochastic weight matrix with its cached spectral gap.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    rho: f64,
}

impl MixingMatrix {
    /// Validates a dense weight matrix and caches `ρ = ‖W − J‖₂²`.
    ///
    /// `ρ` is not required to be below one here: polynomial matrices such as
    /// a short accelerated recursion may legitimately exceed it.
    pub fn new(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(GraphError::NotDoublyStochastic(format!(
                "expected a non-empty square matrix, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(GraphError::NotDoublyStochastic("non-finite entry".into()));
        }
        for i in 0..n {
            let row: f64 = weights.row(i).sum();
            let col: f64 = weights.column(i).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(GraphError::NotDoublyStochastic(format!(
                    "row/column {i} sums to {row}/{col}"
                )));
            }
            for j in 0..i {
                if (weights[(i, j)] - weights[(j, i)]).abs() > STOCHASTIC_TOL {
                    return Err(GraphError::NotDoublyStochastic(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let rho = spectral_gap_of(&weights, SpectralMethod::Auto)?;
        Ok(MixingMatrix { weights, rho })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }

    /// One gossip round applied to every column of `x`.
    pub fn mix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.weights * x
    }
}

/// Metropolis–Hastings weights: `w_ij = 1/(1 + max(deg_i, deg_j))` on edges,
/// with the remaining mass on the diagonal.
pub fn metropolis_weights(topology: &Topology) -> Result<MixingMatrix, GraphError> {
    let n = topology.len();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let di = topology.degree(i);
        for j in topology.neighbors(i) {
            w[(i, j)] = 1.0 / (1 + di.max(topology.degree(j))) as f64;
        }
    }
    fill_diagonal(&mut w);
    MixingMatrix::new(w)
}

/// Lazy max-degree weights: `W = (I + I − Lap/(d_max + 1)) / 2`.
pub fn lazy_max_degree_weights(topology: &Topology) -> Result<MixingMatrix, GraphError> {
    let n = topology.len();
    let step = 1.0 / (2 * (topology.max_degree() + 1)) as f64;
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in topology.neighbors(i) {
            w[(i, j)] = step;
        }
    }
    fill_diagonal(&mut w);
    MixingMatrix::new(w)
}

pub fn mixing_matrix(topology: &Topology, scheme: WeightScheme) -> Result<MixingMatrix, GraphError> {
    match scheme {
        WeightScheme::Metropolis => metropolis_weights(topology),
        WeightScheme::LazyMaxDegree => lazy_max_degree_weights(topology),
    }
}

fn fill_diagonal(w: &mut DMatrix<f64>) {
    for i in 0..w.nrows() {
        let off: f64 = (0..w.ncols()).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
}

/// Algorithm used by [`spectral_gap_of`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMethod {
    /// Dense eigendecomposition up to [`DENSE_SPECTRAL_LIMIT`] nodes, power
    /// iteration above.
    Auto,
    Dense,
    PowerIteration,
}

/// The cached `ρ` of a mixing matrix.
pub fn spectral_gap(w: &MixingMatrix) -> f64 {
    w.rho
}

/// Squared spectral norm of `W − J` for a symmetric `W`.
pub fn spectral_gap_of(w: &DMatrix<f64>, method: SpectralMethod) -> Result<f64, GraphError> {
    let n = w.nrows();
    if n <= 1 {
        return Ok(0.0);
    }
    let centered = w - DMatrix::from_element(n, n, 1.0 / n as f64);
    let dense = match method {
        SpectralMethod::Auto => n <= DENSE_SPECTRAL_LIMIT,
        SpectralMethod::Dense => true,
        SpectralMethod::PowerIteration => false,
    };
    if dense {
        let eig = SymmetricEigen::new(centered);
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(top * top)
    } else {
        power_iteration_gap(&centered)
    }
}

// Iterates on (W − J)², whose top eigenvalue is ρ directly; this sidesteps
// the ±λ oscillation that bipartite graphs cause when iterating on W − J.
fn power_iteration_gap(centered: &DMatrix<f64>) -> Result<f64, GraphError> {
    let n = centered.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let u = centered * (centered * &v);
        let next = v.dot(&u);
        let unorm = u.norm();
        if unorm == 0.0 {
            return Ok(0.0);
        }
        v = u / unorm;
        if (next - estimate).abs() <= POWER_TOL * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(GraphError::NonConvergence(POWER_MAX_ITERS))
}

/// Momentum of the accelerated gossip recursion,
/// `η = (1 − √(1−ρ)) / (1 + √(1−ρ))`.
pub fn acceleration_momentum(rho: f64) -> Result<f64, GraphError> {
    check_rho(rho)?;
    let s = (1.0 - rho).sqrt();
    Ok((1.0 - s) / (1.0 + s))
}

/// Communication rounds per iteration, `⌈ln 2 / √(1 − √ρ)⌉`, at least one.
pub fn recommended_rounds(rho: f64) -> Result<usize, GraphError> {
    check_rho(rho)?;
    let t = (2f64.ln() / (1.0 - rho.sqrt()).sqrt()).ceil();
    Ok((t as usize).max(1))
}

fn check_rho(rho: f64) -> Result<(), GraphError> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(GraphError::Domain(rho))
    }
}

/// Runs `rounds` steps of `X ← (1+η) W X − η X_prev` starting from
/// `X_prev = X = x`. With `x = I` this yields `M_T`.
pub fn accelerated_mix(w: &MixingMatrix, eta: f64, rounds: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut prev = x.clone();
    let mut curr = x.clone();
    for _ in 0..rounds {
        let next = (w.weights() * &curr) * (1.0 + eta) - &prev * eta;
        prev = std::mem::replace(&mut curr, next);
    }
    curr
}

/// The effective weight matrix `M_T` of `T` accelerated gossip rounds, with
/// its own cached `ρ_M`.
pub fn accelerated_matrix(w: &MixingMatrix, rounds: usize) -> Result<MixingMatrix, GraphError> {
    if rounds == 0 {
        return Err(GraphError::InvalidParameter("T must be at least 1".into()));
    }
    let eta = acceleration_momentum(w.rho())?;
    let n = w.len();
    let mut m = accelerated_mix(w, eta, rounds, &DMatrix::identity(n, n));
    // The recursion is symmetric in exact arithmetic.
    m = (&m + m.transpose()) * 0.5;
    MixingMatrix::new(m)
}
