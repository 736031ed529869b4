//! Saddle-point problems distributed over `n` nodes.
//!
//! Node `i` holds a local objective `f_i(x, y)` that is strongly convex in
//! `x ∈ ℝᵖ` and strongly concave in `y ∈ ℝᵈ`; the network jointly solves
//! `min_x max_y (1/n) Σ f_i(x, y)`. Algorithms see problems only through the
//! per-node gradient oracle of [`SaddleProblem`].

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem parameter: {0}")]
    InvalidParameter(String),
    #[error("node index {index} out of range for {n} nodes")]
    NodeIndex { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("malformed problem record: {0}")]
    Record(String),
}

/// Smoothness constant together with whether it is a proven bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub value: f64,
    /// `false` for sampled estimates; those must not feed theorem checks.
    pub certified: bool,
}

/// Per-node first-order oracle of a distributed saddle problem.
///
/// Implementations must be deterministic: identical inputs give
/// bit-identical outputs.
pub trait SaddleProblem: Send + Sync {
    fn nodes(&self) -> usize;
    fn primal_dim(&self) -> usize;
    fn dual_dim(&self) -> usize;
    /// Strong convexity / concavity modulus.
    fn mu(&self) -> f64;
    fn smoothness(&self) -> Smoothness;

    /// Value of `f_i(x, y)`.
    fn local_value(&self, node: usize, x: &[f64], y: &[f64]) -> Result<f64, ProblemError>;

    /// `(∇_x f_i(x, y), ∇_y f_i(x, y))`.
    fn local_gradient(&self, node: usize, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ProblemError>;

    /// The global saddle point `z* = [x*, y*]`, when known in closed form.
    fn saddle_point(&self) -> Option<DVector<f64>> {
        None
    }

    fn dim(&self) -> usize {
        self.primal_dim() + self.dual_dim()
    }

    fn condition_number(&self) -> f64 {
        self.smoothness().value / self.mu()
    }
}

/// Row `i` holds node `i`'s copy `z_i = [x_i, y_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedIterate {
    z: DMatrix<f64>,
    primal_dim: usize,
}

impl StackedIterate {
    pub fn new(z: DMatrix<f64>, primal_dim: usize) -> Result<Self, ProblemError> {
        if primal_dim > z.ncols() {
            return Err(ProblemError::Dimension { expected: z.ncols(), actual: primal_dim });
        }
        Ok(StackedIterate { z, primal_dim })
    }

    pub fn zeros(problem: &dyn SaddleProblem) -> Self {
        StackedIterate { z: DMatrix::zeros(problem.nodes(), problem.dim()), primal_dim: problem.primal_dim() }
    }

    /// Every node starts from the same point `v`.
    pub fn broadcast(problem: &dyn SaddleProblem, v: &DVector<f64>) -> Result<Self, ProblemError> {
        check_len(problem.dim(), v.len())?;
        let z = DMatrix::from_fn(problem.nodes(), problem.dim(), |_, j| v[j]);
        Ok(StackedIterate { z, primal_dim: problem.primal_dim() })
    }

    /// Independent standard-normal entries per node.
    pub fn gaussian(problem: &dyn SaddleProblem, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (problem.nodes(), problem.dim());
        let mut z = DMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                z[(i, j)] = rng.sample(StandardNormal);
            }
        }
        StackedIterate { z, primal_dim: problem.primal_dim() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.z
    }

    pub fn primal_dim(&self) -> usize {
        self.primal_dim
    }

    pub fn nodes(&self) -> usize {
        self.z.nrows()
    }

    pub fn primal(&self) -> DMatrix<f64> {
        self.z.columns(0, self.primal_dim).into_owned()
    }

    pub fn dual(&self) -> DMatrix<f64> {
        self.z.columns(self.primal_dim, self.z.ncols() - self.primal_dim).into_owned()
    }

    /// Network average `z̄`.
    pub fn mean(&self) -> DVector<f64> {
        column_mean(&self.z)
    }

    pub fn check_shape(&self, problem: &dyn SaddleProblem) -> Result<(), ProblemError> {
        check_len(problem.nodes(), self.z.nrows())?;
        check_len(problem.dim(), self.z.ncols())?;
        check_len(problem.primal_dim(), self.primal_dim)
    }
}

pub(crate) fn column_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn check_len(expected: usize, actual: usize) -> Result<(), ProblemError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ProblemError::Dimension { expected, actual })
    }
}

/// Stacked monotone field of node `i` at `z_i = [x, y]`: `[∇_x f_i, −∇_y f_i]`.
pub fn node_field(problem: &dyn SaddleProblem, node: usize, z: &[f64]) -> Result<Vec<f64>, ProblemError> {
    check_len(problem.dim(), z.len())?;
    let (x, y) = z.split_at(problem.primal_dim());
    let (gx, gy) = problem.local_gradient(node, x, y)?;
    let mut out = gx;
    out.extend(gy.into_iter().map(|g| -g));
    Ok(out)
}

/// Row `i` of the result is node `i`'s stacked field at its own row of `z`.
/// The sign flip on the dual block turns descent on `x` and ascent on `y`
/// into one subtraction.
pub fn stacked_gradient_field(problem: &dyn SaddleProblem, z: &StackedIterate) -> Result<DMatrix<f64>, ProblemError> {
    z.check_shape(problem)?;
    field_at(problem, z.matrix())
}

pub(crate) fn field_at(problem: &dyn SaddleProblem, z: &DMatrix<f64>) -> Result<DMatrix<f64>, ProblemError> {
    let (n, m) = (z.nrows(), z.ncols());
    let mut out = DMatrix::zeros(n, m);
    let mut row = vec![0.0; m];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = z[(i, j)];
        }
        let g = node_field(problem, i, &row)?;
        for (j, v) in g.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// `f_i(x, y) = xᵀy + μ/2‖x − a_i‖² − μ/2‖y − b_i‖²`.
///
/// The coupling term requires `p == d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearQuadratic {
    centers_a: DMatrix<f64>,
    centers_b: DMatrix<f64>,
    mu: f64,
    seed: u64,
    zero_sum_centers: bool,
}

impl BilinearQuadratic {
    /// Explicit centers; row `i` of `centers_a` / `centers_b` is `a_i` / `b_i`.
    pub fn from_centers(centers_a: DMatrix<f64>, centers_b: DMatrix<f64>, mu: f64) -> Result<Self, ProblemError> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(ProblemError::InvalidParameter(format!("mu must be a finite non-negative number, got {mu}")));
        }
        if centers_a.nrows() == 0 || centers_a.ncols() == 0 {
            return Err(ProblemError::InvalidParameter("dimensions must be positive".into()));
        }
        check_len(centers_a.nrows(), centers_b.nrows())?;
        if centers_a.ncols() != centers_b.ncols() {
            return Err(ProblemError::InvalidParameter(format!(
                "bilinear coupling needs p == d, got p={} d={}",
                centers_a.ncols(),
                centers_b.ncols()
            )));
        }
        Ok(BilinearQuadratic { centers_a, centers_b, mu, seed: 0, zero_sum_centers: false })
    }

    pub fn centers_a(&self) -> &DMatrix<f64> {
        &self.centers_a
    }

    pub fn centers_b(&self) -> &DMatrix<f64> {
        &self.centers_b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Solves `[[μ, 1], [1, −μ]] [x*; y*] = [μā; −μb̄]` blockwise, where ā
    /// and b̄ are the center means.
    fn solve_saddle(&self) -> DVector<f64> {
        let mu = self.mu;
        let a_bar = column_mean(&self.centers_a);
        let b_bar = column_mean(&self.centers_b);
        let det = 1.0 + mu * mu;
        let x = (&a_bar * (mu * mu) - &b_bar * mu) / det;
        let y = (&a_bar * mu + &b_bar * (mu * mu)) / det;
        let mut z = DVector::zeros(2 * x.len());
        z.rows_mut(0, x.len()).copy_from(&x);
        z.rows_mut(x.len(), y.len()).copy_from(&y);
        z
    }

    fn check_node(&self, node: usize) -> Result<(), ProblemError> {
        if node < self.centers_a.nrows() {
            Ok(())
        } else {
            Err(ProblemError::NodeIndex { index: node, n: self.centers_a.nrows() })
        }
    }

    /// Plain-text record: header line, then one line per node with `a_i`
    /// followed by `b_i`, all floats at 17 significant digits.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "bilinear_quadratic n={} p={} d={} mu={:.16e} seed={} zero_sum_centers={}",
            self.nodes(),
            self.primal_dim(),
            self.dual_dim(),
            self.mu,
            self.seed,
            self.zero_sum_centers
        );
        for i in 0..self.nodes() {
            let vals: Vec<String> = self
                .centers_a
                .row(i)
                .iter()
                .chain(self.centers_b.row(i).iter())
                .map(|v| format!("{v:.16e}"))
                .collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        out
    }

    pub fn from_record(record: &str) -> Result<Self, ProblemError> {
        let bad = |m: &str| ProblemError::Record(m.to_string());
        let mut lines = record.lines();
        let header = lines.next().ok_or_else(|| bad("empty record"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("bilinear_quadratic") {
            return Err(bad("missing bilinear_quadratic tag"));
        }
        let mut n = None;
        let mut p = None;
        let mut d = None;
        let mut mu = None;
        let mut seed = None;
        let mut zero_sum = None;
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| bad(f))?;
            match k {
                "n" => n = v.parse::<usize>().ok(),
                "p" => p = v.parse::<usize>().ok(),
                "d" => d = v.parse::<usize>().ok(),
                "mu" => mu = v.parse::<f64>().ok(),
                "seed" => seed = v.parse::<u64>().ok(),
                "zero_sum_centers" => zero_sum = v.parse::<bool>().ok(),
                _ => return Err(bad(&format!("unknown field {k}"))),
            }
        }
        let (n, p, d, mu, seed, zero_sum) = match (n, p, d, mu, seed, zero_sum) {
            (Some(n), Some(p), Some(d), Some(mu), Some(s), Some(z)) => (n, p, d, mu, s, z),
            _ => return Err(bad("incomplete header")),
        };
        let mut a = DMatrix::zeros(n, p);
        let mut b = DMatrix::zeros(n, d);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| bad("missing center row"))?;
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != p + d {
                return Err(bad(&format!("row {i} has {} values", vals.len())));
            }
            for j in 0..p {
                a[(i, j)] = vals[j];
            }
            for j in 0..d {
                b[(i, j)] = vals[p + j];
            }
        }
        let mut problem = BilinearQuadratic::from_centers(a, b, mu)?;
        problem.seed = seed;
        problem.zero_sum_centers = zero_sum;
        Ok(problem)
    }
}

/// Samples a bilinear-quadratic instance with standard-normal centers.
///
/// With `zero_sum_centers` the sample mean is removed from the centers so
/// that `Σ a_i = Σ b_i = 0` and the saddle point is the origin.
pub fn make_bilinear_quadratic(
    n: usize,
    p: usize,
    d: usize,
    mu: f64,
    seed: u64,
    zero_sum_centers: bool,
) -> Result<BilinearQuadratic, ProblemError> {
    if n == 0 || p == 0 || d == 0 {
        return Err(ProblemError::InvalidParameter("dimensions must be positive".into()));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(ProblemError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |rows: usize, cols: usize| {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = rng.sample(StandardNormal);
            }
        }
        m
    };
    let mut a = sample(n, p);
    let mut b = sample(n, d);
    if zero_sum_centers {
        recenter(&mut a);
        recenter(&mut b);
    }
    let mut problem = BilinearQuadratic::from_centers(a, b, mu)?;
    problem.seed = seed;
    problem.zero_sum_centers = zero_sum_centers;
    Ok(problem)
}

fn recenter(m: &mut DMatrix<f64>) {
    let mean = column_mean(m);
    for mut row in m.row_iter_mut() {
        for (v, c) in row.iter_mut().zip(mean.iter()) {
            *v -= c;
        }
    }
}

impl SaddleProblem for BilinearQuadratic {
    fn nodes(&self) -> usize {
        self.centers_a.nrows()
    }

    fn primal_dim(&self) -> usize {
        self.centers_a.ncols()
    }

    fn dual_dim(&self) -> usize {
        self.centers_b.ncols()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    /// `L = √(1 + μ²)`: each block difference is `μΔ_own ± Δ_other`.
    fn smoothness(&self) -> Smoothness {
        Smoothness { value: (1.0 + self.mu * self.mu).sqrt(), certified: true }
    }

    fn local_value(&self, node: usize, x: &[f64], y: &[f64]) -> Result<f64, ProblemError> {
        self.check_node(node)?;
        check_len(self.primal_dim(), x.len())?;
        check_len(self.dual_dim(), y.len())?;
        let a = self.centers_a.row(node);
        let b = self.centers_b.row(node);
        let mut coupling = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for j in 0..x.len() {
            coupling += x[j] * y[j];
            dx += (x[j] - a[j]).powi(2);
            dy += (y[j] - b[j]).powi(2);
        }
        Ok(coupling + 0.5 * self.mu * dx - 0.5 * self.mu * dy)
    }

    fn local_gradient(&self, node: usize, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
        self.check_node(node)?;
        check_len(self.primal_dim(), x.len())?;
        check_len(self.dual_dim(), y.len())?;
        let a = self.centers_a.row(node);
        let b = self.centers_b.row(node);
        let gx = (0..x.len()).map(|j| y[j] + self.mu * (x[j] - a[j])).collect();
        let gy = (0..y.len()).map(|j| x[j] - self.mu * (y[j] - b[j])).collect();
        Ok((gx, gy))
    }

    fn saddle_point(&self) -> Option<DVector<f64>> {
        if self.zero_sum_centers {
            Some(DVector::zeros(self.dim()))
        } else {
            Some(self.solve_saddle())
        }
    }
}

/// Estimates `L` as the largest observed ratio `‖∇_z f_i(u) − ∇_z f_i(v)‖ /
/// ‖u − v‖` per gradient block over random standard-normal pairs. The result
/// is a lower bound on the true constant and is never certified.
pub fn estimate_smoothness(problem: &dyn SaddleProblem, samples: usize, seed: u64) -> Result<Smoothness, ProblemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, m) = (problem.primal_dim(), problem.dim());
    let mut best: f64 = 0.0;
    for s in 0..samples {
        let node = s % problem.nodes();
        let u: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let (ux, uy) = problem.local_gradient(node, &u[..p], &u[p..])?;
        let (vx, vy) = problem.local_gradient(node, &v[..p], &v[p..])?;
        let dist = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let dx = ux.iter().zip(&vx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dy = uy.iter().zip(&vy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        best = best.max(dx / dist).max(dy / dist);
    }
    Ok(Smoothness { value: best, certified: false })
}
