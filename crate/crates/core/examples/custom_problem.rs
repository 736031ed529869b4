// Plugging a user-defined objective into the solvers.
//
// Node `i` holds `f_i(x, y) = μ/2‖x − a_i‖² + yᵀBx − μ/2‖y − b_i‖²` with a
// shared rectangular coupling `B ∈ ℝ^{d×p}`, so `p ≠ d` is allowed here.

use gossip_minimax::algorithms::{run, AlgoKind, RunOptions};
use gossip_minimax::problem::{ProblemError, SaddleProblem, Smoothness, StackedIterate};
use gossip_minimax::verify::gradient_relative_error;
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};
use nalgebra::{DMatrix, DVector};

struct CoupledQuadratic {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    coupling: DMatrix<f64>,
    mu: f64,
}

impl CoupledQuadratic {
    fn new(n: usize, p: usize, d: usize, mu: f64) -> Self {
        // Deterministic, mildly heterogeneous data.
        let a = DMatrix::from_fn(n, p, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let b = DMatrix::from_fn(n, d, |i, j| ((i * 5 + j) % 3) as f64 - 1.0);
        let coupling = DMatrix::from_fn(d, p, |i, j| if i == j { 1.0 } else { 0.25 });
        CoupledQuadratic { a, b, coupling, mu }
    }

    fn check(&self, node: usize) -> Result<(), ProblemError> {
        if node < self.a.nrows() {
            Ok(())
        } else {
            Err(ProblemError::NodeIndex { index: node, n: self.a.nrows() })
        }
    }
}

impl SaddleProblem for CoupledQuadratic {
    fn nodes(&self) -> usize {
        self.a.nrows()
    }

    fn primal_dim(&self) -> usize {
        self.a.ncols()
    }

    fn dual_dim(&self) -> usize {
        self.b.ncols()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    /// The field's Jacobian is `μI` plus a skew block, so its norm is
    /// `√(μ² + σ_max(B)²)`.
    fn smoothness(&self) -> Smoothness {
        let s = self.coupling.singular_values().max();
        Smoothness { value: (self.mu * self.mu + s * s).sqrt(), certified: true }
    }

    fn local_value(&self, node: usize, x: &[f64], y: &[f64]) -> Result<f64, ProblemError> {
        self.check(node)?;
        let (x, y) = (DVector::from_column_slice(x), DVector::from_column_slice(y));
        let dx = &x - self.a.row(node).transpose();
        let dy = &y - self.b.row(node).transpose();
        Ok(0.5 * self.mu * dx.norm_squared() + y.dot(&(&self.coupling * &x)) - 0.5 * self.mu * dy.norm_squared())
    }

    fn local_gradient(&self, node: usize, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
        self.check(node)?;
        let (x, y) = (DVector::from_column_slice(x), DVector::from_column_slice(y));
        let gx = (&x - self.a.row(node).transpose()) * self.mu + self.coupling.transpose() * &y;
        let gy = &self.coupling * &x - (&y - self.b.row(node).transpose()) * self.mu;
        Ok((gx.as_slice().to_vec(), gy.as_slice().to_vec()))
    }

    /// Zero of the averaged field: `[[μI, Bᵀ], [−B, μI]] z = μ[ā; b̄]`.
    fn saddle_point(&self) -> Option<DVector<f64>> {
        let (p, d) = (self.primal_dim(), self.dual_dim());
        let mut k = DMatrix::zeros(p + d, p + d);
        k.view_mut((0, 0), (p, p)).fill_with_identity();
        k.view_mut((p, p), (d, d)).fill_with_identity();
        k *= self.mu;
        k.view_mut((0, p), (p, d)).copy_from(&self.coupling.transpose());
        k.view_mut((p, 0), (d, p)).copy_from(&(-&self.coupling));
        let mut rhs = DVector::zeros(p + d);
        rhs.rows_mut(0, p).copy_from(&(self.a.row_mean().transpose() * self.mu));
        rhs.rows_mut(p, d).copy_from(&(self.b.row_mean().transpose() * self.mu));
        k.lu().solve(&rhs)
    }
}

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let problem = CoupledQuadratic::new(10, 3, 2, 0.5);
    let mut worst = 0.0f64;
    for node in 0..problem.nodes() {
        worst = worst.max(gradient_relative_error(&problem, node, &[0.3, -1.0, 2.0, 0.7, -0.4], 1e-6)?);
    }

    let w = mixing_matrix(&build_topology(TopologyKind::Ring, 10)?, WeightScheme::Metropolis)?;
    let z0 = StackedIterate::zeros(&problem);
    let opts = RunOptions { max_iters: 5000, tol: 1e-10, record_every: 50, record_states: false };
    let trace = run(AlgoKind::Dogt, &problem, &w, 0.2, &z0, &opts)?;
    let z_star = problem.saddle_point().ok_or("singular saddle system")?;
    Ok(format!(
        "gradient check: max relative error {worst:.2e}\n\
         saddle point: {:?}\n\
         dogt: {} after {} iterations, residual {:.3e}, consensus {:.3e}\n",
        z_star.as_slice(),
        trace.termination.as_str(),
        trace.iterations,
        trace.last().residual.unwrap_or(f64::NAN),
        trace.last().consensus_error
    ))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
