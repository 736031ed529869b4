// Runs DOGT at the largest stepsize the convergence guarantee covers and
// checks every per-step inequality along the trajectory.

use gossip_minimax::algorithms::{run, AlgoKind, RunOptions};
use gossip_minimax::metrics::max_stepsize;
use gossip_minimax::problem::{make_bilinear_quadratic, SaddleProblem, StackedIterate};
use gossip_minimax::verify::{check_trajectory, render_summary, LemmaConstants};
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let problem = make_bilinear_quadratic(16, 2, 2, 0.1, 7, true)?;
    let w = mixing_matrix(&build_topology(TopologyKind::Ring, 16)?, WeightScheme::Metropolis)?;
    let l = problem.smoothness().value;
    let gamma = max_stepsize(l, w.rho())?;
    let opts = RunOptions { max_iters: 1000, tol: 0.0, record_every: 1, record_states: true };
    let trace = run(AlgoKind::Dogt, &problem, &w, gamma, &StackedIterate::gaussian(&problem, 1), &opts)?;
    let constants = LemmaConstants { gamma, smoothness: l, mu: problem.mu(), rho: w.rho(), n: problem.nodes() };
    let states = trace.states.as_deref().unwrap_or_default();
    let reports = check_trajectory(states, &constants, &problem, problem.saddle_point().as_ref())?;
    Ok(format!("gamma = {gamma:.6e}, rho_W = {:.6}\n{}", w.rho(), render_summary(&reports)))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
