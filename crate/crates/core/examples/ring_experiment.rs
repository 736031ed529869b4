// The four methods side by side on a 16-node ring with heterogeneous local
// objectives: the tracking methods converge, the baselines stall.

use gossip_minimax::algorithms::{run, AlgoKind, RunOptions};
use gossip_minimax::problem::{make_bilinear_quadratic, StackedIterate};
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let problem = make_bilinear_quadratic(16, 2, 2, 0.1, 7, true)?;
    let w = mixing_matrix(&build_topology(TopologyKind::Ring, 16)?, WeightScheme::Metropolis)?;
    let z0 = StackedIterate::gaussian(&problem, 1);
    let opts = RunOptions { max_iters: 3000, tol: 1e-10, record_every: 100, record_states: false };

    let mut out = format!("{:<12} {:>8} {:>12} {:>14} {:>14}\n", "method", "iters", "comm_rounds", "residual", "consensus");
    for kind in [AlgoKind::Dgda, AlgoKind::Dogda, AlgoKind::Dogt, AlgoKind::Adogt { rounds: 4 }] {
        let trace = run(kind, &problem, &w, 0.1, &z0, &opts)?;
        let last = trace.last();
        out += &format!(
            "{:<12} {:>8} {:>12} {:>14.4e} {:>14.4e}\n",
            kind.to_string(),
            trace.iterations,
            trace.comm_rounds,
            last.residual.unwrap_or(f64::NAN),
            last.consensus_error
        );
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
