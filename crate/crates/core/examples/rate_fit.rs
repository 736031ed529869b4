// Empirical per-iteration rate of DOGT and ADOGT from a log-linear fit of
// the residual, next to the Lyapunov contraction factor
// `1 − min{3γμ/4, (1−ρ)/8}`.
//
// That factor is only a guarantee below `max_stepsize`; at the practical
// `γ = 0.1` used here the observed rate is much faster than the formula.

use gossip_minimax::algorithms::{run, AlgoKind, RunOptions};
use gossip_minimax::metrics::{fit_linear_rate, max_stepsize, theoretical_contraction};
use gossip_minimax::problem::{make_bilinear_quadratic, SaddleProblem, StackedIterate};
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let problem = make_bilinear_quadratic(16, 2, 2, 0.1, 7, true)?;
    let w = mixing_matrix(&build_topology(TopologyKind::Ring, 16)?, WeightScheme::Metropolis)?;
    let opts = RunOptions { max_iters: 5000, tol: 1e-14, record_every: 1, record_states: false };
    let gamma = 0.1;

    let mut out = format!(
        "gamma = {gamma}, largest certified gamma = {:.3e}\n",
        max_stepsize(problem.smoothness().value, w.rho())?
    );
    for kind in [AlgoKind::Dogt, AlgoKind::Adogt { rounds: 4 }] {
        let trace = run(kind, &problem, &w, gamma, &StackedIterate::gaussian(&problem, 1), &opts)?;
        let series: Vec<(usize, f64)> = trace.records.iter().filter_map(|r| r.residual.map(|v| (r.iteration, v))).collect();
        let mut report = fit_linear_rate(&series)?;
        report.theoretical_rate = theoretical_contraction(gamma, problem.mu(), trace.rho_effective).ok();
        out += &format!(
            "{kind}: fitted {:.6} over iterations {}..={} (R^2 {:.4}); formula factor {}\n",
            report.fitted_rate,
            report.window.0,
            report.window.1,
            report.r_squared,
            report.theoretical_rate.map_or("n/a".into(), |r| format!("{r:.6}"))
        );
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
