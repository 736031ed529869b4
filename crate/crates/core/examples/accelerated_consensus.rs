// How many momentum gossip rounds it takes to halve the consensus gap on
// rings of growing size, and how the result compares with the closed-form
// bound `2(1 − √(1 − √ρ_W))^{2T}`.

use gossip_minimax::verify::check_rho_m;
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let mut out = format!("{:>4} {:>10} {:>3} {:>10} {:>12} {:>10}\n", "n", "rho_W", "T", "rho_M", "bound", "gap>=1/2");
    for n in [4usize, 8, 16, 32, 64] {
        let w = mixing_matrix(&build_topology(TopologyKind::Ring, n)?, WeightScheme::Metropolis)?;
        let t = gossip_minimax::graph::recommended_rounds(w.rho())?;
        let check = check_rho_m(&w, t)?;
        out += &format!(
            "{n:>4} {:>10.6} {t:>3} {:>10.6} {:>12.6} {:>10}\n",
            check.rho_w,
            check.rho_m,
            check.analytic_bound,
            1.0 - check.rho_m >= 0.5
        );
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
