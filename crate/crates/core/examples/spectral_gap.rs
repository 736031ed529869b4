// Spectral gap `ρ = ‖W − J‖₂²` for common topologies and both weight
// schemes, with the dense and power-iteration paths side by side.

use gossip_minimax::graph::{spectral_gap_of, SpectralMethod};
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let kinds = [
        ("ring", TopologyKind::Ring),
        ("path", TopologyKind::Path),
        ("star", TopologyKind::Star),
        ("complete", TopologyKind::Complete),
        ("random(0.3)", TopologyKind::Random { edge_probability: 0.3, seed: 42 }),
    ];
    let mut out = format!("{:<12} {:>4} {:<16} {:>12} {:>12}\n", "topology", "n", "weights", "rho(dense)", "rho(power)");
    for (name, kind) in kinds {
        let topology = build_topology(kind, 16)?;
        for scheme in [WeightScheme::Metropolis, WeightScheme::LazyMaxDegree] {
            let w = mixing_matrix(&topology, scheme)?;
            let dense = spectral_gap_of(w.weights(), SpectralMethod::Dense)?;
            let power = spectral_gap_of(w.weights(), SpectralMethod::PowerIteration)?;
            out += &format!("{name:<12} {:>4} {:<16} {dense:>12.6} {power:>12.6}\n", 16, format!("{scheme:?}"));
        }
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
