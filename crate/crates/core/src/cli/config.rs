//! TOML experiment configuration and its resolution into runnable pieces.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::algorithms::AlgoKind;
use crate::graph::{self, build_topology, mixing_matrix, MixingMatrix, TopologyKind, WeightScheme};
use crate::metrics;
use crate::problem::{make_bilinear_quadratic, BilinearQuadratic, SaddleProblem, StackedIterate};

use super::CliError;

/// Runs that keep full states are capped at this many iterations.
pub const MAX_RECORDED_STATE_ITERS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    #[serde(default)]
    pub init: InitConfig,
    /// Single algorithm for `run` and `verify`.
    pub algorithm: Option<AlgorithmConfig>,
    /// Algorithm list for `compare`.
    #[serde(default)]
    pub algorithms: Vec<AlgorithmConfig>,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(rename = "type")]
    pub kind: String,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub mu: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub zero_sum_centers: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub topology: String,
    pub n: usize,
    #[serde(default)]
    pub weight_scheme: WeightScheme,
    pub edge_probability: Option<f64>,
    pub seed: Option<u64>,
}

/// Starting point shared by every algorithm of an experiment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Zeros,
    Constant { value: f64 },
    /// Independent standard-normal entries per node.
    Gaussian { seed: u64 },
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Gaussian { seed: 1 }
    }
}

impl InitConfig {
    pub fn describe(&self) -> String {
        match self {
            InitConfig::Zeros => "zeros".into(),
            InitConfig::Constant { value } => format!("constant({value})"),
            InitConfig::Gaussian { seed } => format!("gaussian(seed={seed})"),
        }
    }
}

/// A number or the keyword `"auto"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Tunable<T> {
    Value(T),
    Keyword(String),
}

impl<T: Copy> Tunable<T> {
    fn resolve(&self, field: &str, auto: impl FnOnce() -> Result<T, CliError>) -> Result<(T, bool), CliError> {
        match self {
            Tunable::Value(v) => Ok((*v, false)),
            Tunable::Keyword(k) if k == "auto" => auto().map(|v| (v, true)),
            Tunable::Keyword(k) => Err(CliError::Config(format!("{field}: expected a number or \"auto\", got {k:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: String,
    pub gamma: Tunable<f64>,
    #[serde(rename = "T")]
    pub rounds: Option<Tunable<usize>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub max_iters: usize,
    pub tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub record_states: bool,
    pub out_dir: PathBuf,
}

fn default_record_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Algorithms for `compare`: the list if present, else the single block.
    pub fn algorithm_list(&self) -> Vec<AlgorithmConfig> {
        if self.algorithms.is_empty() {
            self.algorithm.iter().cloned().collect()
        } else {
            self.algorithms.clone()
        }
    }
}

/// Problem, network and starting point built from a config.
pub struct Setup {
    pub problem: BilinearQuadratic,
    pub mixing: MixingMatrix,
    pub z0: StackedIterate,
    pub topology: TopologyKind,
}

/// An algorithm block with every `"auto"` replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAlgorithm {
    pub label: String,
    pub kind: AlgoKind,
    pub gamma: f64,
    pub gamma_auto: bool,
    pub rounds_auto: bool,
    pub rho_effective: f64,
}

fn parse_topology(g: &GraphConfig) -> Result<TopologyKind, CliError> {
    Ok(match g.topology.as_str() {
        "ring" => TopologyKind::Ring,
        "path" => TopologyKind::Path,
        "star" => TopologyKind::Star,
        "complete" => TopologyKind::Complete,
        "random" => TopologyKind::Random {
            edge_probability: g
                .edge_probability
                .ok_or_else(|| CliError::Config("graph.edge_probability is required for random graphs".into()))?,
            seed: g.seed.ok_or_else(|| CliError::Config("graph.seed is required for random graphs".into()))?,
        },
        other => return Err(CliError::Config(format!("unknown topology {other:?}"))),
    })
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let pc = &cfg.problem;
    if pc.kind != "bilinear_quadratic" {
        return Err(CliError::Config(format!("unsupported problem type {:?}", pc.kind)));
    }
    if pc.n != cfg.graph.n {
        return Err(CliError::Config(format!("problem.n = {} but graph.n = {}", pc.n, cfg.graph.n)));
    }
    let r = &cfg.run;
    if r.record_every == 0 {
        return Err(CliError::Config("run.record_every must be positive".into()));
    }
    if r.tol.is_nan() || r.tol < 0.0 {
        return Err(CliError::Config(format!("run.tol must be non-negative, got {}", r.tol)));
    }
    if r.record_states && r.max_iters > MAX_RECORDED_STATE_ITERS {
        return Err(CliError::Config(format!(
            "run.record_states needs run.max_iters <= {MAX_RECORDED_STATE_ITERS}, got {}",
            r.max_iters
        )));
    }
    let problem = make_bilinear_quadratic(pc.n, pc.p, pc.d, pc.mu, pc.seed, pc.zero_sum_centers)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let topology = parse_topology(&cfg.graph)?;
    let graph = build_topology(topology, cfg.graph.n).map_err(|e| CliError::Config(e.to_string()))?;
    let mixing = mixing_matrix(&graph, cfg.graph.weight_scheme).map_err(|e| CliError::Config(e.to_string()))?;
    let z0 = match cfg.init {
        InitConfig::Zeros => StackedIterate::zeros(&problem),
        InitConfig::Constant { value } => {
            StackedIterate::broadcast(&problem, &nalgebra::DVector::from_element(problem.dim(), value))
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        InitConfig::Gaussian { seed } => StackedIterate::gaussian(&problem, seed),
    };
    Ok(Setup { problem, mixing, z0, topology })
}

pub fn resolve_algorithm(a: &AlgorithmConfig, setup: &Setup) -> Result<ResolvedAlgorithm, CliError> {
    let rho_w = setup.mixing.rho();
    let (kind, rounds_auto) = match a.name.as_str() {
        "dgda" => (AlgoKind::Dgda, false),
        "dogda" => (AlgoKind::Dogda, false),
        "dogt" => (AlgoKind::Dogt, false),
        "adogt" => {
            let setting = a.rounds.clone().unwrap_or(Tunable::Keyword("auto".into()));
            let (rounds, auto) = setting.resolve("algorithm.T", || {
                graph::recommended_rounds(rho_w).map_err(|e| CliError::Config(e.to_string()))
            })?;
            if rounds == 0 {
                return Err(CliError::Config("algorithm.T must be at least 1".into()));
            }
            (AlgoKind::Adogt { rounds }, auto)
        }
        other => return Err(CliError::Config(format!("unknown algorithm {other:?}"))),
    };
    let rho_effective = match kind {
        AlgoKind::Adogt { rounds } => graph::accelerated_matrix(&setup.mixing, rounds)
            .map_err(|e| CliError::Config(e.to_string()))?
            .rho(),
        _ => rho_w,
    };
    let smoothness = setup.problem.smoothness().value;
    let (gamma, gamma_auto) = a.gamma.resolve("algorithm.gamma", || {
        metrics::max_stepsize(smoothness, rho_effective)
            .map_err(|e| CliError::Config(format!("cannot resolve gamma = \"auto\": {e}")))
    })?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CliError::Config(format!("algorithm.gamma must be positive, got {gamma}")));
    }
    Ok(ResolvedAlgorithm { label: a.name.clone(), kind, gamma, gamma_auto, rounds_auto, rho_effective })
}
