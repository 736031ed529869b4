//! Config-driven experiments: `run`, `compare` and `verify`.
//!
//! Every command validates the whole config before touching the output
//! directory, so a config error never leaves files behind.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::algorithms::{self, AlgoError, AlgoKind, RunOptions, Trace};
use crate::graph;
use crate::metrics::{self, fit_linear_rate};
use crate::problem::SaddleProblem;
use crate::verify::{self, CheckStatus, LemmaCheckReport, LemmaConstants, RhoMCheck};

pub use config::{
    build_setup, resolve_algorithm, AlgorithmConfig, ExperimentConfig, InitConfig, ResolvedAlgorithm, Setup, Tunable,
};
pub use output::{render_trace_csv, Manifest, CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_CHECK_FAILED: i32 = 5;
pub const EXIT_PRECONDITION: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{label} diverged at iteration {iteration}")]
    Diverged { label: String, iteration: usize },
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Algorithm(AlgoError),
    #[error(transparent)]
    Verify(#[from] verify::VerifyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged { .. } => EXIT_DIVERGED,
            CliError::Io { .. } => EXIT_IO,
            CliError::Algorithm(_) | CliError::Verify(_) => EXIT_INTERNAL,
        }
    }

    fn from_algo(label: &str, e: AlgoError) -> Self {
        match e {
            AlgoError::Diverged { iteration } => CliError::Diverged { label: label.to_string(), iteration },
            AlgoError::InvalidParameter(msg) => CliError::Config(msg),
            other => CliError::Algorithm(other),
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions {
        max_iters: cfg.run.max_iters,
        tol: cfg.run.tol,
        record_every: cfg.run.record_every,
        record_states: cfg.run.record_states,
    }
}

fn out_dir(cfg: &ExperimentConfig, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf).unwrap_or_else(|| cfg.run.out_dir.clone())
}

fn log_auto(a: &ResolvedAlgorithm) {
    if a.gamma_auto {
        eprintln!("{}: gamma = \"auto\" resolved to {:.6e}", a.label, a.gamma);
    }
    if a.rounds_auto {
        if let AlgoKind::Adogt { rounds } = a.kind {
            eprintln!("{}: T = \"auto\" resolved to {rounds}", a.label);
        }
    }
}

/// Shared manifest sections: problem, graph, init, run.
fn base_manifest(cfg: &ExperimentConfig, setup: &Setup) -> Manifest {
    let mut m = Manifest::default();
    let pc = &cfg.problem;
    let smoothness = setup.problem.smoothness();
    m.section("problem")
        .text("type", &pc.kind)
        .int("n", pc.n)
        .int("p", pc.p)
        .int("d", pc.d)
        .num("mu", pc.mu)
        .int("seed", pc.seed as usize)
        .flag("zero_sum_centers", pc.zero_sum_centers)
        .num("L", smoothness.value)
        .flag("L_certified", smoothness.certified)
        .num("kappa", setup.problem.condition_number())
        .flag("saddle_point_known", setup.problem.saddle_point().is_some());
    m.section("graph")
        .text("topology", &cfg.graph.topology)
        .int("n", cfg.graph.n)
        .text("weight_scheme", &format!("{:?}", cfg.graph.weight_scheme).to_lowercase())
        .num("rho_W", setup.mixing.rho());
    if let Some(p) = cfg.graph.edge_probability {
        m.num("edge_probability", p);
    }
    if let Some(s) = cfg.graph.seed {
        m.int("seed", s as usize);
    }
    m.section("init").text("kind", &cfg.init.describe());
    m.section("run")
        .int("max_iters", cfg.run.max_iters)
        .num("tol", cfg.run.tol)
        .int("record_every", cfg.run.record_every)
        .flag("record_states", cfg.run.record_states)
        .text(
            "lyapunov_column",
            if setup.problem.saddle_point().is_some() {
                "populated where rho < 1"
            } else {
                "empty: saddle point unknown"
            },
        );
    m
}

/// Resolved algorithm constants plus, when present, its run outcome.
fn algorithm_manifest(m: &mut Manifest, section: &str, a: &ResolvedAlgorithm, setup: &Setup, trace: Option<&Trace>) {
    let smoothness = setup.problem.smoothness().value;
    m.section(section)
        .text("name", a.kind.name())
        .num("gamma", a.gamma)
        .flag("gamma_auto", a.gamma_auto);
    if let AlgoKind::Adogt { rounds } = a.kind {
        m.int("T", rounds).flag("T_auto", a.rounds_auto).num("rho_M", a.rho_effective);
    }
    m.num("rho_effective", a.rho_effective);
    if let Ok(g) = metrics::max_stepsize(smoothness, a.rho_effective) {
        m.num("max_stepsize", g);
    }
    if let Ok(r) = metrics::theoretical_contraction(a.gamma, setup.problem.mu(), a.rho_effective) {
        m.num("theoretical_rate", r);
    }
    if let Ok(k) = metrics::iteration_complexity(setup.problem.condition_number(), a.rho_effective) {
        m.num("iteration_complexity", k);
    }
    if let Some(t) = trace {
        m.text("termination", t.termination.as_str()).int("iterations", t.iterations).int("comm_rounds", t.comm_rounds);
    }
}

fn file_stem(labels: &[String], i: usize) -> String {
    let base = &labels[i];
    if labels.iter().filter(|l| *l == base).count() > 1 {
        format!("{base}_{i}")
    } else {
        base.clone()
    }
}

/// Outcome of [`run_command`].
#[derive(Debug)]
pub struct RunOutcome {
    pub algorithm: ResolvedAlgorithm,
    pub trace: Trace,
    pub out_dir: PathBuf,
    pub summary: String,
}

pub fn run_command(config_path: &Path, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    run_config(&ExperimentConfig::load(config_path)?, out)
}

/// Single run; writes `trace.csv`, `manifest.toml` and `problem.txt`.
pub fn run_config(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    let setup = build_setup(cfg)?;
    let block = cfg.algorithm.as_ref().ok_or_else(|| CliError::Config("missing [algorithm] block".into()))?;
    let alg = resolve_algorithm(block, &setup)?;
    log_auto(&alg);
    let dir = out_dir(cfg, out);
    let trace = algorithms::run(alg.kind, &setup.problem, &setup.mixing, alg.gamma, &setup.z0, &run_options(cfg))
        .map_err(|e| CliError::from_algo(&alg.label, e))?;

    let mut manifest = base_manifest(cfg, &setup);
    algorithm_manifest(&mut manifest, "algorithm", &alg, &setup, Some(&trace));
    create_dir(&dir)?;
    write_file(&dir, "trace.csv", &render_trace_csv(&trace))?;
    write_file(&dir, "manifest.toml", &manifest.render())?;
    write_file(&dir, "problem.txt", &setup.problem.to_record())?;

    let last = trace.last();
    let summary = format!(
        "{} gamma={:.6e} {} after {} iterations ({} comm rounds): residual={} consensus_error={:.6e}",
        alg.kind,
        alg.gamma,
        trace.termination.as_str(),
        trace.iterations,
        trace.comm_rounds,
        last.residual.map(|r| format!("{r:.6e}")).unwrap_or_else(|| "n/a".into()),
        last.consensus_error
    );
    Ok(RunOutcome { algorithm: alg, trace, out_dir: dir, summary })
}

/// One row of the comparison table.
#[derive(Debug)]
pub struct CompareEntry {
    pub algorithm: ResolvedAlgorithm,
    pub result: Result<Trace, CliError>,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub entries: Vec<CompareEntry>,
    pub report: String,
    pub out_dir: PathBuf,
}

pub fn compare_command(config_path: &Path, out: Option<&Path>) -> Result<CompareOutcome, CliError> {
    compare_config(&ExperimentConfig::load(config_path)?, out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into())
}

pub fn render_report(entries: &[CompareEntry], tol: f64) -> String {
    let mut out = format!(
        "{:<14} {:>14} {:>14} {:>14} {:>12} {:>13} {:>14}\n",
        "algorithm", "gamma", "final_residual", "final_consens", "iters_to_tol", "comm_rounds", "fitted_rate"
    );
    for e in entries {
        let name = e.algorithm.kind.to_string();
        match &e.result {
            Ok(t) => {
                let last = t.last();
                let hit = t.first_below(tol).map(|k| k.to_string()).unwrap_or_else(|| "not reached".into());
                let series: Vec<(usize, f64)> =
                    t.records.iter().filter_map(|r| r.residual.map(|v| (r.iteration, v))).collect();
                let rate = fit_linear_rate(&series).ok().map(|r| r.fitted_rate);
                let _ = writeln!(
                    out,
                    "{:<14} {:>14.6e} {:>14} {:>14.6e} {:>12} {:>13} {:>14}",
                    name,
                    e.algorithm.gamma,
                    fmt_opt(last.residual),
                    last.consensus_error,
                    hit,
                    t.comm_rounds,
                    fmt_opt(rate)
                );
            }
            Err(err) => {
                let _ = writeln!(out, "{:<14} {:>14.6e} {}", name, e.algorithm.gamma, err);
            }
        }
    }
    out
}

/// Runs every listed algorithm concurrently on the shared problem and
/// graph. A diverging member is reported in the table, not returned as an
/// error.
pub fn compare_config(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<CompareOutcome, CliError> {
    let setup = build_setup(cfg)?;
    let blocks = cfg.algorithm_list();
    if blocks.is_empty() {
        return Err(CliError::Config("compare needs [[algorithms]] entries".into()));
    }
    let resolved = blocks.iter().map(|b| resolve_algorithm(b, &setup)).collect::<Result<Vec<_>, _>>()?;
    resolved.iter().for_each(log_auto);
    let opts = run_options(cfg);
    let dir = out_dir(cfg, out);

    let results: Vec<Result<Trace, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = resolved
            .iter()
            .map(|a| {
                let (setup, opts) = (&setup, &opts);
                s.spawn(move || {
                    algorithms::run(a.kind, &setup.problem, &setup.mixing, a.gamma, &setup.z0, opts)
                        .map_err(|e| CliError::from_algo(&a.label, e))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    if let Some(Err(e)) = results.iter().find(|r| matches!(r, Err(CliError::Config(_)))) {
        return Err(CliError::Config(e.to_string()));
    }
    let entries: Vec<CompareEntry> =
        resolved.into_iter().zip(results).map(|(algorithm, result)| CompareEntry { algorithm, result }).collect();

    let labels: Vec<String> = entries.iter().map(|e| e.algorithm.label.clone()).collect();
    let mut manifest = base_manifest(cfg, &setup);
    create_dir(&dir)?;
    for (i, e) in entries.iter().enumerate() {
        let stem = file_stem(&labels, i);
        algorithm_manifest(&mut manifest, &format!("algorithms.{stem}"), &e.algorithm, &setup, e.result.as_ref().ok());
        match &e.result {
            Ok(t) => {
                write_file(&dir, &format!("trace_{stem}.csv"), &render_trace_csv(t))?;
            }
            Err(err) => {
                manifest.text("error", &err.to_string());
            }
        }
    }
    let report = render_report(&entries, cfg.run.tol);
    write_file(&dir, "comparison.txt", &report)?;
    write_file(&dir, "manifest.toml", &manifest.render())?;
    write_file(&dir, "problem.txt", &setup.problem.to_record())?;
    Ok(CompareOutcome { entries, report, out_dir: dir })
}

#[derive(Debug)]
pub struct VerifyOutcome {
    pub algorithm: ResolvedAlgorithm,
    pub reports: Vec<LemmaCheckReport>,
    pub rho_m: Option<RhoMCheck>,
    pub summary: String,
    pub out_dir: PathBuf,
}

impl VerifyOutcome {
    /// Failed inequalities dominate violated preconditions.
    pub fn exit_code(&self) -> i32 {
        let statuses: Vec<CheckStatus> = self.reports.iter().map(LemmaCheckReport::status).collect();
        if statuses.contains(&CheckStatus::Failed) {
            EXIT_CHECK_FAILED
        } else if statuses.contains(&CheckStatus::PreconditionViolated) {
            EXIT_PRECONDITION
        } else {
            EXIT_OK
        }
    }
}

pub fn verify_command(config_path: &Path, out: Option<&Path>) -> Result<VerifyOutcome, CliError> {
    verify_config(&ExperimentConfig::load(config_path)?, out)
}

/// Runs the configured DOGT/ADOGT, checks every lemma along the stored
/// trajectory and the accelerated-consensus bound, and writes
/// `lemma_report.txt`, `lemma_margins.csv`, `trace.csv` and `manifest.toml`.
///
/// The accelerated-consensus check uses the configured `T` for ADOGT and
/// the recommended `T` otherwise.
pub fn verify_config(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<VerifyOutcome, CliError> {
    if !cfg.run.record_states {
        return Err(CliError::Config("verify needs run.record_states = true".into()));
    }
    if cfg.run.record_every != 1 {
        return Err(CliError::Config("verify needs run.record_every = 1".into()));
    }
    let setup = build_setup(cfg)?;
    let block = cfg.algorithm.as_ref().ok_or_else(|| CliError::Config("missing [algorithm] block".into()))?;
    let alg = resolve_algorithm(block, &setup)?;
    if !alg.kind.tracks_gradient() {
        return Err(CliError::Config(format!("verify runs dogt or adogt, not {}", alg.kind.name())));
    }
    let smoothness = setup.problem.smoothness();
    if !smoothness.certified {
        return Err(CliError::Config("verify needs a certified smoothness constant".into()));
    }
    let z_star = setup.problem.saddle_point().ok_or_else(|| CliError::Config("verify needs a known saddle point".into()))?;
    let rho_w = setup.mixing.rho();
    let rounds = match alg.kind {
        AlgoKind::Adogt { rounds } => Some(rounds),
        _ => graph::recommended_rounds(rho_w).ok(),
    };
    log_auto(&alg);
    let dir = out_dir(cfg, out);

    let trace = algorithms::run(alg.kind, &setup.problem, &setup.mixing, alg.gamma, &setup.z0, &run_options(cfg))
        .map_err(|e| CliError::from_algo(&alg.label, e))?;
    let states = trace.states.as_deref().unwrap_or_default();
    let constants = LemmaConstants {
        gamma: alg.gamma,
        smoothness: smoothness.value,
        mu: setup.problem.mu(),
        rho: alg.rho_effective,
        n: setup.problem.nodes(),
    };
    let mut reports = verify::check_trajectory(states, &constants, &setup.problem, Some(&z_star))?;
    let rho_m = match rounds {
        Some(t) if rho_w < 1.0 => Some(verify::check_rho_m(&setup.mixing, t)?),
        _ => None,
    };
    if let Some(c) = &rho_m {
        reports.push(c.report.clone());
    }

    let mut summary = format!(
        "verify {} gamma={:.6e} rho_effective={:.6e} steps={}\n",
        alg.kind,
        alg.gamma,
        alg.rho_effective,
        states.len().saturating_sub(1)
    );
    summary.push_str(&verify::render_summary(&reports));
    if let Some(c) = &rho_m {
        let _ = writeln!(
            summary,
            "rho_M(T={})={:.6e} analytic_bound={:.6e} recommended_T={}",
            c.rounds, c.rho_m, c.analytic_bound, c.recommended_rounds
        );
    }

    let mut manifest = base_manifest(cfg, &setup);
    algorithm_manifest(&mut manifest, "algorithm", &alg, &setup, Some(&trace));
    manifest.section("verify");
    for r in &reports {
        manifest.text(r.lemma.as_str(), r.status().as_str());
    }
    create_dir(&dir)?;
    write_file(&dir, "trace.csv", &render_trace_csv(&trace))?;
    write_file(&dir, "lemma_report.txt", &summary)?;
    write_file(&dir, "lemma_margins.csv", &verify::render_margins_csv(&reports))?;
    write_file(&dir, "manifest.toml", &manifest.render())?;
    write_file(&dir, "problem.txt", &setup.problem.to_record())?;
    Ok(VerifyOutcome { algorithm: alg, reports, rho_m, summary, out_dir: dir })
}

#[derive(Debug, Parser)]
#[command(name = "gossip-minimax", version, about = "Decentralized saddle-point experiments over gossip networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `run.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the single `[algorithm]` of a config.
    Run(CommonArgs),
    /// Run every `[[algorithms]]` entry and tabulate the results.
    Compare(CommonArgs),
    /// Check the convergence inequalities along a DOGT/ADOGT trajectory.
    Verify(CommonArgs),
}

/// Parses arguments, executes the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run_command(&a.config, a.out.as_deref()).map(|o| {
            println!("{}", o.summary);
            EXIT_OK
        }),
        Command::Compare(a) => compare_command(&a.config, a.out.as_deref()).map(|o| {
            print!("{}", o.report);
            EXIT_OK
        }),
        Command::Verify(a) => verify_command(&a.config, a.out.as_deref()).map(|o| {
            print!("{}", o.summary);
            o.exit_code()
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
