mod common;

use std::path::{Path, PathBuf};

use common::*;
use gossip_minimax::algorithms::{run, AlgoKind, RunOptions};
use gossip_minimax::cli::{
    self, compare_config, run_config, verify_config, CliError, ExperimentConfig, CSV_HEADER, EXIT_CHECK_FAILED, EXIT_CONFIG,
    EXIT_DIVERGED, EXIT_OK, EXIT_PRECONDITION,
};
use gossip_minimax::problem::{BilinearQuadratic, SaddleProblem, StackedIterate};
use gossip_minimax::verify::{CheckStatus, LemmaId};
use gossip_minimax::{build_topology, mixing_matrix, TopologyKind, WeightScheme};
use nalgebra::DMatrix;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> String {
    std::fs::read_to_string(config_dir().join(name)).unwrap()
}

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn invoke(sub: &str, config: &Path, out: &Path) -> i32 {
    cli::main_with_args(["gossip-minimax", sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cli::build_setup(&cfg).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn node_count_mismatch_is_a_config_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let text = load("ring16_dogt.toml").replace("topology = \"ring\"\nn = 16", "topology = \"ring\"\nn = 12");
    let config = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    for sub in ["run", "compare", "verify"] {
        assert_eq!(invoke(sub, &config, &out), EXIT_CONFIG, "{sub}");
    }
    assert!(!out.exists());
}

#[test]
fn missing_config_and_bad_arguments_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(invoke("run", &tmp.path().join("nope.toml"), tmp.path()), EXIT_CONFIG);
    assert_eq!(cli::main_with_args(["gossip-minimax", "run"]), EXIT_CONFIG);
    assert_eq!(cli::main_with_args(["gossip-minimax", "frobnicate", "--config", "x"]), EXIT_CONFIG);
}

#[test]
fn run_writes_trace_manifest_and_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let text = load("ring16_dogt.toml").replace("max_iters = 10000", "max_iters = 25");
    let config = write_config(tmp.path(), &text);
    let out = tmp.path().join("run");
    assert_eq!(invoke("run", &config, &out), EXIT_OK);

    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = csv.split_terminator('\n').collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 27);
    assert!(!csv.contains('\r'));
    assert!(csv.ends_with('\n'));
    for line in &lines[1..] {
        assert_eq!(line.trim_end(), *line);
        for field in line.split(',').skip(2) {
            let mantissa = field.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
        }
    }

    // First row against values recomputed from the generated instance.
    let inst = ring16();
    let z0 = to_mat(StackedIterate::gaussian(&inst.problem, 1).matrix());
    let s0 = ostate(&inst, z0.clone());
    let expected = format!(
        "0,0,{:.16e},{:.16e},{:.16e},{:.16e},",
        frob_sq(&z0) / 16.0,
        dev_sq(&z0).sqrt() / 16.0,
        dev_sq(&s0.r),
        xi(&s0, 0.1, &[0.0; 4]).iter().map(|v| v * v).sum::<f64>(),
    );
    assert!(lines[1].starts_with(&expected), "{}\n{expected}", lines[1]);

    let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    let rho = manifest["graph"]["rho_W"].as_float().unwrap();
    assert!((rho - rho_ring_circulant(16)).abs() < 1e-12);
    assert_eq!(manifest["algorithm"]["gamma"].as_float(), Some(0.1));
    assert_eq!(manifest["algorithm"]["gamma_auto"].as_bool(), Some(false));
    assert_eq!(manifest["algorithm"]["iterations"].as_integer(), Some(25));
    assert!(manifest["problem"]["kappa"].as_float().is_some());
    assert!(manifest["algorithm"]["max_stepsize"].as_float().is_some());

    let record = std::fs::read_to_string(out.join("problem.txt")).unwrap();
    assert_eq!(BilinearQuadratic::from_record(&record).unwrap(), inst.problem);
}

#[test]
fn auto_settings_are_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let text = load("ring16_adogt.toml").replace("gamma = 0.1\nT = 4", "gamma = \"auto\"\nT = \"auto\"").replace(
        "max_iters = 10000",
        "max_iters = 5",
    );
    let outcome = run_config(&parse(&text), Some(tmp.path())).unwrap();
    assert_eq!(outcome.algorithm.kind, AlgoKind::Adogt { rounds: 4 });
    let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(tmp.path().join("manifest.toml")).unwrap()).unwrap();
    let alg = &manifest["algorithm"];
    assert_eq!(alg["T"].as_integer(), Some(4));
    assert_eq!(alg["T_auto"].as_bool(), Some(true));
    assert_eq!(alg["gamma_auto"].as_bool(), Some(true));
    assert_eq!(alg["gamma"].as_float(), alg["max_stepsize"].as_float());
    assert!(alg["rho_M"].as_float().unwrap() < 0.5);
}

#[test]
fn adogt_reaches_tolerance_in_fewer_iterations() {
    let dogt = run_config(&parse(&load("ring16_dogt.toml")), Some(tempfile::tempdir().unwrap().path())).unwrap();
    let adogt = run_config(&parse(&load("ring16_adogt.toml")), Some(tempfile::tempdir().unwrap().path())).unwrap();
    assert!(dogt.trace.last().residual.unwrap() <= 1e-10);
    assert!(adogt.trace.iterations < dogt.trace.iterations);
    assert_eq!(adogt.trace.comm_rounds, 4 * adogt.trace.iterations);
}

#[test]
fn divergence_is_fatal_for_run_but_reported_by_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let text = load("ring16_dogt.toml").replace("gamma = 0.1", "gamma = 50.0").replace("name = \"dogt\"", "name = \"dgda\"");
    let config = write_config(tmp.path(), &text);
    assert_eq!(invoke("run", &config, &tmp.path().join("r")), EXIT_DIVERGED);
    let err = run_config(&parse(&text), Some(tmp.path())).unwrap_err();
    assert!(matches!(err, CliError::Diverged { .. }));

    let cmp_text = load("ring16_compare.toml").replacen("gamma = 0.1", "gamma = 50.0", 1).replace("max_iters = 10000", "max_iters = 2000");
    let out = tmp.path().join("c");
    let outcome = compare_config(&parse(&cmp_text), Some(&out)).unwrap();
    assert!(matches!(outcome.entries[0].result, Err(CliError::Diverged { .. })));
    assert!(outcome.entries[2].result.is_ok());
    assert!(outcome.report.contains("diverged"));
    assert!(!out.join("trace_dgda.csv").exists());
    assert!(out.join("trace_dogt.csv").exists());
}

#[test]
fn single_node_rows_match_between_dogt_and_dogda() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = compare_config(&parse(&load("single_node_compare.toml")), Some(tmp.path())).unwrap();
    // The tracker update r + g⁺ − g equals g⁺ only up to rounding, so the
    // traces agree to the last few ulps rather than bitwise.
    let read = |name: &str| -> Vec<Vec<f64>> {
        std::fs::read_to_string(tmp.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
            .collect()
    };
    let (a, b) = (read("trace_dogda.csv"), read("trace_dogt.csv"));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for ((x, y), x0) in ra.iter().zip(rb).zip(&a[0]) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(x0.abs()), "{x} vs {y}");
        }
    }
    let rows: Vec<&str> = outcome.report.lines().skip(1).collect();
    assert_eq!(rows[0].split_whitespace().skip(1).collect::<Vec<_>>(), rows[1].split_whitespace().skip(1).collect::<Vec<_>>());
}

#[test]
fn homogeneous_instance_from_origin_stops_immediately() {
    let problem = BilinearQuadratic::from_centers(DMatrix::zeros(8, 2), DMatrix::zeros(8, 2), 0.1).unwrap();
    let w = mixing_matrix(&build_topology(TopologyKind::Ring, 8).unwrap(), WeightScheme::Metropolis).unwrap();
    let z0 = StackedIterate::zeros(&problem);
    for kind in [AlgoKind::Dgda, AlgoKind::Dogda, AlgoKind::Dogt, AlgoKind::Adogt { rounds: 2 }] {
        let t = run(kind, &problem, &w, 0.1, &z0, &RunOptions::default()).unwrap();
        assert_eq!(t.iterations, 0, "{kind}");
        assert_eq!(t.last().residual, Some(0.0));
    }
    // Through the config path: one node with zero-sum centers is homogeneous.
    let text = load("single_node_compare.toml").replace("kind = \"gaussian\"\nseed = 1", "kind = \"zeros\"");
    let outcome = compare_config(&parse(&text), Some(tempfile::tempdir().unwrap().path())).unwrap();
    for e in &outcome.entries {
        assert_eq!(e.result.as_ref().unwrap().iterations, 0);
    }
}

#[test]
fn verify_compliant_ring_passes_trajectory_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = verify_config(&parse(&load("ring16_verify.toml")), Some(tmp.path())).unwrap();
    for r in &outcome.reports {
        if r.lemma == LemmaId::T2RhoM {
            // The analytic ρ_M bound is exceeded on ring-16 (see findings.rs).
            assert_eq!(r.status(), CheckStatus::Failed);
        } else {
            assert!(r.passed(), "{}", r.summary_line());
            assert_eq!(r.margins.len(), 2000);
        }
    }
    assert_eq!(outcome.exit_code(), EXIT_CHECK_FAILED);
    let csv = std::fs::read_to_string(tmp.path().join("lemma_margins.csv")).unwrap();
    assert!(csv.starts_with("lemma_id,iteration,margin\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 2000 + 2);
    assert!(std::fs::read_to_string(tmp.path().join("lemma_report.txt")).unwrap().contains("T1_contraction     passed"));
}

#[test]
fn verify_complete_graph_passes_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = verify_config(&parse(&load("complete8_verify.toml")), Some(tmp.path())).unwrap();
    assert_eq!(outcome.exit_code(), EXIT_OK, "{}", outcome.summary);
    // ρ = 0: the contraction factor is 1 − 3γμ/4.
    let gamma = outcome.algorithm.gamma;
    let factor = gossip_minimax::metrics::theoretical_contraction(gamma, 0.1, 0.0).unwrap();
    assert_eq!(factor, 1.0 - 0.75 * gamma * 0.1);
}

#[test]
fn verify_large_step_distinguishes_preconditions() {
    let tmp = tempfile::tempdir().unwrap();
    let ring = verify_config(&parse(&load("ring16_verify_large_step.toml")), Some(tmp.path())).unwrap();
    let status = |id: LemmaId| ring.reports.iter().find(|r| r.lemma == id).unwrap().status();
    for id in [LemmaId::L3Tracking, LemmaId::L4OptimalityGap, LemmaId::T1Contraction] {
        assert_eq!(status(id), CheckStatus::PreconditionViolated, "{id}");
    }
    // γ = 0.1 is within 1/(4L), so the consensus lemma keeps its guarantee.
    assert_eq!(status(LemmaId::L2Consensus), CheckStatus::Passed);

    // A single node has no heterogeneity and nothing fails outright, so the
    // exit status is the precondition one.
    let text = load("complete8_verify.toml")
        .replace("gamma = \"auto\"", "gamma = 0.1")
        .replace("max_iters = 2000", "max_iters = 300")
        .replace("n = 8", "n = 1");
    let config = write_config(tmp.path(), &text);
    assert_eq!(invoke("verify", &config, &tmp.path().join("v")), EXIT_PRECONDITION);
}

#[test]
fn verify_requires_recorded_states() {
    let text = load("ring16_verify.toml").replace("record_states = true", "record_states = false");
    assert!(matches!(verify_config(&parse(&text), None), Err(CliError::Config(_))));
    let text = load("ring16_verify.toml").replace("name = \"dogt\"", "name = \"dgda\"");
    assert!(matches!(verify_config(&parse(&text), None), Err(CliError::Config(_))));
}

#[test]
fn compare_output_is_byte_identical_across_invocations() {
    let text = load("ring16_compare.toml").replace("max_iters = 10000", "max_iters = 300");
    let cfg = parse(&text);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    compare_config(&cfg, Some(a.path())).unwrap();
    compare_config(&cfg, Some(b.path())).unwrap();
    for name in ["trace_dgda.csv", "trace_dogda.csv", "trace_dogt.csv", "trace_adogt.csv", "comparison.txt", "manifest.toml"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(cfg.run.record_every, 10);
    let rows = std::fs::read_to_string(a.path().join("trace_dogt.csv")).unwrap();
    let iters: Vec<usize> = rows.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(iters[..3], [0, 10, 20]);
    assert_eq!(*iters.last().unwrap(), 300);
    let _ = problem_dim_check(&cfg);
}

fn problem_dim_check(cfg: &ExperimentConfig) -> usize {
    let setup = cli::build_setup(cfg).unwrap();
    assert_eq!(setup.problem.dim(), 4);
    setup.problem.dim()
}
