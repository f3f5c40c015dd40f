//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Everything is seeded; pipeline outputs are deterministic for any
//! worker count, so these results are reproducible bit for bit.

use std::path::Path;
use std::time::Instant;

use mfsim_cli::config::ExperimentConfig;
use mfsim_cli::report::{RunReport, Statistic};
use mfsim_cli::run_experiment;

fn run(json: &str) -> RunReport {
    let cfg = ExperimentConfig::from_json(json).expect("config parses");
    let dir = tempfile::tempdir().expect("tempdir");
    run_experiment(&cfg, dir.path()).expect("pipeline runs")
}

fn stat<'r>(report: &'r RunReport, name: &str) -> &'r Statistic {
    report
        .statistics
        .iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("missing statistic {name}"))
}

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_shift_pathwise_oracle() {
    let json = r#"{
        "kind": "simulate",
        "model": {"name": "shift", "d": 1, "d1": 1, "sigma0": 1.0},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 2000,
        "dt": 0.001,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 1
    }"#;
    let started = Instant::now();
    let report = single_threaded(|| run(json));
    let elapsed = started.elapsed().as_secs_f64();
    let phi_oracle = stat(&report, "translation_oracle_phi_sup").value;
    let ok = report.pass && phi_oracle <= 0.05 && elapsed <= 5.0;
    verdict(
        "1 (shift pathwise oracle)",
        ok,
        &format!(
            "sup_t |<L_t, sin> - <mu_0, sin(.+W_t)>| = {phi_oracle:.3e} (<= 0.05), \
             single-threaded runtime {elapsed:.2}s (<= 5s)"
        ),
    );
}

#[cfg(feature = "parallel")]
fn single_threaded<T>(f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn single_threaded<T>(f: impl FnOnce() -> T) -> T {
    f()
}

#[test]
fn criterion_02_ou_conditional_moments() {
    let json = r#"{
        "kind": "picard",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 2000,
        "dt": 0.004,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 50,
        "times": [0.25, 0.5, 1.0],
        "tolerances": {"picard_tol": 0.0001, "picard_max_iter": 12, "metric_resolution": 256}
    }"#;
    let report = run(json);
    let mut detail = String::new();
    for t in ["0.25", "0.5", "1"] {
        let m = stat(&report, &format!("mean_deviation@{t}"));
        let v = stat(&report, &format!("variance_deviation@{t}"));
        detail.push_str(&format!(
            "t={t}: dm={:.2e}({:.1}se) dv={:.2e}({:.1}se); ",
            m.value,
            m.value.abs() / m.std_error.unwrap().max(1e-300),
            v.value,
            v.value.abs() / v.std_error.unwrap().max(1e-300),
        ));
    }
    verdict(
        "2 (OU conditional moments within 3 se)",
        report.pass,
        &detail,
    );
}

#[test]
fn criterion_03_convergence_rate() {
    let json = r#"{
        "kind": "rate",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [0.6]},
        "n_particles": 4096,
        "dt": 0.01,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 200,
        "sample_sizes": [64, 128, 256, 512, 1024, 2048, 4096],
        "test_functions": ["sin(x0)"]
    }"#;
    let started = Instant::now();
    let report = run(json);
    let elapsed = started.elapsed().as_secs_f64();
    let slope = stat(&report, "log_log_slope");
    let ok = report.pass && elapsed <= 120.0;
    verdict(
        "3 (1/sqrt(N) convergence rate)",
        ok,
        &format!(
            "slope = {:.4} +- {:.4} in [-0.65, -0.35], runtime {elapsed:.1}s (<= 120s)",
            slope.value,
            slope.std_error.unwrap()
        ),
    );
}

#[test]
fn criterion_04_weak_residual_refinement() {
    let json = r#"{
        "kind": "weakcheck",
        "model": {"name": "shift", "d": 1, "d1": 1, "sigma0": 1.0},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 8,
        "dt": 0.001953125,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 7,
        "outer_paths": 3000,
        "dt_levels": [0.015625, 0.0078125, 0.00390625, 0.001953125],
        "test_functions": ["x0*x0"]
    }"#;
    let report = run(json);
    let sweep = stat(&report, "per_halving_ratio[x0*x0]").value;
    let const_sup = stat(&report, "constant_phi_residual_sup").value;
    verdict(
        "4 (weak-form residual refinement)",
        report.pass,
        &format!(
            "per-halving decay {sweep:.3} in [1.4, 3.0] over dt = 2^-6..2^-9, \
             phi==1 residual exactly {const_sup}"
        ),
    );
}

#[test]
fn criterion_05_duality_identity() {
    // stochastic case: OU coefficients frozen along each path's trajectory
    let json = r#"{
        "kind": "duality",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 1000,
        "dt": 0.05,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 100,
        "inner_samples": 200,
        "test_functions": ["sin(x0)"]
    }"#;
    let report = run(json);
    let gap = stat(&report, "duality_gap[sin(x0)]@1");
    let ratio = gap.value.abs() / gap.std_error.unwrap().max(1e-300);

    // deterministic case: pure drift, gap bounded by 5 dt
    let det = r#"{
        "kind": "duality",
        "model": {"name": "constant", "d": 1, "d1": 1, "a": [0.0], "b": [0.7], "sigma": [0.0]},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 64,
        "dt": 0.05,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 9,
        "outer_paths": 4,
        "inner_samples": 4,
        "test_functions": ["sin(x0)"]
    }"#;
    let det_report = run(det);
    let det_gap = stat(&det_report, "duality_gap[sin(x0)]@1").value.abs();
    verdict(
        "5 (duality identity)",
        report.pass && det_report.pass,
        &format!(
            "OU gap = {:.3e} ({ratio:.2} se <= 3), deterministic gap = {det_gap:.3e} (<= 5 dt = 0.25)",
            gap.value
        ),
    );
}

#[test]
fn criterion_06_picard_contraction() {
    // beta * T = 0.5 <= 1
    let json = r#"{
        "kind": "picard",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 1000,
        "dt": 0.0025,
        "t_end": 0.5,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 10,
        "times": [0.5],
        "tolerances": {"picard_tol": 0.001, "picard_max_iter": 10, "metric_resolution": 256}
    }"#;
    let report = run(json);
    let iters = stat(&report, "max_iterations").value;
    let ratio = stat(&report, "worst_contraction_ratio").value;
    verdict(
        "6 (Picard contraction diagnostics)",
        report.pass,
        &format!(
            "tol 1e-3 reached in <= {iters} iterations (<= 10), \
             worst successive ratio {ratio:.3} (<= 0.9)"
        ),
    );
}

#[test]
fn criterion_07_uniqueness_witness() {
    let json = r#"{
        "kind": "duality",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 2000,
        "dt": 0.05,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 43,
        "outer_paths": 100,
        "inner_samples": 16,
        "times": [0.5, 1.0],
        "test_functions": ["sin(x0)"]
    }"#;
    let report = run(json);
    let cells: Vec<String> = report
        .statistics
        .iter()
        .filter(|s| s.name.starts_with("witness_abs_gap"))
        .map(|s| {
            format!(
                "{}={:.2e}({:.1}sd)",
                s.name.trim_start_matches("witness_abs_gap"),
                s.value,
                s.value / s.std_error.unwrap().max(1e-300)
            )
        })
        .collect();
    verdict(
        "7 (uniqueness witness over the bank)",
        report.pass,
        &cells.join(" "),
    );
}

#[test]
fn criterion_08_stratonovich_ito_conversion() {
    let sin = r#"{
        "kind": "stratcheck",
        "model": {"name": "sin_local", "amp": 1.0},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 200,
        "dt": 0.0078125,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 200,
        "dt_levels": [0.125, 0.0625, 0.03125, 0.015625, 0.0078125]
    }"#;
    let sin_report = run(sin);
    let order = stat(&sin_report, "measured_order").value;

    let kernel = r#"{
        "kind": "stratcheck",
        "model": {"name": "convolution_kernel_gaussian", "amp": 0.8, "length_scale": 0.7},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 48,
        "dt": 0.015625,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 60,
        "dt_levels": [0.125, 0.0625, 0.03125, 0.015625]
    }"#;
    let kernel_report = run(kernel);
    let ablated = stat(&kernel_report, "ablated_order").value;
    let corrected_floor = stat(&kernel_report, "w1_gap@dt=0.015625").value;
    let ablated_floor = stat(&kernel_report, "ablated_terminal_gap").value;
    verdict(
        "8 (Stratonovich/Ito conversion)",
        sin_report.pass && kernel_report.pass,
        &format!(
            "sin(x) order {order:.3} (>= 0.5); kernel negative control: ablated order \
             {ablated:.3} (< 0.5), ablated gap {ablated_floor:.2e} vs corrected {corrected_floor:.2e}"
        ),
    );
}

#[test]
fn criterion_09_conditional_integral_statistics() {
    let json = r#"{
        "kind": "chaos",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 1024,
        "dt": 0.01,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 42,
        "outer_paths": 50,
        "inner_samples": 256,
        "sample_sizes": [64, 256, 1024],
        "repetitions": 500
    }"#;
    let report = run(json);
    let fraction = stat(&report, "z_violation_fraction").value;
    let discrepancy = stat(&report, "w_measurable_discrepancy").value;
    verdict(
        "9 (conditional-integral statistics)",
        report.pass,
        &format!(
            "|z| <= 3 in {:.1}% of 500 repetitions (>= 99%), \
             W-measurable discrepancy {discrepancy:.2e} (<= 1e-12)",
            100.0 * (1.0 - fraction)
        ),
    );
}

#[test]
fn criterion_10_byte_identical_outputs_across_thread_counts() {
    let config = r#"{
        "kind": "simulate",
        "model": {"name": "mean_reversion_to_conditional_mean", "beta": 1.0, "sigma0": 0.5, "alpha0": 0.6},
        "initial_law": {"kind": "gaussian", "mean": [0.0], "std": [1.0]},
        "n_particles": 300,
        "dt": 0.01,
        "t_end": 1.0,
        "mass": 1.0,
        "seed": 4242,
        "outer_paths": 3
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, config).unwrap();
    let bin = env!("CARGO_BIN_EXE_mfsim");
    let run_with = |threads: &str, out: &Path| {
        let status = std::process::Command::new(bin)
            .args(["simulate", "--config"])
            .arg(&cfg_path)
            .args(["--threads", threads, "--out"])
            .arg(out)
            .stdout(std::process::Stdio::null())
            .status()
            .expect("binary runs");
        assert!(status.success(), "exit status {status:?}");
    };
    let out1 = dir.path().join("t1");
    let out2 = dir.path().join("t4");
    run_with("1", &out1);
    run_with("4", &out2);
    let mut compared = 0;
    for entry in std::fs::read_dir(&out1).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            let a = std::fs::read(out1.join(&name)).unwrap();
            let b = std::fs::read(out2.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between thread counts");
            assert!(!a.is_empty());
            compared += 1;
        }
    }
    verdict(
        "10 (byte-identical CSV across thread counts)",
        compared > 0,
        &format!("{compared} CSV tables identical between --threads 1 and --threads 4"),
    );
}
