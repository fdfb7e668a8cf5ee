//! End-to-end tests of the `ccp` binary: exit statuses, output contracts
//! for every format, and determinism of the simulation paths.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ccp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccp"));
    // Tests control the enumeration cap explicitly where they need it.
    cmd.env_remove("CCP_MAX_N");
    cmd
}

fn run(args: &[&str]) -> Output {
    ccp().args(args).output().expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is utf-8")
}

fn json_of(output: &Output) -> Value {
    serde_json::from_str(&stdout_of(output)).expect("stdout is one json object")
}

fn assert_status(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        stdout_of(output),
        stderr_of(output)
    );
}

#[test]
fn moments_n2_json_matches_the_contract() {
    let out = run(&["moments", "--n", "2", "--format", "json"]);
    assert_status(&out, 0);
    let v = json_of(&out);
    assert_eq!(v["n"], 2);
    assert_eq!(v["mean"], 3.0);
    assert_eq!(v["variance"], 2.0);
    assert_eq!(v["second_moment_poissonized"], 14.0);
    assert_eq!(v["method"], "closed-form");
    assert!(v["elapsed_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn table_prints_twelve_significant_digits() {
    let out = run(&["moments", "--n", "10"]);
    assert_status(&out, 0);
    let text = stdout_of(&out);
    assert!(text.contains("29.2896825397"), "stdout: {text}");
    assert!(text.contains("125.687090577"), "stdout: {text}");
    assert!(text.contains("closed-form"), "stdout: {text}");
}

#[test]
fn mean_and_variance_leave_the_other_field_null() {
    let mean = json_of(&run(&["mean", "--n", "10", "--format", "json"]));
    assert!(mean["variance"].is_null());
    assert!(mean["second_moment_poissonized"].is_null());
    assert!((mean["mean"].as_f64().unwrap() - 29.289682539682538).abs() < 1e-12);

    let var = json_of(&run(&["variance", "--n", "10", "--format", "json"]));
    assert!(var["mean"].is_null());
    assert!((var["variance"].as_f64().unwrap() - 125.68709057697154).abs() < 1e-12);
}

#[test]
fn skewed_vector_uses_inclusion_exclusion() {
    let out = run(&[
        "moments",
        "--probs",
        "0.5,0.3,0.2",
        "--method",
        "inclusion-exclusion",
        "--format",
        "json",
    ]);
    assert_status(&out, 0);
    let v = json_of(&out);
    assert_eq!(v["method"], "inclusion-exclusion");
    assert!((v["mean"].as_f64().unwrap() - 559.0 / 84.0).abs() < 1e-12);
    assert!((v["variance"].as_f64().unwrap() - 16.074971655328802).abs() < 1e-10);
    assert!((v["second_moment_poissonized"].as_f64().unwrap() - 67.015589569161).abs() < 1e-9);

    // Auto picks the same route for a non-uniform vector.
    let auto = json_of(&run(&["moments", "--probs", "0.5,0.3,0.2", "--format", "json"]));
    assert_eq!(auto["method"], "inclusion-exclusion");
}

#[test]
fn uniform_probs_are_detected_and_served_by_closed_form() {
    let out = json_of(&run(&["mean", "--probs", "1,1", "--renormalize", "--format", "json"]));
    assert_eq!(out["method"], "closed-form");
    assert_eq!(out["mean"], 3.0);
}

#[test]
fn json_outputs_round_trip_for_every_report_type() {
    let commands: [&[&str]; 4] = [
        &["moments", "--probs", "0.5,0.3,0.2", "--format", "json"],
        &["simulate", "--n", "4", "--trials", "5000", "--format", "json"],
        &["verify", "--n", "5", "--format", "json"],
        &["identities", "--n", "30", "--format", "json"],
    ];
    for args in commands {
        let text = stdout_of(&run(args));
        let first: Value = serde_json::from_str(&text).unwrap_or_else(|e| {
            panic!("{args:?} did not print json: {e}\n{text}");
        });
        let second: Value =
            serde_json::from_str(&serde_json::to_string(&first).unwrap()).unwrap();
        assert_eq!(first, second, "args: {args:?}");
    }
}

#[test]
fn conflicting_or_missing_sources_are_usage_errors() {
    assert_status(&run(&["moments", "--n", "3", "--probs", "0.5,0.5"]), 2);
    assert_status(&run(&["moments"]), 2);
    assert_status(
        &run(&["moments", "--probs", "0.5,0.5", "--probs-file", "x.txt"]),
        2,
    );
}

#[test]
fn closed_form_on_a_skewed_vector_is_a_usage_error() {
    let out = run(&["moments", "--probs", "0.5,0.3,0.2", "--method", "closed-form"]);
    assert_status(&out, 2);
    let out = run(&["variance", "--probs", "0.5,0.3,0.2", "--method", "recurrence"]);
    assert_status(&out, 2);
}

#[test]
fn bad_probability_sums_fail_with_the_model_error_name() {
    let out = run(&["moments", "--probs", "0.5,0.4"]);
    assert_status(&out, 1);
    assert!(stderr_of(&out).contains("SumOutOfTolerance"));

    let renormalized = run(&["moments", "--probs", "0.5,0.4", "--renormalize"]);
    assert_status(&renormalized, 0);

    let negative = run(&["moments", "--probs", "0.5,-0.5,1.0"]);
    assert_status(&negative, 1);
    assert!(stderr_of(&negative).contains("NonPositiveEntry"));
}

#[test]
fn probs_file_accepts_lines_and_json_arrays() {
    let dir = tempfile::tempdir().unwrap();

    let lines = dir.path().join("lines.txt");
    std::fs::File::create(&lines)
        .unwrap()
        .write_all(b"0.5\n0.3\n\n0.2\n")
        .unwrap();
    let out = run(&["mean", "--probs-file", lines.to_str().unwrap(), "--format", "json"]);
    assert_status(&out, 0);
    assert!((json_of(&out)["mean"].as_f64().unwrap() - 559.0 / 84.0).abs() < 1e-12);

    let array = dir.path().join("array.json");
    std::fs::write(&array, "[0.5, 0.3, 0.2]").unwrap();
    let out = run(&["mean", "--probs-file", array.to_str().unwrap(), "--format", "json"]);
    assert_status(&out, 0);
    assert!((json_of(&out)["mean"].as_f64().unwrap() - 559.0 / 84.0).abs() < 1e-12);

    let missing = run(&["mean", "--probs-file", "/nonexistent/p.txt"]);
    assert_status(&missing, 1);
    assert!(stderr_of(&missing).contains("InvalidProbsFile"));

    let garbled = dir.path().join("garbled.txt");
    std::fs::write(&garbled, "0.5\nnot a number\n").unwrap();
    let out = run(&["mean", "--probs-file", garbled.to_str().unwrap()]);
    assert_status(&out, 1);
    assert!(stderr_of(&out).contains("InvalidProbsFile"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let args = [
        "simulate",
        "--probs",
        "0.5,0.3,0.2",
        "--trials",
        "30000",
        "--seed",
        "9",
        "--format",
        "json",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_status(&first, 0);
    assert_eq!(stdout_of(&first), stdout_of(&second));

    let report = json_of(&first);
    assert_eq!(report["trials"], 30000);
    assert!(report["histogram"].is_null() || report.get("histogram").is_none());

    let other_seed = json_of(&run(&[
        "simulate", "--probs", "0.5,0.3,0.2", "--trials", "30000", "--seed", "10", "--format",
        "json",
    ]));
    assert_ne!(report["sample_mean"], other_seed["sample_mean"]);
}

#[test]
fn simulate_report_round_trips_through_serde() {
    let text = stdout_of(&run(&[
        "simulate", "--n", "6", "--trials", "20000", "--format", "json",
    ]));
    let report: ccp_core::simulator::SimulationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.trials, 20000);
    let reserialized = serde_json::to_string(&report).unwrap();
    assert_eq!(
        serde_json::from_str::<Value>(&text).unwrap(),
        serde_json::from_str::<Value>(&reserialized).unwrap()
    );
}

#[test]
fn simulate_histogram_file_is_a_complete_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hist.csv");
    let out = run(&[
        "simulate",
        "--probs",
        "0.5,0.3,0.2",
        "--trials",
        "25000",
        "--seed",
        "3",
        "--histogram",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_status(&out, 0);
    let report = json_of(&out);

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("draws,count"));
    let mut histogram = BTreeMap::new();
    for line in lines {
        let (draws, count) = line.split_once(',').expect("two columns");
        histogram.insert(
            draws.parse::<u64>().unwrap(),
            count.parse::<u64>().unwrap(),
        );
    }
    let total: u64 = histogram.values().sum();
    assert_eq!(total, 25000);
    assert_eq!(
        *histogram.keys().next().unwrap(),
        report["min_draws"].as_u64().unwrap()
    );
    assert_eq!(
        *histogram.keys().next_back().unwrap(),
        report["max_draws"].as_u64().unwrap()
    );
    // The report itself carries the same histogram in json form.
    assert_eq!(
        report["histogram"].as_object().unwrap().len(),
        histogram.len()
    );
}

#[test]
fn simulation_method_fills_the_moment_shape() {
    let out = json_of(&run(&[
        "moments", "--n", "5", "--method", "simulation", "--trials", "50000", "--format", "json",
    ]));
    assert_eq!(out["method"], "simulation");
    // 50k trials put the sample mean well within 2% of 137/12.
    let mean = out["mean"].as_f64().unwrap();
    assert!((mean - 137.0 / 12.0).abs() / (137.0 / 12.0) < 0.02, "mean: {mean}");
    assert!(out["second_moment_poissonized"].is_null());
}

#[test]
fn oracle_method_reports_the_poissonized_second_moment() {
    let out = json_of(&run(&[
        "moments", "--probs", "0.5,0.3,0.2", "--method", "oracle", "--format", "json",
    ]));
    assert_eq!(out["method"], "oracle");
    assert!((out["mean"].as_f64().unwrap() - 559.0 / 84.0).abs() < 1e-12);
    assert!((out["second_moment_poissonized"].as_f64().unwrap() - 67.015589569161).abs() < 1e-9);

    let too_big = run(&["moments", "--n", "21", "--method", "oracle"]);
    assert_status(&too_big, 1);
    assert!(stderr_of(&too_big).contains("UniverseTooLarge"));
}

#[test]
fn integration_method_matches_the_exact_answer() {
    let out = json_of(&run(&[
        "moments", "--probs", "0.5,0.3,0.2", "--method", "integration", "--format", "json",
    ]));
    assert_eq!(out["method"], "integration");
    assert!((out["mean"].as_f64().unwrap() - 559.0 / 84.0).abs() < 1e-6);
    assert!((out["variance"].as_f64().unwrap() - 16.074971655328802).abs() < 1e-5);
}

#[test]
fn verify_small_uniform_universes_exit_zero() {
    for n in ["1", "7", "20"] {
        let out = run(&["verify", "--n", n]);
        assert_status(&out, 0);
        let text = stdout_of(&out);
        assert!(text.contains("closed-form"), "stdout: {text}");
        assert!(text.contains("PASS"), "stdout: {text}");
    }
}

#[test]
fn verify_two_thirds_one_third_at_loose_tolerance_passes() {
    let out = run(&[
        "verify",
        "--probs",
        "0.6666667,0.3333333",
        "--tolerance",
        "1e-5",
    ]);
    assert_status(&out, 0);
}

#[test]
fn verify_json_reports_routes_and_the_verdict() {
    let out = run(&["verify", "--n", "4", "--trials", "40000", "--format", "json"]);
    assert_status(&out, 0);
    let v = json_of(&out);
    let routes: Vec<&str> = v["routes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["route"].as_str().unwrap())
        .collect();
    assert_eq!(
        routes,
        [
            "closed-form",
            "recurrence",
            "inclusion-exclusion",
            "integration",
            "oracle"
        ]
    );
    assert!(v["passed"].as_bool().unwrap());
    assert!(v["max_pairwise_deviation"].as_f64().unwrap() < 1e-6);
    let sim = &v["simulation"];
    assert!(sim["passed"].as_bool().unwrap());
    assert!(sim["deviation_in_std_errors"].as_f64().unwrap() <= 5.0);
    assert_eq!(sim["trials"], 40000);
}

#[test]
fn verify_impossible_tolerance_fails_with_status_one() {
    let out = run(&["verify", "--probs", "0.5,0.3,0.2", "--tolerance", "1e-16"]);
    assert_status(&out, 1);
    assert!(stdout_of(&out).contains("FAIL"));
}

#[test]
fn identities_default_suite_passes() {
    let out = run(&["identities", "--n", "40"]);
    assert_status(&out, 0);
    let text = stdout_of(&out);
    assert!(text.contains("binomial-alternating"));
    assert!(text.contains("harmonic-square"));

    // Past the exact-binomial cap only the harmonic-square check runs.
    let big = run(&["identities", "--n", "1000"]);
    assert_status(&big, 0);
    assert!(stderr_of(&big).contains("binomial identity skipped"));

    let csv = run(&["identities", "--n", "12", "--format", "csv"]);
    assert_status(&csv, 0);
    assert!(stdout_of(&csv).starts_with("name,n,r,lhs,rhs,abs_diff,rel_diff,passed"));
}

#[test]
fn identities_out_of_range_arguments_fail_with_status_one() {
    let zero = run(&["identities", "--n", "0"]);
    assert_status(&zero, 1);
    assert!(stderr_of(&zero).contains("UniverseOutOfRange"));

    let big_with_r = run(&["identities", "--n", "57", "--r", "1"]);
    assert_status(&big_with_r, 1);
    assert!(stderr_of(&big_with_r).contains("UniverseOutOfRange"));

    let bad_power = run(&["identities", "--n", "40", "--r", "4"]);
    assert_status(&bad_power, 1);
    assert!(stderr_of(&bad_power).contains("PowerOutOfRange"));
}

#[test]
fn enumeration_cap_env_raises_the_limit_with_a_warning() {
    let uniform_26 = vec!["0.038461538461538464"; 26].join(",");

    let denied = run(&[
        "moments",
        "--probs",
        &uniform_26,
        "--method",
        "inclusion-exclusion",
    ]);
    assert_status(&denied, 1);
    assert!(stderr_of(&denied).contains("UniverseTooLarge"));

    let allowed = ccp()
        .env("CCP_MAX_N", "26")
        .args([
            "moments",
            "--probs",
            &uniform_26,
            "--method",
            "inclusion-exclusion",
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert_status(&allowed, 0);
    assert!(stderr_of(&allowed).contains("warning"));
    let closed_form = json_of(&run(&["mean", "--n", "26", "--format", "json"]));
    let enumerated = json_of(&allowed)["mean"].as_f64().unwrap();
    assert!((enumerated - closed_form["mean"].as_f64().unwrap()).abs() < 1e-8);
}

#[test]
fn enumeration_cap_env_rejects_bad_values() {
    for bad in ["31", "junk", "-1"] {
        let out = ccp()
            .env("CCP_MAX_N", bad)
            .args(["moments", "--probs", "0.5,0.3,0.2"])
            .output()
            .unwrap();
        assert_status(&out, 2);
    }
}

#[test]
fn csv_moments_have_a_header_and_one_row() {
    let out = run(&["moments", "--n", "3", "--format", "csv"]);
    assert_status(&out, 0);
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,mean,variance,second_moment_poissonized,method,elapsed_ms")
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("3,5.5,"), "row: {row}");
    assert!(lines.next().is_none());
}

#[test]
fn closed_downstream_pipe_is_not_an_error() {
    // `ccp ... | head -1`-style consumers close the pipe early; the
    // binary must exit cleanly instead of panicking on the write.
    let mut child = ccp()
        .args(["verify", "--n", "12"])
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdout.take());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0), "status: {status:?}");
}

#[test]
fn help_is_available_for_every_subcommand() {
    for sub in ["mean", "variance", "moments", "simulate", "verify", "identities"] {
        let out = run(&[sub, "--help"]);
        assert_status(&out, 0);
        assert!(stdout_of(&out).contains("--format"));
    }
}

fn histogram_csv_exists_and_matches(path: &Path, trials: u64) {
    let text = std::fs::read_to_string(path).unwrap();
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|line| line.split_once(',').unwrap().1.parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, trials);
}

#[test]
fn simulate_equal_fast_path_writes_histograms_too() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uniform.csv");
    let out = run(&[
        "simulate",
        "--n",
        "6",
        "--trials",
        "10000",
        "--histogram",
        path.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    histogram_csv_exists_and_matches(&path, 10000);
}
