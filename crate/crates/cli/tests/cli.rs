use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detmeasure"))
        .args(args)
        .env_remove("DETMEASURE_THREADS")
        .output()
        .expect("binary runs")
}

fn json_of(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let value: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    assert!(validator.is_valid(&value), "{args:?} violates the schema: {value}");
    value
}

fn csv_of(args: &[&str]) -> Vec<csv::StringRecord> {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    reader.records().collect::<Result<_, _>>().expect("stdout is CSV")
}

fn error_of(args: &[&str], code: i32) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is a JSON error record");
    assert_eq!(err["error"]["exit_code"], code);
    err
}

#[test]
fn kernel_recurrence_example() {
    let v = json_of(&["kernel-recurrence", "--s", "0", "--grid", "default"]);
    assert_eq!(v["command"], "kernel-recurrence");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["inputs"]["s"][0], 0.0);
    assert!(v["results"]["max_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn scaling_limit_example_decreases() {
    let rows = csv_of(&["scaling-limit", "--s", "0", "--n", "25,100,400", "--format", "csv"]);
    let n: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let e: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(n, [25, 100, 400]);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn mass_ratio_example_cocycle() {
    let v = json_of(&["mass-ratio", "--ensemble", "s=-1.5,N=5", "--chain", "0,0.3,0.6"]);
    assert!(v["residuals"]["cocycle"].as_f64().unwrap() <= 1e-8);
    assert!(v["residuals"]["moment_oracle"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn every_subcommand_emits_valid_json() {
    let cases: [&[&str]; 14] = [
        &["kernel-eval", "--x", "0.5,1", "--y", "2"],
        &["det"],
        &["det-xi", "--breaks", "1,2"],
        &["gap", "--window", "2,5"],
        &["transform"],
        &["sample", "--seed", "1", "--draws", "3"],
        &["mc-check", "--seed", "1", "--draws", "500"],
        &["op-ensemble", "--draws", "50", "--seed", "2"],
        &["perturbation-convergence", "--n", "4", "--control"],
        &["qr-convergence", "--radii", "10,20", "--max-phase", "60"],
        &["pickrell-const", "--s", "-3.5", "--n", "4,50"],
        &["radial-mc", "--seed", "1", "--draws", "50", "--n", "4,8"],
        &["scaling-limit", "--n", "10,20"],
        &["kernel-recurrence", "--grid", "0.1,10,5"],
    ];
    for args in cases {
        let v = json_of(args);
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = ["mc-check", "--seed", "9", "--draws", "1000"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let threaded = Command::new(env!("CARGO_BIN_EXE_detmeasure"))
        .args(args)
        .env("DETMEASURE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, threaded.stdout);
}

#[test]
fn transform_identities_hold() {
    let v = json_of(&["transform", "--n", "6", "--g", "0.3,1.2"]);
    let r = &v["residuals"];
    assert!(r["idempotency"].as_f64().unwrap() <= 1e-8);
    assert!(r["range_angle"].as_f64().unwrap() <= 1e-7);
    assert!(r["chain"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn validation_failures_exit_one() {
    let err = error_of(&["sample"], 1);
    assert_eq!(err["error"]["kind"], "validation");
    error_of(&["det", "--s", "-3"], 1);
    error_of(&["det", "--bogus"], 1);
    error_of(&["mass-ratio", "--ensemble", "s=-1.5", "--chain", "0,0.5"], 1);
    error_of(&["scaling-limit", "--n", "100,25"], 1);
}

#[test]
fn numerical_failures_exit_two() {
    // g = 0 makes I + (g-1)K = I - K singular on a projection.
    let err = error_of(&["transform", "--g", "0,0"], 2);
    assert_eq!(err["error"]["kind"], "numerical");
}

#[test]
fn selftest_passes_for_every_subcommand() {
    for cmd in [
        "kernel-eval",
        "kernel-recurrence",
        "det",
        "det-xi",
        "gap",
        "transform",
        "sample",
        "mc-check",
        "mass-ratio",
        "op-ensemble",
        "scaling-limit",
        "perturbation-convergence",
        "qr-convergence",
        "pickrell-const",
        "radial-mc",
    ] {
        let v = json_of(&[cmd, "--selftest"]);
        assert_eq!(v["results"]["pass"], true, "{cmd}: {v}");
    }
}

#[test]
fn output_file_matches_stdout() {
    let dir = std::env::temp_dir().join(format!("detmeasure-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("det.csv");
    let args = ["det", "--format", "csv"];
    let stdout = run(&args).stdout;
    let out = run(&["det", "--format", "csv", "--output", path.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}
