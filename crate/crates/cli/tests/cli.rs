use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dsk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsk"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("running dsk")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// Small separable task written to `name` in a fresh directory.
fn workspace(name: &str, per_class: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = dsk(
        dir.path(),
        &["synth", "--dim", "3", "--dof", "12", "--tau", "4", "--per-class", per_class, "--seed", "5", "--out", name],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn synth_is_deterministic_and_records_its_config() {
    let dir = workspace("a.spdset", "10");
    let again = dsk(
        dir.path(),
        &["synth", "--dim", "3", "--dof", "12", "--tau", "4", "--per-class", "10", "--seed", "5", "--out", "b.spdset"],
    );
    assert_eq!(code(&again), 0);
    assert_eq!(read(dir.path(), "a.spdset"), read(dir.path(), "b.spdset"));
    let config = read(dir.path(), "a.spdset.config.toml");
    assert!(config.contains("command = \"synth\""));
    assert!(config.contains("per_class = 10"));
}

#[test]
fn synth_rejects_zero_tau() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsk(dir.path(), &["synth", "--tau", "0", "--out", "z.spdset"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("z.spdset").exists());
}

#[test]
fn train_writes_a_reproducible_power_model() {
    let dir = workspace("a.spdset", "20");
    let args = ["train", "--data", "a.spdset", "--criterion", "ka:0.01", "--max-iters", "30"];
    let first = dsk(dir.path(), &[&args[..], &["--out-model", "m1.toml"]].concat());
    let second = dsk(dir.path(), &[&args[..], &["--out-model", "m2.toml"]].concat());
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(code(&second), 0);
    assert_eq!(stdout(&first), stdout(&second));
    let model = read(dir.path(), "m1.toml");
    assert!(model.lines().any(|l| l == "mode power"));
    assert_eq!(model, read(dir.path(), "m2.toml"));
    assert!(dir.path().join("m1.toml.config.toml").exists());
}

#[test]
fn margin_criteria_need_an_svm() {
    let dir = workspace("a.spdset", "10");
    let out = dsk(dir.path(), &["train", "--data", "a.spdset", "--criterion", "rm", "--out-model", "m.toml"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("m.toml").exists());
}

#[test]
fn eval_against_itself_is_a_null_comparison() {
    let dir = workspace("a.spdset", "20");
    let train = dsk(dir.path(), &["train", "--data", "a.spdset", "--criterion", "cs", "--out-model", "m.toml"]);
    assert_eq!(code(&train), 0);
    let out = dsk(
        dir.path(),
        &["eval", "--model", "m.toml", "--data", "a.spdset", "--splits", "1,2,3", "--baseline", "m.toml", "--report", "r.toml"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: toml::Table = read(dir.path(), "r.toml").parse().unwrap();
    let baseline = report["baseline"].as_table().unwrap();
    assert_eq!(baseline["p_value"].as_float(), Some(1.0));
    assert_eq!(baseline["mean_difference"].as_float(), Some(0.0));
    for run in report["runs"].as_array().unwrap() {
        let run = run.as_table().unwrap();
        let total: i64 = run["confusion"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|row| row.as_array().unwrap().iter().map(|v| v.as_integer().unwrap()))
            .sum();
        assert_eq!(total, run["test_size"].as_integer().unwrap());
    }
}

#[test]
fn eval_baseline_needs_two_splits() {
    let dir = workspace("a.spdset", "10");
    assert_eq!(code(&dsk(dir.path(), &["train", "--data", "a.spdset", "--out-model", "m.toml"])), 0);
    let out = dsk(dir.path(), &["eval", "--model", "m.toml", "--data", "a.spdset", "--splits", "1", "--baseline", "sk"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn compare_reports_one_row_per_metric() {
    let dir = workspace("a.spdset", "10");
    let out = dsk(dir.path(), &["compare", "--data", "a.spdset", "--metrics", "euclidean", "--splits", "1,2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("euclidean,knn:1,2,"));
}

#[test]
fn compare_refuses_airm_with_svm() {
    let dir = workspace("a.spdset", "10");
    let out = dsk(
        dir.path(),
        &["compare", "--data", "a.spdset", "--metrics", "airm", "--classifier", "svm", "--splits", "1,2"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_handles_a_single_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsk(dir.path(), &["bench", "--dims", "2", "--count", "1", "--metrics", "stein,dsk", "--out", "t.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "t.csv");
    assert_eq!(csv.lines().next(), Some("method,dim,count,seconds"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn gradcheck_passes_on_a_small_set() {
    let dir = workspace("g.spdset", "6");
    let out = dsk(dir.path(), &["gradcheck", "--data", "g.spdset", "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.ends_with("PASS")).count(), 8);
}

#[test]
fn gradcheck_refuses_large_sets() {
    let dir = workspace("a.spdset", "20");
    assert_eq!(code(&dsk(dir.path(), &["gradcheck", "--data", "a.spdset"])), 2);
}

#[test]
fn config_file_fills_flags_the_command_line_omits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "seed = 3\n[synth]\ndim = 2\nper_class = 4\ntau = 9.0\n",
    )
    .unwrap();
    let out = dsk(dir.path(), &["--config", "c.toml", "synth", "--tau", "0.5", "--out", "c.spdset"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let config: toml::Table = read(dir.path(), "c.spdset.config.toml").parse().unwrap();
    let args = config["args"].as_table().unwrap();
    assert_eq!(args["dim"].as_integer(), Some(2));
    assert_eq!(args["per_class"].as_integer(), Some(4));
    assert_eq!(args["seed"].as_integer(), Some(3));
    assert_eq!(args["tau"].as_float(), Some(0.5));
}

#[test]
fn wishart_summary_has_a_row_per_tau() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsk(
        dir.path(),
        &[
            "wishart", "--dim", "2", "--dof", "10", "--per-class", "8", "--taus", "0.5,2", "--splits", "2",
            "--max-iters", "5", "--out", "s.csv", "--details", "d.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "s.csv").lines().count(), 3);
    assert_eq!(read(dir.path(), "d.csv").lines().count(), 5);
}
