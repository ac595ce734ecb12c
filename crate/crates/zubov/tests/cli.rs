//! End-to-end runs of the `zubov` binary: verdicts, artifacts, manifests,
//! exit codes, and worker-count independence of outputs.

use std::path::PathBuf;
use std::process::{Command, Output};

fn zubov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zubov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn params_file() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/new_england_39bus.params")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("zubov-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn eval_reports_verdicts() {
    let inside = zubov(&["eval", "0,0"]);
    assert!(inside.status.success());
    assert!(stdout(&inside).contains("inside"), "{}", stdout(&inside));

    let outside = zubov(&["eval", "4,4"]);
    assert!(outside.status.success());
    assert!(stdout(&outside).contains("outside"), "{}", stdout(&outside));

    let linear = zubov(&["--system", "linear", "eval", "2,0"]);
    assert!(stdout(&linear).contains("V(x) = 0.197"), "{}", stdout(&linear));
}

#[test]
fn eval_inconclusive_exits_nonzero() {
    // On the unstable cycle with a tiny horizon neither criterion can fire.
    let out = zubov(&["eval", "2,0", "--t-max", "2", "--dt-chunk", "1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("inconclusive"), "{}", stderr(&out));
}

#[test]
fn eval_rejects_bad_state() {
    let out = zubov(&["eval", "1,banana"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("banana"), "{}", stderr(&out));
}

#[test]
fn swing_eval_at_equilibrium() {
    let out = zubov(&[
        "--system",
        "swing",
        "--params",
        params_file(),
        "eval",
        "376.99111843077515,-0.0335,376.99111843077515,0.047,376.99111843077515,0.1586,\
         376.99111843077515,0.1641,376.99111843077515,0.1114,376.99111843077515,0.1726,\
         376.99111843077515,0.222,376.99111843077515,0.1243,376.99111843077515,0.2723,\
         376.99111843077515,-0.1726",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("inside"), "{}", stdout(&out));
}

#[test]
fn swing_without_params_fails_with_hint() {
    let out = zubov(&["--system", "swing", "eval", "0,0"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--params"), "{}", stderr(&out));
}

#[test]
fn ivalue_writes_table_and_calibration() {
    let dir = tmp_dir("ivalue");
    let out = zubov(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        "3",
        "ivalue",
        "--n",
        "200",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("suggested M"), "{}", stdout(&out));
    let table = std::fs::read_to_string(dir.join("ivalues.csv")).unwrap();
    assert_eq!(table.lines().count(), 201);
    assert!(table.starts_with("sample_index,i_value,censored"));
    assert!(dir.join("ivalues.svg").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest-ivalue.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "ivalue");
    assert_eq!(manifest["config"]["n"], 200);
}

#[test]
fn dataset_counts_match_header_and_workers_do_not_matter() {
    let dir1 = tmp_dir("ds1");
    let dir2 = tmp_dir("ds2");
    for (dir, workers) in [(&dir1, "1"), (&dir2, "4")] {
        let out = zubov(&[
            "--out-dir",
            dir.to_str().unwrap(),
            "--seed",
            "5",
            "--workers",
            workers,
            "dataset",
            "--traj",
            "40",
            "--extra",
            "2",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dir1.join("dataset.csv")).unwrap();
    let b = std::fs::read(dir2.join("dataset.csv")).unwrap();
    assert_eq!(a, b, "dataset bytes differ across --workers");

    let text = String::from_utf8(a).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    let ds = zubov::datagen::read_dataset(dir1.join("dataset.csv")).unwrap();
    assert_eq!(ds.len(), rows);
    assert!(dir1.join("manifest-dataset.json").exists());
}

#[test]
fn train_validate_levelcurves_pipeline() {
    let dir = tmp_dir("pipeline");
    let gen = |seed: &str, name: &str| {
        let out = zubov(&[
            "--out-dir",
            dir.to_str().unwrap(),
            "--seed",
            seed,
            "dataset",
            "--traj",
            "120",
            "--extra",
            "3",
            "--region",
            "-1,-1:1,1",
            "--out",
            name,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    gen("1", "train.csv");
    gen("2", "val.csv");

    let train = zubov(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "train",
        "--train-set",
        dir.join("train.csv").to_str().unwrap(),
        "--val-set",
        dir.join("val.csv").to_str().unwrap(),
        "--hidden",
        "16,16",
        "--epochs",
        "60",
        "--learning-rate",
        "0.005",
        "--batch-size",
        "64",
    ]);
    assert!(train.status.success(), "{}", stderr(&train));
    assert!(dir.join("model.txt").exists());
    assert!(dir.join("history.csv").exists());
    assert!(dir.join("manifest-train.json").exists());

    let validate = zubov(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "validate",
        "--model",
        dir.join("model.txt").to_str().unwrap(),
        "--dataset",
        dir.join("val.csv").to_str().unwrap(),
    ]);
    assert!(validate.status.success(), "{}", stderr(&validate));
    assert!(stdout(&validate).contains("RMSE"), "{}", stdout(&validate));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("validation.json")).unwrap())
            .unwrap();
    assert!(report["rmse"].as_f64().unwrap() < 0.2);

    // Model-backed level curves from the trained surrogate.
    let curves = zubov(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "levelcurves",
        "--model",
        dir.join("model.txt").to_str().unwrap(),
        "--levels",
        "0.2,0.4",
        "--grid",
        "41",
        "--region",
        "-1,-1:1,1",
    ]);
    assert!(curves.status.success(), "{}", stderr(&curves));
    assert!(dir.join("levelcurves.csv").exists());
    assert!(dir.join("levelcurves.svg").exists());
}

#[test]
fn levelcurves_direct_evaluation_on_linear_system() {
    let dir = tmp_dir("curves");
    let out = zubov(&[
        "--system",
        "linear",
        "--out-dir",
        dir.to_str().unwrap(),
        "levelcurves",
        "--levels",
        "0.3",
        "--grid",
        "61",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // tanh(0.05 r^2) = 0.3 at r ~ 2.4887; verify a vertex radius.
    let csv = std::fs::read_to_string(dir.join("levelcurves.csv")).unwrap();
    let row = csv.lines().nth(1).expect("at least one vertex");
    let cols: Vec<f64> = row.split(',').skip(2).map(|t| t.parse().unwrap()).collect();
    let radius = (cols[0] * cols[0] + cols[1] * cols[1]).sqrt();
    let expected = ((0.3f64).atanh() / 0.05).sqrt();
    assert!(
        (radius - expected).abs() < 0.1,
        "vertex radius {radius} vs {expected}"
    );
}

#[test]
fn residual_check_reports_max() {
    let dir = tmp_dir("residual");
    let out = zubov(&[
        "--system",
        "linear",
        "--out-dir",
        dir.to_str().unwrap(),
        "residual-check",
        "--n",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("max relative PDE residual"), "{}", stdout(&out));
    let csv = std::fs::read_to_string(dir.join("residuals.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn missing_inputs_fail_with_path() {
    let dir = tmp_dir("missing");
    let out = zubov(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "train",
        "--train-set",
        "/nonexistent/train.csv",
        "--val-set",
        "/nonexistent/val.csv",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent/train.csv"), "{}", stderr(&out));
}

#[test]
fn manifest_reruns_reproduce_outputs() {
    let dir = tmp_dir("repro");
    let run = || {
        let out = zubov(&[
            "--out-dir",
            dir.to_str().unwrap(),
            "--seed",
            "9",
            "dataset",
            "--traj",
            "30",
            "--extra",
            "1",
            "--out",
            "d.csv",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(dir.join("d.csv")).unwrap()
    };
    let first = run();
    // Confirm the manifest captured the inputs needed for the rerun.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest-dataset.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(manifest["config"]["traj"], 30);
    let second = run();
    assert_eq!(first, second);
}

#[test]
fn help_lists_all_subcommands() {
    let out = zubov(&["--help"]);
    let text = stdout(&out);
    for sub in [
        "eval",
        "ivalue",
        "dataset",
        "train",
        "validate",
        "levelcurves",
        "residual-check",
    ] {
        assert!(text.contains(sub), "missing {sub} in help: {text}");
    }
}
