//! End-to-end tests of the `opave` binary: artifact layout, metadata
//! replay determinism, usage errors, and the compare workflow.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opave"))
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("opave-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// CSV rows with the wall-clock column dropped; everything else must be
/// bit-identical across replays.
fn csv_without_time(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5, "unexpected row {line:?}");
            [fields[0], fields[2], fields[3], fields[4]].join(",")
        })
        .collect()
}

#[test]
fn run_writes_artifacts_and_metadata_replays_identically() {
    let dir = work_dir("replay");
    let csv = dir.join("run.csv");
    run_ok(bin().args([
        "run",
        "--experiment",
        "inverse_integration",
        "--n",
        "30",
        "--seed",
        "3",
        "--solver",
        "admm",
        "--rho",
        "0.01",
        "--max-iters",
        "400",
        "--tol",
        "1e-9",
        "--out",
        csv.to_str().unwrap(),
    ]));
    let meta = dir.join("run.meta");
    assert!(csv.is_file());
    assert!(meta.is_file());
    assert!(dir.join("run.ref.txt").is_file());
    let meta_text = std::fs::read_to_string(&meta).unwrap();
    assert!(meta_text.contains("[run]"));
    assert!(meta_text.contains("solver=admm"));
    assert!(meta_text.contains("[diagnostics]"));

    // The metadata file is itself a config; replaying it must reproduce
    // every numeric column exactly.
    let replay = dir.join("replay.csv");
    run_ok(bin().args([
        "run",
        "--config",
        meta.to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]));
    assert_eq!(csv_without_time(&csv), csv_without_time(&replay));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn gen_then_run_on_instance_file() {
    let dir = work_dir("gen");
    let inst = dir.join("instance.txt");
    run_ok(bin().args([
        "gen",
        "--experiment",
        "inverse_integration",
        "--n",
        "25",
        "--seed",
        "1",
        "--out",
        inst.to_str().unwrap(),
    ]));
    assert!(inst.is_file());
    let csv = dir.join("run.csv");
    run_ok(bin().args([
        "run",
        "--experiment",
        "custom",
        "--instance",
        inst.to_str().unwrap(),
        "--solver",
        "fb",
        "--averaging",
        "scalar",
        "--lambda",
        "0.9",
        "--gamma",
        "1.0",
        "--max-iters",
        "200",
        "--out",
        csv.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("iter,time_s,objective,residual,rmse\n"));
    assert!(text.lines().count() > 2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unknown_solver_is_a_usage_error() {
    let out = bin()
        .args(["run", "--solver", "sgd", "--tau", "0.1", "--sigma", "0.1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:"), "stderr: {err}");
    assert!(err.contains("sgd"), "stderr: {err}");
}

#[test]
fn missing_parameter_is_a_usage_error() {
    // pd without --sigma must fail before any solving happens.
    let out = bin()
        .args(["run", "--solver", "pd", "--tau", "0.1", "--lambda", "0.9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--sigma"));
}

#[test]
fn compare_summarizes_thresholds_and_marks_unreached() {
    let dir = work_dir("compare");
    let write_cfg = |name: &str, body: &str| -> PathBuf {
        let p = dir.join(name);
        std::fs::write(
            &p,
            format!("[run]\nexperiment=inverse_integration\nn=30\nseed=3\n{body}"),
        )
        .unwrap();
        p
    };
    // ADMM gets enough iterations to pass the loose threshold; Condat is
    // budgeted so tightly it cannot reach any, exercising the sentinel.
    let a = write_cfg("admm.cfg", "solver=admm\nrho=0.001\nmax-iters=4000\ntol=1e-12\n");
    let b = write_cfg("condat.cfg", "solver=condat\ntau=0.1\nsigma=0.1\nmax-iters=5\ntol=1e-12\n");
    let out_dir = dir.join("cmp");
    run_ok(bin().args([
        "compare",
        "--method-config",
        a.to_str().unwrap(),
        "--method-config",
        b.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("method,threshold,iterations,seconds\n"));
    assert!(summary.contains("admm-scalar,1e-2,"));
    assert!(summary.contains("condat-scalar,1e-6,not reached,not reached"));
    assert!(out_dir.join("admm-scalar.csv").is_file());
    assert!(out_dir.join("condat-scalar.csv").is_file());
    assert!(out_dir.join("reference.txt").is_file());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn reference_subcommand_reports_convergence() {
    let dir = work_dir("refcmd");
    let inst = dir.join("instance.txt");
    run_ok(bin().args([
        "gen",
        "--experiment",
        "inverse_integration",
        "--n",
        "20",
        "--seed",
        "5",
        "--out",
        inst.to_str().unwrap(),
    ]));
    let refp = dir.join("ref.txt");
    let out = run_ok(bin().args([
        "reference",
        "--instance",
        inst.to_str().unwrap(),
        "--out",
        refp.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("converged: true"), "stdout: {stdout}");
    let text = std::fs::read_to_string(&refp).unwrap();
    assert!(text.starts_with("[reference]\nconverged=true\n"));
    let _ = std::fs::remove_dir_all(&dir);
}
