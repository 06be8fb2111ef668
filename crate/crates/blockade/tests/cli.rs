//! End-to-end checks of the command-line interface: exit codes, output
//! files, manifests, and reproducibility across seeds and thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blockade"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// A short stochastic run on a strong drive; cheap but nontrivial.
fn quick_stochastic(out_dir: &Path, seed: &str) -> Output {
    run(&[
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        seed,
        "--set",
        "eta_over_kappa=100",
        "simulate",
        "--mode",
        "stochastic",
        "--t-end-us",
        "1000",
        "--dt-out-us",
        "100",
    ])
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("simulate"));
    let version = run(&["--version"]);
    assert_eq!(code(&version), 0);
}

#[test]
fn usage_errors_exit_one() {
    let none = bin().output().unwrap();
    assert_eq!(code(&none), 1);
    let unknown = run(&["simulate", "--no-such-flag"]);
    assert_eq!(code(&unknown), 1);
}

#[test]
fn bad_override_exits_one_and_manifest_records_the_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "bogus_knob=1",
        "simulate",
        "--t-end-us",
        "10",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bogus_knob"));
    let manifest = read(&dir.path().join("manifest.txt"));
    assert!(manifest.contains("status = error"), "manifest:\n{manifest}");
}

#[test]
fn unbracketed_fit_exits_two() {
    let dir = TempDir::new().unwrap();
    let sim = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "eta_over_kappa=100",
        "simulate",
        "--t-end-us",
        "4000",
        "--dt-out-us",
        "20",
    ]);
    assert_eq!(code(&sim), 0, "stderr: {}", stderr(&sim));
    let traj = dir.path().join("trajectory.csv");

    let fit_dir = TempDir::new().unwrap();
    let fit = run(&[
        "--out",
        fit_dir.path().to_str().unwrap(),
        "--set",
        "eta_over_kappa=100",
        "fit-gamma",
        traj.to_str().unwrap(),
        "--gamma-min",
        "0.05",
        "--gamma-max",
        "0.1",
    ]);
    assert_eq!(code(&fit), 2, "stderr: {}", stderr(&fit));
    let manifest = read(&fit_dir.path().join("manifest.txt"));
    assert!(manifest.contains("status = error"));
}

#[test]
fn same_seed_reproduces_bytes_and_different_seed_does_not() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    assert_eq!(code(&quick_stochastic(a.path(), "7")), 0);
    assert_eq!(code(&quick_stochastic(b.path(), "7")), 0);
    assert_eq!(code(&quick_stochastic(c.path(), "8")), 0);

    let counts_a = fs::read(a.path().join("counts.csv")).unwrap();
    let counts_b = fs::read(b.path().join("counts.csv")).unwrap();
    let counts_c = fs::read(c.path().join("counts.csv")).unwrap();
    assert_eq!(counts_a, counts_b);
    assert_ne!(counts_a, counts_c);

    let traj_a = fs::read(a.path().join("trajectory.csv")).unwrap();
    let traj_b = fs::read(b.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj_a, traj_b);

    assert!(a.path().join("counts.meta").is_file());
}

#[test]
fn thread_count_does_not_change_ensemble_outputs() {
    let one = TempDir::new().unwrap();
    let two = TempDir::new().unwrap();
    for (dir, threads) in [(&one, "1"), (&two, "2")] {
        let out = run(&[
            "--out",
            dir.path().to_str().unwrap(),
            "--threads",
            threads,
            "--set",
            "eta_over_kappa=100",
            "simulate",
            "--mode",
            "stochastic",
            "--t-end-us",
            "1000",
            "--dt-out-us",
            "100",
            "--trajectories",
            "3",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    for i in 0..3 {
        let name = format!("counts_{i:03}.csv");
        assert_eq!(
            fs::read(one.path().join(&name)).unwrap(),
            fs::read(two.path().join(&name)).unwrap(),
            "{name} differs between thread counts"
        );
        let name = format!("trajectory_{i:03}.csv");
        assert_eq!(
            fs::read(one.path().join(&name)).unwrap(),
            fs::read(two.path().join(&name)).unwrap(),
            "{name} differs between thread counts"
        );
    }
}

#[test]
fn manifest_argv_reruns_to_identical_outputs() {
    let first = TempDir::new().unwrap();
    assert_eq!(code(&quick_stochastic(first.path(), "42")), 0);
    let manifest = read(&first.path().join("manifest.txt"));
    let rerun_line = manifest
        .lines()
        .find_map(|l| l.strip_prefix("rerun = "))
        .expect("manifest lacks a rerun line")
        .to_owned();

    let second = TempDir::new().unwrap();
    let replayed = rerun_line.replace(
        first.path().to_str().unwrap(),
        second.path().to_str().unwrap(),
    );
    assert_ne!(
        rerun_line, replayed,
        "rerun must point at a fresh directory"
    );
    let rerun = Command::new("sh")
        .arg("-c")
        .arg(&replayed)
        .output()
        .expect("failed to replay the rerun line");
    assert_eq!(rerun.status.code(), Some(0), "rerun: {replayed}");

    assert_eq!(
        fs::read(first.path().join("counts.csv")).unwrap(),
        fs::read(second.path().join("counts.csv")).unwrap()
    );
    assert_eq!(
        fs::read(first.path().join("trajectory.csv")).unwrap(),
        fs::read(second.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn malformed_input_names_the_offending_line() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("broken.csv");
    fs::write(
        &bad,
        "t_us,re_a,im_a,re_M,im_M,N_g,N_e,photons\n\
         0,0,0,0,0,20000,0,0\n\
         500,0,0,oops,0,19900,0,0\n",
    )
    .unwrap();
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "analyze",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("broken.csv"), "stderr: {err}");
    assert!(err.contains('3'), "stderr should name line 3: {err}");
}

#[test]
fn analyze_without_transition_notices_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let sim = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
        "--t-end-us",
        "1000",
        "--dt-out-us",
        "100",
    ]);
    assert_eq!(code(&sim), 0);
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "analyze",
        dir.path().join("trajectory.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("notice: no transition"));
}

#[test]
fn analyze_counts_writes_statistics_reports_and_aligned_traces() {
    let dir = TempDir::new().unwrap();
    let sim = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "eta_over_kappa=100",
        "simulate",
        "--mode",
        "stochastic",
        "--t-end-us",
        "5000",
        "--dt-out-us",
        "100",
    ]);
    assert_eq!(code(&sim), 0, "stderr: {}", stderr(&sim));

    let out_dir = TempDir::new().unwrap();
    let counts: PathBuf = dir.path().join("counts.csv");
    let out = run(&[
        "--out",
        out_dir.path().to_str().unwrap(),
        "--set",
        "eta_over_kappa=100",
        "analyze",
        counts.to_str().unwrap(),
        "--window-us",
        "200",
        "--align",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let flux = read(&out_dir.path().join("counts_fluctuations.csv"));
    assert!(flux.starts_with("t_us,mean_n,g2_raw,g2_clamped,n_th"));
    let report = read(&out_dir.path().join("counts_report.txt"));
    assert!(report.contains("t10"));
    assert!(report.contains("width"));
    let aligned = read(&out_dir.path().join("aligned_counts.csv"));
    assert!(aligned.contains("t_us,photons"));
    let manifest = read(&out_dir.path().join("manifest.txt"));
    assert!(manifest.contains("status = ok"));
}

#[test]
fn sweep_with_two_drives_writes_table_and_skips_the_fit() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "sweep",
        "--drives",
        "90,100",
        "--t-end-us",
        "6000",
        "--window-us",
        "200",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("power-law fit skipped"));

    let table = read(&dir.path().join("scaling.csv"));
    assert!(table.starts_with("drive_photons,width_us,n_th_integrated"));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(!dir.path().join("scaling_fit.txt").exists());
}

#[test]
fn config_file_flows_into_the_manifest() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "eta_over_kappa = 31.6\nkappa_mhz = 3.22\n").unwrap();
    let out = run(&[
        "--config",
        conf.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
        "--t-end-us",
        "100",
        "--dt-out-us",
        "10",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let manifest = read(&dir.path().join("manifest.txt"));
    assert!(
        manifest.contains("param.eta_over_kappa = 31.6"),
        "manifest:\n{manifest}"
    );
    assert!(manifest.contains("status = ok"));
}
