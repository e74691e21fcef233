//! CLI acceptance: determinism of emitted artifacts, the built-in example
//! commands, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consensus-cli"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = cli().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn snapshot(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names
        .iter()
        .map(|n| std::fs::read(dir.join(n)).expect("artifact exists"))
        .collect()
}

#[test]
fn criterion_9_fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = |n: &str| d.join(n).to_str().unwrap().to_string();

    let commands: Vec<Vec<String>> = vec![
        vec![
            "example".into(),
            "--id".into(),
            "paper-sec5".into(),
            "--steps".into(),
            "2000".into(),
            "--out-csv".into(),
            path("sec5.csv"),
            "--out-json".into(),
            path("sec5.json"),
        ],
        vec![
            "simulate".into(),
            "--schedule".into(),
            "cut-balanced:n=4,seed=11".into(),
            "--steps".into(),
            "400".into(),
            "--record-sorted".into(),
            "--out-csv".into(),
            path("traj.csv"),
            "--out-sorted-csv".into(),
            path("sorted.csv"),
            "--out-json".into(),
            path("traj.json"),
        ],
        vec![
            "verify".into(),
            "--suite".into(),
            "lemmas".into(),
            "--trials".into(),
            "150".into(),
            "--seed".into(),
            "7".into(),
            "--out-json".into(),
            path("verify.json"),
        ],
        vec![
            "bound-cut".into(),
            "--schedule".into(),
            "cut-balanced:n=4,seed=29".into(),
            "--ratio".into(),
            "2".into(),
            "--window".into(),
            "3".into(),
            "--eps-target".into(),
            "0.5".into(),
            "--horizon-windows".into(),
            "700".into(),
            "--max-stages".into(),
            "1".into(),
            "--out-json".into(),
            path("bound.json"),
            "--out-csv".into(),
            path("bound.csv"),
        ],
        vec![
            "persistence".into(),
            "--schedule".into(),
            "arc-balanced:n=3,seed=17".into(),
            "--horizon".into(),
            "200".into(),
            "--tail-budget".into(),
            "0.01".into(),
            "--out-json".into(),
            path("persistence.json"),
        ],
    ];
    let artifacts = [
        "sec5.csv",
        "sec5.json",
        "traj.csv",
        "sorted.csv",
        "traj.json",
        "verify.json",
        "bound.json",
        "bound.csv",
        "persistence.json",
    ];

    let mut ok = true;
    let mut first_stdout = Vec::new();
    for round in 0..2 {
        let mut stdouts = Vec::new();
        for args in &commands {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            stdouts.push(run_ok(&args).stdout);
        }
        if round == 0 {
            first_stdout = stdouts;
        } else {
            ok &= first_stdout == stdouts;
        }
    }
    let first = snapshot(d, &artifacts);
    for args in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&args);
    }
    let second = snapshot(d, &artifacts);
    ok &= first == second;

    println!(
        "acceptance 09 fixed-seed byte-identical outputs: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn example_three_agent_reports_spread_floor() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sec5.csv");
    run_ok(&[
        "example",
        "--id",
        "paper-sec5",
        "--steps",
        "10000",
        "--out-csv",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let last = text.lines().last().unwrap();
    let spread: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(spread >= 0.5 - 1e-9, "final spread {spread}");
    assert!(text.lines().next().unwrap().starts_with("t,x_1,x_2,x_3,H,h,Psi"));
}

#[test]
fn example_four_agent_prints_sorted_step() {
    let out = run_ok(&["example", "--id", "paper-sec4", "--steps", "1"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("[1, 2, 1, 2]"), "{stdout}");
    assert!(stdout.contains("[1, 3, 2, 4]"), "{stdout}");
    assert!(stdout.contains("[1, 1, 2, 2]"), "{stdout}");
}

#[test]
fn verify_suite_exits_clean() {
    let out = run_ok(&["verify", "--suite", "lemmas", "--trials", "1000", "--seed", "7"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.matches("0 violations").count(), 6, "{stdout}");
}

#[test]
fn validation_errors_exit_one_and_name_the_guard() {
    let out = cli()
        .args(["simulate", "--schedule", "bogus:n=3", "--steps", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = cli()
        .args([
            "balance",
            "--schedule",
            "cut-balanced:n=13,seed=1",
            "--condition",
            "asymmetry",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("requires n <= 12"), "{stderr}");
}

#[test]
fn unmet_ratio_exits_two() {
    let out = cli()
        .args([
            "balance",
            "--schedule",
            "paper-sec5",
            "--condition",
            "cut",
            "--window",
            "1",
            "--horizon",
            "1:300",
            "--ratio",
            "1.2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
