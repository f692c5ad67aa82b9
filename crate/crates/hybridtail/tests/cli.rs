use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use hybridtail::io::{load_series, Column, Series, Tail};
use hybridtail_core::ecdf::BandwidthRule;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hybridtail"));
    c.env("SOURCE_DATE_EPOCH", "1700000000");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_record(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code));
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["code"], code);
    v
}

fn simulate(dir: &Path, name: &str, theta: &str, n: usize, seed: u64) -> String {
    let path = dir.join(name);
    let out = run(&[
        "simulate",
        "--theta",
        theta,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_piped_into_fit_recovers_the_tail_index() {
    let sim = run(&["simulate", "--theta", "2,1,5,0.5", "--n", "1000", "--seed", "7"]);
    assert!(sim.status.success());
    assert_eq!(String::from_utf8_lossy(&sim.stdout).lines().count(), 1000);
    let mut child = bin()
        .args(["fit", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&sim.stdout).unwrap();
    let v = json(&child.wait_with_output().unwrap());
    let xi = v["fit"]["theta"]["xi"].as_f64().unwrap();
    assert!(xi > 0.35 && xi < 0.65, "xi = {xi}");
    assert_eq!(v["fit"]["n"], 1000);
    assert_eq!(v["manifest"]["command"], "fit");
    assert_eq!(v["manifest"]["timestamp"], "2023-11-14T22:13:20Z");
    let beta = v["fit"]["derived"]["beta"].as_f64().unwrap();
    let u2 = v["fit"]["theta"]["u2"].as_f64().unwrap();
    assert_eq!(beta, xi * u2);
}

#[test]
fn constant_series_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    fs::write(&path, "7\n".repeat(100)).unwrap();
    let v = error_record(&run(&["fit", path.to_str().unwrap()]), 3);
    assert_eq!(v["error"], "data");
    fs::write(&path, "x\n\nNaN\n").unwrap();
    error_record(&run(&["fit", path.to_str().unwrap()]), 3);
    fs::write(&path, "1\n2\noops\n").unwrap();
    let v = error_record(&run(&["fit", path.to_str().unwrap()]), 3);
    assert!(v["message"].as_str().unwrap().starts_with("line 3"));
}

#[test]
fn usage_errors_exit_with_two() {
    error_record(&run(&["mc", "--theta", "1,2"]), 2);
    error_record(&run(&["frobnicate"]), 2);
    // u1 > u2 is an invalid parameter vector
    error_record(&run(&["simulate", "--theta", "2,1,1,0.5", "--n", "10"]), 2);
    error_record(&run(&["fit", "x.csv", "--alpha", "2"]), 2);
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn baselines_agree_on_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), "s.csv", "2,1,5,0.5", 100_000, 3);
    let plots = dir.path().join("plots");
    let v = json(&run(&[
        "baselines",
        &path,
        "--method",
        "all",
        "--plot-dir",
        plots.to_str().unwrap(),
    ]));
    let xs: Vec<f64> = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["fit"]["xi"].as_f64().unwrap())
        .collect();
    assert_eq!(xs.len(), 4);
    for a in &xs {
        for b in &xs {
            assert!((a - b).abs() <= 0.1, "{xs:?}");
        }
    }
    assert_eq!(v["results"][1]["fit"]["n_exceedances"], 316);
    for m in ["mep", "hill", "qq", "ml"] {
        let text = fs::read_to_string(plots.join(format!("tail_{m}.csv"))).unwrap();
        assert_eq!(text.lines().next(), Some("x,empirical,model"));
    }
    let hill = json(&run(&["baselines", &path, "--method", "hill", "--k", "50"]));
    assert_eq!(hill["results"].as_array().unwrap().len(), 1);
    assert_eq!(hill["results"][0]["fit"]["n_exceedances"], 50);
}

#[test]
fn two_sided_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("returns.csv");
    let mut text = String::from("date,ret\n");
    let mut skipped = 0;
    for i in 0..7348 {
        if i % 500 == 0 {
            text.push_str(&format!("{i},\n"));
            skipped += 1;
        } else if i % 777 == 0 {
            text.push_str(&format!("{i},NaN\n"));
            skipped += 1;
        } else {
            // deterministic values of both signs, with zeros
            let x = ((i * 7919) % 2001) as f64 / 1000.0 - 1.0;
            text.push_str(&format!("{i},{x}\n"));
        }
    }
    fs::write(&path, text).unwrap();
    let loaded = load_series(
        path.to_str().unwrap(),
        &Column::Name("ret".into()),
        Tail::Both,
        Some(0.0),
        BandwidthRule::default(),
    )
    .unwrap();
    assert_eq!(loaded.skipped, skipped);
    match loaded.series {
        Series::Both { left, right, .. } => {
            assert_eq!(left.len() + right.len(), 7348 - skipped);
            assert!(left.iter().all(|&x| x > 0.0));
            assert!(right.iter().all(|&x| x >= 0.0));
        }
        s => panic!("{s:?}"),
    }
}

#[test]
fn two_sided_fit_reports_a_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let right = simulate(dir.path(), "r.csv", "2,1,5,0.5", 2000, 1);
    let left = simulate(dir.path(), "l.csv", "1,1,4,0.3", 2000, 2);
    let mut text = fs::read_to_string(right).unwrap();
    for line in fs::read_to_string(left).unwrap().lines() {
        let x: f64 = line.parse().unwrap();
        text.push_str(&format!("{}\n", -x));
    }
    let path = dir.path().join("both.csv");
    fs::write(&path, text).unwrap();
    let v = json(&run(&["fit", path.to_str().unwrap(), "--tail", "both", "--m", "4000"]));
    let a1 = v["mixture"]["alpha1"].as_f64().unwrap();
    let a2 = v["mixture"]["alpha2"].as_f64().unwrap();
    assert!((a1 + a2 - 1.0).abs() < 1e-15 && a1 > 0.0 && a2 > 0.0);
    let n = v["left"]["n"].as_u64().unwrap() + v["right"]["n"].as_u64().unwrap();
    assert_eq!(n, 4000);
}

#[test]
fn converge_lab_traces() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g.csv");
    let out = run(&[
        "simulate",
        "--ggpd",
        "0,1,0.4354",
        "--n",
        "5000",
        "--seed",
        "7",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let traces = dir.path().join("traces.csv");
    let v = json(&run(&[
        "converge-lab",
        data.to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
    ]));
    assert_eq!(v["traces"].as_array().unwrap().len(), 6);
    assert!(v["spread"].as_f64().unwrap() < 1e-3 * v["range"].as_f64().unwrap());
    let text = fs::read_to_string(traces).unwrap();
    assert!(text.starts_with("iteration,start_0,"));
}

#[test]
fn small_mc_writes_report_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("table.txt");
    let v = json(&run(&[
        "mc",
        "--theta",
        "2,1,5,0.5",
        "--n",
        "300",
        "--replicates",
        "3",
        "--m",
        "1000",
        "--seed",
        "4",
        "--report",
        report.to_str().unwrap(),
    ]));
    assert_eq!(v["report"]["replicates"], 3);
    assert!(v["report"]["mean_seconds"].as_f64().unwrap() > 0.0);
    let table = fs::read_to_string(report).unwrap();
    for name in ["mu", "sigma", "u2", "xi"] {
        assert!(table.lines().any(|l| l.starts_with(name)), "{table}");
    }
    assert!(table.contains("D = "));
}

#[test]
fn numbers_round_trip_through_the_formats() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), "s.csv", "2,1,5,0.5", 500, 12);
    let want = hybridtail_core::model::sample(500, &hybridtail_core::ModelParams::new(2.0, 1.0, 5.0, 0.5).unwrap(), 12)
        .unwrap();
    let got: Vec<f64> = fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(got, want);
}
