use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use softmatch::synth::{self, Connectivity};
use softmatch::{save_graph, Variant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_softmatch"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_planted_pair(dir: &Path, n: usize, seed: u64) -> serde_json::Value {
    let g = synth::random_geometric_graph(n, seed, Connectivity::Full).unwrap();
    let (h, truth) = synth::plant_permutation(&g, seed + 1).unwrap();
    save_graph(dir.join("a.json"), &g).unwrap();
    save_graph(dir.join("b.json"), &h).unwrap();
    serde_json::json!({ "pairs": truth.pairs() })
}

#[test]
fn match_recovers_a_planted_pair_and_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_planted_pair(dir.path(), 8, 42);
    fs::write(dir.path().join("truth.json"), truth.to_string()).unwrap();

    let report_path = dir.path().join("report.json");
    let out = run(bin()
        .arg("match")
        .arg("--a")
        .arg(dir.path().join("a.json"))
        .arg("--b")
        .arg(dir.path().join("b.json"))
        .arg("--truth")
        .arg(dir.path().join("truth.json"))
        .arg("--out")
        .arg(&report_path));
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["algo"], "scg");
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["pairs"].as_array().unwrap().len(), 8);
    assert!(report["objective"].as_f64().unwrap() > 0.0);
    assert!(report["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(report["manifest"]["version"].as_str().unwrap().len() > 0);
    assert!(report["manifest"]["command"]
        .as_str()
        .unwrap()
        .contains("match"));
}

#[test]
fn match_without_out_prints_json_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    write_planted_pair(dir.path(), 6, 7);
    let out = run(bin()
        .arg("match")
        .arg("--a")
        .arg(dir.path().join("a.json"))
        .arg("--b")
        .arg(dir.path().join("b.json"))
        .arg("--algo")
        .arg("dspfp"));
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report["algo"], "dspfp");
    assert!(report.get("accuracy").is_none());
}

#[test]
fn match_validation_failures_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    write_planted_pair(dir.path(), 6, 9);

    let bad_gamma = run(bin()
        .arg("match")
        .arg("--a")
        .arg(dir.path().join("a.json"))
        .arg("--b")
        .arg(dir.path().join("b.json"))
        .arg("--gamma")
        .arg("0"));
    assert_eq!(bad_gamma.status.code(), Some(1));
    assert!(stderr_of(&bad_gamma).contains("gamma"));

    let missing = run(bin()
        .arg("match")
        .arg("--a")
        .arg(dir.path().join("nope.json"))
        .arg("--b")
        .arg(dir.path().join("b.json")));
    assert_eq!(missing.status.code(), Some(1));

    let bad_algo = run(bin()
        .arg("match")
        .arg("--a")
        .arg(dir.path().join("a.json"))
        .arg("--b")
        .arg(dir.path().join("b.json"))
        .arg("--algo")
        .arg("simplex"));
    assert_eq!(bad_algo.status.code(), Some(1));
}

#[test]
fn bench_operators_schema_is_stable_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("ops_a.csv");
    let second = dir.path().join("ops_b.csv");
    for (path, threads) in [(&first, "1"), (&second, "2")] {
        let out = run(bin()
            .env("GM_THREADS", threads)
            .arg("bench-operators")
            .arg("--n")
            .arg("12")
            .arg("--phi")
            .arg("1,100")
            .arg("--iters")
            .arg("10")
            .arg("--trials")
            .arg("2")
            .arg("--seed")
            .arg("3")
            .arg("--out")
            .arg(path));
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
        assert!(stdout_of(&out).contains("rows"));
    }

    let body = fs::read_to_string(&first).unwrap();
    assert_eq!(
        body.lines().next().unwrap(),
        "phi,operator,iter,distance,seed"
    );
    assert_eq!(body.lines().count(), 1 + 2 * 2 * 10 * 2);
    assert_eq!(body, fs::read_to_string(&second).unwrap());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ops_a.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    assert_eq!(manifest["config"]["n"], 12);
    assert!(manifest["command"].as_str().unwrap().contains("bench-operators"));
}

#[test]
fn bench_operators_softassign_distances_ignore_the_magnitude() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ops.csv");
    let out = run(bin()
        .arg("bench-operators")
        .arg("--n")
        .arg("15")
        .arg("--phi")
        .arg("1,100")
        .arg("--iters")
        .arg("8")
        .arg("--trials")
        .arg("1")
        .arg("--seed")
        .arg("5")
        .arg("--out")
        .arg(&path));
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let mut soft: Vec<(f64, usize, f64)> = Vec::new();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    for record in reader.records() {
        let record = record.unwrap();
        if &record[1] == "softassign" {
            soft.push((
                record[0].parse().unwrap(),
                record[2].parse().unwrap(),
                record[3].parse().unwrap(),
            ));
        }
    }
    let low: Vec<f64> = soft.iter().filter(|r| r.0 == 1.0).map(|r| r.2).collect();
    let high: Vec<f64> = soft.iter().filter(|r| r.0 == 100.0).map(|r| r.2).collect();
    assert_eq!(low.len(), 8);
    assert_eq!(high.len(), 8);
    for (a, b) in low.iter().zip(&high) {
        assert!((a - b).abs() < 1e-9, "softassign trace moved with phi: {a} vs {b}");
    }
}

#[test]
fn bench_noise_rows_are_deterministic_up_to_timing() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("noise_a.csv");
    let second = dir.path().join("noise_b.csv");
    for (path, threads) in [(&first, "1"), (&second, "2")] {
        let out = run(bin()
            .env("GM_THREADS", threads)
            .arg("bench-noise")
            .arg("--sizes")
            .arg("16")
            .arg("--deletions")
            .arg("0,2")
            .arg("--trials")
            .arg("2")
            .arg("--algos")
            .arg("scg,dspfp")
            .arg("--seed")
            .arg("11")
            .arg("--out")
            .arg(path));
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
        let text = stdout_of(&out);
        assert!(text.contains("improvements from the adaptive step size"));
        assert!(text.contains("scg"));
    }

    let parse = |path: &Path| {
        let mut reader = csv::Reader::from_path(path).unwrap();
        assert_eq!(
            reader.headers().unwrap(),
            &csv::StringRecord::from(vec![
                "algo",
                "alpha_mode",
                "n",
                "q",
                "seed",
                "time",
                "matching_error",
                "accuracy",
            ])
        );
        reader
            .records()
            .map(|r| {
                let r = r.unwrap();
                let mut fields: Vec<String> = r.iter().map(str::to_owned).collect();
                fields.remove(5);
                fields
            })
            .collect::<Vec<_>>()
    };
    let rows_a = parse(&first);
    let rows_b = parse(&second);
    assert_eq!(rows_a.len(), 2 * 2 * 2 * 2);
    assert_eq!(rows_a, rows_b);
    for row in &rows_a {
        let accuracy: f64 = row[6].parse().unwrap();
        assert!((0.0..=1.0).contains(&accuracy));
    }
}

#[test]
fn bench_noise_rejects_an_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .arg("bench-noise")
        .arg("--trials")
        .arg("0")
        .arg("--out")
        .arg(dir.path().join("x.csv")));
    assert_eq!(out.status.code(), Some(1));

    let bad_algo = run(bin()
        .arg("bench-noise")
        .arg("--sizes")
        .arg("12")
        .arg("--trials")
        .arg("1")
        .arg("--algos")
        .arg("newton")
        .arg("--out")
        .arg(dir.path().join("y.csv")));
    assert_eq!(bad_algo.status.code(), Some(1));
}

#[test]
fn selftest_filter_selects_a_single_check() {
    let out = run(bin().arg("selftest").arg("--filter").arg("eigen"));
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("[PASS] eigen-signature"));
    assert!(text.contains("1/1 checks passed"));

    let none = run(bin().arg("selftest").arg("--filter").arg("nonexistent"));
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn gm_threads_must_be_a_positive_integer() {
    let out = run(bin()
        .env("GM_THREADS", "many")
        .arg("selftest")
        .arg("--filter")
        .arg("eigen"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("GM_THREADS"));

    let zero = run(bin()
        .env("GM_THREADS", "0")
        .arg("selftest")
        .arg("--filter")
        .arg("eigen"));
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn algorithm_names_round_trip_through_the_cli_surface() {
    for variant in Variant::ALL {
        let parsed: Variant = variant.name().parse().unwrap();
        assert_eq!(parsed, variant);
    }
}
