use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chargesched"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
tariff = "sce-tou-ev-4"

[network]
preset = "small-site"
capacity_kva = 10.0

[workload]
days = 1
session_scale = 0.25
seed = 11

[algorithm]
name = "llf"

[sweep]
capacities_kva = [6.0, 10.0, 20.0, 40.0]
algorithms = ["llf", "edf", "rr"]

[profit]
algorithms = ["llf", "uncontrolled"]
include_optimal = false
"#;

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_writes_traces_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "simulate",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "summary.json",
        "traces.csv",
        "site.csv",
        "sessions.csv",
        "resolved_config.toml",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["algorithm"], "llf");
    let met = summary["demand_met"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&met));
    assert_eq!(summary["audit"]["violations"], 0);
}

#[test]
fn missing_network_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[network]\nfile = \"no-such-network.json\"\n");
    let o = run(&["--config", &config, "simulate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-network.json"));
}

#[test]
fn dry_run_prints_the_resolved_config_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "99",
        "--dry-run",
        "simulate",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 99"));
    assert!(text.contains("horizon_periods = 144"));
    assert!(text.contains("theta_down = 2.0"));
    assert!(text.contains("demand_charge_rate = 15.51"));
    assert!(!out.exists());
}

#[test]
fn sweep_has_one_row_per_point_and_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "sweep-capacity",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 4 * 3);
    for alg in ["llf", "edf", "rr"] {
        let met: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == alg)
            .map(|r| r[2].parse().unwrap())
            .collect();
        assert_eq!(met.len(), 4);
        assert!(
            met.windows(2).all(|w| w[1] >= w[0] - 1e-9),
            "{alg}: {met:?}"
        );
    }
}

#[test]
fn single_capacity_gives_one_row_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &SMALL.replace("[6.0, 10.0, 20.0, 40.0]", "[10.0]"),
    );
    let out = dir.path().join("out");
    assert!(run(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "sweep-capacity"
    ])
    .status
    .success());
    assert_eq!(csv_rows(&out.join("sweep.csv")).len(), 3);
}

#[test]
fn uncontrolled_has_the_highest_peak_when_congested() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "profit",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("profit.csv"));
    let peak = |name: &str| -> f64 {
        rows.iter().find(|r| r[0] == name).unwrap()[5]
            .parse()
            .unwrap()
    };
    assert!(peak("uncontrolled") > peak("llf"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("profit.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
}

#[test]
fn profit_needs_a_tariff() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &SMALL.replace("tariff = \"sce-tou-ev-4\"", ""));
    let o = run(&[
        "--config",
        &config,
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "profit",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("tariff"));
}

#[test]
fn empty_workload_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.json"), "[]").unwrap();
    let body = SMALL.replace("[workload]", "[workload]\nfile = \"empty.json\"");
    let config = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "profit",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for row in csv_rows(&out.join("profit.csv")) {
        for cell in &row[1..6] {
            assert_eq!(cell.parse::<f64>().unwrap(), 0.0, "{row:?}");
        }
    }
}

#[test]
fn generated_workload_validates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(
        run(&["--config", &config, "--out", out_s, "generate-workload"])
            .status
            .success()
    );
    let data = out.join("workload.json");
    let o = run(&[
        "--config",
        &config,
        "--out",
        out_s,
        "validate-dataset",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["valid"], true);
    assert!(report["sessions"].as_u64().unwrap() > 0);
    assert!(out.join("validation.json").exists());
}

#[test]
fn unknown_evse_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.json");
    std::fs::write(
        &data,
        r#"[{"id": "x", "evse_id": "nowhere", "connect_minute": 0.0, "disconnect_minute": 60.0, "kwh": 5.0}]"#,
    )
    .unwrap();
    let config = write_config(dir.path(), SMALL);
    let o = run(&[
        "--config",
        &config,
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "validate-dataset",
        data.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(name);
        let out_s = out.to_str().unwrap();
        for cmd in ["simulate", "sweep-capacity", "profit", "generate-workload"] {
            let o = run(&["--config", &config, "--out", out_s, "--jobs", jobs, cmd]);
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        outputs.push(out);
    }
    let mut files: Vec<_> = std::fs::read_dir(&outputs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    assert!(files.len() >= 9);
    for f in &files {
        if f == "resolved_config.toml" {
            // Holds the output directory itself.
            continue;
        }
        let reference = std::fs::read(outputs[0].join(f)).unwrap();
        for other in &outputs[1..] {
            assert_eq!(
                std::fs::read(other.join(f)).unwrap(),
                reference,
                "{f:?} differs"
            );
        }
    }
}

#[test]
fn zero_jobs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let o = run(&[
        "--config",
        &config,
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--jobs",
        "0",
        "sweep-capacity",
    ]);
    assert!(!o.status.success());
}
