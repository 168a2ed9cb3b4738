use std::fs;
use std::process::Command;

const TINY: &str = r#"
schema = 1

[[scenario]]
id = "tiny"
length = 1.0
final_time = 0.005
boundary = "no-flux"
ladder = [16, 24]
samples = 20
solver = { m = 2.0 }
drift = { preset = "vortex", strength = 1.0 }
measure.atoms = [{ x = [0.5, 0.5], t = 0.001, mass = 1.0 }]
"#;

fn pmdrift(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pmdrift")).args(args).output().unwrap()
}

#[test]
fn classify_prints_the_verdict() {
    let out = pmdrift(&["classify", "--m", "1.5", "--q1", "4", "--q2", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["plain"], "OnLine");
    assert!(v["theorems"].as_array().unwrap().iter().any(|t| t == "PME_admissible"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(pmdrift(&["classify", "--m", "1.5"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema = 9").unwrap();
    let out = pmdrift(&["suite", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn solve_then_verify_reproduces_the_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");
    let o = pmdrift(&["solve", "--config", cfg.to_str().unwrap(), "--n", "16", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["budget.csv", "times.csv", "trajectory.pmdt", "reports.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let solved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports.json")).unwrap()).unwrap();
    let mass = solved.as_array().unwrap().iter().find(|r| r["id"] == "mass_bound").unwrap().clone();

    let dump = out.join("trajectory.pmdt");
    let o = pmdrift(&["verify", "--traj", dump.to_str().unwrap(), "--estimates", "mass_bound"]);
    assert!(o.status.success());
    let verified: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(verified[0]["lhs"], mass["lhs"]);
    assert_eq!(verified[0]["rhs"], mass["rhs"]);

    let o = pmdrift(&["verify", "--traj", dump.to_str().unwrap(), "--estimates", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn suite_writes_the_bundle_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("bundle");
    let o = pmdrift(&["--workers", "2", "suite", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let bundle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports.json")).unwrap()).unwrap();
    assert_eq!(o.status.success(), bundle["pass"].as_bool().unwrap());
    let csv = fs::read_to_string(out.join("tiny.convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("N,steps,runtime_s,budget_residual,oracle_error"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn region_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = pmdrift(&["region-sweep", "--m", "2", "--steps", "10", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("sweep_m2_d2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11 * 11);
}

#[test]
fn couple_needs_a_coupled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, TINY).unwrap();
    let o = pmdrift(&["couple", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let coupled = TINY.replace(
        "drift = { preset = \"vortex\", strength = 1.0 }",
        "couple = { potential = { preset = \"buoyancy\", g = 5.0 } }",
    );
    fs::write(&cfg, coupled).unwrap();
    let out = dir.path().join("c");
    let o = pmdrift(&["couple", "--config", cfg.to_str().unwrap(), "--n", "16", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("energy.csv").exists());
}
