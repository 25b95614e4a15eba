use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sshchain"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SSHCHAIN_OUT")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn spectrum_of_uniform_four_site_chain() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["spectrum", "--n", "4", "--eta", "0", "--delta", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let ev = column(&csv, "eigenvalue");
    let expected = [-0.809017, -0.309017, 0.309017, 0.809017];
    for (a, b) in ev.iter().zip(expected) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn two_site_transfer_peaks_at_pi() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["transfer", "--n", "2", "--eta", "0", "--delta", "0", "--window", "10"]);
    assert!(o.status.success());
    let s = read_json(&dir.path().join("transfer.json"));
    assert!((s["t_star"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-6);
    assert!((s["value_star"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(s["inputs"]["chain"]["params"]["n_sites"], 2);
}

#[test]
fn missing_n_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&out, &["transfer", "--eta", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}

#[test]
fn out_of_domain_eta_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&out, &["spectrum", "--n", "4", "--eta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("chain.toml");
    std::fs::write(&cfg, "n_sites = 4\neta = 0.5\ndelta = 0.2\n").unwrap();
    let out = dir.path().join("a");
    let o = run(&out, &["spectrum", "--config", cfg.to_str().unwrap(), "--eta", "-0.25"]);
    assert!(o.status.success());
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["inputs"]["chain"]["params"]["eta"], -0.25);
    assert_eq!(m["inputs"]["chain"]["params"]["delta"], 0.2);

    std::fs::write(&cfg, "n_sites = 4\nwidth = 3\n").unwrap();
    let out = dir.path().join("b");
    let o = run(&out, &["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "map", "--n", "4", "--metric", "max-P1", "--delta-points", "5", "--eta-points", "4",
        "--window", "40",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&a, &args).status.success());
    assert!(run(&b, &args).status.success());
    for f in ["map.csv", "map.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.join("map.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "delta,eta,value,t_star,aux");
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn unknown_map_metric_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&out, &["map", "--n", "4", "--metric", "max-P9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn kay_rows_have_odd_multipliers() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["kay", "--q-max", "5"]).status.success());
    let csv = std::fs::read_to_string(dir.path().join("kay.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "eta,delta,T,q1,q2,q3,residual");
    let q1 = column(&csv, "q1");
    assert!(!q1.is_empty());
    assert!(q1.iter().all(|q| *q as u32 % 2 == 1));
}

#[test]
fn disorder_needs_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["disorder", "--n", "6", "--eta", "-0.5", "--d-j", "0.05", "--realizations", "20", "--window", "50"];
    let out = dir.path().join("none");
    assert_eq!(run(&out, &base).status.code(), Some(2));
    assert!(!out.exists());

    let mut args = base.to_vec();
    args.extend(["--seed", "7", "--per-realization"]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&a, &args).status.success());
    assert!(run(&b, &args).status.success());
    assert_eq!(
        std::fs::read(a.join("disorder_realizations.csv")).unwrap(),
        std::fs::read(b.join("disorder_realizations.csv")).unwrap()
    );
    let s = read_json(&a.join("disorder.json"));
    assert_eq!(s["realizations"], 20);
    assert!(s["std_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn dipolar_leakage_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["dipolar", "--n", "4", "--eta", "0.3", "--window", "200"]);
    assert!(o.status.success());
    let s = read_json(&dir.path().join("dipolar.json"));
    assert_eq!(s["inputs"]["chain"]["params"]["k_dip"], 0.1);
    let leak = s["max_leakage"].as_f64().unwrap();
    assert!(leak > 0.0 && leak <= 1.0);
}

#[test]
fn control_writes_pulse_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["control", "--n", "4", "--eta", "0", "--duration", "10", "--max-iters", "20", "--lambda", "0.5"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pulse = std::fs::read_to_string(dir.path().join("pulse.csv")).unwrap();
    let t = column(&pulse, "t");
    let u = column(&pulse, "u");
    assert_eq!(t.len(), 1002);
    assert_eq!((u[0], *u.last().unwrap()), (0.0, 0.0));
    let conv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let j = column(&conv, "infidelity");
    assert!(j.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn control_rejects_bad_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&out, &["control", "--n", "4", "--duration", "10", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn tmin_not_found_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["tmin", "--n", "4", "--etas", "0", "--t-start", "0.5", "--t-end", "1", "--t-step", "0.5", "--max-iters", "3"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("tmin.csv")).unwrap();
    assert_eq!(column(&csv, "T_min"), vec![-1.0]);
}
