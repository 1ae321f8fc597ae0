use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pullback-lab"));
    cmd.env_remove("PULLBACK_LAB_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pullback-lab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run_config(name: &str, dir: &Path) -> Output {
    let config = repo_config(name);
    run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn chebyshev_run_is_obstructed_at_two_with_certificate() {
    let dir = TempDir::new().unwrap();
    let out = run_config("chebyshev", dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("chebyshev.report.json"));
    let verdict = &report["verdict"];
    assert_eq!(verdict["verdict"], "obstructed");
    assert!((verdict["p"][0].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((verdict["multiplier"][0].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!(dir.path().join("chebyshev.certificate.json").exists());
    assert!(dir.path().join("chebyshev.trace.jsonl").exists());
}

#[test]
fn basilica_run_is_realized_at_golden_fixed_point() {
    let dir = TempDir::new().unwrap();
    let out = run_config("basilica", dir.path());
    assert_eq!(code(&out), 0);
    let report = read_json(&dir.path().join("basilica.report.json"));
    let verdict = &report["verdict"];
    assert_eq!(verdict["verdict"], "realized");
    let x = verdict["points"][0]["x_star"][0].as_f64().unwrap();
    assert!((x - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-8, "{x}");
    assert!(!dir.path().join("basilica.certificate.json").exists());
}

#[test]
fn malformed_config_exits_with_input_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"name\": \"bad\", \"map\": ").unwrap();
    let out = run(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    let missing = dir.path().join("missing.json");
    let out = run(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn non_psf_map_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut config = read_json(&repo_config("basilica"));
    config["map"]["numerator"][0] = serde_json::json!([-0.5, 0.0]);
    let path = dir.path().join("c.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let out = run(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_accepts_valid_pair_and_rejects_tampering() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_config("chebyshev", dir.path())), 0);
    let trace = dir.path().join("chebyshev.trace.jsonl");
    let cert = dir.path().join("chebyshev.certificate.json");
    let out = run(&["check", trace.to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // A perturbed stored position fails the replay comparison.
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut record: Value = serde_json::from_str(&lines[5]).unwrap();
    let x = record["marked"][0]["position"][0].as_f64().unwrap();
    record["marked"][0]["position"][0] = serde_json::json!(x + 1e-6);
    lines[5] = record.to_string();
    let edited = dir.path().join("edited.trace.jsonl");
    std::fs::write(&edited, lines.join("\n") + "\n").unwrap();
    let out = run(&["check", edited.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    // An unchanged trace with a different digest in the certificate fails.
    let mut c = read_json(&cert);
    c["trace_digest"] = Value::String("0".repeat(64));
    let forged = dir.path().join("forged.certificate.json");
    std::fs::write(&forged, c.to_string()).unwrap();
    let out = run(&["check", trace.to_str().unwrap(), forged.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    // A certificate checked against a different trace fails too.
    let mut t = text.clone();
    t.push('\n');
    let other = dir.path().join("other.trace.jsonl");
    std::fs::write(&other, t).unwrap();
    let out = run(&["check", other.to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn classify_and_certify_replay_a_trace() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_config("chebyshev", dir.path())), 0);
    let trace = dir.path().join("chebyshev.trace.jsonl");
    let out = run(&["classify", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let verdict: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["verdict"], "obstructed");

    let certs = dir.path().join("certs");
    let out = run(&["certify", trace.to_str().unwrap(), "--out", certs.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let replayed = read_json(&certs.join("chebyshev.certificate.json"));
    let original = read_json(&dir.path().join("chebyshev.certificate.json"));
    assert_eq!(replayed, original);
}

#[test]
fn certify_without_certificate_exits_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_config("basilica", dir.path())), 0);
    let trace = dir.path().join("basilica.trace.jsonl");
    let out = run(&[
        "certify",
        trace.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = TempDir::new().unwrap();
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let config = repo_config("basilica");
    let out = bin()
        .env("PULLBACK_LAB_OUT", &env_dir)
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            flag_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(env_dir.join("basilica.report.json").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn tolerance_and_budget_overrides() {
    let dir = TempDir::new().unwrap();
    let config = repo_config("basilica");
    let c = config.to_str().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&[
        "run",
        "--config",
        c,
        "--out",
        d,
        "--tol",
        "eps_lift=1e-11",
        "--max-iters",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("basilica.report.json"));
    assert_eq!(report["steps"], 5);
    assert_eq!(report["verdict"]["verdict"], "undecided");

    for bad in ["eps_lift", "eps_lift=abc", "no_such_tolerance=1", "eps_lift=-1"] {
        let out = run(&["run", "--config", c, "--out", d, "--tol", bad]);
        assert_eq!(code(&out), 2, "{bad}");
    }
}

#[test]
fn batch_runs_every_match() {
    let dir = TempDir::new().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir(&configs).unwrap();
    for name in ["basilica", "chebyshev", "trivial-point"] {
        std::fs::copy(repo_config(name), configs.join(format!("{name}.json"))).unwrap();
    }
    let pattern = format!("{}/*.json", configs.display());
    let out = run(&["run", "--batch", &pattern, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["basilica", "chebyshev", "trivial-point"] {
        assert!(dir.path().join(format!("{name}.report.json")).exists(), "{name}");
    }

    std::fs::write(configs.join("zz-broken.json"), "not json").unwrap();
    let out = run(&["run", "--batch", &pattern, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    let out = run(&["run", "--batch", "/nonexistent/*.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn analyze_reports_postsingular_portrait() {
    let dir = TempDir::new().unwrap();
    let config = repo_config("chebyshev");
    let out = run(&[
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let analysis = read_json(&dir.path().join("chebyshev.analysis.json"));
    assert_eq!(analysis["postsingular"]["is_psf"], true);
    assert_eq!(analysis["fixed_points"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_config_flag_is_input_error() {
    assert_eq!(code(&run(&["run"])), 2);
}
