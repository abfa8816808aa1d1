use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robin-bayes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_ok(args: &[&str]) -> Output {
    let o = bin(args);
    assert!(
        o.status.success(),
        "{args:?} failed:\n{}\n{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

#[test]
fn smoke_pipeline_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let c = config("smoke.json");
    let c = c.to_str().unwrap();
    for cmd in ["simulate", "sample", "analyze"] {
        run_ok(&[cmd, "--config", c, "--out", out]);
    }
    let data: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dataset.json")).unwrap()).unwrap();
    assert_eq!(data["points"].as_array().unwrap().len(), 10);
    assert_eq!(data["values"].as_array().unwrap().len(), 10);

    // 200 iterations, 100 burn-in, thinning 10.
    let chain = fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 11);
    assert!(chain.starts_with("iteration,theta_-2,theta_-1,theta_0,theta_1,theta_2,loglik,step"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["grid"].as_array().unwrap().len(), 201);
    assert!(summary["summary"]["errors"]["theta_l2"].as_f64().unwrap().is_finite());
    for f in ["band.csv", "trace.csv", "manifest.json", "histogram_theta_0.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn sample_refuses_a_dataset_from_another_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let c = config("smoke.json");
    run_ok(&["simulate", "--config", c.to_str().unwrap(), "--out", out]);

    let text = fs::read_to_string(&c).unwrap();
    let other = text.replacen("\"nx\": 20", "\"nx\": 24", 1);
    assert_ne!(other, text);
    let other_path = dir.path().join("other.json");
    fs::write(&other_path, other).unwrap();
    let o = bin(&["sample", "--config", other_path.to_str().unwrap(), "--out", out]);
    assert!(!o.status.success());
    assert!(!dir.path().join("chain.csv").exists());
}

#[test]
fn analyze_detects_an_edited_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let c = config("smoke.json");
    let c = c.to_str().unwrap();
    run_ok(&["simulate", "--config", c, "--out", out]);
    run_ok(&["sample", "--config", c, "--out", out]);
    let path = dir.path().join("chain.csv");
    let mut chain = fs::read_to_string(&path).unwrap();
    let last = chain.lines().last().unwrap().to_string();
    chain.push_str(&last);
    chain.push('\n');
    fs::write(&path, chain).unwrap();
    assert!(!bin(&["analyze", "--config", c, "--out", out]).status.success());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("smoke.json")).unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text.replace("\"burn_in\"", "\"burnin\"")).unwrap();
    let o = bin(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("burnin"));
}

#[test]
fn verify_prior_passes() {
    let o = run_ok(&["verify", "--suite", "prior"]);
    assert!(stdout(&o).contains("4 checks, 0 failed"));
}

#[test]
fn verify_fem_flags_a_perturbed_stiffness() {
    let o = bin(&["verify", "--suite", "fem", "--stiffness-fault", "0.05"]);
    assert!(!o.status.success());
    let text = stdout(&o);
    assert!(text.contains("[FAIL] laplace L2 order"), "{text}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("first failure"));
}
