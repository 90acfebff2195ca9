use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruelle"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

fn base(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(configs().join(name)).unwrap()).unwrap()
}

#[test]
fn success_exits_zero_with_envelope() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("classify_half.json");
    let out = run(&["classify", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["subcommand"], "classify");
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    assert!(v["version"].as_str().unwrap().starts_with('v'));
    assert!(v["seed"].is_null());
    assert!(v["timestamp"].is_u64());
    let on_disk: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("classify.json")).unwrap()).unwrap();
    assert_eq!(on_disk, v);
}

#[test]
fn unknown_field_is_reported_with_its_path() {
    let tmp = TempDir::new().unwrap();
    let mut v = base("zero_potential.json");
    v["gibbs"]["particels"] = json!(10);
    let cfg = write_config(tmp.path(), "bad.json", &v);
    let out = run(&["gibbs", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gibbs"), "{err}");
    assert!(err.contains("particels"), "{err}");
}

#[test]
fn invalid_value_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut v = base("zero_potential.json");
    v["metric"]["alpha"] = json!(1.5);
    let cfg = write_config(tmp.path(), "bad.json", &v);
    let out = run(&["eigen", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metric.alpha"));
}

#[test]
fn stochastic_command_requires_a_seed() {
    let tmp = TempDir::new().unwrap();
    let mut v = base("zero_potential.json");
    v["gibbs"].as_object_mut().unwrap().remove("seed");
    let cfg = write_config(tmp.path(), "noseed.json", &v);
    let out = run(&["gibbs", &cfg, "--particles", "50", "--iters", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gibbs.seed"));
    let ok = run(&["gibbs", &cfg, "--particles", "50", "--iters", "2", "--seed", "5"], tmp.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["overrides"]["seed"], 5);
}

#[test]
fn premise_violation_exits_two_and_still_reports() {
    let tmp = TempDir::new().unwrap();
    let mut v = base("contract.json");
    v["contract"]["global"] = json!([{ "x": [20.0], "y": [0.0], "n": 2 }]);
    v["contract"]["particles"] = json!(50);
    let cfg = write_config(tmp.path(), "far.json", &v);
    let out = run(&["contract", &cfg, "--global"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["result"]["global"][0]["premise_violation"].is_string());
    assert!(tmp.path().join("contract.json").exists());
}

#[test]
fn contract_needs_an_experiment() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("contract.json");
    let out = run(&["contract", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn outputs_are_complete_and_leave_no_temp_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("zero_potential.json");
    let out = run(&["eigen", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["eigen.json", "psi.bin", "psi.meta.json"]);
    let meta: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("psi.meta.json")).unwrap()).unwrap();
    let bytes = std::fs::read(tmp.path().join("psi.bin")).unwrap();
    let sizes: Vec<u64> = meta["sizes"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap()).collect();
    let header = 12 + sizes.iter().map(|n| 8 + 8 * n).sum::<u64>() + 8;
    assert_eq!(&bytes[..4], b"RGRD");
    assert_eq!(bytes.len() as u64, header + 8 * sizes.iter().product::<u64>());
}

#[test]
fn reproducible_reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = configs().join("zero_potential.json");
    let args = ["gibbs", cfg.to_str().unwrap(), "--particles", "200", "--iters", "5", "--reproducible"];
    assert_eq!(run(&args, a.path()).status.code(), Some(0));
    assert_eq!(run(&args, b.path()).status.code(), Some(0));
    for name in ["gibbs.json", "cloud.jsonl", "cloud_prime.jsonl"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("classify_half.json");
    let out = Command::new(env!("CARGO_BIN_EXE_ruelle"))
        .args(["classify", cfg.to_str().unwrap()])
        .env("RUELLE_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("classify.json").exists());
}
