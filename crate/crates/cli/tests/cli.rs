use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cmalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmalab")).args(args).output().unwrap()
}

fn instance(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name).to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_instance(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("inst.toml");
    fs::write(&p, format!("schema = \"cmalab-instance/1\"\n{body}")).unwrap();
    p
}

#[test]
fn small_solve_writes_a_clean_run() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = write_instance(tmp.path(), "[domain]\nshape = \"ball\"\nm = 2\nn = 9\n[density]\nexpr = \"1 + 0.2*x1\"\n");
    let out = tmp.path().join("run");
    let o = cmalab(&["solve", "--instance", inst.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solution.csv", "plot.csv", "reports.jsonl", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let kinds: Vec<String> = fs::read_to_string(out.join("reports.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert!(kinds.iter().any(|k| k == "eqm1_audit"), "{kinds:?}");

    let before: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    let r = cmalab(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let after: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(before.len(), after.len());

    fs::write(out.join("solution.csv"), "tampered").unwrap();
    assert_ne!(code(&cmalab(&["report", "--out", out.to_str().unwrap()])), 0);
}

#[test]
fn negative_density_exits_with_the_conditions_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("neg");
    let o = cmalab(&["solve", "--instance", &instance("negative_density.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(out.join("manifest.json").exists());
    assert_eq!(code(&cmalab(&["report", "--out", out.to_str().unwrap()])), 0);
}

#[test]
fn bad_instance_and_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = write_instance(tmp.path(), "[domain]\nshape = \"sphere\"\nm = 2\nn = 9\n[density]\nexpr = \"1\"\n");
    let out = tmp.path().join("x");
    assert_eq!(code(&cmalab(&["solve", "--instance", inst.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
    let missing = tmp.path().join("nope.toml");
    assert_eq!(code(&cmalab(&["solve", "--instance", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
}

#[test]
fn injected_fault_is_caught() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("l");
    let o = cmalab(&["lemmas", "--trials", "200", "--inject-fault", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(out.join("counterexamples.json").exists());
    let o = cmalab(&["lemmas", "--trials", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(!out.join("counterexamples.json").exists());
}

#[test]
fn curvature_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let run = |m: &str| code(&cmalab(&["curvature", "--metric", m, "--samples", "3", "--frames", "10", "--out", out.to_str().unwrap()]));
    assert_eq!(run("fubini-study-2"), 0);
    assert_eq!(run("poincare-disk"), 0);
    assert_eq!(run("no-such-metric"), 2);
}

#[test]
fn conditions_verb() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    let o = cmalab(&["conditions", "--instance", &instance("radial_s_m2.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cmalab(&["conditions", "--instance", &instance("negative_density.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}
