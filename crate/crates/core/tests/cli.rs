use std::path::Path;
use std::process::{Command, Output};

fn tpqsdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpqsdp")).args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn malformed_config_exits_3_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("bad.toml"), "model = \"xxz\"\nn = 4\nmystery = true\n");
    let out = dir.path().join("out");
    let o = tpqsdp(&["learn", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn bad_values_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = tpqsdp(&["learn", "--model", "xxz", "--n", "4", "--backend", "gpu", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = tpqsdp(&["learn", "--model", "square", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = tpqsdp(&["learn", "--model", "xxz", "--n", "4", "--epsilon", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(tpqsdp(&["frobnicate"]).status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn oversized_operator_in_problem_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir.path().join("p.toml"), "n = 1\nepsilon = 0.1\n[[constraints]]\noperator = \"2.0 Z\"\nb = 0.0\n");
    let out = dir.path().join("out");
    let o = tpqsdp(&["solve", "--problem", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn infeasible_problem_exits_2_with_full_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        &dir.path().join("p.toml"),
        "n = 1\nepsilon = 0.2\n[[constraints]]\noperator = \"1.0 Z\"\nb = -0.9\n\
         [[constraints]]\noperator = \"-1.0 Z\"\nb = -0.9\n",
    );
    let out = dir.path().join("out");
    let o = tpqsdp(&["solve", "--problem", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    // T = ⌈8/ε² ln 2⌉ = 139 iterations plus the τ = 0 row and the header.
    assert_eq!(csv.lines().count(), 139 + 2);
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["verdict"]["kind"], "infeasible");
}

#[test]
fn solve_and_learn_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("learn.toml"), "model = \"xxz\"\nn = 4\nbackend = \"exact\"\nepsilon = 0.1\nseed = 9\n");
    let out = dir.path().join("learn");
    // the flag overrides the file's seed
    let o = tpqsdp(&["learn", "--config", &cfg, "--seed", "11", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "metrics.json", "manifest.json", "instance.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["model"], "xxz");
    let mut keys: Vec<&str> = manifest.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    assert_eq!(keys, ["command", "config", "seed", "tool", "version"]);

    let op = write(&dir.path().join("zz.txt"), "1.0 ZZ\n");
    let p = write(
        &dir.path().join("p.toml"),
        &format!(
            "n = 2\nepsilon = 0.1\nobjective = \"1.0 XI\"\n[[constraints]]\nfile = \"{}\"\nb = -0.5\n",
            Path::new(&op).file_name().unwrap().to_str().unwrap()
        ),
    );
    let out = dir.path().join("solve");
    let o = tpqsdp(&["solve", "--problem", &p, "--optimize", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    // XI and ZZ anticommute, so ⟨XI⟩² + ⟨ZZ⟩² ≤ 1 and the optimum is √0.75
    assert!((metrics["optimum"].as_f64().unwrap() - 0.75f64.sqrt()).abs() <= 0.2);
}

#[test]
fn calculators_print() {
    let o = tpqsdp(&["resources", "table1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("nx,ny,amplified_toffoli,amplified_qubits,poc_toffoli,poc_qubits\n"));
    assert_eq!(s.lines().count(), 4);
    let o = tpqsdp(&["poly-table"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 13);
    let o = tpqsdp(&["resources", "report", "--dim", "4096", "--m", "20"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["complexity"]["n"], 12.0);
    let o = tpqsdp(&["diagnose", "--model", "hubbard", "--nx", "2", "--ny", "2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["purity"].as_f64().unwrap() <= v["bound"].as_f64().unwrap());
}
