use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hamspec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamspec")).current_dir(dir).args(args).output().expect("run hamspec")
}

fn result(dir: &Path, file: &str) -> Value {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["tool"], "hamspec");
    assert!(doc["metadata"]["version"].is_string());
    doc["result"].clone()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn eig_on_square_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("square.off"), hamspec::mesh::io::to_off(&hamspec::mesh::shapes::grid(11).unwrap())).unwrap();
    let out = hamspec(dir.path(), &["eig", "--mesh", "square.off", "--k", "10", "--potential", "zero", "--out", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = result(&dir.path().join("run"), "eig.json");
    assert_eq!(stdout["eigenvalues"], r["eigenvalues"]);
    let e = r["eigenvalues"].as_array().unwrap();
    assert_eq!(e.len(), 10);
    assert!(e[0].as_f64().unwrap().abs() < 1e-8);
    assert_eq!(result(&dir.path().join("run"), "eig.json")["n"], 121);
    let bytes = std::fs::read(dir.path().join("run/eig.hspec")).unwrap();
    let (s, header) = hamspec::eigen::read_spectrum(&bytes[..]).unwrap();
    assert_eq!(s.k(), 10);
    assert_eq!(header.metadata["command"], "eig");
    assert_eq!(header.metadata["args"]["k"], 10);
}

#[test]
fn bounds_hold_for_random_potentials() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamspec(dir.path(), &["bounds", "--mesh", "finger:12,10", "--potential", "random:50", "--k", "30", "--trials", "3"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "all bounds hold");
    assert_eq!(result(dir.path(), "bounds.json")["violations"], 0);
    assert!(first_line(&dir.path().join("bounds.csv")).starts_with("# {"));
}

#[test]
fn optpot_ramp_beats_laplacian() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamspec(dir.path(), &["optpot", "--interval", "200", "--k", "15", "--target", "ramp"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = result(dir.path(), "optpot.json");
    assert!(r["final_loss"].as_f64().unwrap() < r["lbo_loss"].as_f64().unwrap());
    let trace = std::fs::read_to_string(dir.path().join("optpot_trace.csv")).unwrap();
    let mut lines = trace.lines();
    let meta: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["command"], "optpot");
    assert_eq!(meta["args"]["target"], "ramp");
    assert_eq!(lines.next(), Some("iter,loss,grad_norm"));
}

#[test]
fn identical_runs_give_identical_payloads() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["a", "b"] {
        assert!(hamspec(dir.path(), &["perturb", "--mesh", "finger:8,6", "--trials", "1", "--seed", "4", "--no-sweep", "--out", o]).status.success());
    }
    let read = |o: &str| std::fs::read_to_string(dir.path().join(o).join("perturb_noise.csv")).unwrap();
    let (a, b) = (read("a"), read("b"));
    // Payload after the metadata line; the metadata differs only in --out.
    assert_eq!(a.split_once('\n').unwrap().1, b.split_once('\n').unwrap().1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(hamspec(p, &["--help"]).status.code(), Some(0));
    assert_eq!(hamspec(p, &["--version"]).status.code(), Some(0));
    assert_eq!(hamspec(p, &[]).status.code(), Some(1));
    assert_eq!(hamspec(p, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(hamspec(p, &["eig", "--mesh", "grid:4", "--bogus"]).status.code(), Some(1));
    assert_eq!(hamspec(p, &["eig"]).status.code(), Some(1));
    assert_eq!(hamspec(p, &["eig", "--mesh", "missing.off"]).status.code(), Some(1));
    assert_eq!(hamspec(p, &["eig", "--mesh", "grid:4", "--k", "0"]).status.code(), Some(1));
    assert_eq!(hamspec(p, &["eig", "--mesh", "grid:4", "--potential", "const:NaN"]).status.code(), Some(2));
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# defaults\nk = 7\nmethod = dense\nply = true\n").unwrap();
    let out = hamspec(dir.path(), &["eig", "--mesh", "grid:6", "--k", "3", "--config", "run.cfg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = result(dir.path(), "eig.json");
    assert_eq!(r["k"], 3);
    assert_eq!(r["method"], "dense");
    let ply = std::fs::read_to_string(dir.path().join("eig.ply")).unwrap();
    assert!(ply.lines().nth(2).unwrap().starts_with("comment hamspec {"));
    assert!(ply.contains("property double psi_2"));
    std::fs::write(dir.path().join("bad.cfg"), "k 7\n").unwrap();
    assert_eq!(hamspec(dir.path(), &["eig", "--mesh", "grid:6", "--config", "bad.cfg"]).status.code(), Some(1));
}

#[test]
fn potential_file_roundtrip_and_match_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = hamspec(p, &["potential", "--kind", "landmark", "--source", "finger:9,7", "--landmarks", "0", "--normalize", "--out", "pot"]);
    assert!(out.status.success());
    let e = hamspec(p, &["eig", "--mesh", "finger:9,7", "--potential", "file:pot/potential.csv", "--mu", "5", "--k", "3"]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let out = hamspec(p, &["match", "--pair", "stretched:15,9", "--k", "12", "--k-map", "8", "--energies", "20", "--out", "m"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = result(&p.join("m"), "match.json");
    assert!(r["hamiltonian"]["mu"].as_f64().unwrap() > 0.0);
    let n = 15 * 9;
    let gt: String = (0..n).map(|i| format!("{i} {i}\n")).collect();
    std::fs::write(p.join("gt.txt"), gt).unwrap();
    let c = hamspec(p, &["curve", "--map", "m/map_ham.txt", "--gt", "gt.txt", "--target", "symmetric:15,9", "--out", "c"]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    let curve = std::fs::read_to_string(p.join("c/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2 + 201);
}

#[test]
fn compression_stream_has_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamspec(dir.path(), &["compress", "--mesh", "finger:8,6", "--k", "48", "--basis", "mhb"]);
    assert!(out.status.success());
    let bytes = std::fs::read(dir.path().join("mesh.hspc")).unwrap();
    assert_eq!(&bytes[..4], b"HSPC");
    assert_eq!(result(dir.path(), "mesh.hspc.json")["bytes"], bytes.len());
    assert!(result(dir.path(), "compress.json")["error"].as_f64().unwrap() < 1e-20);
}

#[test]
fn repro_step_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamspec(dir.path(), &["repro", "--only", "step,spectra"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = result(&dir.path().join("spectra"), "summary.json");
    assert!(s["worst_relative_error"].as_f64().unwrap() < 0.02);
    assert!(dir.path().join("step/step_eigenfunctions.csv").exists());
    assert_eq!(result(dir.path(), "repro.json")["step"]["v0"], 2.89e4);
}
