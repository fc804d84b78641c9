use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scene(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(name)
}

fn helikon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helikon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(cmd: &str, scene_file: &str, extra: &[&str]) -> (i32, Value) {
    let path = scene(scene_file);
    let mut args = vec![cmd, "--scene", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = helikon(&args);
    let code = out.status.code().unwrap();
    assert!(code != 1, "{}", String::from_utf8_lossy(&out.stderr));
    (code, serde_json::from_slice(&out.stdout).unwrap())
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn report_layout() {
    let (code, r) = report("periods", "helicoid.scene", &[]);
    assert_eq!(code, 0);
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["command", "scene_name", "settings", "results", "verdict"]
    );
    assert_eq!(r["command"], "periods");
    assert_eq!(r["scene_name"], "helicoid");
    assert_eq!(r["verdict"]["passed"], true);
}

#[test]
fn catenoid_flux() {
    let (code, r) = report("flux", "catenoid.scene", &[]);
    assert_eq!(code, 0);
    let flux = r["results"]["cycles"]["C"]["flux"].as_array().unwrap();
    let expected = [0.0, 0.0, std::f64::consts::TAU];
    for (a, b) in flux.iter().zip(expected) {
        assert!((f(a) - b).abs() < 1e-9);
    }
    assert_eq!(r["results"]["vertical"], true);
}

#[test]
fn helicoid_symmetry() {
    let (code, r) = report("symmetry", "helicoid.scene", &[]);
    assert_eq!(code, 0);
    assert!(f(&r["results"]["max_deviation"]) < 1e-9);
}

#[test]
fn periodic_candidate_residues() {
    let (code, r) = report("residues", "periodic-candidate.scene", &[]);
    assert_eq!(code, 0);
    let p = &r["results"]["punctures"];
    let e1: Vec<f64> = p["E1"]["dh"].as_array().unwrap().iter().map(f).collect();
    let e2: Vec<f64> = p["E2"]["dh"].as_array().unwrap().iter().map(f).collect();
    assert!(e1[0].abs() < 1e-10 && (e1[1] + 1.0).abs() < 1e-10, "{e1:?}");
    assert!(e2[0].abs() < 1e-10 && (e2[1] - 1.0).abs() < 1e-10, "{e2:?}");
}

#[test]
fn failed_verdict_exits_with_two() {
    let (code, r) = report("probe", "enneper.scene", &[]);
    assert_eq!(code, 2);
    assert_eq!(r["verdict"]["passed"], false);
    assert!(r["results"]["pair_count"].as_u64().unwrap() > 0);
}

#[test]
fn errors_exit_with_one() {
    let out = helikon(&["periods", "--scene", "/nonexistent/x.scene"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let out = helikon(&["periods"]);
    assert_eq!(out.status.code(), Some(1));
    let out = helikon(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let path = scene("helicoid.scene");
    let out = helikon(&["audit", "--scene", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "audit needs a torus");
    let out = helikon(&[
        "sweep",
        "--scene",
        path.to_str().unwrap(),
        "--lambda",
        "1,-2",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tolerance_flag_overrides_scene() {
    let (_, r) = report("periods", "helicoid.scene", &["--tol", "1e-3"]);
    assert_eq!(f(&r["settings"]["tol"]), 1e-3);
    let (_, r) = report("periods", "helicoid.scene", &[]);
    assert_eq!(f(&r["settings"]["tol"]), 1e-9);
}

#[test]
fn out_dir_receives_report_and_obj() {
    let dir = tempfile::tempdir().unwrap();
    let path = scene("helicoid.scene");
    let out = helikon(&[
        "mesh",
        "--scene",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--resolution",
        "9x7",
        "--obj",
        "--json",
        "false",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let json: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("helicoid.mesh.json")).unwrap())
            .unwrap();
    assert_eq!(json["results"]["mesh"]["vertices"], 63);
    let obj = std::fs::read_to_string(dir.path().join("helicoid.mesh.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 63);
}

#[test]
fn thread_count_does_not_change_reports() {
    let path = scene("catenoid.scene");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_helikon"))
            .args(["probe", "--scene", path.to_str().unwrap()])
            .env("HELIKON_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("4"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(run("zero").status.code(), Some(1));
}
