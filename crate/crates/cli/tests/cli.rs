use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ebrt_core::geometry::io::load_mesh;
use ebrt_core::measure::{Scenario, ScenarioReport};
use ebrt_core::wire::{MachinesResponse, MeshSummary};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn ebrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebrt"))
        .args(args)
        .env_remove("EBRT_SERVER")
        .env_remove("EBRT_MACHINES")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "{:?}\n{}\n{}", o.status, stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn machines_list_is_stable() {
    let a = ok(ebrt(&["machines", "list"]));
    let b = ok(ebrt(&["machines", "list"]));
    assert_eq!(a, b);
    let ids: Vec<&str> = a.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ids, ["varian-trilogy", "novalis", "elliptical-phantom"]);
    let m: MachinesResponse = serde_json::from_str(&ok(ebrt(&["machines", "list", "--json"]))).unwrap();
    let json_ids: Vec<&str> = m.machines.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(json_ids, ids[..2]);
}

#[test]
fn bundled_suite_passes() {
    let dir = repo_path("fixtures/scenarios");
    let out = ok(ebrt(&["scenario", "suite", dir.to_str().unwrap()]));
    let last = out.lines().last().unwrap();
    let n = std::fs::read_dir(&dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "toml"))
        .count();
    assert!(n >= 20);
    assert_eq!(last, format!("{n} of {n} scenarios passed (0 without expected results)"));
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() == n);
}

#[test]
fn suite_fails_on_a_tampered_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let src = repo_path("fixtures/scenarios/v02-couch-raised-near-tray.toml");
    let mut sc = Scenario::load(&src).unwrap();
    sc.expected.as_mut().unwrap().pairs[1].distance_mm += 1e-3;
    std::fs::write(tmp.path().join("tampered.toml"), sc.to_toml().unwrap()).unwrap();
    std::fs::copy(&src, tmp.path().join("intact.toml")).unwrap();
    let o = ebrt(&["scenario", "suite", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("FAIL") && l.contains("tampered.toml")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("PASS") && l.contains("intact.toml")), "{out}");

    // a scenario without expected results does not count as passing
    sc.expected = None;
    std::fs::write(tmp.path().join("tampered.toml"), sc.to_toml().unwrap()).unwrap();
    let o = ebrt(&["scenario", "suite", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_reports_json() {
    let f = repo_path("fixtures/scenarios/v04-gantry90-couch-rot90.toml");
    let r: ScenarioReport = serde_json::from_str(&ok(ebrt(&["scenario", "run", f.to_str().unwrap(), "--json"]))).unwrap();
    assert!(r.collision && r.checked && r.passed());
    assert_eq!(r.max_deviation_mm, 0.0);
    let text = ok(ebrt(&["scenario", "run", f.to_str().unwrap()]));
    assert!(text.contains("matches expected results"), "{text}");
}

#[test]
fn record_reproduces_frozen_results() {
    let tmp = tempfile::tempdir().unwrap();
    let src = repo_path("fixtures/scenarios/n09-cone-head-frame-near.toml");
    let frozen = Scenario::load(&src).unwrap();
    let mut bare = frozen.clone();
    bare.expected = None;
    let path = tmp.path().join("bare.toml");
    std::fs::write(&path, bare.to_toml().unwrap()).unwrap();
    ok(ebrt(&["scenario", "record", path.to_str().unwrap()]));
    let recorded = Scenario::load(&path).unwrap();
    assert_eq!(recorded, frozen);
}

#[test]
fn errors_exit_with_code_two() {
    let o = ebrt(&["scenario", "run", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "schema = \"ebrt-scenario/1\"\nname = \"x\"\nmachine = \"nope\"\n").unwrap();
    assert_eq!(ebrt(&["scenario", "run", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn reconstructs_the_bundled_sphere() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sphere.stl");
    let stack = repo_path("fixtures/ct/sphere");
    let text = ok(ebrt(&["ct", "reconstruct", stack.to_str().unwrap(), "-o", out.to_str().unwrap(), "--json"]));
    let s: MeshSummary = serde_json::from_str(&text).unwrap();
    let r_iso: f64 = 49.2;
    let volume = 4.0 / 3.0 * std::f64::consts::PI * r_iso.powi(3);
    let area = 4.0 * std::f64::consts::PI * r_iso.powi(2);
    assert!((s.volume_mm3 - volume).abs() / volume < 0.02, "{}", s.volume_mm3);
    assert!((s.area_mm2 - area).abs() / area < 0.02, "{}", s.area_mm2);
    assert!(s.watertight);
    assert_eq!(s.euler_characteristic, 2);
    let mesh = load_mesh(&out).unwrap();
    assert_eq!(mesh.triangle_count(), s.triangle_count);

    let out = tmp.path().join("small.obj");
    let text = ok(ebrt(&[
        "ct",
        "reconstruct",
        stack.to_str().unwrap(),
        "--decimate",
        "1500",
        "-o",
        out.to_str().unwrap(),
        "--json",
    ]));
    let small: MeshSummary = serde_json::from_str(&text).unwrap();
    assert!((small.triangle_count as f64 - 1500.0).abs() <= 75.0);
    assert!((small.volume_mm3 - s.volume_mm3).abs() / s.volume_mm3 < 0.02);
    assert_eq!(load_mesh(&out).unwrap().triangle_count(), small.triangle_count);
}

#[test]
fn synthetic_stack_matches_the_bundled_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("stack");
    ok(ebrt(&["ct", "phantom", dir.to_str().unwrap()]));
    let bundled = repo_path("fixtures/ct/sphere");
    for name in ["meta.json", "slice_0.raw", "slice_31.raw", "slice_63.raw"] {
        assert_eq!(
            std::fs::read(dir.join(name)).unwrap(),
            std::fs::read(bundled.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn talks_to_a_running_server() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let fixtures = repo_path("fixtures/scenarios");
    let svc = rt
        .block_on(async {
            let config = ebrt_service::ServiceConfig {
                scenario_dir: fixtures.clone(),
                ..Default::default()
            };
            ebrt_service::spawn(ebrt_service::AppState::new(config).unwrap(), "127.0.0.1:0".parse().unwrap()).await
        })
        .unwrap();
    let url = svc.url();
    let local = ok(ebrt(&["machines", "list"]));
    let remote = ok(ebrt(&["--server", &url, "machines", "list"]));
    assert_eq!(local, remote);
    let out = ok(ebrt(&["--server", &url, "scenario", "suite", fixtures.to_str().unwrap()]));
    assert!(out.lines().last().unwrap().contains("scenarios passed (0 without"));
    rt.block_on(svc.stop()).unwrap();
    let o = ebrt(&["--server", &url, "machines", "list"]);
    assert_eq!(o.status.code(), Some(2));
}
