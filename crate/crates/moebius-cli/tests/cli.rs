//! End-to-end CLI workflows and exit-code contracts.

use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Output};

fn moebius() -> Command {
    Command::new(env!("CARGO_BIN_EXE_moebius"))
}

fn run(cfg: &Path, out: &Path, sub: &str) -> Output {
    moebius()
        .args([sub, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const CYLINDER_JOB: &str = r#"{
    "construction": {"family": "product", "parts": [
        {"kind": "segment", "point": [0.0], "direction": [1.0], "span": [0.0, 2.0]},
        {"kind": "circle", "center": [0.3, -0.2], "radius": 0.7, "span": [0.0, 4.0]}
    ]},
    "transform": {"kind": "darboux-sphere-factor", "center": [0.3, -0.2], "radius": 0.7},
    "resolution": 7,
    "seed": 5,
    "output": {"basename": "cyl"}
}"#;

#[test]
fn full_workflow_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "job.json", CYLINDER_JOB);
    let out = tmp.path().join("out");
    for sub in ["generate", "transform", "verify", "export"] {
        let o = run(&cfg, &out, sub);
        assert!(
            o.status.success(),
            "{sub} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(out.join("cyl.chart.json").exists());
    assert!(out.join("cyl.transform.json").exists());
    assert!(out.join("cyl.report.json").exists());
    // Both envelopes exported with matched grids.
    let base = std::fs::read_to_string(out.join("cyl.obj")).unwrap();
    let twin = std::fs::read_to_string(out.join("cyl.transform.obj")).unwrap();
    let vcount = |s: &str| s.lines().filter(|l| l.starts_with("v ")).count();
    assert_eq!(vcount(&base), vcount(&twin));
    assert_eq!(vcount(&base), 49);

    // The transform artifact records the closed-form second envelope:
    // the circle factor reflected through its center.
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cyl.transform.json")).unwrap())
            .unwrap();
    assert_eq!(t["verdict"], "darboux");
    let chart: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cyl.chart.json")).unwrap())
            .unwrap();
    let fv = chart["values"].as_array().unwrap();
    let tv = t["values"].as_array().unwrap();
    for (f, ft) in fv.iter().zip(tv) {
        let f: Vec<f64> = f.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let ft: Vec<f64> = ft.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!((ft[0] - f[0]).abs() < 1e-8);
        assert!((ft[1] - (2.0 * 0.3 - f[1])).abs() < 1e-8);
        assert!((ft[2] - (2.0 * -0.2 - f[2])).abs() < 1e-8);
    }
}

#[test]
fn obj_mesh_has_grid_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "cyclide", "n": 2, "m": 1, "c": 1.0},
            "resolution": 9,
            "output": {"basename": "torus"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    assert!(run(&cfg, &out, "export").status.success());
    let obj = std::fs::read_to_string(out.join("torus.obj")).unwrap();
    let vertices: Vec<&str> = obj.lines().filter(|l| l.starts_with("v ")).collect();
    let faces: Vec<Vec<usize>> = obj
        .lines()
        .filter(|l| l.starts_with("f "))
        .map(|l| {
            l.split_whitespace()
                .skip(1)
                .map(|t| t.parse::<usize>().unwrap())
                .collect()
        })
        .collect();
    let v = vertices.len();
    let f = faces.len();
    assert_eq!(v, 81);
    assert_eq!(f, 2 * 8 * 8);
    let mut edges = HashSet::new();
    for face in &faces {
        for k in 0..3 {
            let a = face[k];
            let b = face[(k + 1) % 3];
            assert!(a >= 1 && a <= v && b >= 1 && b <= v, "face index range");
            edges.insert((a.min(b), a.max(b)));
        }
    }
    // Euler characteristic of a triangulated grid patch (a disk): 1.
    let e = edges.len();
    assert_eq!(v as i64 - e as i64 + f as i64, 1);
}

#[test]
fn high_resolution_generate_has_the_expected_vertex_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "cyclide", "n": 2, "m": 1, "c": 1.0},
            "resolution": 64,
            "output": {"basename": "big"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    assert!(run(&cfg, &out, "export").status.success());
    let chart: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("big.chart.json")).unwrap())
            .unwrap();
    assert_eq!(chart["values"].as_array().unwrap().len(), 4096);
    let obj = std::fs::read_to_string(out.join("big.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 4096);
}

#[test]
fn csv_export_for_higher_dimensional_charts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "cyclide", "n": 3, "m": 1, "c": 0.7},
            "resolution": 5,
            "output": {"basename": "c3"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    // OBJ is refused for a 3d chart; auto falls back to CSV.
    let o = moebius()
        .args(["export", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--format", "obj"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(run(&cfg, &out, "export").status.success());
    let csv = std::fs::read_to_string(out.join("c3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "u1,u2,u3,x1,x2,x3,x4");
    assert_eq!(lines.count(), 125);
}

#[test]
fn cyclide_full_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "cyclide", "n": 2, "m": 1, "c": 1.0},
            "resolution": 9,
            "seed": 2,
            "output": {"basename": "torus"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    let o = run(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("torus.report.json")).unwrap())
            .unwrap();
    let checks: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["check"].as_str().unwrap())
        .collect();
    for want in ["conformality", "adaptedness", "cp-net", "lift-split", "dupin"] {
        assert!(checks.contains(&want), "missing check {want}");
    }
    assert_eq!(report["pass"], true);
}

#[test]
fn invalid_parameters_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // m > n - 1 is rejected.
    let bad = write_config(
        tmp.path(),
        "bad.json",
        r#"{"construction": {"family": "cyclide", "n": 2, "m": 2, "c": 1.0}}"#,
    );
    assert_eq!(run(&bad, &out, "generate").status.code(), Some(2));
    // Resolution below 3 is rejected.
    let bad_res = write_config(
        tmp.path(),
        "badres.json",
        r#"{"construction": {"family": "cyclide", "n": 2, "m": 1, "c": 1.0}, "resolution": 2}"#,
    );
    assert_eq!(run(&bad_res, &out, "generate").status.code(), Some(2));
    // Verify without artifacts is an artifact error.
    let ok = write_config(
        tmp.path(),
        "ok.json",
        r#"{"construction": {"family": "cyclide", "n": 2, "m": 1, "c": 1.0}}"#,
    );
    assert_eq!(run(&ok, &out, "verify").status.code(), Some(2));
}

#[test]
fn perturbed_chart_fails_verification_with_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "moore", "c": 0.0, "parts": [
                {"kind": "circle", "center": [0.0, 0.0], "radius": 1.0, "span": [0.0, 3.0]},
                {"kind": "circle", "center": [0.5, 0.0], "radius": 0.8, "span": [0.0, 2.4]}
            ]},
            "verify": ["adaptedness"],
            "resolution": 7,
            "perturbation": 0.01,
            "output": {"basename": "bad"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    let o = run(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("bad.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn empty_check_list_passes_trivially() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "cyclide", "n": 2, "m": 1, "c": 1.0},
            "verify": [],
            "resolution": 5,
            "output": {"basename": "t"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    let o = run(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn degenerate_transform_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // A trivial transform whose field vanishes at a grid corner: the sphere
    // congruence is null there.
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "product", "parts": [
                {"kind": "segment", "point": [0.0], "direction": [1.0], "span": [0.0, 2.0]},
                {"kind": "circle", "center": [0.3, -0.2], "radius": 0.7, "span": [0.0, 4.0]}
            ]},
            "transform": {"kind": "trivial", "a": 1.0, "v": [0.0, -1.0, 0.2]},
            "resolution": 7,
            "output": {"basename": "nullc"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    let o = run(&cfg, &out, "transform");
    assert_eq!(
        o.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn trivial_transform_reports_its_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "product", "parts": [
                {"kind": "segment", "point": [0.0], "direction": [1.0], "span": [0.0, 2.0]},
                {"kind": "circle", "center": [0.3, -0.2], "radius": 0.7, "span": [0.0, 4.0]}
            ]},
            "transform": {"kind": "trivial", "a": 1.5, "v": [4.0, 0.0, 0.0]},
            "resolution": 7,
            "output": {"basename": "triv"}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, "generate").status.success());
    let o = run(&cfg, &out, "transform");
    assert_eq!(o.status.code(), Some(0));
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("triv.transform.json")).unwrap())
            .unwrap();
    assert_eq!(t["verdict"], "trivial");
}

#[test]
fn christoffel_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "product", "parts": [
                {"kind": "circle", "center": [0.0, 0.0], "radius": 1.0, "span": [0.0, 5.0]},
                {"kind": "segment", "point": [0.0], "direction": [1.0], "span": [-1.0, 1.0]}
            ]},
            "transform": {"kind": "christoffel-product", "a": 1.0},
            "resolution": 7,
            "seed": 11,
            "output": {"basename": "dual"}
        }"#,
    );
    let out = tmp.path().join("out");
    for sub in ["generate", "transform"] {
        assert!(run(&cfg, &out, sub).status.success());
    }
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("dual.transform.json")).unwrap())
            .unwrap();
    assert_eq!(t["verdict"], "christoffel");
    let o = run(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn darboux_curve_factor_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let s2 = std::f64::consts::SQRT_2;
    let body = format!(
        r#"{{
            "construction": {{"family": "product", "parts": [
                {{"kind": "circle", "center": [0.0, 0.0], "radius": 1.0, "span": [0.0, 1.2]}},
                {{"kind": "segment", "point": [0.0], "direction": [1.0], "span": [0.0, 1.5]}}
            ]}},
            "transform": {{"kind": "darboux-curve-factor", "lambda": {s2}, "beta": 0.0, "v": [{s2}], "drift_tol": 1e-9}},
            "resolution": 7,
            "output": {{"basename": "curve"}}
        }}"#
    );
    let cfg = write_config(tmp.path(), "job.json", &body);
    let out = tmp.path().join("out");
    for sub in ["generate", "transform"] {
        let o = run(&cfg, &out, sub);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("curve.transform.json")).unwrap())
            .unwrap();
    assert_eq!(t["verdict"], "darboux");
    assert!(t["first_integral_drift"].as_f64().unwrap() <= 1e-9);
    let o = run(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}
