//! CLI-level acceptance: determinism of the verification reports.

use std::path::Path;
use std::process::Command;

fn moebius() -> Command {
    Command::new(env!("CARGO_BIN_EXE_moebius"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn criterion_10_reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "job.json",
        r#"{
            "construction": {"family": "product", "parts": [
                {"kind": "segment", "point": [0.0], "direction": [1.0], "span": [0.0, 2.0]},
                {"kind": "circle", "center": [0.3, -0.2], "radius": 0.7, "span": [0.0, 4.0]}
            ]},
            "transform": {"kind": "darboux-sphere-factor", "center": [0.3, -0.2], "radius": 0.7},
            "resolution": 7,
            "seed": 1234,
            "output": {"basename": "det"}
        }"#,
    );
    let out = tmp.path().join("out");
    for sub in ["generate", "transform"] {
        let status = moebius()
            .args([sub, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{sub} failed");
    }
    let report = out.join("det.report.json");
    let mut bytes = Vec::new();
    for round in 0..2 {
        let status = moebius()
            .args(["verify", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "verify round {round} failed");
        bytes.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "reports differ between identical runs");
    let text = String::from_utf8(bytes[0].clone()).unwrap();
    assert!(text.contains("\"seed\": 1234"));
    assert!(text.contains("\"config_hash\""));
    println!("criterion 10 determinism: PASS (identical {}-byte reports)", bytes[0].len());
}
