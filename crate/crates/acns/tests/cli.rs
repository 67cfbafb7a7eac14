//! Exit-code contract of the binary: 0 success, 1 failed check, 2 bad
//! configuration.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acns"))
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "nonsense = true\n").unwrap();
    let status = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let status = bin()
        .args(["audit", "--config", "/nonexistent/run.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_field_exits_2_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let mut run = acns::config::RunConfig::default();
    run.geometry.nx = 7;
    std::fs::write(&cfg, run.to_toml().unwrap()).unwrap();
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("geometry.nx"), "{stderr}");
}

#[test]
fn simulate_succeeds_on_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    let mut run = acns::config::RunConfig::default();
    run.geometry = acns::config::GeometryConfig { nx: 8, ny: 8 };
    run.galerkin_n = 6;
    run.t_end = 0.01;
    run.paths = 1;
    std::fs::write(&cfg_path, run.to_toml().unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let status = bin()
        .args([
            "simulate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in ["path_0.csv", "trace_0.csv", "manifest.json", "schema.txt"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
}
