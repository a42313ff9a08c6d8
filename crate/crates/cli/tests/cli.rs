use std::path::Path;
use std::process::{Command, Output};

use fa_core::GridSample;
use serde_json::Value;
use sha2::{Digest, Sha256};

fn fa(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fa"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FA_THREADS")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn digests(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            (
                o["path"].as_str().unwrap().to_string(),
                o["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn attractor_writes_segments_and_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(
        tmp.path(),
        &["attractor", "--alpha", "0.6", "--depth", "6", "--samples", "100"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let approx: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("attractor.json")).unwrap()).unwrap();
    assert_eq!(approx["segments"].as_array().unwrap().len(), 127);
    let m = manifest(tmp.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["samples"], 100);
    assert_eq!(m["config"]["separation_depth"], 4);
    for (path, sha) in digests(tmp.path()) {
        let bytes = std::fs::read(tmp.path().join(&path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), sha, "{path}");
    }
}

#[test]
fn target_dimension_sets_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(
        tmp.path(),
        &["attractor", "--h", "1.5", "--depth", "4", "--samples", "0"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let approx: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("attractor.json")).unwrap()).unwrap();
    let alpha = approx["alpha"].as_f64().unwrap();
    assert!((alpha - 2f64.powf(-2.0 / 3.0)).abs() < 1e-15);
}

#[test]
fn alpha_outside_the_interval_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(tmp.path(), &["attractor", "--alpha", "0.8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(1/2, 1/sqrt(2))"), "{}", stderr(&o));
    assert_eq!(manifest(tmp.path())["exit_code"], 2);
}

#[test]
fn odd_marker_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(tmp.path(), &["slit", "--N", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("slit.n"), "{}", stderr(&o));
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"depth": 3, "samples": 10, "seed": 4}"#).unwrap();
    let out = tmp.path().join("run");
    let o = fa(&out, &["attractor", "--config", cfg.to_str().unwrap(), "--depth", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["config"]["depth"], 4);
    assert_eq!(m["config"]["seed"], 4);
    assert_eq!(m["config"]["alpha"], 0.6);

    std::fs::write(&cfg, r#"{"dept": 3}"#).unwrap();
    let o = fa(&out, &["attractor", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dept"), "{}", stderr(&o));
}

#[test]
fn runs_are_reproducible_and_manifests_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let args = [
        "slit",
        "--N",
        "40",
        "--T",
        "0.5",
        "--dt",
        "0.01",
        "--grid-spacing",
        "0.5",
    ];
    assert_eq!(fa(&a, &args).status.code(), Some(0));
    assert_eq!(fa(&b, &args).status.code(), Some(0));
    assert_eq!(digests(&a), digests(&b));
    let m = a.join("manifest.json");
    let o = fa(&c, &["slit", "--config", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(digests(&a), digests(&c));
    assert_eq!(manifest(&c)["config"], manifest(&a)["config"]);

    let o = fa(&c, &["ribbon", "--config", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "a slit manifest is not a ribbon config");
}

#[test]
fn slit_runs_feed_the_residual_command() {
    let tmp = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for (n, h) in [("40", "0.01"), ("80", "0.005")] {
        let dir = tmp.path().join(n);
        let o = fa(&dir, &["slit", "--N", n, "--eps", h, "--dt", h, "--T", "2.05"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let checks = manifest(&dir)["checks"].as_array().unwrap().clone();
        assert!(checks.iter().all(|c| c["passed"] == true), "{checks:?}");
        inputs.push(dir.join("history.json"));
    }
    let out = tmp.path().join("res");
    let o = fa(
        &out,
        &[
            "residual",
            "--scenario",
            "slit",
            "--input",
            inputs[0].to_str().unwrap(),
            "--input",
            inputs[1].to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("residual.json")).unwrap()).unwrap();
    assert!(report["order"].as_f64().unwrap() >= 1.0, "{}", report["order"]);

    let o = fa(
        &out,
        &[
            "residual",
            "--scenario",
            "slit",
            "--input",
            "missing.json",
            "--input",
            "gone.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dimension_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one.csv");
    std::fs::write(&one, "x,y\n0.25,0.5\n").unwrap();
    let out = tmp.path().join("d");
    let o = fa(&out, &["dimension", "--input", one.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out.join("dimension.json")).unwrap()).unwrap();
    assert_eq!(r["slope"], 0.0);

    let line = tmp.path().join("line.csv");
    let text: String = (0..5000).map(|i| format!("{},0.1\n", i as f64 / 5000.0)).collect();
    std::fs::write(&line, text).unwrap();
    let o = fa(&out, &["dimension", "--input", line.to_str().unwrap(), "--expect", "2"]);
    assert_eq!(o.status.code(), Some(3));

    let o = fa(
        &out,
        &["dimension", "--input", tmp.path().join("none.csv").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_attractor_hits_the_resource_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(tmp.path(), &["attractor", "--depth", "25", "--samples", "0"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn contraction_command_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(
        tmp.path(),
        &[
            "flow",
            "verify-contraction",
            "--depth",
            "1",
            "--dt",
            "1e-3",
            "--records",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    // header plus 3 records of 6 endpoints
    assert_eq!(traj.lines().count(), 1 + 3 * 6);
}

#[test]
fn field_sample_binary_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fa(
        tmp.path(),
        &[
            "field-sample",
            "--kind",
            "fundamental_u",
            "--alpha",
            "0.6",
            "--lo",
            "-1,-1",
            "--hi",
            "1,1",
            "--spacing",
            "0.25",
            "--format",
            "binary",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let g = GridSample::read_binary(std::fs::File::open(tmp.path().join("field.bin")).unwrap()).unwrap();
    assert_eq!((g.nx, g.ny, g.components), (9, 9, 2));
    assert_eq!(manifest(tmp.path())["config"]["field"]["kind"], "fundamental_u");
}

#[test]
fn thread_count_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fa"))
        .args(["attractor", "--depth", "2", "--samples", "0", "--out"])
        .arg(tmp.path())
        .env("FA_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest(tmp.path())["threads"], 2);
}
