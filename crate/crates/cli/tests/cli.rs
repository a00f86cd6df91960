use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use spl_core::ssdr::{BridgeScoreModel, PlaneScore, ScoreModel};

const SPL: &str = env!("CARGO_BIN_EXE_spl");
const PLANE: &str = "0,0,-1,5,4.5";

fn spl(args: &[&str]) -> Output {
    Command::new(SPL).args(args).output().expect("spl runs")
}

fn ok(args: &[&str]) -> Output {
    let out = spl(args);
    assert!(out.status.success(), "spl {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_scene(dir: &Path, n: usize) -> String {
    let path = dir.join("scene.json");
    let text = format!(
        r#"{{"generator": "plane",
            "grid": {{"theta_range": [1.45, 1.69], "phi_range": [1.45, 1.69], "counts": [{n}, {n}]}},
            "flux": {{"S_max": 0.3, "B": 1.0}},
            "params": {{"normal": [0, 0, -1], "offset": 5.0,
                        "reflectance": {{"kind": "checker", "cells": 2, "low": 0.1, "high": 1.0}}}}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn lcg_cloud(n: usize, mut state: u64) -> Vec<[f64; 3]> {
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
    };
    (0..n).map(|_| [next(), next(), next()]).collect()
}

#[test]
fn mock_bridge_matches_analytic_plane() {
    let bridge = BridgeScoreModel::spawn(
        SPL,
        &["serve-mock-plane".into(), "--plane".into(), PLANE.into()],
        Duration::from_secs(10),
    )
    .unwrap();
    let local = PlaneScore::parse(PLANE).unwrap();
    for seed in 0..5 {
        let cloud = lcg_cloud(257, seed);
        let a = bridge.scores(&cloud).unwrap();
        let b = local.scores(&cloud).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() <= 1e-12 * (1.0 + y[k].abs()));
            }
        }
    }
    assert!(bridge.scores(&[]).unwrap().is_empty());

    let big = lcg_cloud(10_000, 77);
    bridge.scores(&big).unwrap();
    let t = Instant::now();
    bridge.scores(&big).unwrap();
    let dt = t.elapsed();
    assert!(dt < Duration::from_millis(50), "round trip for 10^4 points took {dt:?}");
}

#[test]
fn mock_bridge_survives_malformed_lines() {
    let mut child = Command::new(SPL)
        .args(["serve-mock-plane", "--plane", PLANE])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    writeln!(stdin, "{{broken").unwrap();
    writeln!(stdin, r#"{{"id": 3, "points": [[0, 0, 1]]}}"#).unwrap();
    writeln!(stdin, r#"{{"id": 3, "points": []}}"#).unwrap();
    stdin.flush().unwrap();
    let first: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert!(first["error"].is_string());
    let second: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(second["id"], 3);
    assert_eq!(second["scores"].as_array().unwrap().len(), 1);
    let third: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(third["id"], 3);
    assert!(third["scores"].as_array().unwrap().is_empty());
    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn ssdr_through_bridge_equals_in_process_prior() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path(), 6);
    let ssdr_cfg = dir.path().join("ssdr.json");
    std::fs::write(&ssdr_cfg, r#"{"iterations": 20}"#).unwrap();
    let local = dir.path().join("local");
    let remote = dir.path().join("remote");
    let common = ["reconstruct", "--scene", &scene, "--ssdr", "--ssdr-config", ssdr_cfg.to_str().unwrap(), "--seed", "4"];
    ok(&[&common[..], &["--plane", PLANE, "--out", local.to_str().unwrap()]].concat());
    ok(&[
        &common[..],
        &["--bridge", SPL, "--bridge-arg", "serve-mock-plane", "--bridge-arg", "--plane", "--bridge-arg", PLANE],
        &["--out", remote.to_str().unwrap()],
    ]
    .concat());
    for f in ["estimates.csv", "cloud.ply", "metrics.json"] {
        assert_eq!(std::fs::read(local.join(f)).unwrap(), std::fs::read(remote.join(f)).unwrap(), "{f}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(local.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["pixels"], 36);
    assert_eq!(metrics["trace"].as_array().unwrap().len(), 21);
    let mae = metrics["regularized"]["mae"].as_f64().unwrap();
    assert!(mae < 0.5, "regularized depth MAE {mae}");
    let ply = std::fs::read_to_string(local.join("cloud.ply")).unwrap();
    assert!(ply.contains("element vertex 36\n"));
    assert!(ply.contains("property double sigma\n"));
}

#[test]
fn reconstruct_without_ssdr_matches_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path(), 5);
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    ok(&["simulate", "--scene", &scene, "--seed", "11", "--out", sim.to_str().unwrap()]);
    ok(&["reconstruct", "--scene", &scene, "--seed", "11", "--out", rec.to_str().unwrap()]);
    let est = dir.path().join("est.csv");
    ok(&["estimate", "--histogram", sim.to_str().unwrap(), "--out", est.to_str().unwrap()]);
    let a = std::fs::read_to_string(&est).unwrap();
    assert_eq!(a, std::fs::read_to_string(rec.join("estimates.csv")).unwrap());
    assert_eq!(a.lines().count(), 26);
    assert!(a.starts_with("pixel,S_hat,B_hat,z_hat,loglik,iters,flags\n"));
    assert_eq!(
        std::fs::read(sim.join("ground_truth.csv")).unwrap(),
        std::fs::read(rec.join("ground_truth.csv")).unwrap()
    );
}

#[test]
fn ingest_summarizes_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--mode", "sync", "--signal", "2", "--depth", "3", "--detections", "--out", sim.to_str().unwrap()]);
    assert!(sim.join("pixel_0.times").exists());
    std::fs::remove_file(sim.join("pixel_0.times")).unwrap();
    let out = ok(&["ingest", "--dir", sim.to_str().unwrap()]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["pixels"], serde_json::json!([0]));
    assert_eq!(summary["config"]["mode"], "sync");

    std::fs::remove_file(sim.join("pixel_0.json")).unwrap();
    let out = spl(&["ingest", "--dir", sim.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pixel_0.json"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = spl(&["simulate", "--dead-time", "1e-6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("nothing.csv");
    let out = spl(&["estimate", "--histogram", missing.to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(3));

    let scene = write_scene(dir.path(), 3);
    let rec = dir.path().join("rec");
    let out = spl(&["reconstruct", "--scene", &scene, "--ssdr", "--bridge", "/nonexistent/model", "--out", rec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    // a bridge that exits immediately: pixelwise output is still written
    let out = spl(&["reconstruct", "--scene", &scene, "--ssdr", "--bridge", "true", "--out", rec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(std::fs::read_to_string(rec.join("estimates.csv")).unwrap().lines().count(), 10);
}

#[test]
fn sweep_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"variable": "S", "values": [0.5, 2.0], "sbr": 0.5, "trials": 24,
            "estimators": ["joint", "known_flux_mf", "coates_peak"]}"#,
    )
    .unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let dump = dir.path().join(format!("dump_{name}"));
        ok(&["sweep", "--config", cfg.to_str().unwrap(), "--threads", threads, "--seed", "5",
             "--out", out.to_str().unwrap(), "--dump", dump.to_str().unwrap()]);
        (std::fs::read(out).unwrap(), std::fs::read(dump).unwrap())
    };
    let one = run("1", "a.csv");
    let three = run("3", "b.csv");
    assert_eq!(one, three);
    let text = String::from_utf8(one.0).unwrap();
    // 2 values x (3 modes joint + 3 modes mf + sync coates) rows
    assert_eq!(text.lines().count(), 1 + 2 * 7);

    std::fs::write(&cfg, "{\n  \"variable\": \"S\",\n  \"values\": [1],\n  \"bogus\": 1\n}").unwrap();
    let out = spl(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"), "{}", String::from_utf8_lossy(&out.stderr));
}
