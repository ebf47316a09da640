use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellscreen::ecm::{CellGroupParams, PackModel, PackParams};
use cellscreen::ingest::write_log;
use cellscreen::protocol::{run_protocol, ProtocolStep, RunConfig, TestSequence};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cellscreen"));
    c.env("CELLSCREEN_LOG_LEVEL", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn fresh_pack_file(dir: &Path, soc: f64) -> PathBuf {
    let pack = PackParams::from_model(&PackModel::uniform("F1", &CellGroupParams::fresh(), 0.0, soc).unwrap());
    let p = dir.join("pack.json");
    write(&p, &serde_json::to_string_pretty(&pack).unwrap());
    p
}

#[test]
fn fresh_pack_ts5_gives_one_log_and_a_capacity_row() {
    let dir = tempfile::tempdir().unwrap();
    let params = fresh_pack_file(dir.path(), 1.0);
    let out = dir.path().join("out");
    let cfg = dir.path().join("campaign.json");
    write(&cfg, r#"{"params": "pack.json", "sequence": "TS5"}"#);
    assert!(params.exists());

    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let logs: Vec<_> = std::fs::read_dir(out.join("logs/F1")).unwrap().collect();
    assert_eq!(logs.len(), 1);
    assert!(out.join("logs/F1/TS5.csv").exists());

    let o = run(&["analyze", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cap = std::fs::read_to_string(out.join("results/capacity.csv")).unwrap();
    let rows: Vec<&str> = cap.lines().collect();
    assert_eq!(rows[0], "pack_id,sequence,cell_index,capacity_ah,c_rate,v_max,v_min,t_start,t_end");
    assert_eq!(rows.len(), 6);
    for r in &rows[1..] {
        let q: f64 = r.split(',').nth(3).unwrap().parse().unwrap();
        assert!((4.0..4.6).contains(&q), "{r}");
    }
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&run(&["simulate", "--sequence", "TS8", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["simulate", "--cells", "2,9", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"sequense": "TS4"}"#);
    let o = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sequense"));
}

#[test]
fn malformed_log_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.csv");
    write(
        &log,
        "# pack_id: X\ntime_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index\n0,0,3.7,3.7,3.7,3.7,3.7,0\n1,0,3.7,3.7\n",
    );
    let o = run(&["analyze", "--logs", s(&log), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_summary(dir: &Path, rows: &[(&str, usize, f64, f64)]) {
    let results = dir.join("results");
    std::fs::create_dir_all(&results).unwrap();
    let mut text = String::from("pack_id,cell_index,r_s_ci,v_terminal_ci,capacity_ah,capacity_c_rate\n");
    for (p, c, r, q) in rows {
        text += &format!("{p},{c},{r},4.0,{q},0.05\n");
    }
    write(&results.join("summary.csv"), &text);
}

#[test]
fn collinear_three_pack_fit_and_screen() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    write_summary(out, &[("A", 4, 0.030, 4.6), ("B", 4, 0.040, 4.2), ("C", 4, 0.050, 3.8), ("A", 1, 0.9, 0.1)]);
    let o = run(&["fit", "--out", s(out), "--cells", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("fit/fit.json")).unwrap()).unwrap();
    assert!((fit["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((fit["slope"].as_f64().unwrap() + 40.0).abs() < 1e-9);
    assert!((fit["intercept"].as_f64().unwrap() - 5.8).abs() < 1e-9);
    assert_eq!(fit["n"], 3);

    let o = run(&["screen", "--out", s(out), "--rs", "0.065"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("reject"));
    let d: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("screen/decision.json")).unwrap()).unwrap();
    assert_eq!(d[0]["decision"]["class"], "reject");
    assert_eq!(d[0]["decision"]["extrapolated"], true);
}

#[test]
fn degenerate_fit_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    write_summary(dir.path(), &[("A", 4, 0.03, 4.6), ("B", 4, 0.03, 4.2)]);
    let o = run(&["fit", "--out", s(dir.path()), "--cells", "4"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn screening_from_a_short_charge_log() {
    let dir = tempfile::tempdir().unwrap();
    write_summary(dir.path(), &[("A", 3, 0.030, 4.6), ("B", 3, 0.040, 4.3), ("C", 3, 0.050, 3.8)]);
    assert_eq!(code(&run(&["fit", "--out", s(dir.path()), "--cells", "3"])), 0);

    let g = CellGroupParams { r_s: 0.035, ..CellGroupParams::fresh() };
    let mut pack = PackModel::uniform("NEW", &g, 0.0, 0.6).unwrap();
    let seq = TestSequence {
        name: "short_ci".into(),
        steps: vec![ProtocolStep::ChargeWithInterrupts {
            c_rate: 1.0 / 3.0,
            v_limit_per_cell: 3.95,
            interval_s: 560.0,
            interrupt_s: 20.0,
            sampling_hz: 10.0,
        }],
        inter_step_rest_s: 0.0,
    };
    let log = run_protocol(&mut pack, &seq, &RunConfig::default()).unwrap();
    assert!(log.samples.iter().all(|s| s.i_pack >= 0.0));
    let path = dir.path().join("short.csv");
    write_log(&log, &path).unwrap();

    let o = run(&["screen", "--out", s(dir.path()), "--log", s(&path), "--cells", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("screen/decision.json")).unwrap()).unwrap();
    let rec = &d[0];
    assert!(rec["v_terminal"].as_f64().unwrap() > 3.6);
    let r = rec["decision"]["r_s"].as_f64().unwrap();
    assert!((r - 0.035).abs() < 1e-4, "{r}");
}

#[test]
fn small_campaign_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("fleet.json"), r#"{"n": 3, "initial_soc": 0.05}"#);
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"params": "fleet.json", "sequence": "TS4", "seed": 11, "analysis": {"cells": [4]}}"#);
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        for cmd in ["simulate", "analyze", "report"] {
            let o = run(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
            assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        trees.push(out);
    }
    let files = cellscreen_cli::files::csv_files(&trees[0]).unwrap();
    assert!(files.len() >= 3 + 5 + 4);
    for f in files {
        let rel = f.strip_prefix(&trees[0]).unwrap();
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(trees[1].join(rel)).unwrap(), "{}", rel.display());
    }
    for j in ["packs.json", "fleet_manifest.json", "results/method_comparison.json"] {
        assert_eq!(std::fs::read(trees[0].join(j)).unwrap(), std::fs::read(trees[1].join(j)).unwrap());
    }
}
