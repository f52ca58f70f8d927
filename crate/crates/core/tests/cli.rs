use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn beatsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beatsynth")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The fixture run with training cut to a couple of steps.
fn quick_config(dir: &Path) -> PathBuf {
    let f = fixtures();
    let cfg = serde_json::json!({
        "seed": 7,
        "records": [
            { "dat": f.join("f100.dat"), "ann": f.join("f100.csv") },
            { "dat": f.join("f101.dat"), "ann": f.join("f101.csv") }
        ],
        "ddpm": { "steps": 2, "batch_size": 4, "diffusion_steps": 10, "hidden": 4, "time_dim": 4, "clip_denoised": true },
        "wgan": { "steps": 2, "batch_size": 4, "generator_widths": [8, 8, 4, 4], "critic_widths": [4, 4, 4, 4] },
        "eval": { "harness": { "classifier": { "epochs": 1 } } }
    });
    let path = dir.join("quick.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn run_reports_every_case_reuses_stages_and_refuses_foreign_stamps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dir.path().join("run");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let first = beatsynth(&["--config", cfg_s, "run", "--out", out_s]);
    assert!(first.status.success(), "{}", stderr(&first));
    let summary: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert!(summary["skipped"].as_array().unwrap().is_empty());
    let executed = summary["executed"].as_array().unwrap().len();

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let eval = &report["evaluation"];
    assert_eq!(eval["real"]["case_id"], "rl");
    let cases: Vec<&str> = eval["cases"].as_array().unwrap().iter().map(|c| c["case_id"].as_str().unwrap()).collect();
    assert_eq!(cases, ["00", "01", "02", "GAN"]);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    for plot in ["pr.svg", "roc.svg", "overlay_GAN.svg"] {
        assert!(out.join("plots").join(plot).exists(), "{plot} missing");
    }
    let first_line = fs::read_to_string(out.join("synth_00.ndjson")).unwrap();
    let beat: Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert_eq!(beat["config_hash"], report["config_hash"]);

    let again = beatsynth(&["--config", cfg_s, "run", "--out", out_s]);
    assert!(again.status.success(), "{}", stderr(&again));
    let summary: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert!(summary["executed"].as_array().unwrap().is_empty());
    assert_eq!(summary["skipped"].as_array().unwrap().len(), executed);

    let other = beatsynth(&["--config", cfg_s, "--seed", "8", "run", "--out", out_s]);
    assert_eq!(other.status.code(), Some(2), "{}", stderr(&other));
    assert!(stderr(&other).contains("ingest"), "{}", stderr(&other));
}

#[test]
fn stage_commands_chain_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let f = fixtures();
    let ingest = beatsynth(&[
        "ingest",
        "--dat",
        f.join("f100.dat").to_str().unwrap(),
        "--ann",
        f.join("f100.csv").to_str().unwrap(),
        "--out",
        &p("rec.ndjson"),
    ]);
    assert!(ingest.status.success(), "{}", stderr(&ingest));
    let seg = beatsynth(&["segment", "--in", &p("rec.ndjson"), "--out", &p("beats.ndjson")]);
    assert!(seg.status.success(), "{}", stderr(&seg));
    let embed = beatsynth(&["embed", "--in", &p("beats.ndjson"), "--out", &p("img.tsim")]);
    assert!(embed.status.success(), "{}", stderr(&embed));
    assert!(dir.path().join("img.tsim.meta.json").exists());
    let back = beatsynth(&["deembed", "--in", &p("img.tsim"), "--out", &p("back.ndjson")]);
    assert!(back.status.success(), "{}", stderr(&back));

    let read = |name: &str| -> Vec<Value> {
        fs::read_to_string(dir.path().join(name)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    };
    let (orig, round) = (read("beats.ndjson"), read("back.ndjson"));
    assert!(orig.len() > 10);
    assert_eq!(orig.len(), round.len());
    for (a, b) in orig.iter().zip(&round) {
        assert_eq!(a["record"], b["record"]);
        assert_eq!(a["label"], b["label"]);
        assert_eq!(a["r_peak"], b["r_peak"]);
        let (xa, xb) = (a["samples"].as_array().unwrap(), b["samples"].as_array().unwrap());
        for (u, v) in xa.iter().zip(xb) {
            assert!((u.as_f64().unwrap() - v.as_f64().unwrap()).abs() <= 1e-9);
        }
    }
}

#[test]
fn corrupt_image_file_is_a_data_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.tsim");
    fs::write(&bad, b"NOPE\x01\x00\x00\x00").unwrap();
    let out = dir.path().join("x.ndjson");
    let o = beatsynth(&["deembed", "--in", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken.tsim"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"seed": 1, "beat_lenght": 64}"#).unwrap();
    let o = beatsynth(&["--config", cfg.to_str().unwrap(), "run", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beat_lenght"), "{}", stderr(&o));

    let missing = dir.path().join("absent.ndjson");
    let o = beatsynth(&["segment", "--in", missing.to_str().unwrap(), "--out", dir.path().join("y").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("absent.ndjson"));

    let beats = dir.path().join("b.ndjson");
    fs::write(&beats, "").unwrap();
    let b = beats.to_str().unwrap();
    let o = beatsynth(&["evaluate", "--real", b, "--synth", b, "--synth", b, "--case-id", "00", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = beatsynth(&["sample-ddpm", "--ckpt", b, "--n", "2", "--out", dir.path().join("s.tsim").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = beatsynth(&["train-ddpm", "--case", "07", "--data", b, "--out", "m.tsnn"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn help_lists_every_subcommand() {
    let o = beatsynth(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in [
        "ingest",
        "segment",
        "embed",
        "deembed",
        "train-ddpm",
        "sample-ddpm",
        "train-wgangp",
        "sample-wgangp",
        "evaluate",
        "plot",
        "run",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}
