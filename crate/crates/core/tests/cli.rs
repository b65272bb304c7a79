use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jointinv::checkpoint::Checkpoint;
use jointinv::config::RunConfig;
use jointinv::data::SectionGrid;
use jointinv::experiment::init_networks;
use jointinv::trainer::TrainHistory;

const TINY: &str = r#"{
  "model": {"n_blocks": 2, "channels": 3, "kernel": [3, 3], "dilations": [1, 2], "patch_width": 3},
  "train": {"epochs": 4, "lr": 0.01, "alpha": 0.5, "seed": 3},
  "survey_1": {"depth_samples": 16, "n_traces": 30, "n_layers": 5, "seed": 1},
  "survey_2": {"depth_samples": 16, "n_traces": 20, "n_layers": 4, "seed": 2},
  "wells_1": 6,
  "wells_2": 3,
  "alphas": [0, 1],
  "trace_picks": [2, 9]
}"#;

fn jointinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointinv")).args(args).output().unwrap()
}

fn setup(dir: &Path, config: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, config).unwrap();
    p.to_str().unwrap().to_string()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty(), "unexpected stdout: {}", String::from_utf8_lossy(&o.stdout));
}

fn run_all(dir: &Path, cfg: &str) {
    let out = dir.to_str().unwrap();
    for cmd in ["gen-data", "train", "predict", "eval", "sweep-alpha"] {
        ok(&jointinv(&[cmd, "--config", cfg, "--out", out]));
    }
    let grid = dir.join("prediction_survey2.sgrd");
    let truth = dir.join("survey2_impedance.sgrd");
    let hist = dir.join("history.csv");
    ok(&jointinv(&[
        "plot", "--config", cfg, "--out", out,
        "--grid", grid.to_str().unwrap(),
        "--history", hist.to_str().unwrap(),
        "--pred", grid.to_str().unwrap(),
        "--truth", truth.to_str().unwrap(),
    ]));
}

const ARTIFACTS: [&str; 16] = [
    "survey1_impedance.sgrd", "survey1_seismic.sgrd", "survey2_impedance.sgrd", "survey2_seismic.sgrd",
    "net_f.jlck", "net_g.jlck", "history.csv",
    "prediction_survey1.sgrd", "prediction_survey2.sgrd",
    "r2_per_trace_survey1.csv", "r2_per_trace_survey2.csv", "eval_summary.csv",
    "alpha_sweep.csv", "section.svg", "loss.svg", "overlay.svg",
];

#[test]
fn full_pipeline_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(a.path(), &setup(a.path(), TINY));
    run_all(b.path(), &setup(b.path(), TINY));
    for name in ARTIFACTS {
        let (x, y) = (fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        assert!(!x.is_empty(), "{name} is empty");
        assert_eq!(x, y, "{name} differs between runs");
    }

    let h = TrainHistory::from_csv(&fs::read_to_string(a.path().join("history.csv")).unwrap()).unwrap();
    assert_eq!(h.records.len(), 4);
    let sweep = fs::read_to_string(a.path().join("alpha_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    let overlay = fs::read_to_string(a.path().join("overlay.svg")).unwrap();
    assert_eq!(overlay.matches("<polyline").count(), 4);
    let summary = fs::read_to_string(a.path().join("eval_summary.csv")).unwrap();
    assert!(summary.starts_with("survey,average_r2,heldout_r2"));
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, seed) in [(&a, "3"), (&b, "4")] {
        let cfg = setup(dir.path(), TINY);
        let out = dir.path().to_str().unwrap();
        ok(&jointinv(&["gen-data", "--config", &cfg, "--out", out]));
        ok(&jointinv(&["train", "--config", &cfg, "--seed", seed, "--out", out]));
    }
    assert_eq!(
        fs::read(a.path().join("survey2_seismic.sgrd")).unwrap(),
        fs::read(b.path().join("survey2_seismic.sgrd")).unwrap()
    );
    assert_ne!(fs::read(a.path().join("net_g.jlck")).unwrap(), fs::read(b.path().join("net_g.jlck")).unwrap());
}

#[test]
fn zero_epochs_store_the_initial_networks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = TINY.replace("\"epochs\": 4", "\"epochs\": 0");
    let cfg = setup(dir.path(), &cfg_text);
    let out = dir.path().to_str().unwrap();
    ok(&jointinv(&["gen-data", "--config", &cfg, "--out", out]));
    ok(&jointinv(&["train", "--config", &cfg, "--out", out]));
    let rc = RunConfig::from_json(&cfg_text).unwrap();
    let (f, g) = init_networks(&rc.model, rc.train.seed).unwrap();
    assert_eq!(Checkpoint::load(dir.path().join("net_f.jlck")).unwrap().network.weights(), f.weights());
    assert_eq!(Checkpoint::load(dir.path().join("net_g.jlck")).unwrap().network.weights(), g.weights());
    // An empty history cannot be plotted.
    let hist = dir.path().join("history.csv");
    let o = jointinv(&["plot", "--out", out, "--history", hist.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("loss.svg").exists());
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), TINY);
    let out = dir.path().to_str().unwrap();
    ok(&jointinv(&["gen-data", "--config", &cfg, "--out", out]));
    let truth = dir.path().join("survey1_impedance.sgrd");
    let t = truth.to_str().unwrap();
    ok(&jointinv(&["eval", "--config", &cfg, "--out", out, "--pred", t, "--truth", t]));
    let summary = fs::read_to_string(dir.path().join("eval_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("given,1,"), "{summary}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = jointinv(&["gen-data", "--out", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    let out = dir.path().to_str().unwrap();
    let bad = setup(dir.path(), r#"{"train": {"alpah": 1}}"#);
    assert_eq!(jointinv(&["gen-data", "--config", &bad, "--out", out]).status.code(), Some(2));
    let neg = setup(dir.path(), r#"{"train": {"alpha": -1}}"#);
    assert_eq!(jointinv(&["gen-data", "--config", &neg, "--out", out]).status.code(), Some(2));

    // Training without data on disk is an I/O error.
    let cfg = setup(dir.path(), TINY);
    assert_eq!(jointinv(&["train", "--config", &cfg, "--out", out]).status.code(), Some(2));
    assert_eq!(jointinv(&["frobnicate"]).status.code(), Some(2));

    // A flat impedance section cannot be scaled: a domain error.
    let flat = TINY
        .replace("\"n_layers\": 5", "\"n_layers\": 1")
        .replace("\"n_layers\": 4", "\"n_layers\": 1");
    let cfg = setup(dir.path(), &flat);
    ok(&jointinv(&["gen-data", "--config", &cfg, "--out", out]));
    let g = SectionGrid::load(dir.path().join("survey1_impedance.sgrd")).unwrap();
    assert!(g.values().iter().all(|v| *v == g.values()[0]));
    assert_eq!(jointinv(&["train", "--config", &cfg, "--out", out]).status.code(), Some(1));
    assert!(!dir.path().join("net_f.jlck").exists());
}

#[test]
fn failed_gen_data_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), TINY);
    // The last grid cannot be written over a directory.
    fs::create_dir(dir.path().join("survey2_seismic.sgrd")).unwrap();
    let o = jointinv(&["gen-data", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    for name in &ARTIFACTS[..3] {
        assert!(!dir.path().join(name).exists(), "{name} left behind");
    }
}
