use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uwcrlb::sweep::{default_config, GridSpec, SweepConfig, WaveformEntry};
use uwcrlb::waveform::WaveformConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uwcrlb"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn uwcrlb")
}

fn small_config() -> SweepConfig {
    let mut c = default_config();
    let mut wf = WaveformConfig::pcmfsk_like(c.scenario.sample_rate);
    wf.frame_length = 16;
    c.waveforms = vec![WaveformEntry {
        name: "short".into(),
        config: Some(wf),
        ..Default::default()
    }];
    c.grid = GridSpec {
        x_min: -1200.0,
        x_max: 1200.0,
        y_min: -900.0,
        y_max: 900.0,
        nx: 5,
        ny: 4,
    };
    c
}

fn write_config(dir: &Path, c: &SweepConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, c.to_json_pretty().unwrap()).unwrap();
    path
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn default_config_parses() {
    let out = run(&["default-config"]);
    assert!(out.status.success());
    let c = SweepConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(c, default_config());
}

#[test]
fn sweep_writes_maps_and_is_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let cfg = cfg.to_str().unwrap();
    let mut runs = Vec::new();
    for workers in ["1", "2"] {
        let out_dir = tmp.path().join(format!("w{workers}"));
        let out = run(&["sweep", "--config", cfg, "--out", out_dir.to_str().unwrap(), "--workers", workers]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(csvs(&out_dir));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "case1_short.csv",
            "case2_short.csv",
            "case3_short.csv",
            "ratio_eta_case3_case2_short.csv",
            "ratio_p_case3_case2_short.csv"
        ]
    );
    assert_eq!(runs[0], runs[1]);
    let case2 = String::from_utf8(runs[0][1].1.clone()).unwrap();
    assert_eq!(case2.lines().count(), 1 + 20);
}

#[test]
fn cases_flag_limits_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out_dir = tmp.path().join("out");
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--cases", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = csvs(&out_dir).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["case3_short.csv"]);
}

#[test]
fn invalid_config_names_every_bad_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.scenario.passive.num_samples = 5;
    c.noise.ar_coefficient = 1.5;
    let cfg = write_config(tmp.path(), &c);
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("num_samples") && err.contains("ar_coefficient"), "{err}");
}

#[test]
fn missing_config_is_an_error() {
    let out = run(&["sweep", "--config", "/nonexistent/config.json", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/config.json"));
}

#[test]
fn mc_check_reports_on_toy_instance() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/mc_toy.json");
    let out = run(&["mc-check", "--config", cfg.to_str().unwrap(), "--trials", "100", "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bound respected"), "{text}");
}

#[test]
fn compare_and_wbaf_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config();
    let mut second = c.waveforms[0].clone();
    second.name = "short_hop".into();
    let mut hop = WaveformConfig::spfsk_like(c.scenario.sample_rate);
    hop.frame_length = 64;
    hop.tones = 16;
    second.config = Some(hop);
    c.waveforms.push(second);
    c.grid.nx = 3;
    c.grid.ny = 2;
    let cfg = write_config(tmp.path(), &c);
    let out = run(&["compare", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("short_hop") && text.contains("dop_3dB"), "{text}");

    let wdir = tmp.path().join("wbaf");
    let out = run(&["wbaf", "--config", cfg.to_str().unwrap(), "--out", wdir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(wdir.join("wbaf_short.csv").exists());
}
