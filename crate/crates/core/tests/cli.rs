use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use jjswitch::analysis;
use jjswitch::cli::{self, SweepAxis};
use jjswitch::config::{load_config, parse_config, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jjswitch"))
}

fn config(text: &str) -> RunConfig {
    parse_config(text, &[]).unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let st = bin()
            .current_dir(dir.path())
            .args(["simulate", "--out", run, "--seed", "11", "--set", "engine.ramps=120", "--workers", "2"])
            .output()
            .unwrap();
        assert!(st.status.success());
    }
    for f in ["records.csv", "summary.json"] {
        assert_eq!(read(&dir.path().join("a"), f).replace("\"a\"", "\"b\""), read(&dir.path().join("b"), f));
    }
}

#[test]
fn embedded_config_reproduces_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| assert!(bin().current_dir(dir.path()).args(args).output().unwrap().status.success());
    run(&["simulate", "--out", "o", "--seed", "5", "--set", "engine.ramps=80", "--set", "drive.rabi_MHz=2"]);
    let first = read(&dir.path().join("o"), "records.csv");
    assert!(first.starts_with("# # jjswitch records.csv\n# [junction]\n"));
    assert!(first.contains("# master_seed = 5\n"));
    fs::write(dir.path().join("saved.csv"), &first).unwrap();
    fs::remove_dir_all(dir.path().join("o")).unwrap();
    run(&["simulate", "--config", "saved.csv"]);
    assert_eq!(read(&dir.path().join("o"), "records.csv"), first);
}

#[test]
fn records_schema_and_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("[engine]\nramps = 40\n");
    cli::cmd_simulate(&cfg, dir.path()).unwrap();
    let csv = read(dir.path(), "records.csv");
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "ramp_index,I_s_uA,flag,n_relax_events");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 40);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r[0], k.to_string());
        let digits = r[1].chars().filter(char::is_ascii_digit).count();
        assert_eq!(digits, 12, "{}", r[1]);
        assert!(r[2] == "0" || r[2] == "1");
    }
}

#[test]
fn defaults_give_both_branches() {
    let dir = tempfile::tempdir().unwrap();
    let s = cli::cmd_simulate(&RunConfig::defaults(), dir.path()).unwrap();
    assert_eq!(s.classification, "bimodal");
    let labels = read(dir.path(), "labels.csv");
    let rows = data_rows(&labels);
    assert_eq!(rows.len(), 2000);
    assert!(rows.iter().any(|r| r[1] == "upper"));
    assert!(rows.iter().any(|r| r[1] == "lower"));
    let b = s.branches.unwrap();
    assert!(b.mean_Is_upper_uA > b.mean_Is_lower_uA);
    assert_eq!(b.dwell_upper.iter().chain(&b.dwell_lower).sum::<usize>(), 2000);
}

#[test]
fn decoupled_junction_without_microwave_is_unimodal() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("labels.csv"), "stale").unwrap();
    let cfg = config("[tls]\nenabled = false\n[drive]\nI_uw_nA = 0\n[engine]\nramps = 1000\n");
    assert_eq!(cfg.engine.dimension, 2);
    let s = cli::cmd_simulate(&cfg, dir.path()).unwrap();
    assert!(s.classification.starts_with("unimodal"), "{}", s.classification);
    assert!(s.branches.is_none());
    assert!(!dir.path().join("labels.csv").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn singleton_sweep_equals_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let base = config("[engine]\nramps = 150\n");
    let sim_dir = dir.path().join("sim");
    cli::cmd_simulate(&SweepAxis::RabiMhz.apply(&base, 2.0), &sim_dir).unwrap();
    let sweep_dir = dir.path().join("sweep");
    cli::cmd_sweep(&base, SweepAxis::RabiMhz, &[2.0], &sweep_dir).unwrap();
    for f in ["records.csv", "labels.csv", "summary.json"] {
        assert_eq!(read(&sim_dir, f), read(&sweep_dir.join("point_0"), f), "{f}");
    }
    let rows = data_rows(&read(&sweep_dir, "sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].len(), 6);
}

#[test]
fn sweep_points_get_distinct_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let base = config("[engine]\nramps = 60\n");
    let pts = cli::cmd_sweep(&base, SweepAxis::RabiMhz, &[10.0, 10.0], dir.path()).unwrap();
    assert_eq!(pts[0].master_seed, base.engine.master_seed);
    assert_ne!(pts[0].master_seed, pts[1].master_seed);
    assert_ne!(read(&dir.path().join("point_0"), "records.csv"), read(&dir.path().join("point_1"), "records.csv"));
}

#[test]
fn rabi_sweep_shortens_dwell() {
    let dir = tempfile::tempdir().unwrap();
    let pts = cli::cmd_sweep(&RunConfig::defaults(), SweepAxis::RabiMhz, &[2.0, 10.0], dir.path()).unwrap();
    let d: Vec<f64> = pts.iter().map(|p| p.summary.branches.as_ref().unwrap().mean_dwell).collect();
    assert!(d[1] < d[0], "{d:?}");
}

#[test]
fn ramp_sweep_lengthens_dwell_and_raises_currents() {
    let dir = tempfile::tempdir().unwrap();
    let pts = cli::cmd_sweep(&RunConfig::defaults(), SweepAxis::RampRate, &[4.5e3, 8.0e3], dir.path()).unwrap();
    let b: Vec<_> = pts.iter().map(|p| p.summary.branches.clone().unwrap()).collect();
    assert!(b[1].mean_dwell > b[0].mean_dwell);
    assert!(b[1].mean_Is_upper_uA > b[0].mean_Is_upper_uA);
    assert!(b[1].mean_Is_lower_uA > b[0].mean_Is_lower_uA);
    assert!(b[1].jump_rate_per_s < b[0].jump_rate_per_s);
}

#[test]
fn ensemble_without_microwave_matches_master_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load_config(&configs_dir().join("bare_no_microwave.toml"), &[]).unwrap();
    cfg.engine.trajectories = 4000;
    let s = cli::cmd_ensemble(&cfg, dir.path()).unwrap();
    assert!((s.histogram_mode_uA - s.master_mode_uA).abs() <= cfg.output.bin_width_uA, "{} vs {}", s.histogram_mode_uA, s.master_mode_uA);
    assert_eq!(s.master_peaks_uA.len(), 1);
    let rows = data_rows(&read(dir.path(), "histogram.csv"));
    let counts: Vec<u64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(counts.iter().sum::<u64>(), 4000);
    assert_eq!(analysis::local_maxima(&analysis::smooth3(&counts)).len(), 1);
    let master = data_rows(&read(dir.path(), "master.csv"));
    assert_eq!(master.len(), cfg.output.master_grid_points);
}

#[test]
fn ensemble_with_microwave_has_resonant_peak_below_main() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&configs_dir().join("bare_microwave.toml"), &[]).unwrap();
    let s = cli::cmd_ensemble(&cfg, dir.path()).unwrap();
    assert!(s.tv_distance < 0.05, "{}", s.tv_distance);
    let rows = data_rows(&read(dir.path(), "histogram.csv"));
    let counts: Vec<u64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let smooth = analysis::smooth3(&counts);
    let maxima = analysis::local_maxima(&smooth);
    assert_eq!(maxima.len(), 2, "{smooth:?}");
    let lo: f64 = rows[maxima[0]][0].parse().unwrap();
    assert!(lo < s.histogram_mode_uA);
    assert_eq!(s.master_peaks_uA.len(), 2);
}

#[test]
fn lz_midregime_numeric_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&configs_dir().join("lz_midregime.toml"), &[]).unwrap();
    let r = cli::cmd_lz(&cfg, dir.path()).unwrap();
    assert!((0.1..0.9).contains(&r.p_lz));
    assert!((r.p_numeric.unwrap() - r.p_lz).abs() < 0.02);
    assert_eq!(r.regime, "intermediate regime");
    assert!(dir.path().join("lz.json").exists());
}

#[test]
fn config_errors_exit_2_with_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().current_dir(dir.path()).args(["simulate", "--set", "junction.eta=-0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.split(|&b| b == b'\n').rfind(|l| !l.is_empty()).unwrap()).unwrap();
    assert_eq!(err["exit_code"], 2);
    assert!(err["message"].as_str().unwrap().contains("eta"));

    let out = bin().current_dir(dir.path()).args(["lz", "--set", "junction.bogus=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().current_dir(dir.path()).args(["simulate", "--config", "missing.toml"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn physics_domain_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // Crossing below the ramp start has no sweep rate to report.
    let out = bin().current_dir(dir.path()).args(["lz", "--set", "drive.dc_start_uA=35.7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
